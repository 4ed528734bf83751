#include <iostream>

#include <CLI11.hpp>

#include "nacrf/toy_language.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Print sentences of the synthetic toy language"};
  nacrf::ToyLanguageConfig config;
  std::uint64_t first = 0;
  std::size_t count = 1000;
  app.add_option("--first", first, "index of the first sentence");
  app.add_option("--count", count);
  app.add_option("--seed", config.seed);
  app.add_option("--alphabet", config.alphabet_size);
  app.add_option("--lexicon", config.lexicon_size);
  CLI11_PARSE(app, argc, argv);

  const nacrf::ToyLanguage lang(config);
  for (std::uint64_t i = first; i < first + count; ++i) std::cout << lang.sentence(i) << '\n';
  return 0;
}
