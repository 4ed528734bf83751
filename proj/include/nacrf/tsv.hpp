#pragma once

#include <string>
#include <utility>
#include <vector>

namespace nacrf {

struct TextPair {
  std::string source;
  std::string target;
  std::size_t line = 0;  // 1-based line in the file
};

/// Reads `source<TAB>target` lines; blank lines are skipped. A non-blank
/// line without a TAB raises an error naming its line number.
std::vector<TextPair> load_tsv(const std::string& path);

void save_tsv(const std::string& path, const std::vector<TextPair>& pairs);

/// Non-blank lines of a UTF-8 text file, CR stripped.
std::vector<std::string> load_lines(const std::string& path);

}  // namespace nacrf
