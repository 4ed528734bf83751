#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

#include "nacrf/checkpoint.hpp"
#include "nacrf/config_file.hpp"
#include "nacrf/toy_language.hpp"
#include "test_util.hpp"

using namespace nacrf;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const fs::path& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(NACRF_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, test_util::read_file(out), test_util::read_file(err)};
}

void write_toy_text(const fs::path& path, std::size_t count, std::uint64_t first = 0) {
  std::string text;
  for (const auto& s : ToyLanguage(ToyLanguageConfig{}).sentences(first, count)) text += s + "\n";
  test_util::write_file(path, text);
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { dir = test_util::temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name()); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

constexpr const char* kTinyModel = "--layers 1 --model-dim 16 --heads 2 --ffn-dim 32 --batch-size 4";

}  // namespace

TEST_F(Cli, UnknownFlagRejected) {
  const auto r = run(dir, "eval --test x.tsv --bogus 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
  EXPECT_NE(run(dir, "").code, 0);
}

TEST_F(Cli, GenCorpusEmptyInput) {
  test_util::write_file(dir / "empty.txt", "");
  const auto r = run(dir, "gen-corpus --input " + p("empty.txt") + " --output " + p("o.tsv") + " --vocab " + p("v.txt"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("empty corpus"), std::string::npos);
}

TEST_F(Cli, GenCorpusBadMix) {
  write_toy_text(dir / "clean.txt", 10);
  const auto r = run(dir, "gen-corpus --input " + p("clean.txt") + " --output " + p("o.tsv") + " --vocab " +
                              p("v.txt") + " --mix 0.6,0.6,0");
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, GenCorpusHistogramAndDeterminism) {
  write_toy_text(dir / "clean.txt", 30000);
  const std::string args = "gen-corpus --input " + p("clean.txt") + " --vocab " + p("v.txt") +
                           " --mix 0.333,0.333,0.334 --seed 5 --output ";
  ASSERT_EQ(run(dir, args + p("a.tsv")).code, 0);
  ASSERT_EQ(run(dir, args + p("b.tsv")).code, 0);
  EXPECT_EQ(test_util::read_file(dir / "a.tsv"), test_util::read_file(dir / "b.tsv"));
  EXPECT_EQ(test_util::read_file(dir / "a.tsv.stats"), test_util::read_file(dir / "b.tsv.stats"));
  const auto stats = load_key_values(p("a.tsv.stats"));
  EXPECT_EQ(stats.at("samples"), "30000");
  for (const char* op : {"deletion", "insertion", "shuffle"}) {
    EXPECT_NEAR(std::stod(stats.at(std::string("count.") + op)) / 30000.0, 1.0 / 3.0, 0.02) << op;
  }
}

TEST_F(Cli, TrainZeroStepsWritesInitialCheckpoint) {
  write_toy_text(dir / "clean.txt", 50);
  ASSERT_EQ(run(dir, "gen-corpus --input " + p("clean.txt") + " --output " + p("c.tsv") + " --vocab " + p("v.txt")).code, 0);
  const auto r = run(dir, "train --corpus " + p("c.tsv") + " --vocab " + p("v.txt") + " --out " + p("m.ckpt") +
                              " --steps 0 --seed 3");
  ASSERT_EQ(r.code, 0) << r.err;
  const Checkpoint ck = load_checkpoint(p("m.ckpt"));
  ASSERT_TRUE(ck.optimizer);
  EXPECT_EQ(ck.optimizer->step, 0u);
  const auto manifest = load_key_values(p("m.ckpt.manifest"));
  EXPECT_EQ(std::stod(manifest.at("gamma")), 0.5);
  EXPECT_EQ(manifest.at("k"), "64");
  EXPECT_EQ(manifest.at("dm"), "32");
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  write_toy_text(dir / "clean.txt", 50);
  ASSERT_EQ(run(dir, "gen-corpus --input " + p("clean.txt") + " --output " + p("c.tsv") + " --vocab " + p("v.txt")).code, 0);
  test_util::write_file(dir / "train.cfg", "# toy run\ngamma=2\nk=8\nsteps=0\n");
  const auto r = run(dir, "train --config " + p("train.cfg") + " --corpus " + p("c.tsv") + " --vocab " + p("v.txt") +
                              " --out " + p("m.ckpt") + " --k 16");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto manifest = load_key_values(p("m.ckpt.manifest"));
  EXPECT_EQ(std::stod(manifest.at("gamma")), 2.0);
  EXPECT_EQ(manifest.at("k"), "16");
}

TEST_F(Cli, TrainRejectsOutOfRangeIds) {
  write_toy_text(dir / "clean.txt", 20);
  ASSERT_EQ(run(dir, "gen-corpus --input " + p("clean.txt") + " --output " + p("c.tsv") + " --vocab " + p("v.txt")).code, 0);
  ASSERT_EQ(run(dir, "train --corpus " + p("c.tsv") + " --vocab " + p("v.txt") + " --out " + p("m.ckpt") +
                         " --steps 0 --max-positions 8")
                .code,
            2);
}

TEST_F(Cli, ResumeReproducesLossTrace) {
  write_toy_text(dir / "clean.txt", 60);
  ASSERT_EQ(run(dir, "gen-corpus --input " + p("clean.txt") + " --output " + p("c.tsv") + " --vocab " + p("v.txt")).code, 0);
  const std::string base = "train --corpus " + p("c.tsv") + " --vocab " + p("v.txt") + " --seed 4 " + kTinyModel;
  ASSERT_EQ(run(dir, base + " --out " + p("full.ckpt") + " --steps 12").code, 0);
  ASSERT_EQ(run(dir, base + " --out " + p("part.ckpt") + " --steps 5").code, 0);
  const auto r = run(dir, base + " --out " + p("part.ckpt") + " --steps 12 --resume " + p("part.ckpt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(test_util::read_file(dir / "full.ckpt.log"), test_util::read_file(dir / "part.ckpt.log"));
  EXPECT_EQ(test_util::read_file(dir / "full.ckpt"), test_util::read_file(dir / "part.ckpt"));
}

TEST_F(Cli, CorrectEvalDeterministicAndScored) {
  write_toy_text(dir / "clean.txt", 60);
  ASSERT_EQ(run(dir, "gen-corpus --input " + p("clean.txt") + " --output " + p("c.tsv") + " --vocab " + p("v.txt")).code, 0);
  ASSERT_EQ(run(dir, "train --corpus " + p("c.tsv") + " --vocab " + p("v.txt") + " --out " + p("m.ckpt") +
                         " --steps 3 " + kTinyModel)
                .code,
            0);
  const auto a = run(dir, "correct --ckpt " + p("m.ckpt") + " --input " + p("c.tsv"));
  const auto b = run(dir, "correct --ckpt " + p("m.ckpt") + " --input " + p("c.tsv"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 60);
  const auto direct = run(dir, "correct --ckpt " + p("m.ckpt") + " --input " + p("c.tsv") + " --mode direct");
  EXPECT_EQ(direct.code, 0);

  const auto e1 = run(dir, "eval --ckpt " + p("m.ckpt") + " --test " + p("c.tsv") + " --format kv");
  const auto e2 = run(dir, "eval --ckpt " + p("m.ckpt") + " --test " + p("c.tsv") + " --format kv");
  ASSERT_EQ(e1.code, 0) << e1.err;
  EXPECT_EQ(e1.out, e2.out);
  EXPECT_NE(e1.out.find("correction.f1="), std::string::npos);
}

TEST_F(Cli, EvalHypothesisFiles) {
  test_util::write_file(dir / "t.tsv", "abd\tabc\nxyz\txyz\nqq\tqrq\n");
  test_util::write_file(dir / "ref.txt", "abc\nxyz\nqrq\n");
  test_util::write_file(dir / "src.txt", "abd\nxyz\nqq\n");
  auto r = run(dir, "eval --test " + p("t.tsv") + " --hyp " + p("ref.txt") + " --format kv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("correction.f1=1.0000"), std::string::npos) << r.out;
  r = run(dir, "eval --test " + p("t.tsv") + " --hyp " + p("src.txt") + " --format kv");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("correction.recall=0.0000"), std::string::npos);
  test_util::write_file(dir / "short.txt", "abc\n");
  EXPECT_EQ(run(dir, "eval --test " + p("t.tsv") + " --hyp " + p("short.txt")).code, 2);
}

TEST_F(Cli, MalformedTsvFails) {
  test_util::write_file(dir / "bad.tsv", "no tab\n");
  EXPECT_NE(run(dir, "eval --test " + p("bad.tsv") + " --hyp " + p("bad.tsv")).code, 0);
}
