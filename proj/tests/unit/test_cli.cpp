#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "gramscope/gramscope.hpp"

using namespace gramscope;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("gramscope_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunResult run(const std::string& args, const std::string& env = "") {
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = env + " " + std::string(GRAMSCOPE_CLI) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(err)};
  }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

  fs::path dir_;
};

const std::string kData = GRAMSCOPE_TEST_DATA;

}  // namespace

TEST_F(CliTest, IngestIsDeterministic) {
  ASSERT_EQ(run("--out-dir " + out("a") + " ingest --in " + kData + "/Brown").code, 0);
  ASSERT_EQ(run("--out-dir " + out("b") + " ingest --in " + kData + "/Brown").code, 0);
  const auto a = read_file(dir_ / "a/corpus.jsonl");
  EXPECT_EQ(a, read_file(dir_ / "b/corpus.jsonl"));
  const auto transcripts = load_corpus_jsonl(dir_ / "a/corpus.jsonl");
  ASSERT_EQ(transcripts.size(), 1u);
  EXPECT_EQ(transcripts[0].corpus, "Brown");

  const auto manifest = Json::parse(read_file(dir_ / "a/manifest.ingest.json"));
  EXPECT_EQ(manifest["command"], "ingest");
  EXPECT_EQ(manifest["seeds"]["seed"], 0);
  EXPECT_EQ(manifest["inputs"].size(), 1u);
  EXPECT_EQ(manifest["outputs"].size(), 1u);
  auto other = Json::parse(read_file(dir_ / "b/manifest.ingest.json"));
  auto self = manifest;
  self.erase("outputs");
  other.erase("outputs");
  EXPECT_EQ(self, other);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("evaluate --items x").code, 2);
  EXPECT_EQ(run("gen-synthetic --mode sideways").code, 2);
  const auto missing = run("--out-dir " + out(".") + " ingest --in " + out("absent"));
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("UnreadableFile"), std::string::npos);
  write_file(dir_ / "bad.jsonl", "{\"item_id\": 1}\n");
  EXPECT_EQ(run("--out-dir " + out(".") + " evaluate --items " + out("bad.jsonl") + " --gold " + out("bad.jsonl")).code, 3);
  EXPECT_EQ(run("--out-dir " + out(".") + " gen-synthetic --n-items 100", "GRAMSCOPE_SEED=abc").code, 2);
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  ASSERT_EQ(run("--out-dir " + out("env") + " gen-synthetic --n-items 200", "GRAMSCOPE_SEED=42").code, 0);
  ASSERT_EQ(run("--out-dir " + out("flag") + " --seed 42 gen-synthetic --n-items 200").code, 0);
  ASSERT_EQ(run("--out-dir " + out("zero") + " gen-synthetic --n-items 200").code, 0);
  EXPECT_EQ(Json::parse(read_file(dir_ / "env/manifest.gen-synthetic.json"))["seeds"]["seed"], 42);
  EXPECT_EQ(read_file(dir_ / "env/gold.jsonl"), read_file(dir_ / "flag/gold.jsonl"));
  EXPECT_NE(read_file(dir_ / "env/items.jsonl"), read_file(dir_ / "zero/items.jsonl"));
}

TEST_F(CliTest, SyntheticThroughEvaluateAndTrends) {
  ASSERT_EQ(run("--out-dir " + out(".") + " --seed 3 gen-synthetic --n-items 1000").code, 0);
  const auto eval = run("--out-dir " + out(".") + " --seed 3 evaluate --items " + out("items.jsonl") + " --gold " +
                        out("gold.jsonl") + " --ngram 3 --bpe-vocab 300 --predictions-out preds.jsonl");
  ASSERT_EQ(eval.code, 0) << eval.err;
  const auto report = Json::parse(read_file(dir_ / "eval_report.json"));
  EXPECT_EQ(report["folds"].size(), 5u);
  EXPECT_GT(report["pcc"]["mean"].get<double>(), 0.3);
  EXPECT_EQ(import_external_predictions(dir_ / "preds.jsonl").size(), 1000u);

  const auto imported = run("--out-dir " + out(".") + " import-predictions --predictions " + out("preds.jsonl") +
                            " --items " + out("items.jsonl") + " --gold " + out("gold.jsonl"));
  ASSERT_EQ(imported.code, 0) << imported.err;

  const auto trends = run("--out-dir " + out(".") + " trends --predictions " + out("preds.jsonl") + " --items " +
                          out("items.jsonl") + " --bootstrap 100");
  ASSERT_EQ(trends.code, 0) << trends.err;
  const auto tr = Json::parse(read_file(dir_ / "trend_report.json"));
  EXPECT_TRUE(tr.contains("fits"));
  EXPECT_TRUE(fs::exists(dir_ / "manifest.trends.json"));
}

TEST_F(CliTest, IngestPrepareAndSheets) {
  ASSERT_EQ(run("--out-dir " + out(".") + " ingest --in " + kData).code, 0);
  ASSERT_EQ(run("--out-dir " + out(".") + " prepare --corpus " + out("corpus.jsonl")).code, 0);
  const auto items = load_items_jsonl(dir_ / "items.jsonl");
  ASSERT_FALSE(items.empty());
  ASSERT_EQ(run("--out-dir " + out(".") + " export-sheets --items " + out("items.jsonl")).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "sheets" / (items.front().chunk_id + ".tsv")));
}
