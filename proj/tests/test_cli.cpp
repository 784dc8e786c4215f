#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "rlqr/cli.hpp"
#include "support.hpp"

namespace rlqr {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string triple(const std::string& s, const std::string& q) {
  return "<scenario>" + s + "</scenario><question>" + q + "</question><answer>a</answer>";
}

// Three short documents with disjoint vocabulary, one chunk each, and a
// script whose questions name each document's distinctive words.
class Pipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    write_file_atomic(dir / "corpus.jsonl",
                      to_jsonl(std::vector<json>{
                          {{"doc_id", "printer"}, {"text", "Install the printer driver before printing labels."}},
                          {{"doc_id", "router"}, {"text", "Reset the router password from the admin console."}},
                          {{"doc_id", "payroll"}, {"text", "Payroll exports run nightly into the ledger archive."}}}));
    write_file_atomic(dir / "script.jsonl",
                      to_jsonl(std::vector<json>{
                          {{"chunk_index", 0}, {"completion", triple("Labels will not print.", "Which printer driver?")}},
                          {{"chunk_index", 1}, {"completion", triple("Locked out of admin.", "How to reset router password?")}},
                          {{"chunk_index", 2}, {"completion", triple("Finance asks.", "When do payroll exports run?")}}}));
  }

  std::vector<std::string> base(std::vector<std::string> tail) const {
    std::vector<std::string> a = {"--out", (dir / "out").string(), "--set", "grpo.group_size=4",
                                  "--set", "grpo.grad_accum_steps=2", "--set", "grpo.checkpoint_every=1"};
    a.insert(a.end(), tail.begin(), tail.end());
    return a;
  }

  testing::TempDir dir{"cli"};
};

TEST_F(Pipeline, EndToEndProducesEveryArtifact) {
  auto r = run(base({"ingest", "--corpus", (dir / "corpus.jsonl").string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "ingest: 3 documents -> 3 chunks\n");
  r = run(base({"synth", "--script", (dir / "script.jsonl").string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "synth: accepted 3 of 3 chunks\n");
  r = run(base({"index"}));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run(base({"train"}));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run(base({"eval", "--rewriter", "rlqr-lexical=" + (dir / "out" / "policy.json").string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rlqr-lexical"), std::string::npos);

  const fs::path out = dir / "out";
  for (const char* f : {"chunks.jsonl", "dataset.jsonl", "synth_report.json", "lexical_index.json", "policy.json",
                        "train_log.jsonl", "report.json", "report.txt", "checkpoints/policy_step_0001.json",
                        "checkpoints/policy_step_0002.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_FALSE(fs::exists(out / "vector_index.json"));
  EXPECT_EQ(parse_jsonl(read_file(out / "train_log.jsonl"), "log").size(), 2u);  // 3 samples, batches of 2
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    EXPECT_EQ(e.path().string().find(".tmp"), std::string::npos) << e.path();
  }

  r = run(base({"report", "--csv"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("retriever,rewriter,k,", 0), 0u);
}

TEST_F(Pipeline, RawEvaluationOnDistinctQueriesIsPerfect) {
  ASSERT_EQ(run(base({"ingest", "--corpus", (dir / "corpus.jsonl").string()})).code, 0);
  ASSERT_EQ(run(base({"synth", "--script", (dir / "script.jsonl").string()})).code, 0);
  ASSERT_EQ(run(base({"index"})).code, 0);
  const auto r = run(base({"eval"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(read_file(dir / "out" / "report.json"))["reports"];
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_EQ(rep[0]["mean_ndcg_percent"], "100.00");
}

TEST_F(Pipeline, SemanticAndHybridNeedTheVectorIndex) {
  ASSERT_EQ(run(base({"ingest", "--corpus", (dir / "corpus.jsonl").string()})).code, 0);
  ASSERT_EQ(run(base({"synth", "--script", (dir / "script.jsonl").string()})).code, 0);
  ASSERT_EQ(run(base({"index"})).code, 0);
  auto r = run(base({"--preset", "hybrid", "eval"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("eval failed"), std::string::npos);
  ASSERT_EQ(run(base({"--preset", "hybrid", "index"})).code, 0);
  r = run(base({"--set", R"(eval.retrievers=["lexical","semantic","hybrid"])", "eval"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(read_file(dir / "out" / "report.json"))["reports"].size(), 3u);
}

TEST(Cli, UnknownSubcommandIsAUsageError) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown subcommand: frobnicate"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, MissingSubcommandAndBadFlagsAreUsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--preset", "bm42", "demo"}).code, 1);
  EXPECT_EQ(run({"--seed", "abc", "demo"}).code, 1);
  EXPECT_EQ(run({"eval", "--rewriter", "nopath"}).code, 1);
  EXPECT_EQ(run({"--config", "/does/not/exist.json", "demo"}).code, 1);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, RuntimeFailuresNameTheStage) {
  testing::TempDir dir("cli");
  auto r = run({"--out", dir.path().string(), "ingest", "--corpus", (dir / "missing.jsonl").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("rlqr: ingest failed:"), std::string::npos) << r.err;
  r = run({"--out", dir.path().string(), "train"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("rlqr: train failed:"), std::string::npos) << r.err;
}

TEST(Cli, ConfigErrorsAreReportedAsTheConfigStage) {
  const auto r = run({"--set", "grpo.nope=1", "demo"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("rlqr: config failed: unknown config key: grpo.nope"), std::string::npos) << r.err;
}

TEST(Cli, ConfigFileIsHonoured) {
  testing::TempDir dir("cli");
  write_file_atomic(dir / "cfg.json", R"({"demo": {"n_chunks": 10, "n_samples": 20}})");
  const auto r = run({"--config", (dir / "cfg.json").string(), "--out", dir.path().string(), "demo"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ChunkStore::from_jsonl(read_file(dir / "chunks.jsonl")).size(), 10u);
}

TEST(Cli, BinaryDemoIsByteIdenticalAcrossRuns) {
  testing::TempDir dir("cli");
  for (const char* sub : {"a", "b"}) {
    const std::string cmd = std::string(RLQR_CLI_PATH) + " --seed 7 --out " + (dir / sub).string() +
                            " demo > " + (dir / (std::string(sub) + ".log")).string() + " 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0) << cmd;
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), dir / "a");
    ASSERT_TRUE(fs::exists(dir / "b" / rel)) << rel;
    EXPECT_EQ(read_file(e.path()), read_file(dir / "b" / rel)) << rel;
  }
  EXPECT_GE(files, 8u);
  EXPECT_EQ(read_file(dir / "a.log"), read_file(dir / "b.log"));
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = RLQR_CLI_PATH;
  auto code = [](const std::string& cmd) {
    const int s = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(code(bin + " nonsense"), 1);
  EXPECT_EQ(code(bin + " --set grpo.nope=1 demo"), 2);
}

}  // namespace
}  // namespace rlqr
