#include <gtest/gtest.h>

#include "rlqr/eval.hpp"
#include "rlqr/retrieval.hpp"

namespace rlqr {
namespace {

// Always ranks the target of the query it was told about first. Queries are
// looked up by exact text.
class TableRetriever final : public Retriever {
 public:
  explicit TableRetriever(std::map<std::string, std::vector<ChunkIndex>> table) : table_(std::move(table)) {}
  std::string name() const override { return "table"; }
  RankedList search(std::string_view q, std::size_t k) const override {
    RankedList l;
    l.k = k;
    auto it = table_.find(std::string(q));
    if (it == table_.end()) return l;
    double s = 10;
    for (auto c : it->second) {
      if (l.entries.size() == k) break;
      l.entries.push_back({c, s--});
    }
    return l;
  }

 private:
  std::map<std::string, std::vector<ChunkIndex>> table_;
};

ChunkStore store4() {
  return ChunkStore({{0, "A", "a", {0, 1}}, {1, "B", "b", {0, 1}}, {2, "C", "c", {0, 1}}, {3, "D", "d", {0, 1}}});
}

std::vector<QuerySample> four_samples() {
  return {make_sample(0, "s0", "q0"), make_sample(1, "s1", "q1"), make_sample(2, "s2", "q2"),
          make_sample(3, "s3", "q3")};
}

TEST(Evaluate, GoldFirstEverywhereIsOneHundredPercent) {
  const TableRetriever r({{"s0 q0", {0}}, {"s1 q1", {1, 0}}, {"s2 q2", {2}}, {"s3 q3", {3}}});
  const auto rep = evaluate(four_samples(), r, nullptr, store4(), {});
  EXPECT_DOUBLE_EQ(rep.mean_ndcg, 1.0);
  EXPECT_EQ(rep.to_json()["mean_ndcg_percent"], "100.00");
  EXPECT_EQ(rep.rewriter, "raw");
}

TEST(Evaluate, MeanOfMixedRanks) {
  // NDCG 1, 1/log2(3), 0, 0.5
  const TableRetriever r({{"s0 q0", {0}}, {"s1 q1", {0, 1}}, {"s2 q2", {0, 1, 3}}, {"s3 q3", {0, 1, 3}}});
  const auto rep = evaluate(four_samples(), r, nullptr, store4(), {});
  ASSERT_EQ(rep.per_sample.size(), 4u);
  EXPECT_NEAR(rep.per_sample[1], 0.6309, 1e-4);
  EXPECT_EQ(rep.per_sample[2], 0.0);
  EXPECT_EQ(rep.per_sample[3], 0.5);
  EXPECT_NEAR(rep.mean_ndcg, (1.0 + 1.0 / std::log2(3.0) + 0.0 + 0.5) / 4.0, 1e-12);
  EXPECT_EQ(rep.to_json()["mean_ndcg_percent"], "53.27");
}

TEST(Evaluate, AddingASampleAtTheMeanKeepsTheMean) {
  const TableRetriever r({{"s0 q0", {0}}, {"s1 q1", {1}}, {"s2 q2", {0, 2}}, {"s3 q3", {1, 0, 2}}});
  auto ds = four_samples();
  ds.resize(2);  // both perfect: mean 1
  const auto before = evaluate(ds, r, nullptr, store4(), {});
  ds.push_back(make_sample(0, "s0", "q0"));
  const auto after = evaluate(ds, r, nullptr, store4(), {});
  EXPECT_NEAR(after.mean_ndcg, before.mean_ndcg, 1e-12);
}

// Hand-countable query lengths: 5 and 11 code points originally.
TEST(Evaluate, LengthStatisticsInCharacters) {
  class Upper final : public Rewriter {
   public:
    std::string name() const override { return "dup"; }
    std::string rewrite(std::string_view q) const override { return std::string(q) + " " + std::string(q); }
  };
  const std::vector<QuerySample> ds = {make_sample(0, "ab", "c"), make_sample(1, "한국어", "테스트 질문")};
  ASSERT_EQ(utf8::length(ds[0].query), 4u);
  ASSERT_EQ(utf8::length(ds[1].query), 10u);
  const TableRetriever r({});
  const auto raw = evaluate(ds, r, nullptr, store4(), {});
  EXPECT_DOUBLE_EQ(raw.mean_original_length, 7.0);
  EXPECT_DOUBLE_EQ(raw.mean_rewritten_length, 7.0);
  const Upper dup;
  const auto rep = evaluate(ds, r, &dup, store4(), {});
  EXPECT_DOUBLE_EQ(rep.mean_original_length, 7.0);
  EXPECT_DOUBLE_EQ(rep.mean_rewritten_length, 15.0);  // (9 + 21) / 2
}

TEST(Evaluate, IdentityPolicyMatchesRaw) {
  const ChunkStore store({{0, "A", "printer driver install", {0, 22}}, {1, "B", "router password reset", {0, 21}}});
  auto idx = std::make_shared<const LexicalIndex>(LexicalIndex::build(store));
  const LexicalRetriever r(idx);
  const std::vector<QuerySample> ds = {make_sample(0, "my printer", "install?"), make_sample(1, "router", "reset the password")};
  const PolicyRewriter identity("id", PolicyParams::initial(), TermFeaturizer(idx));
  const auto raw = evaluate(ds, r, nullptr, store, {});
  const auto rew = evaluate(ds, r, &identity, store, {});
  EXPECT_EQ(raw.per_sample, rew.per_sample);
}

TEST(Evaluate, TargetOutsideStoreNamesTheSample) {
  const TableRetriever r({});
  const std::vector<QuerySample> ds = {make_sample(0, "a", "b"), make_sample(7, "c", "d")};
  try {
    evaluate(ds, r, nullptr, store4(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("sample 1"), std::string::npos);
  }
}

TEST(CrossMatrix, CardinalityAndStructure) {
  auto a = std::make_shared<const TableRetriever>(std::map<std::string, std::vector<ChunkIndex>>{{"s0 q0", {0}}});
  auto b = std::make_shared<const TableRetriever>(std::map<std::string, std::vector<ChunkIndex>>{});
  const std::vector<Named<Retriever>> rs = {{"lexical", a}, {"semantic", b}};
  const std::vector<Named<Rewriter>> ws = {{"rlqr-lexical", std::make_shared<const IdentityRewriter>()},
                                           {"rlqr-semantic", std::make_shared<const IdentityRewriter>()}};
  const auto reps = cross_matrix(four_samples(), rs, ws, store4(), {});
  ASSERT_EQ(reps.size(), 6u);
  EXPECT_EQ(reps[0].rewriter, "raw");
  EXPECT_EQ(reps[3].retriever, "semantic");
  EXPECT_EQ(reps[4].rewriter, "rlqr-lexical");  // trained on lexical, scored on semantic
  const auto again = cross_matrix(four_samples(), rs, ws, store4(), {});
  EXPECT_EQ(reps[0].per_sample, again[0].per_sample);
  EXPECT_EQ(reports_to_json(reps), reports_to_json(again));
}

TEST(Reports, JsonRoundTripTableAndCsv) {
  EvalReport r;
  r.retriever = "lexical";
  r.rewriter = "raw";
  r.per_sample = {1.0, 0.5};
  r.mean_ndcg = 0.75;
  r.mean_original_length = 12.5;
  r.mean_rewritten_length = 12.5;
  const std::vector<EvalReport> reps = {r};
  const auto back = reports_from_json(reports_to_json(reps));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].to_json(), r.to_json());
  const auto table = render_table(reps);
  EXPECT_NE(table.find("NDCG@3"), std::string::npos);
  EXPECT_NE(table.find("75.00"), std::string::npos);
  EXPECT_EQ(render_csv(reps),
            "retriever,rewriter,k,mean_ndcg_percent,mean_original_length,mean_rewritten_length\n"
            "lexical,raw,3,75.00,12.5000,12.5000\n");
}

}  // namespace
}  // namespace rlqr
