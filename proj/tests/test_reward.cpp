#include <gtest/gtest.h>

#include <random>

#include "rlqr/reward.hpp"
#include "support.hpp"

namespace rlqr {
namespace {

RankedList ranking(std::vector<ChunkIndex> order, std::size_t k) {
  RankedList l;
  double s = 10.0;
  for (auto c : order) l.entries.push_back({c, s--});
  l.k = k;
  return l;
}

TEST(Ndcg, HandValues) {
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranking({5, 1, 2}, 3), 5, 3), 1.0);
  EXPECT_NEAR(ndcg_at_k(ranking({1, 5, 2}, 3), 5, 3), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(ndcg_at_k(ranking({1, 5, 2}, 3), 5, 3), 0.6309, 1e-4);
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranking({1, 2, 3, 5}, 3), 5, 3), 0.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranking({}, 3), 5, 3), 0.0);
}

TEST(Ndcg, MatchesBruteForceOnRandomRankings) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 20;
    const std::size_t k = 1 + gen() % 5;
    std::vector<ChunkIndex> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), gen);
    const ChunkIndex relevant = static_cast<ChunkIndex>(gen() % (n + 2));  // may be absent
    std::vector<double> rel;
    for (auto c : order) rel.push_back(c == relevant ? 1.0 : 0.0);
    std::vector<double> all = rel;
    if (relevant >= n) all.push_back(1.0);
    EXPECT_NEAR(ndcg_at_k(ranking(order, k), relevant, k), testing::brute_ndcg(rel, all, k), 1e-12);
  }
}

TEST(Ndcg, DocumentLevelCountsAnyChunkOfTheDocument) {
  const ChunkStore store({{0, "A", "x", {0, 1}}, {1, "A", "y", {1, 2}}, {2, "B", "z", {0, 1}}});
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranking({2, 1, 0}, 3), "A", store, 3), 1.0 / std::log2(3.0));
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranking({0, 1}, 3), "A", store, 3), 1.0);
}

TEST(FormatPenalty, ExactFormat) {
  const auto r = format_penalty("<answer>q</answer>");
  EXPECT_EQ(r.formatted_query, "q");
  EXPECT_EQ(r.raw_penalty, 0u);
}

TEST(FormatPenalty, CountsCharactersOutsideTheBlock) {
  const auto r = format_penalty("xx<answer>q</answer>");
  EXPECT_EQ(r.formatted_query, "q");
  EXPECT_EQ(r.raw_penalty, 2u);
  EXPECT_EQ(format_penalty("한국<answer>q</answer>!").raw_penalty, 3u);
}

TEST(FormatPenalty, MissingBlockIsInfinite) {
  const auto r = format_penalty("no tags at all");
  EXPECT_FALSE(r.formatted_query.has_value());
  EXPECT_FALSE(r.raw_penalty.has_value());
  EXPECT_FALSE(format_penalty("<answer>unterminated").raw_penalty.has_value());
}

TEST(FormatPenalty, FirstBlockWins) {
  const auto r = format_penalty("<answer>a</answer><answer>b</answer>");
  EXPECT_EQ(r.formatted_query, "a");
  EXPECT_EQ(r.raw_penalty, 18u);
}

std::vector<double> norm(std::vector<RawPenalty> raw) { return normalize_group_penalties(raw); }

TEST(PenaltyNormalization, HandCases) {
  EXPECT_EQ(norm({0u, 0u}), (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(norm({0u, 4u, 8u}), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(norm({std::nullopt, 0u, 3u}), (std::vector<double>{1.0, 0.0, 0.5}));
  EXPECT_EQ(norm({5u, 5u}), (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(norm({std::nullopt, std::nullopt}), (std::vector<double>{1.0, 1.0}));
}

TEST(PenaltyNormalization, PropertiesOnRandomGroups) {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<RawPenalty> raw;
    for (std::size_t i = 0, g = 1 + gen() % 10; i < g; ++i) {
      const auto u = gen() % 4;
      raw.push_back(u == 0 ? RawPenalty{} : u == 1 ? RawPenalty{0u} : RawPenalty{1 + gen() % 50});
    }
    const auto out = norm(raw);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!raw[i]) {
        EXPECT_EQ(out[i], 1.0);
      } else if (*raw[i] == 0) {
        EXPECT_EQ(out[i], 0.0);
      } else {
        EXPECT_GE(out[i], 0.5);
        EXPECT_LE(out[i], 1.0);
      }
      for (std::size_t j = 0; j < raw.size(); ++j) {
        if (raw[i] && raw[j] && *raw[i] < *raw[j]) EXPECT_LT(out[i], out[j]);
        if (raw[i] && raw[j] && *raw[i] == *raw[j]) EXPECT_EQ(out[i], out[j]);
      }
    }
  }
}

TEST(PenaltyNormalization, EmptyGroupThrows) { EXPECT_THROW(norm({}), Error); }

// Retriever with a fixed answer list, for reward arithmetic.
class FixedRetriever final : public Retriever {
 public:
  explicit FixedRetriever(std::vector<ChunkIndex> order) : order_(std::move(order)) {}
  std::string name() const override { return "fixed"; }
  RankedList search(std::string_view, std::size_t k) const override {
    RankedList l = ranking(order_, k);
    if (l.entries.size() > k) l.entries.resize(k);
    return l;
  }

 private:
  std::vector<ChunkIndex> order_;
};

std::shared_ptr<const ChunkStore> small_store() {
  return std::make_shared<const ChunkStore>(std::vector<Chunk>{
      {0, "A", "zero", {0, 4}}, {1, "B", "one", {0, 3}}, {2, "C", "two", {0, 3}}, {3, "D", "three", {0, 5}}});
}

TEST(RewardModel, PerfectFormatGoldFirst) {
  const RewardModel rm(std::make_shared<FixedRetriever>(std::vector<ChunkIndex>{2, 0, 1}), small_store(), {});
  const auto s = make_sample(2, "scenario", "question?");
  const std::vector<std::string> ys = {"<answer>q</answer>", "<answer>q</answer>"};
  const auto r = rm.score_group(s, ys);
  EXPECT_DOUBLE_EQ(r[0].retrieval, 1.0);
  EXPECT_DOUBLE_EQ(r[0].total, 1.0);
}

TEST(RewardModel, GoldAtRankThreeWithFullPenalty) {
  const RewardModel rm(std::make_shared<FixedRetriever>(std::vector<ChunkIndex>{0, 1, 2}), small_store(), {});
  const auto s = make_sample(2, "scenario", "question?");
  const std::vector<std::string> ys = {"<answer>q</answer>xx", "<answer>q</answer>"};
  const auto r = rm.score_group(s, ys);
  EXPECT_DOUBLE_EQ(r[0].retrieval, 0.5);
  EXPECT_DOUBLE_EQ(r[0].normalized_penalty, 1.0);
  EXPECT_NEAR(r[0].total, 0.3, 1e-15);
}

TEST(RewardModel, UnformattedOutput) {
  const RewardModel rm(std::make_shared<FixedRetriever>(std::vector<ChunkIndex>{2}), small_store(), {});
  const auto s = make_sample(2, "scenario", "question?");
  const std::vector<std::string> ys = {"just text", "<answer>q</answer>"};
  const auto r = rm.score_group(s, ys);
  EXPECT_EQ(r[0].retrieval, 0.0);
  EXPECT_EQ(r[0].normalized_penalty, 1.0);
  EXPECT_NEAR(r[0].total, -0.2, 1e-15);
  EXPECT_TRUE(to_json(r[0])["raw_penalty"].is_null());
}

TEST(RewardModel, SingleScoreAgreesWithGroupScore) {
  const RewardModel rm(std::make_shared<FixedRetriever>(std::vector<ChunkIndex>{1, 2}), small_store(), {});
  const auto s = make_sample(2, "scenario", "question?");
  const std::vector<std::string> ys = {"a<answer>q</answer>", "<answer>q</answer>", "zz", "abc<answer>q</answer>"};
  const auto group = rm.score_group(s, ys);
  std::vector<RawPenalty> raw;
  for (const auto& y : ys) raw.push_back(format_penalty(y).raw_penalty);
  for (std::size_t i = 0; i < ys.size(); ++i) EXPECT_EQ(rm.score(s, ys[i], raw, i).total, group[i].total);
  EXPECT_THROW(rm.score(s, ys[0], raw, 1), Error);
}

TEST(RewardModel, TargetOutsideStoreNamesTheSample) {
  const RewardModel rm(std::make_shared<FixedRetriever>(std::vector<ChunkIndex>{1}), small_store(), {});
  const auto s = make_sample(9, "scenario", "question?");
  try {
    rm.retrieval_score(s, "q");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find('9'), std::string::npos);
  }
}

}  // namespace
}  // namespace rlqr
