#include <gtest/gtest.h>

#include "rlqr/corpus.hpp"
#include "support.hpp"

namespace rlqr {
namespace {

// Sliding-window rule restated from scratch: windows of `chunk` code points
// starting every chunk - overlap, stopping at the first window that reaches
// the end of the text.
std::vector<std::pair<std::size_t, std::size_t>> reference_windows(std::size_t n, std::size_t chunk,
                                                                   std::size_t overlap) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (n == 0) return out;
  std::size_t s = 0;
  while (true) {
    const std::size_t e = std::min(s + chunk, n);
    out.emplace_back(s, e);
    if (e == n) break;
    s += chunk - overlap;
  }
  return out;
}

std::string repeat_text(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + i % 26));
  return s;
}

std::vector<std::pair<std::size_t, std::size_t>> spans_of(const std::vector<Chunk>& chunks) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : chunks) out.emplace_back(c.span.start, c.span.end);
  return out;
}

TEST(ChunkDocument, OverlappingWindowsOn1200Chars) {
  const auto chunks = chunk_document({"d", repeat_text(1200), {}}, {500, 100, ChunkMode::window});
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {{0, 500}, {400, 900}, {800, 1200}};
  EXPECT_EQ(spans_of(chunks), expected);
  EXPECT_EQ(chunks[1].text, repeat_text(1200).substr(400, 500));
}

TEST(ChunkDocument, EmptyTextHasNoChunks) {
  EXPECT_TRUE(chunk_document({"d", "", {}}, {}).empty());
}

TEST(ChunkDocument, ShortTextIsOneChunk) {
  const auto chunks = chunk_document({"d", repeat_text(300), {}}, {500, 100, ChunkMode::window});
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].span.start, 0u);
  EXPECT_EQ(chunks[0].span.end, 300u);
}

TEST(ChunkDocument, SpansMatchReferenceRuleOverManyShapes) {
  for (std::size_t n : {1u, 99u, 100u, 101u, 499u, 500u, 501u, 899u, 900u, 901u, 1200u, 1201u, 3333u}) {
    for (auto [c, o] : {std::pair<std::size_t, std::size_t>{500, 100}, {100, 0}, {64, 63}, {7, 3}}) {
      const auto chunks = chunk_document({"d", repeat_text(n), {}}, {c, o, ChunkMode::window});
      EXPECT_EQ(spans_of(chunks), reference_windows(n, c, o)) << "n=" << n << " c=" << c << " o=" << o;
    }
  }
}

TEST(ChunkDocument, CountsCodePointsNotBytes) {
  std::string text;
  for (int i = 0; i < 12; ++i) text += "\xEC\x95\x88";  // 12 Hangul syllables
  const auto chunks = chunk_document({"d", text, {}}, {5, 1, ChunkMode::window});
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {{0, 5}, {4, 9}, {8, 12}};
  EXPECT_EQ(spans_of(chunks), expected);
  EXPECT_EQ(utf8::length(chunks[0].text), 5u);
}

TEST(ChunkDocument, ReconstructionRecoversTheDocument) {
  const std::string text = "Sentence one is here. Another one follows! And a third? Fine.";
  for (auto mode : {ChunkMode::window, ChunkMode::sentence}) {
    const auto chunks = chunk_document({"d", text, {}}, {20, 5, mode});
    EXPECT_EQ(reconstruct_text(chunks), text);
    for (const auto& c : chunks) EXPECT_LE(c.span.size(), 20u);
  }
}

TEST(ChunkConfig, RejectsOverlapNotSmallerThanChunk) {
  EXPECT_THROW((ChunkConfig{100, 100, ChunkMode::window}.validate()), Error);
  EXPECT_THROW((ChunkConfig{0, 0, ChunkMode::window}.validate()), Error);
}

TEST(BuildDb, AssignsGlobalIndicesAndKeepsParents) {
  const std::vector<Document> docs = {{"A", repeat_text(1200), {}}, {"B", repeat_text(700), {}}};
  const ChunkStore store = build_db(docs, {500, 100, ChunkMode::window});
  ASSERT_EQ(store.size(), 5u);
  for (ChunkIndex i = 0; i < 5; ++i) EXPECT_EQ(store.at(i).chunk_index, i);
  EXPECT_EQ(store.at(2).parent_doc, "A");
  EXPECT_EQ(store.at(3).parent_doc, "B");
  EXPECT_EQ(store.at(4).parent_doc, "B");
}

TEST(BuildDb, EmptyCorpusGivesEmptyStore) {
  EXPECT_TRUE(build_db(std::vector<Document>{}, {}).empty());
}

TEST(BuildDb, SameInputSameFingerprint) {
  const std::vector<Document> docs = {{"A", "alpha beta", {}}, {"B", "gamma", {}}};
  EXPECT_EQ(build_db(docs, {}).fingerprint(), build_db(docs, {}).fingerprint());
  const std::vector<Document> other = {{"A", "alpha beta", {}}, {"B", "gamma!", {}}};
  EXPECT_NE(build_db(docs, {}).fingerprint(), build_db(other, {}).fingerprint());
}

TEST(BuildDb, DuplicateDocIdIsRejected) {
  const std::vector<Document> docs = {{"A", "x", {}}, {"A", "y", {}}};
  try {
    build_db(docs, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "duplicate doc_id: A");
  }
}

TEST(ChunkStore, OutOfRangeLookupThrows) {
  const std::vector<Document> docs = {{"A", "x", {}}};
  const ChunkStore store = build_db(docs, {});
  EXPECT_THROW(store.at(1), Error);
  EXPECT_FALSE(store.contains(1));
}

TEST(ChunkStore, JsonlRoundTripPreservesEverything) {
  const std::vector<Document> docs = {{"A", repeat_text(1200), {}}, {"B", "\xED\x95\x9C\xEA\xB8\x80 text", {}}};
  const ChunkStore store = build_db(docs, {500, 100, ChunkMode::window});
  const ChunkStore back = ChunkStore::from_jsonl(store.to_jsonl());
  EXPECT_EQ(back.fingerprint(), store.fingerprint());
  EXPECT_EQ(back.to_jsonl(), store.to_jsonl());
}

TEST(ChunkStore, RejectsSparseIndices) {
  std::vector<Chunk> chunks = {{0, "A", "x", {0, 1}}, {2, "A", "y", {1, 2}}};
  EXPECT_THROW(ChunkStore{chunks}, Error);
}

TEST(Corpus, ParsesDocumentsWithMeta) {
  const auto docs = parse_corpus_jsonl(
      "{\"doc_id\":\"d1\",\"text\":\"hello\",\"meta\":{\"title\":\"T\",\"year\":2024}}\n"
      "{\"doc_id\":\"d2\",\"text\":\"\"}\n");
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].meta.at("title"), "T");
  EXPECT_EQ(docs[0].meta.at("year"), "2024");
  EXPECT_TRUE(docs[1].text.empty());
}

}  // namespace
}  // namespace rlqr
