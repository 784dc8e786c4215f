#pragma once

// Documents, chunking and the immutable chunk store that every retriever
// indexes. All offsets and lengths are in Unicode code points.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rlqr/common.hpp"

namespace rlqr {

struct Document {
  std::string doc_id;
  std::string text;
  std::map<std::string, std::string> meta;
};

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - start; }
  bool operator==(const Span&) const = default;
};

struct Chunk {
  ChunkIndex chunk_index = 0;
  std::string parent_doc;
  std::string text;
  Span span;
};

enum class ChunkMode { window, sentence };

struct ChunkConfig {
  std::size_t chunk_chars = 500;
  std::size_t overlap_chars = 100;
  ChunkMode mode = ChunkMode::window;

  void validate() const {
    if (chunk_chars == 0) throw Error("chunk_chars must be positive");
    if (overlap_chars >= chunk_chars) throw Error("overlap_chars must be smaller than chunk_chars");
  }
};

namespace detail {

inline bool is_sentence_end(char32_t c) {
  return c == U'.' || c == U'!' || c == U'?' || c == U'\n' || c == 0x3002 /* 。 */;
}

// Windows advance by chunk - overlap; the last window ends at the text end.
inline std::vector<Span> window_spans(std::size_t n, std::size_t chunk, std::size_t overlap) {
  std::vector<Span> spans;
  if (n == 0) return spans;
  const std::size_t step = chunk - overlap;
  for (std::size_t start = 0;; start += step) {
    if (start + chunk >= n) {
      spans.push_back({start, n});
      break;
    }
    spans.push_back({start, start + chunk});
  }
  return spans;
}

// Like window_spans, but each cut is pulled back to the last sentence end in
// the second half of the window when there is one.
inline std::vector<Span> sentence_spans(std::u32string_view text, std::size_t chunk,
                                        std::size_t overlap) {
  std::vector<Span> spans;
  const std::size_t n = text.size();
  std::size_t start = 0;
  while (start < n) {
    if (start + chunk >= n) {
      spans.push_back({start, n});
      break;
    }
    std::size_t end = start + chunk;
    const std::size_t floor = std::max(start + chunk / 2, start + overlap + 1);
    for (std::size_t cut = end; cut > floor; --cut) {
      if (is_sentence_end(text[cut - 1])) {
        end = cut;
        break;
      }
    }
    spans.push_back({start, end});
    start = end - overlap;
  }
  return spans;
}

}  // namespace detail

/// Splits one document into chunks. Indices are local (0-based per document);
/// build_db assigns the global ones.
inline std::vector<Chunk> chunk_document(const Document& doc, const ChunkConfig& cfg) {
  cfg.validate();
  const std::u32string cps = utf8::decode(doc.text);
  const std::vector<Span> spans =
      cfg.mode == ChunkMode::window
          ? detail::window_spans(cps.size(), cfg.chunk_chars, cfg.overlap_chars)
          : detail::sentence_spans(cps, cfg.chunk_chars, cfg.overlap_chars);
  std::vector<Chunk> chunks;
  chunks.reserve(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Span& s = spans[i];
    chunks.push_back(Chunk{static_cast<ChunkIndex>(i), doc.doc_id,
                           utf8::encode(std::u32string_view(cps).substr(s.start, s.size())), s});
  }
  return chunks;
}

inline json chunk_to_json(const Chunk& c) {
  return json{{"chunk_index", c.chunk_index},
              {"parent_doc", c.parent_doc},
              {"span", {c.span.start, c.span.end}},
              {"text", c.text}};
}

inline Chunk chunk_from_json(const json& j) {
  Chunk c;
  c.chunk_index = j.at("chunk_index").get<ChunkIndex>();
  c.parent_doc = j.at("parent_doc").get<std::string>();
  const auto& span = j.at("span");
  if (!span.is_array() || span.size() != 2) throw Error("chunk span must be [start, end]");
  c.span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
  c.text = j.at("text").get<std::string>();
  return c;
}

/// The retrieval database. Immutable once constructed; chunk_index values are
/// exactly 0..size()-1 in order.
class ChunkStore {
 public:
  ChunkStore() : fingerprint_(compute_fingerprint({})) {}

  explicit ChunkStore(std::vector<Chunk> chunks) : chunks_(std::move(chunks)) {
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
      const Chunk& c = chunks_[i];
      if (c.chunk_index != i) {
        throw Error("chunk_index " + std::to_string(c.chunk_index) + " at position " +
                    std::to_string(i) + " breaks dense numbering");
      }
      if (c.text.empty()) throw Error("chunk " + std::to_string(i) + " has empty text");
      if (c.span.end < c.span.start) throw Error("chunk " + std::to_string(i) + " has inverted span");
    }
    fingerprint_ = compute_fingerprint(chunks_);
  }

  std::size_t size() const { return chunks_.size(); }
  bool empty() const { return chunks_.empty(); }
  std::span<const Chunk> chunks() const { return chunks_; }
  const std::string& fingerprint() const { return fingerprint_; }

  const Chunk& at(ChunkIndex i) const {
    if (i >= chunks_.size()) {
      throw Error("chunk index " + std::to_string(i) + " outside store of size " +
                  std::to_string(chunks_.size()));
    }
    return chunks_[i];
  }

  bool contains(ChunkIndex i) const { return i < chunks_.size(); }

  std::string to_jsonl() const {
    std::vector<json> rows;
    rows.reserve(chunks_.size());
    for (const Chunk& c : chunks_) rows.push_back(chunk_to_json(c));
    return rlqr::to_jsonl(rows);
  }

  static ChunkStore from_jsonl(std::string_view text) {
    std::vector<Chunk> chunks;
    for (const json& row : parse_jsonl(text, "chunks")) chunks.push_back(chunk_from_json(row));
    return ChunkStore(std::move(chunks));
  }

 private:
  static std::string compute_fingerprint(const std::vector<Chunk>& chunks) {
    std::uint64_t h = fnv1a64("rlqr-chunks-v1");
    for (const Chunk& c : chunks) h = fnv1a64(dump_line(chunk_to_json(c)) + "\n", h);
    return hex64(h);
  }

  std::vector<Chunk> chunks_;
  std::string fingerprint_;
};

/// Chunks every document and numbers the result in document order, then span
/// order. Rejects duplicate doc ids.
inline ChunkStore build_db(std::span<const Document> docs, const ChunkConfig& cfg) {
  cfg.validate();
  std::set<std::string> seen;
  std::vector<Chunk> all;
  for (const Document& doc : docs) {
    if (!seen.insert(doc.doc_id).second) throw Error("duplicate doc_id: " + doc.doc_id);
    for (Chunk& c : chunk_document(doc, cfg)) {
      c.chunk_index = static_cast<ChunkIndex>(all.size());
      all.push_back(std::move(c));
    }
  }
  return ChunkStore(std::move(all));
}

inline Document document_from_json(const json& j) {
  Document d;
  d.doc_id = j.at("doc_id").get<std::string>();
  d.text = j.value("text", std::string{});
  if (j.contains("meta") && !j.at("meta").is_null()) {
    for (const auto& [k, v] : j.at("meta").items()) {
      d.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return d;
}

inline json document_to_json(const Document& d) {
  return json{{"doc_id", d.doc_id}, {"text", d.text}, {"meta", d.meta}};
}

inline std::vector<Document> parse_corpus_jsonl(std::string_view text) {
  std::vector<Document> docs;
  for (const json& row : parse_jsonl(text, "corpus")) docs.push_back(document_from_json(row));
  return docs;
}

/// Rebuilds a document's text from its chunks by dropping each chunk's
/// overlap with the previous one.
inline std::string reconstruct_text(std::span<const Chunk> doc_chunks) {
  std::u32string out;
  std::size_t covered = 0;
  for (const Chunk& c : doc_chunks) {
    const std::u32string cps = utf8::decode(c.text);
    if (c.span.start > covered) throw Error("chunk spans leave a gap at " + std::to_string(covered));
    const std::size_t skip = covered - c.span.start;
    if (skip < cps.size()) out.append(cps, skip);
    covered = std::max(covered, c.span.end);
  }
  return utf8::encode(out);
}

}  // namespace rlqr
