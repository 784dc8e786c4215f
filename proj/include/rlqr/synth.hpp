#pragma once

// Synthesis of long scenario-style queries: one completion per chunk, parsed
// from the <scenario>/<question>/<answer> tag format and filtered.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "rlqr/common.hpp"
#include "rlqr/corpus.hpp"
#include "rlqr/sample.hpp"
#include "rlqr/text.hpp"

namespace rlqr {

inline constexpr std::string_view kSynthesisInstruction =
    "# Generating document requiring question and answer\n"
    "Read the document, then (1) think of a scenario that requires the document, (2) create a "
    "question that fits the scenario, and (3) provide an answer that matches the question.\n"
    "\n"
    "If the document's information is insufficient to identify a situation requiring the "
    "document, output blank spaces.\n"
    "\n"
    "The final response format should follow this structure:\n"
    "\n"
    "<scenario>...</scenario>\n"
    "<question>...</question>\n"
    "<answer>...</answer>\n";

/// Instruction followed by the chunk text, embedded verbatim.
inline std::string render_synthesis_prompt(std::string_view chunk_text) {
  if (chunk_text.empty()) throw Error("render_synthesis_prompt: empty chunk text");
  std::string p(kSynthesisInstruction);
  p += "\n# Document\n";
  p += chunk_text;
  p += '\n';
  return p;
}

struct SynthesisTriple {
  std::string scenario;
  std::string question;
  std::string answer;
};

struct ParseRejection {
  enum class Kind { missing_tag, blank_field } kind;
  std::string field;

  /// "missing_tag:answer", "blank_field:scenario", ...
  std::string reason() const {
    return std::string(kind == Kind::missing_tag ? "missing_tag:" : "blank_field:") + field;
  }
};

using ParseResult = std::variant<SynthesisTriple, ParseRejection>;

namespace detail {

inline std::optional<std::string> extract_tag(std::string_view text, std::string_view name) {
  const std::string open = "<" + std::string(name) + ">";
  const std::string close = "</" + std::string(name) + ">";
  const auto b = text.find(open);
  if (b == std::string_view::npos) return std::nullopt;
  const auto inner = b + open.size();
  const auto e = text.find(close, inner);
  if (e == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(inner, e - inner));
}

}  // namespace detail

/// First occurrence of each tag pair; anything around them (reasoning
/// prefixes included) is ignored. Fields are trimmed.
inline ParseResult parse_synthesis_output(std::string_view completion) {
  std::string fields[3];
  constexpr std::string_view names[3] = {"scenario", "question", "answer"};
  for (int i = 0; i < 3; ++i) {
    auto v = detail::extract_tag(completion, names[i]);
    if (!v) return ParseRejection{ParseRejection::Kind::missing_tag, std::string(names[i])};
    fields[i] = trim(*v);
  }
  for (int i = 0; i < 3; ++i) {
    if (fields[i].empty()) return ParseRejection{ParseRejection::Kind::blank_field, std::string(names[i])};
  }
  return SynthesisTriple{std::move(fields[0]), std::move(fields[1]), std::move(fields[2])};
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

struct CompletionRequest {
  ChunkIndex chunk_index = 0;
  std::string prompt;
};

/// Typed provider failure. Transport-level failures are retryable.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  /// Returns the completion text or throws ProviderError. Must be safe to
  /// call from several threads.
  virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Replays completions from JSONL rows {"chunk_index", "completion"}. A row
/// may instead carry {"error": msg, "fail_times": n}: the first n attempts
/// fail with a retryable error (n absent = always), then "completion" is
/// returned if present.
class ScriptedProvider final : public CompletionProvider {
 public:
  struct Entry {
    std::optional<std::string> completion;
    std::optional<std::string> error;
    std::optional<std::size_t> fail_times;
  };

  ScriptedProvider() = default;
  explicit ScriptedProvider(std::map<ChunkIndex, Entry> entries) : entries_(std::move(entries)) {}

  static std::map<ChunkIndex, Entry> parse_script(std::string_view text) {
    std::map<ChunkIndex, Entry> entries;
    for (const json& row : parse_jsonl(text, "script")) {
      Entry e;
      if (row.contains("completion")) e.completion = row.at("completion").get<std::string>();
      if (row.contains("error")) e.error = row.at("error").get<std::string>();
      if (row.contains("fail_times")) e.fail_times = row.at("fail_times").get<std::size_t>();
      entries[row.at("chunk_index").get<ChunkIndex>()] = std::move(e);
    }
    return entries;
  }

  static ScriptedProvider from_jsonl(std::string_view text) { return ScriptedProvider(parse_script(text)); }

  void set(ChunkIndex chunk, Entry e) { entries_[chunk] = std::move(e); }

  std::string complete(const CompletionRequest& request) override {
    std::lock_guard lock(mu_);
    const std::size_t attempt = attempts_[request.chunk_index]++;
    auto it = entries_.find(request.chunk_index);
    if (it == entries_.end()) {
      throw ProviderError("no scripted completion for chunk " + std::to_string(request.chunk_index), false);
    }
    const Entry& e = it->second;
    if (e.error && (!e.fail_times || attempt < *e.fail_times)) throw ProviderError(*e.error, true);
    if (!e.completion) throw ProviderError("scripted entry has no completion", false);
    return *e.completion;
  }

  std::size_t attempts(ChunkIndex chunk) const {
    std::lock_guard lock(mu_);
    auto it = attempts_.find(chunk);
    return it == attempts_.end() ? 0 : it->second;
  }

 private:
  std::map<ChunkIndex, Entry> entries_;
  std::map<ChunkIndex, std::size_t> attempts_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Filters and assembly
// ---------------------------------------------------------------------------

struct ScriptRange {
  char32_t lo;
  char32_t hi;
};

inline std::vector<ScriptRange> default_allowed_scripts() {
  return {{U'A', U'Z'},    {U'a', U'z'},    {0x00C0, 0x024F},  // Latin
          {0xAC00, 0xD7AF}, {0x1100, 0x11FF}, {0x3130, 0x318F}};  // Hangul
}

struct FilterConfig {
  std::size_t min_question_chars = 10;
  /// Maximum share of letters outside the allowed ranges.
  double max_foreign_fraction = 0.2;
  std::vector<ScriptRange> allowed_scripts = default_allowed_scripts();
};

inline bool is_letter(char32_t c) {
  if (c < 0x80) return (c >= U'A' && c <= U'Z') || (c >= U'a' && c <= U'z');
  return !is_space(c) && !is_punct(c);
}

/// Share of letters in `text` outside every allowed range (0 if no letters).
inline double foreign_letter_fraction(std::string_view text, std::span<const ScriptRange> allowed) {
  std::size_t letters = 0, foreign = 0;
  for (char32_t c : utf8::decode(text)) {
    if (!is_letter(c)) continue;
    ++letters;
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [c](const ScriptRange& r) { return c >= r.lo && c <= r.hi; });
    if (!ok) ++foreign;
  }
  return letters == 0 ? 0.0 : static_cast<double>(foreign) / static_cast<double>(letters);
}

struct SynthReport {
  std::size_t total_chunks = 0;
  std::size_t accepted = 0;
  std::map<std::string, std::size_t> rejections;  // reason -> count
  std::map<ChunkIndex, std::string> provider_errors;

  double acceptance_rate() const {
    return total_chunks == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(total_chunks);
  }

  json to_json() const {
    json errs = json::object();
    for (const auto& [k, v] : provider_errors) errs[std::to_string(k)] = v;
    return json{{"total_chunks", total_chunks},
                {"accepted", accepted},
                {"acceptance_rate", acceptance_rate()},
                {"rejections", rejections},
                {"provider_errors", errs}};
  }
};

struct SynthOptions {
  std::size_t max_retries = 2;
  std::size_t concurrency = 4;
};

struct TrainingSet {
  std::vector<QuerySample> samples;
  SynthReport report;
};

namespace detail {

struct ChunkOutcome {
  std::optional<QuerySample> sample;
  std::string reason;  // empty when accepted
  std::string error;
};

inline ChunkOutcome synthesize_chunk(const Chunk& chunk, CompletionProvider& provider,
                                     const FilterConfig& filters, const SynthOptions& opts) {
  ChunkOutcome out;
  const CompletionRequest req{chunk.chunk_index, render_synthesis_prompt(chunk.text)};
  std::optional<std::string> completion;
  for (std::size_t attempt = 0; attempt <= opts.max_retries; ++attempt) {
    try {
      completion = provider.complete(req);
      break;
    } catch (const ProviderError& e) {
      out.error = e.what();
      if (!e.retryable()) break;
    } catch (const std::exception& e) {
      out.error = e.what();
      break;
    }
  }
  if (!completion) {
    out.reason = "provider_failure";
    return out;
  }
  out.error.clear();
  ParseResult parsed = parse_synthesis_output(*completion);
  if (auto* rej = std::get_if<ParseRejection>(&parsed)) {
    out.reason = rej->reason();
    return out;
  }
  auto& triple = std::get<SynthesisTriple>(parsed);
  if (utf8::length(triple.question) < filters.min_question_chars) {
    out.reason = "min_length";
    return out;
  }
  QuerySample s = make_sample(chunk.chunk_index, std::move(triple.scenario),
                              std::move(triple.question), std::move(triple.answer));
  if (foreign_letter_fraction(s.query, filters.allowed_scripts) > filters.max_foreign_fraction) {
    out.reason = "script";
    return out;
  }
  out.sample = std::move(s);
  return out;
}

}  // namespace detail

/// At most one sample per chunk, in chunk order regardless of which request
/// finishes first. Throws only when the provider failed for every chunk.
inline TrainingSet build_training_set(const ChunkStore& store, CompletionProvider& provider,
                                      const FilterConfig& filters, const SynthOptions& opts = {}) {
  if (store.empty()) throw Error("build_training_set: empty chunk store");
  std::vector<detail::ChunkOutcome> outcomes(store.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < store.size(); i = next++) {
      outcomes[i] = detail::synthesize_chunk(store.chunks()[i], provider, filters, opts);
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(opts.concurrency, 1, store.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  TrainingSet out;
  out.report.total_chunks = store.size();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (o.sample) {
      out.samples.push_back(std::move(*o.sample));
      ++out.report.accepted;
    } else {
      ++out.report.rejections[o.reason];
      if (!o.error.empty()) out.report.provider_errors[static_cast<ChunkIndex>(i)] = o.error;
    }
  }
  if (out.report.rejections["provider_failure"] == store.size()) {
    throw Error("synthesis provider failed for every chunk (first error: " +
                out.report.provider_errors.begin()->second + ")");
  }
  if (out.report.rejections["provider_failure"] == 0) out.report.rejections.erase("provider_failure");
  return out;
}

}  // namespace rlqr
