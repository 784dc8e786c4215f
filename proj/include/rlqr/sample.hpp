#pragma once

#include <string>
#include <vector>

#include "rlqr/common.hpp"

namespace rlqr {

/// One training / evaluation example: a long user query and the chunk it was
/// synthesized from.
struct QuerySample {
  ChunkIndex target_index = 0;
  std::string scenario;
  std::string question;
  std::string answer;
  std::string query;  // scenario + " " + question
};

inline std::string concat_query(std::string_view scenario, std::string_view question) {
  std::string q;
  q.reserve(scenario.size() + 1 + question.size());
  q.append(scenario);
  q.push_back(' ');
  q.append(question);
  return q;
}

inline QuerySample make_sample(ChunkIndex target, std::string scenario, std::string question,
                               std::string answer = {}) {
  QuerySample s{target, std::move(scenario), std::move(question), std::move(answer), {}};
  s.query = concat_query(s.scenario, s.question);
  return s;
}

inline json sample_to_json(const QuerySample& s) {
  return json{{"target_index", s.target_index},
              {"scenario", s.scenario},
              {"question", s.question},
              {"answer", s.answer},
              {"query", s.query}};
}

inline QuerySample sample_from_json(const json& j) {
  QuerySample s;
  s.target_index = j.at("target_index").get<ChunkIndex>();
  s.scenario = j.at("scenario").get<std::string>();
  s.question = j.at("question").get<std::string>();
  s.answer = j.value("answer", std::string{});
  s.query = j.contains("query") ? j.at("query").get<std::string>() : concat_query(s.scenario, s.question);
  if (s.query != concat_query(s.scenario, s.question)) {
    throw Error("sample for chunk " + std::to_string(s.target_index) +
                ": query is not scenario + ' ' + question");
  }
  return s;
}

inline std::string dataset_to_jsonl(const std::vector<QuerySample>& samples) {
  std::vector<json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(sample_to_json(s));
  return to_jsonl(rows);
}

inline std::vector<QuerySample> dataset_from_jsonl(std::string_view text) {
  std::vector<QuerySample> out;
  for (const json& row : parse_jsonl(text, "dataset")) out.push_back(sample_from_json(row));
  return out;
}

}  // namespace rlqr
