#pragma once

// HTTP-backed providers: chat-completions synthesis, embeddings, and the
// external policy adapter. Kept apart from the core headers so that only
// targets that talk to services pull in cpp-httplib.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <utility>

#include "httplib.h"
#include "rlqr/common.hpp"
#include "rlqr/policy.hpp"
#include "rlqr/retrieval.hpp"
#include "rlqr/synth.hpp"

namespace rlqr {

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path;
  std::string api_key_env;  // name of the environment variable with the key
  double timeout_s = 60.0;
};

namespace detail {

inline std::string bearer_from_env(const std::string& var) {
  if (var.empty()) return {};
  const char* v = std::getenv(var.c_str());
  return v ? std::string(v) : std::string{};
}

/// POSTs JSON. Connection failures, 429 and 5xx are retryable ProviderErrors;
/// other non-2xx statuses and malformed bodies are not.
inline json post_json(const HttpEndpoint& ep, const std::string& path, const json& body) {
  httplib::Client cli(ep.base_url);
  const auto timeout = std::chrono::duration<double>(ep.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  const std::string key = bearer_from_env(ep.api_key_env);
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
  auto res = cli.Post(path, headers, dump_line(body), "application/json");
  if (!res) {
    throw ProviderError("POST " + ep.base_url + path + " failed: " + httplib::to_string(res.error()), true);
  }
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError("POST " + ep.base_url + path + " returned " + std::to_string(res->status), true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError("POST " + ep.base_url + path + " returned " + std::to_string(res->status) +
                            ": " + res->body.substr(0, 200),
                        false);
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ProviderError("malformed JSON from " + ep.base_url + path + ": " + e.what(), false);
  }
}

}  // namespace detail

struct ChatSettings {
  std::string model;
  double temperature = 0.6;
  int max_tokens = 2048;
};

/// Chat-completions style provider.
///
/// Request:  {"model": str, "messages": [{"role": "user", "content": prompt}],
///            "temperature": num, "max_tokens": int}
/// Response: {"choices": [{"message": {"content": str}}]}
class HttpCompletionProvider final : public CompletionProvider {
 public:
  HttpCompletionProvider(HttpEndpoint endpoint, ChatSettings chat)
      : ep_(std::move(endpoint)), chat_(std::move(chat)) {
    if (ep_.path.empty()) ep_.path = "/v1/chat/completions";
  }

  static json request_body(const ChatSettings& chat, std::string_view prompt) {
    return json{{"model", chat.model},
                {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                {"temperature", chat.temperature},
                {"max_tokens", chat.max_tokens}};
  }

  static std::string parse_response(const json& j) {
    try {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw ProviderError(std::string("unexpected completion response shape: ") + e.what(), false);
    }
  }

  std::string complete(const CompletionRequest& request) override {
    return parse_response(detail::post_json(ep_, ep_.path, request_body(chat_, request.prompt)));
  }

 private:
  HttpEndpoint ep_;
  ChatSettings chat_;
};

/// Embedding service.
///
/// Request:  {"model": str, "input": str}
/// Response: {"data": [{"embedding": [num, ...]}]}
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(HttpEndpoint endpoint, std::string model, std::size_t dimension)
      : ep_(std::move(endpoint)), model_(std::move(model)), dimension_(dimension) {
    if (ep_.path.empty()) ep_.path = "/v1/embeddings";
  }

  std::size_t dimension() const override { return dimension_; }
  std::string fingerprint() const override {
    return "http:" + model_ + ":d=" + std::to_string(dimension_);
  }

  std::vector<double> embed(std::string_view text) const override {
    const json res = detail::post_json(ep_, ep_.path, json{{"model", model_}, {"input", text}});
    std::vector<double> v;
    try {
      v = res.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ProviderError(std::string("unexpected embedding response shape: ") + e.what(), false);
    }
    if (v.size() != dimension_) {
      throw ProviderError("embedding has dimension " + std::to_string(v.size()) + ", expected " +
                              std::to_string(dimension_),
                          false);
    }
    return v;
  }

 private:
  HttpEndpoint ep_;
  std::string model_;
  std::size_t dimension_;
};

/// ExternalPolicy over HTTP. Endpoints, relative to base_url + path prefix:
///   POST /sample      {"prompt","temperature","seed"}       -> {"tokens","logprobs"}
///   POST /logprobs    {"prompt","tokens"}                   -> {"current","old"}
///   POST /snapshot    {}                                    -> {}
///   POST /accumulate  {"prompt","tokens","coefficients"}    -> {}
///   POST /step        {"learning_rate"}                     -> {}
class HttpPolicyAdapter final : public ExternalPolicy {
 public:
  HttpPolicyAdapter(HttpEndpoint endpoint, std::string name)
      : ep_(std::move(endpoint)), name_(std::move(name)) {}

  std::string name() const override { return name_; }

  ExternalSample sample(std::string_view prompt, double temperature, std::uint64_t seed) override {
    return wire::sample_response(post("/sample", wire::sample_request(prompt, temperature, seed)));
  }
  TokenLogprobs logprobs(std::string_view prompt, std::span<const std::string> tokens) override {
    return wire::logprobs_response(post("/logprobs", wire::logprobs_request(prompt, tokens)), tokens.size());
  }
  void snapshot() override { post("/snapshot", json::object()); }
  void accumulate(std::string_view prompt, std::span<const std::string> tokens,
                  std::span<const double> coeffs) override {
    post("/accumulate", wire::accumulate_request(prompt, tokens, coeffs));
  }
  void step(double learning_rate) override { post("/step", wire::step_request(learning_rate)); }

 private:
  json post(const std::string& route, const json& body) {
    return detail::post_json(ep_, ep_.path + route, body);
  }

  HttpEndpoint ep_;
  std::string name_;
};

}  // namespace rlqr
