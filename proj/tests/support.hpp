#pragma once

// Independent reference computations and fixtures shared by the suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "rlqr/common.hpp"

namespace rlqr::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("rlqr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// DCG over an explicit relevance vector in ranked order, normalized by the
/// DCG of the same relevances sorted descending.
inline double brute_ndcg(const std::vector<double>& relevance_in_rank_order,
                         const std::vector<double>& all_relevances, std::size_t k) {
  auto dcg = [k](const std::vector<double>& rel) {
    double s = 0.0;
    for (std::size_t i = 0; i < rel.size() && i < k; ++i) s += rel[i] / std::log2(static_cast<double>(i) + 2.0);
    return s;
  };
  std::vector<double> ideal = all_relevances;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal);
  return idcg == 0.0 ? 0.0 : dcg(relevance_in_rank_order) / idcg;
}

/// Textbook BM25 with query-term frequency weighting, evaluated from raw
/// token lists.
inline double bm25_direct(const std::vector<std::vector<std::string>>& docs, std::size_t doc,
                          const std::vector<std::string>& query, double k1, double b, double k3) {
  const double n = static_cast<double>(docs.size());
  double total_len = 0.0;
  for (const auto& d : docs) total_len += static_cast<double>(d.size());
  const double avgdl = total_len / n;
  std::map<std::string, int> qtf;
  for (const auto& t : query) ++qtf[t];
  double score = 0.0;
  for (const auto& [term, q] : qtf) {
    double df = 0.0;
    for (const auto& d : docs) {
      if (std::find(d.begin(), d.end(), term) != d.end()) df += 1.0;
    }
    const double tf = static_cast<double>(std::count(docs[doc].begin(), docs[doc].end(), term));
    if (tf == 0.0) continue;
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double dl = static_cast<double>(docs[doc].size());
    const double tf_part = tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    const double q_part = (k3 + 1.0) * q / (k3 + q);
    score += idf * tf_part * q_part;
  }
  return score;
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

}  // namespace rlqr::testing
