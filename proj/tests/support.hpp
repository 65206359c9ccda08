#pragma once

#include <random>
#include <string>
#include <vector>

#include "dirinet/graph.hpp"
#include "dirinet/log.hpp"
#include "dirinet/types.hpp"

namespace testing {

inline std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("v" + std::to_string(i));
  return ids;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Directed graph where each ordered pair is an edge with probability
// `density`, weights uniform in (0.05, 1].
inline dirinet::WeightedDigraph random_digraph(std::size_t n, double density, std::mt19937_64& rng) {
  std::vector<dirinet::Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && uniform(rng, 0.0, 1.0) < density) edges.push_back({i, j, uniform(rng, 0.05, 1.0)});
    }
  }
  return dirinet::WeightedDigraph::from_edges(make_ids(n), edges);
}

inline dirinet::WeightedDigraph random_symmetric(std::size_t n, double density, std::mt19937_64& rng) {
  std::vector<dirinet::Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (uniform(rng, 0.0, 1.0) < density) {
        const double w = uniform(rng, 0.05, 1.0);
        edges.push_back({i, j, w});
        edges.push_back({j, i, w});
      }
    }
  }
  return dirinet::WeightedDigraph::from_edges(make_ids(n), edges);
}

// Chain 0 -> 1 -> ... -> n-1 with the given weight.
inline dirinet::WeightedDigraph chain(std::size_t n, double w = 1.0) {
  std::vector<dirinet::Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, w});
  return dirinet::WeightedDigraph::from_edges(make_ids(n), edges);
}

// Random observed subset of size >= ceil(fraction * n), sorted.
inline std::vector<std::size_t> random_observed(std::size_t n, double fraction, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  std::vector<std::size_t> out(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

inline dirinet::Matrix dense(const dirinet::SparseMatrix& m) { return dirinet::Matrix(m); }

// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = dirinet::set_warning_sink([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { dirinet::set_warning_sink(previous_); }
  std::vector<std::string> messages;

 private:
  dirinet::WarningSink previous_;
};

}  // namespace testing
