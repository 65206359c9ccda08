#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dirinet/types.hpp"

namespace dirinet {

/// One directed travel distance between two sensors, in meters.
struct DistanceRecord {
  std::string from;
  std::string to;
  double meters = 0.0;
};

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  double weight = 0.0;
};

/// Directed weighted sensor graph.
///
/// Immutable once built. Stores the adjacency and its transpose in
/// compressed-row form. Node indices follow the order of `node_ids()`.
class WeightedDigraph {
 public:
  WeightedDigraph() = default;

  /// Builds from explicit edges. Weights must be finite and in [0, 1];
  /// self-loops and zero weights are dropped; repeated (from, to) pairs
  /// are rejected.
  static WeightedDigraph from_edges(std::vector<std::string> node_ids,
                                    std::span<const Edge> edges);

  std::size_t size() const { return node_ids_.size(); }
  std::size_t edge_count() const { return static_cast<std::size_t>(adjacency_.nonZeros()); }

  const std::vector<std::string>& node_ids() const { return node_ids_; }
  std::optional<std::size_t> index_of(const std::string& id) const;

  const SparseMatrix& adjacency() const { return adjacency_; }
  const SparseMatrix& adjacency_transposed() const { return adjacency_t_; }
  const Vector& out_degree() const { return out_degree_; }
  const Vector& in_degree() const { return in_degree_; }
  /// d_o + d_I per node.
  Vector total_degree() const { return out_degree_ + in_degree_; }

  /// Nodes whose total degree is zero.
  std::vector<std::size_t> isolated_nodes() const;

  std::vector<Edge> edges() const;

  /// Subgraph induced on `nodes` (in the given order), degrees recomputed.
  WeightedDigraph induced_subgraph(std::span<const std::size_t> nodes) const;

  /// Kernel bandwidth and threshold the graph was built with, when it came
  /// from distances.
  std::optional<double> sigma() const { return sigma_; }
  std::optional<double> kappa() const { return kappa_; }
  void set_kernel_parameters(double sigma, double kappa) {
    sigma_ = sigma;
    kappa_ = kappa;
  }

 private:
  std::vector<std::string> node_ids_;
  std::unordered_map<std::string, std::size_t> index_;
  SparseMatrix adjacency_;
  SparseMatrix adjacency_t_;
  Vector out_degree_;
  Vector in_degree_;
  std::optional<double> sigma_;
  std::optional<double> kappa_;
};

/// sigma = nullopt means "auto": population standard deviation of every
/// finite distance supplied, before thresholding.
struct KernelOptions {
  std::optional<double> sigma;
  double kappa = std::numeric_limits<double>::infinity();
};

/// Gaussian-kernel adjacency: A_ij = exp(-d_ij^2 / sigma^2) for listed
/// routes with d_ij <= kappa, zero elsewhere and on the diagonal.
/// Emits a warning naming isolated nodes.
WeightedDigraph build_adjacency(std::span<const std::string> node_universe,
                                std::span<const DistanceRecord> distances,
                                const KernelOptions& options);

/// Observed/unobserved split of the node set. Observed indices come first
/// in `permutation()`.
class NodePartition {
 public:
  NodePartition() = default;
  NodePartition(std::size_t node_count, std::vector<std::size_t> observed);

  /// Every node observed.
  static NodePartition all_observed(std::size_t node_count);

  std::size_t node_count() const { return is_observed_.size(); }
  const std::vector<std::size_t>& observed() const { return observed_; }
  const std::vector<std::size_t>& unobserved() const { return unobserved_; }
  std::vector<std::size_t> permutation() const;
  bool is_observed(std::size_t node) const { return is_observed_[node] != 0; }

 private:
  std::vector<std::size_t> observed_;
  std::vector<std::size_t> unobserved_;
  std::vector<std::uint8_t> is_observed_;
};

enum class TransitionKind { coupled, congestion, freeflow, normalized };

struct TransitionMatrix {
  TransitionKind kind = TransitionKind::coupled;
  SparseMatrix matrix;
};

/// (D_o + D_I)^{-1} (A + A^T); zero-degree rows stay empty.
TransitionMatrix transition_coupled(const WeightedDigraph& g);

/// Congestion part (D_o + D_I)^{-1} A and free-flow part (D_o + D_I)^{-1} A^T.
struct DecoupledTransition {
  TransitionMatrix congestion;
  TransitionMatrix freeflow;
};
DecoupledTransition transition_decoupled(const WeightedDigraph& g);

/// (D_o + D_I)^{-1/2} (A + A^T) (D_o + D_I)^{-1/2}, the symmetric
/// normalization used by spectral graph convolutions. Offered as an
/// alternative to the coupled operator.
TransitionMatrix transition_symmetric_normalized(const WeightedDigraph& g);

/// P = (D_o + D_I) - (A + A^T). Symmetric, zero row sums, PSD.
SparseMatrix energy_operator(const WeightedDigraph& g);

struct PartitionBlocks {
  SparseMatrix unobserved_observed;    // |U| x |O|
  SparseMatrix unobserved_unobserved;  // |U| x |U|
};
PartitionBlocks partition_blocks(const WeightedDigraph& g, const NodePartition& part);

/// Nodes of `part.unobserved()` with no path in A + A^T to an observed node.
std::vector<std::size_t> unreachable_unobserved(const WeightedDigraph& g,
                                                const NodePartition& part);

}  // namespace dirinet
