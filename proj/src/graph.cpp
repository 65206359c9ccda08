#include "dirinet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <sstream>
#include <utility>

#include "dirinet/error.hpp"
#include "dirinet/log.hpp"

namespace dirinet {

namespace {

using Triplet = Eigen::Triplet<double>;

SparseMatrix scale_rows(const SparseMatrix& m, const Vector& row_scale) {
  SparseMatrix out = m;
  for (Eigen::Index r = 0; r < out.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(out, r); it; ++it) it.valueRef() *= row_scale[r];
  }
  return out;
}

// 1 / (d_o + d_I), with 0 for isolated nodes.
Vector inverse_total_degree(const WeightedDigraph& g) {
  Vector total = g.total_degree();
  Vector inv(total.size());
  for (Eigen::Index i = 0; i < total.size(); ++i) inv[i] = total[i] > 0.0 ? 1.0 / total[i] : 0.0;
  return inv;
}

std::string join_ids(const WeightedDigraph& g, const std::vector<std::size_t>& nodes) {
  std::ostringstream os;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (k) os << ", ";
    if (k == 20) {
      os << "... (" << nodes.size() << " total)";
      break;
    }
    os << g.node_ids()[nodes[k]];
  }
  return os.str();
}

}  // namespace

WeightedDigraph WeightedDigraph::from_edges(std::vector<std::string> node_ids,
                                            std::span<const Edge> edges) {
  WeightedDigraph g;
  const std::size_t n = node_ids.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!g.index_.emplace(node_ids[i], i).second) {
      throw InputError("duplicate node id '" + node_ids[i] + "'");
    }
  }
  g.node_ids_ = std::move(node_ids);

  std::vector<Triplet> triplets;
  triplets.reserve(edges.size());
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  seen.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.from >= n || e.to >= n) throw InputError("edge endpoint out of range");
    if (!std::isfinite(e.weight) || e.weight < 0.0 || e.weight > 1.0) {
      throw InputError("edge weight must be finite and in [0, 1]");
    }
    seen.emplace_back(e.from, e.to);
    if (e.from == e.to || e.weight == 0.0) continue;
    triplets.emplace_back(static_cast<int>(e.from), static_cast<int>(e.to), e.weight);
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw InputError("repeated directed edge");
  }

  const auto dim = static_cast<Eigen::Index>(n);
  g.adjacency_.resize(dim, dim);
  g.adjacency_.setFromTriplets(triplets.begin(), triplets.end());
  g.adjacency_.makeCompressed();
  g.adjacency_t_ = g.adjacency_.transpose();
  g.adjacency_t_.makeCompressed();

  g.out_degree_ = Vector::Zero(dim);
  g.in_degree_ = Vector::Zero(dim);
  for (Eigen::Index r = 0; r < dim; ++r) {
    for (SparseMatrix::InnerIterator it(g.adjacency_, r); it; ++it) {
      g.out_degree_[r] += it.value();
      g.in_degree_[it.col()] += it.value();
    }
  }
  return g;
}

std::optional<std::size_t> WeightedDigraph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> WeightedDigraph::isolated_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (out_degree_[i] + in_degree_[i] <= 0.0) out.push_back(i);
  }
  return out;
}

std::vector<Edge> WeightedDigraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count());
  for (Eigen::Index r = 0; r < adjacency_.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(adjacency_, r); it; ++it) {
      out.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(it.col()), it.value()});
    }
  }
  return out;
}

WeightedDigraph WeightedDigraph::induced_subgraph(std::span<const std::size_t> nodes) const {
  std::vector<long> position(size(), -1);
  std::vector<std::string> ids;
  ids.reserve(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k] >= size()) throw InputError("subgraph node index out of range");
    if (position[nodes[k]] >= 0) throw InputError("subgraph node listed twice");
    position[nodes[k]] = static_cast<long>(k);
    ids.push_back(node_ids_[nodes[k]]);
  }
  std::vector<Edge> sub_edges;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(nodes[k]);
    for (SparseMatrix::InnerIterator it(adjacency_, r); it; ++it) {
      const long col = position[static_cast<std::size_t>(it.col())];
      if (col >= 0) sub_edges.push_back({k, static_cast<std::size_t>(col), it.value()});
    }
  }
  WeightedDigraph sub = from_edges(std::move(ids), sub_edges);
  sub.sigma_ = sigma_;
  sub.kappa_ = kappa_;
  return sub;
}

WeightedDigraph build_adjacency(std::span<const std::string> node_universe,
                                std::span<const DistanceRecord> distances,
                                const KernelOptions& options) {
  if (distances.empty()) throw InputError("distance list is empty");
  if (!(options.kappa > 0.0)) throw InputError("kappa must be positive");

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < node_universe.size(); ++i) {
    if (!index.emplace(node_universe[i], i).second) {
      throw InputError("duplicate node id '" + node_universe[i] + "'");
    }
  }

  std::map<std::pair<std::size_t, std::size_t>, double> pairs;
  double sum = 0.0;
  double count = 0.0;
  for (const DistanceRecord& rec : distances) {
    auto from = index.find(rec.from);
    auto to = index.find(rec.to);
    if (from == index.end()) throw InputError("distance refers to unknown node '" + rec.from + "'");
    if (to == index.end()) throw InputError("distance refers to unknown node '" + rec.to + "'");
    if (std::isnan(rec.meters) || rec.meters < 0.0) {
      throw InputError("negative or NaN distance for " + rec.from + " -> " + rec.to);
    }
    auto [it, inserted] = pairs.emplace(std::make_pair(from->second, to->second), rec.meters);
    if (!inserted) {
      throw InputError("duplicate distance pair " + rec.from + " -> " + rec.to +
                       (it->second == rec.meters ? "" : " with conflicting values"));
    }
    if (std::isfinite(rec.meters)) {
      sum += rec.meters;
      count += 1.0;
    }
  }

  double sigma = 0.0;
  if (options.sigma) {
    sigma = *options.sigma;
  } else {
    if (count == 0.0) throw InputError("sigma=auto needs at least one finite distance");
    const double mean = sum / count;
    double ss = 0.0;
    for (const DistanceRecord& rec : distances) {
      if (std::isfinite(rec.meters)) ss += (rec.meters - mean) * (rec.meters - mean);
    }
    sigma = std::sqrt(ss / count);
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("sigma must be positive and finite");

  std::vector<Edge> edges;
  edges.reserve(pairs.size());
  for (const auto& [key, d] : pairs) {
    if (key.first == key.second || !(d <= options.kappa)) continue;
    const double w = std::exp(-(d * d) / (sigma * sigma));
    if (w > 0.0) edges.push_back({key.first, key.second, w});
  }

  WeightedDigraph g = WeightedDigraph::from_edges(
      std::vector<std::string>(node_universe.begin(), node_universe.end()), edges);
  g.set_kernel_parameters(sigma, options.kappa);

  const auto isolated = g.isolated_nodes();
  if (!isolated.empty()) {
    warn(std::to_string(isolated.size()) + " isolated node(s) keep their initial value: " +
         join_ids(g, isolated));
  }
  return g;
}

NodePartition::NodePartition(std::size_t node_count, std::vector<std::size_t> observed)
    : observed_(std::move(observed)), is_observed_(node_count, 0) {
  std::sort(observed_.begin(), observed_.end());
  if (std::adjacent_find(observed_.begin(), observed_.end()) != observed_.end()) {
    throw InputError("observed set lists a node twice");
  }
  if (observed_.empty()) throw ProtocolError("observed set is empty");
  for (std::size_t i : observed_) {
    if (i >= node_count) throw InputError("observed node index out of range");
    is_observed_[i] = 1;
  }
  for (std::size_t i = 0; i < node_count; ++i) {
    if (!is_observed_[i]) unobserved_.push_back(i);
  }
}

NodePartition NodePartition::all_observed(std::size_t node_count) {
  std::vector<std::size_t> all(node_count);
  for (std::size_t i = 0; i < node_count; ++i) all[i] = i;
  return NodePartition(node_count, std::move(all));
}

std::vector<std::size_t> NodePartition::permutation() const {
  std::vector<std::size_t> perm = observed_;
  perm.insert(perm.end(), unobserved_.begin(), unobserved_.end());
  return perm;
}

TransitionMatrix transition_coupled(const WeightedDigraph& g) {
  SparseMatrix sym = g.adjacency() + g.adjacency_transposed();
  return {TransitionKind::coupled, scale_rows(sym, inverse_total_degree(g))};
}

DecoupledTransition transition_decoupled(const WeightedDigraph& g) {
  const Vector inv = inverse_total_degree(g);
  return {{TransitionKind::congestion, scale_rows(g.adjacency(), inv)},
          {TransitionKind::freeflow, scale_rows(g.adjacency_transposed(), inv)}};
}

TransitionMatrix transition_symmetric_normalized(const WeightedDigraph& g) {
  const Vector inv = inverse_total_degree(g);
  const Vector inv_sqrt = inv.cwiseSqrt();
  SparseMatrix sym = g.adjacency() + g.adjacency_transposed();
  SparseMatrix out = scale_rows(sym, inv_sqrt);
  for (Eigen::Index r = 0; r < out.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(out, r); it; ++it) it.valueRef() *= inv_sqrt[it.col()];
  }
  return {TransitionKind::normalized, out};
}

SparseMatrix energy_operator(const WeightedDigraph& g) {
  SparseMatrix p = -(g.adjacency() + g.adjacency_transposed());
  const Vector total = g.total_degree();
  SparseMatrix diag(p.rows(), p.cols());
  std::vector<Triplet> triplets;
  for (Eigen::Index i = 0; i < total.size(); ++i) {
    if (total[i] != 0.0) triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), total[i]);
  }
  diag.setFromTriplets(triplets.begin(), triplets.end());
  SparseMatrix out = p + diag;
  out.makeCompressed();
  return out;
}

PartitionBlocks partition_blocks(const WeightedDigraph& g, const NodePartition& part) {
  if (part.node_count() != g.size()) throw InputError("partition size does not match graph");
  if (part.observed().empty()) throw ProtocolError("observed set is empty");

  const SparseMatrix p = energy_operator(g);
  const auto& obs = part.observed();
  const auto& unobs = part.unobserved();
  std::vector<long> obs_pos(g.size(), -1);
  std::vector<long> unobs_pos(g.size(), -1);
  for (std::size_t k = 0; k < obs.size(); ++k) obs_pos[obs[k]] = static_cast<long>(k);
  for (std::size_t k = 0; k < unobs.size(); ++k) unobs_pos[unobs[k]] = static_cast<long>(k);

  std::vector<Triplet> uo;
  std::vector<Triplet> uu;
  for (std::size_t k = 0; k < unobs.size(); ++k) {
    for (SparseMatrix::InnerIterator it(p, static_cast<Eigen::Index>(unobs[k])); it; ++it) {
      const auto col = static_cast<std::size_t>(it.col());
      if (obs_pos[col] >= 0) {
        uo.emplace_back(static_cast<int>(k), static_cast<int>(obs_pos[col]), it.value());
      } else {
        uu.emplace_back(static_cast<int>(k), static_cast<int>(unobs_pos[col]), it.value());
      }
    }
  }
  PartitionBlocks blocks;
  const auto nu = static_cast<Eigen::Index>(unobs.size());
  const auto no = static_cast<Eigen::Index>(obs.size());
  blocks.unobserved_observed.resize(nu, no);
  blocks.unobserved_observed.setFromTriplets(uo.begin(), uo.end());
  blocks.unobserved_unobserved.resize(nu, nu);
  blocks.unobserved_unobserved.setFromTriplets(uu.begin(), uu.end());
  return blocks;
}

std::vector<std::size_t> unreachable_unobserved(const WeightedDigraph& g,
                                                const NodePartition& part) {
  std::vector<std::uint8_t> reached(g.size(), 0);
  std::queue<std::size_t> frontier;
  for (std::size_t i : part.observed()) {
    reached[i] = 1;
    frontier.push(i);
  }
  auto visit = [&](const SparseMatrix& m, std::size_t node) {
    for (SparseMatrix::InnerIterator it(m, static_cast<Eigen::Index>(node)); it; ++it) {
      const auto next = static_cast<std::size_t>(it.col());
      if (!reached[next]) {
        reached[next] = 1;
        frontier.push(next);
      }
    }
  };
  while (!frontier.empty()) {
    const std::size_t node = frontier.front();
    frontier.pop();
    visit(g.adjacency(), node);
    visit(g.adjacency_transposed(), node);
  }
  std::vector<std::size_t> out;
  for (std::size_t i : part.unobserved()) {
    if (!reached[i]) out.push_back(i);
  }
  return out;
}

}  // namespace dirinet
