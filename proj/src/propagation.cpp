#include "dirinet/propagation.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "dirinet/error.hpp"
#include "dirinet/log.hpp"

namespace dirinet {

namespace {

void check_boundary(const WeightedDigraph& g, const NodePartition& part,
                    const Vector& observed_values) {
  if (part.node_count() != g.size()) throw InputError("partition size does not match graph");
  if (part.observed().empty()) throw ProtocolError("observed set is empty");
  if (static_cast<std::size_t>(observed_values.size()) != part.observed().size()) {
    throw InputError("observed value count does not match the observed set");
  }
  if (!observed_values.allFinite()) throw InputError("observed values must be finite");
}

std::string describe_nodes(const WeightedDigraph& g, const std::vector<std::size_t>& nodes) {
  std::ostringstream os;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (k) os << ", ";
    os << g.node_ids()[nodes[k]];
  }
  return os.str();
}

// Full-length state with the boundary in place and the unobserved entries
// initialized according to `cfg`.
Vector initial_state(const NodePartition& part, const Vector& observed_values,
                     const PropagationConfig& cfg) {
  Vector x = Vector::Zero(static_cast<Eigen::Index>(part.node_count()));
  const auto& obs = part.observed();
  for (std::size_t k = 0; k < obs.size(); ++k) x[obs[k]] = observed_values[k];
  switch (cfg.init) {
    case InitPolicy::zeros:
      break;
    case InitPolicy::observed_mean: {
      const double mean = observed_values.mean();
      for (std::size_t i : part.unobserved()) x[i] = mean;
      break;
    }
    case InitPolicy::random: {
      std::mt19937_64 rng(cfg.seed);
      std::uniform_real_distribution<double> dist(observed_values.minCoeff(),
                                                  observed_values.maxCoeff());
      for (std::size_t i : part.unobserved()) x[i] = dist(rng);
      break;
    }
  }
  return x;
}

SparseMatrix row_normalized(const SparseMatrix& m) {
  SparseMatrix out = m;
  for (Eigen::Index r = 0; r < out.outerSize(); ++r) {
    double sum = 0.0;
    for (SparseMatrix::InnerIterator it(out, r); it; ++it) sum += it.value();
    if (sum <= 0.0) continue;
    for (SparseMatrix::InnerIterator it(out, r); it; ++it) it.valueRef() /= sum;
  }
  return out;
}

}  // namespace

void PropagationConfig::validate() const {
  if (max_iters < 1) throw InputError("max_iters must be >= 1");
  if (!(tolerance >= 0.0)) throw InputError("tolerance must be >= 0");
  if (mode == PropagationMode::decoupled) {
    if (!reference_speed) throw InputError("decoupled propagation needs a reference speed");
    if (!reference_speed->allFinite() || reference_speed->minCoeff() <= 0.0) {
      throw InputError("reference speed must be finite and positive");
    }
  }
}

double dirichlet_energy(const WeightedDigraph& g, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != g.size()) throw InputError("signal length mismatch");
  double e = 0.0;
  const SparseMatrix& a = g.adjacency();
  for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(a, r); it; ++it) {
      const double d = x[r] - x[it.col()];
      e += it.value() * d * d;
    }
  }
  return 0.5 * e;
}

SweepStats run_sweeps(const SparseMatrix& transition, const NodePartition& part, Matrix& values,
                      int max_iters, std::optional<double> tolerance,
                      const std::vector<std::size_t>& frozen) {
  SweepStats stats;
  std::vector<std::size_t> active;
  {
    std::vector<std::uint8_t> skip(part.node_count(), 0);
    for (std::size_t i : frozen) skip[i] = 1;
    for (std::size_t i : part.unobserved()) {
      const auto r = static_cast<Eigen::Index>(i);
      const bool empty_row = transition.outerIndexPtr()[r + 1] == transition.outerIndexPtr()[r];
      if (!skip[i] && !empty_row) active.push_back(i);
    }
  }
  if (active.empty()) return stats;

  Matrix next(values.rows(), values.cols());
  for (int k = 0; k < max_iters; ++k) {
    next.noalias() = transition * values;
    double change = 0.0;
    for (std::size_t i : active) {
      const auto r = static_cast<Eigen::Index>(i);
      change = std::max(change, (next.row(r) - values.row(r)).cwiseAbs().maxCoeff());
    }
    for (std::size_t i : active) values.row(static_cast<Eigen::Index>(i)) = next.row(static_cast<Eigen::Index>(i));
    stats.iterations = k + 1;
    stats.final_residual = change;
    if (tolerance && change <= *tolerance) break;
  }
  return stats;
}

PropagationResult propagate(const WeightedDigraph& g, const NodePartition& part,
                            const Vector& observed_values, const PropagationConfig& cfg) {
  cfg.validate();
  check_boundary(g, part, observed_values);
  if (cfg.mode != PropagationMode::coupled) {
    throw InputError("propagate() runs coupled mode; use propagate_decoupled()");
  }
  const auto unreachable = unreachable_unobserved(g, part);
  if (!unreachable.empty()) {
    warn("unobserved node(s) with no path to an observed node keep their initial value: " +
         describe_nodes(g, unreachable));
  }
  Matrix state = initial_state(part, observed_values, cfg);
  const SweepStats stats = run_sweeps(transition_coupled(g).matrix, part, state, cfg.max_iters,
                                      cfg.tolerance, unreachable);
  return {state.col(0), stats.iterations, stats.final_residual};
}

Vector propagate_closed_form(const WeightedDigraph& g, const NodePartition& part,
                             const Vector& observed_values) {
  check_boundary(g, part, observed_values);
  const auto unreachable = unreachable_unobserved(g, part);
  if (!unreachable.empty()) {
    throw SingularSystemError("singular boundary system; unobserved node(s) with no path to an "
                              "observed node: " + describe_nodes(g, unreachable),
                              unreachable);
  }
  Vector x = Vector::Zero(static_cast<Eigen::Index>(g.size()));
  const auto& obs = part.observed();
  const auto& unobs = part.unobserved();
  for (std::size_t k = 0; k < obs.size(); ++k) x[obs[k]] = observed_values[k];
  if (unobs.empty()) return x;

  const PartitionBlocks blocks = partition_blocks(g, part);
  Eigen::SparseMatrix<double> puu = blocks.unobserved_unobserved;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(puu);
  if (solver.info() != Eigen::Success) {
    throw SingularSystemError("factorization of the unobserved block failed", unobs);
  }
  const Vector rhs = -(blocks.unobserved_observed * observed_values);
  const Vector xu = solver.solve(rhs);
  if (solver.info() != Eigen::Success || !xu.allFinite()) {
    throw SingularSystemError("solve of the unobserved block failed", unobs);
  }
  for (std::size_t k = 0; k < unobs.size(); ++k) x[unobs[k]] = xu[static_cast<Eigen::Index>(k)];
  return x;
}

Vector propagate_decoupled(const WeightedDigraph& g, const NodePartition& part,
                           const Vector& observed_values, const PropagationConfig& cfg) {
  if (cfg.mode != PropagationMode::decoupled || !cfg.reference_speed) {
    throw InputError("decoupled propagation needs mode=decoupled and a reference speed");
  }
  cfg.validate();
  check_boundary(g, part, observed_values);
  const Vector& vref = *cfg.reference_speed;
  if (static_cast<std::size_t>(vref.size()) != g.size()) {
    throw InputError("reference speed length does not match graph");
  }

  const auto& obs = part.observed();
  Vector deficit(static_cast<Eigen::Index>(obs.size()));
  Vector freeflow(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    deficit[kk] = std::max(vref[obs[k]] - observed_values[kk], 0.0);
    freeflow[kk] = std::max(observed_values[kk], vref[obs[k]]);
  }

  const auto unreachable = unreachable_unobserved(g, part);
  const DecoupledTransition split = transition_decoupled(g);
  Matrix c = initial_state(part, deficit, cfg);
  Matrix f = initial_state(part, freeflow, cfg);
  run_sweeps(row_normalized(split.congestion.matrix), part, c, cfg.max_iters, cfg.tolerance,
             unreachable);
  run_sweeps(row_normalized(split.freeflow.matrix), part, f, cfg.max_iters, cfg.tolerance,
             unreachable);

  const double upper = std::max(vref.maxCoeff(), observed_values.maxCoeff());
  Vector out = (f.col(0) - c.col(0)).cwiseMax(0.0).cwiseMin(upper);
  for (std::size_t k = 0; k < obs.size(); ++k) out[obs[k]] = observed_values[static_cast<Eigen::Index>(k)];
  return out;
}

namespace {

double quantile_of(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

Vector reference_speed_from_history(const Matrix& history, double quantile) {
  if (!(quantile >= 0.0 && quantile <= 1.0)) throw InputError("quantile must be in [0, 1]");
  std::vector<double> all;
  Vector out(history.cols());
  std::vector<bool> has(static_cast<std::size_t>(history.cols()), false);
  for (Eigen::Index j = 0; j < history.cols(); ++j) {
    std::vector<double> col;
    for (Eigen::Index t = 0; t < history.rows(); ++t) {
      if (std::isfinite(history(t, j))) col.push_back(history(t, j));
    }
    all.insert(all.end(), col.begin(), col.end());
    if (!col.empty()) {
      out[j] = quantile_of(col, quantile);
      has[static_cast<std::size_t>(j)] = true;
    }
  }
  if (all.empty()) throw InputError("no finite observations to estimate a reference speed");
  const double network = quantile_of(all, quantile);
  for (Eigen::Index j = 0; j < history.cols(); ++j) {
    if (!has[static_cast<std::size_t>(j)]) out[j] = network;
  }
  return out;
}

}  // namespace dirinet
