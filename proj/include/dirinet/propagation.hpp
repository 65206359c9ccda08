#pragma once

#include <cstdint>
#include <optional>

#include "dirinet/graph.hpp"
#include "dirinet/types.hpp"

namespace dirinet {

enum class PropagationMode { coupled, decoupled };

enum class InitPolicy {
  zeros,
  observed_mean,
  random,  // uniform in [min x_obs, max x_obs], seeded
};

struct PropagationConfig {
  int max_iters = 90;
  double tolerance = 1e-6;  // max-abs change per sweep
  PropagationMode mode = PropagationMode::coupled;
  InitPolicy init = InitPolicy::observed_mean;
  std::uint64_t seed = 0;
  /// Per-node reference (free-flow) speed; decoupled mode only.
  std::optional<Vector> reference_speed;

  void validate() const;
};

struct PropagationResult {
  Vector values;  // length N, observed entries equal to the boundary
  int iterations = 0;
  double final_residual = 0.0;
};

/// 1/2 sum_ij A_ij (x_i - x_j)^2.
double dirichlet_energy(const WeightedDigraph& g, const Vector& x);

/// Boundary-reset sweeps x <- T x with observed entries fixed (coupled T).
/// `observed_values` follows `part.observed()` order. Unobserved nodes with
/// no path to an observed node keep their initial value (with a warning);
/// so do nodes with an empty transition row.
PropagationResult propagate(const WeightedDigraph& g, const NodePartition& part,
                            const Vector& observed_values, const PropagationConfig& cfg);

/// Exact minimizer from P_uu x_u = -P_uo x_o. Throws SingularSystemError
/// listing unobserved nodes that cannot reach any observed node.
Vector propagate_closed_form(const WeightedDigraph& g, const NodePartition& part,
                             const Vector& observed_values);

/// Experimental split propagation. Each observed value x is split into a
/// congestion deficit c = max(v_ref - x, 0) and a free-flow part
/// f = max(x, v_ref), so x = f - c. c is swept along the row-normalized
/// congestion operator D_o^{-1} A (information moves upstream), f along
/// D_I^{-1} A^T (downstream). The estimate f - c is clamped to
/// [0, max(max v_ref, max x_obs)].
Vector propagate_decoupled(const WeightedDigraph& g, const NodePartition& part,
                           const Vector& observed_values, const PropagationConfig& cfg);

/// Sweep engine shared by the scalar API and latent-space propagation.
/// Runs on every column of `values` (N x C), whose observed rows hold the
/// boundary and whose other rows hold the initial state. Stops after
/// `max_iters` sweeps, or earlier once the max-abs change is <= tolerance
/// when one is given. Rows in `frozen` are never updated.
struct SweepStats {
  int iterations = 0;
  double final_residual = 0.0;
};
SweepStats run_sweeps(const SparseMatrix& transition, const NodePartition& part, Matrix& values,
                      int max_iters, std::optional<double> tolerance,
                      const std::vector<std::size_t>& frozen = {});

/// Per-node quantile of each column of `history` (T x N, NaN = missing).
/// Columns without data fall back to the quantile over all finite entries.
Vector reference_speed_from_history(const Matrix& history, double quantile = 0.85);

}  // namespace dirinet
