#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dirinet/diffusion.hpp"
#include "dirinet/graph.hpp"
#include "dirinet/propagation.hpp"
#include "dirinet/types.hpp"

namespace dirinet {

/// 5-minute slots per day; rows of the timestamp embedding table.
inline constexpr int kSlotsPerDay = 288;

struct ModelConfig {
  int window_len = 12;  // L
  int hidden = 64;      // H
  int latent = 32;      // D
  int time_dim = 16;    // D_t
  int mask_dim = 16;    // D_m
  double alpha = 0.2;   // diffusion decay
  int k_max = 3;
  int latent_iters_train = 30;
  int latent_iters_infer = 90;

  void validate() const;
  int input_width() const { return window_len + time_dim + mask_dim; }
  bool operator==(const ModelConfig&) const = default;
};

/// Dataset-wide z-score statistics in mph.
struct NormStats {
  double mean = 0.0;
  double std = 1.0;

  double normalize(double mph) const { return (mph - mean) / std; }
  double denormalize(double z) const { return z * std + mean; }
  bool operator==(const NormStats&) const = default;
};

struct ArrayShape {
  std::string_view name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Learnable arrays of the auto-encoder. Biases are 1 x width row matrices.
/// No shape depends on the number of nodes, so a model trained on one
/// graph runs on any other.
struct ModelParams {
  ModelConfig config;
  NormStats norm;

  Matrix enc_in_w, enc_in_b;
  Matrix enc_diff_cog_w, enc_diff_free_w;
  Matrix enc_out_w, enc_out_b;
  Matrix dec_in_w, dec_in_b;
  Matrix dec_diff_cog_w, dec_diff_free_w;
  Matrix dec_out_w, dec_out_b;
  Matrix timestamp_table;  // kSlotsPerDay x D_t
  Matrix mask_w, mask_b;   // L x D_m, 1 x D_m

  static constexpr std::size_t kArrayCount = 15;

  /// Array names and shapes in canonical (checkpoint) order.
  static std::array<ArrayShape, kArrayCount> layout(const ModelConfig& cfg);

  /// Xavier-uniform weights, zero biases, small uniform timestamp rows.
  static ModelParams initialize(const ModelConfig& cfg, const NormStats& norm, std::uint64_t seed);

  /// Same config and shapes, every entry zero.
  ModelParams zeros_like() const;

  std::array<Matrix*, kArrayCount> arrays();
  std::array<const Matrix*, kArrayCount> arrays() const;

  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Speed readings over one estimation window.
struct SignalWindow {
  Matrix values;                 // N x L, mph; only meaningful where mask = 1
  MaskMatrix mask;               // N x L, 1 = measured
  int slot_of_day = 0;           // slot of the last column
  std::int64_t end_time = 0;     // epoch seconds of the last column
  NodePartition partition;       // nodes whose readings the model may use

  std::size_t node_count() const { return static_cast<std::size_t>(values.rows()); }
};

/// Graph plus the operators the model needs on it, built once per graph.
struct GraphOperators {
  WeightedDigraph graph;
  TransitionMatrix coupled;
  DiffusionKernel congestion;
  DiffusionKernel freeflow;

  static GraphOperators prepare(WeightedDigraph graph, const ModelConfig& cfg);
};

/// Per observed node: [z-scored values (missing -> 0) | timestamp row | mask
/// embedding]. The timestamp row is the same for every node.
Matrix augment_features(const SignalWindow& window, const ModelParams& params);

/// Observed-node embeddings on the observed subgraph.
Matrix encode(const ModelParams& params, const Matrix& augmented, const GraphOperators& observed);

/// Extends observed embeddings to every node by latent boundary-reset
/// sweeps on the full graph. Runs exactly `cfg.max_iters` sweeps from a
/// zero start (cfg.init must be zeros); the tolerance is ignored.
Matrix extend_latent(const Matrix& z_observed, const GraphOperators& full,
                     const NodePartition& part, const PropagationConfig& cfg);

/// z-scored N x L reconstruction.
Matrix decode(const ModelParams& params, const Matrix& z, const GraphOperators& full);

Matrix denormalize(const NormStats& norm, const Matrix& z_scored);

/// Latent propagation settings the model uses at train or inference time.
PropagationConfig latent_config(const ModelConfig& cfg, bool training);

/// Full pipeline, estimates in mph for every node. `observed` must be the
/// subgraph of `full` induced on `window.partition.observed()`.
Matrix forward(const ModelParams& params, const SignalWindow& window, const GraphOperators& full,
               const GraphOperators& observed, const PropagationConfig& cfg);

/// Convenience wrapper that builds the observed-subgraph operators itself.
Matrix estimate_window(const ModelParams& params, const SignalWindow& window,
                       const GraphOperators& full, bool training = false);

struct LossAndGradients {
  double loss = 0.0;
  std::size_t entries = 0;
  ModelParams gradients;
};

/// Mean squared error, in z-scored units, over entries where `eval_mask`
/// is 1, with exact gradients for every parameter array (including the
/// unrolled latent sweeps).
LossAndGradients loss_and_gradients(const ModelParams& params, const SignalWindow& window,
                                    const Matrix& targets, const MaskMatrix& eval_mask,
                                    const GraphOperators& full, const GraphOperators& observed,
                                    const PropagationConfig& cfg);

}  // namespace dirinet
