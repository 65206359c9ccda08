#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dirinet/model.hpp"

namespace dirinet {

enum class LossScope {
  masked_only,     // hidden nodes' measured entries
  all_available,   // every available node's measured entries
};

struct TrainConfig {
  double mask_ratio = 0.25;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_epochs = 100;
  int patience = 10;
  double split_ratio = 0.7;
  std::uint64_t seed = 0;
  LossScope loss_scope = LossScope::masked_only;

  void validate() const;
};

struct WindowSplit {
  std::vector<SignalWindow> train;
  std::vector<SignalWindow> test;
};

/// The first floor(ratio * count) windows train, the rest test. Windows are
/// taken from `windows` in order; they must already be non-overlapping.
WindowSplit chronological_split(std::vector<SignalWindow> windows, double ratio);

/// Uniform subset of `available` of size round(ratio * n) clamped to
/// [1, n - 1], returned sorted.
std::vector<std::size_t> sample_mask(const std::vector<std::size_t>& available, double ratio,
                                     std::mt19937_64& rng);

struct AdamState {
  ModelParams first;
  ModelParams second;
  long long step = 0;

  static AdamState zeros_for(const ModelParams& params);
};

/// Bias-corrected first/second-moment update applied elementwise.
void adaptive_moment_step(ModelParams& params, const ModelParams& grads, AdamState& state,
                          const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;        // mean batch loss during the epoch
  double validation_loss = 0.0;  // end-of-epoch loss under the fixed masks
  std::size_t windows = 0;       // windows that contributed a loss
};

struct FitResult {
  ModelParams params;  // best epoch
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  bool stopped_early = false;
};

/// Called after each epoch; used by the CLI for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Dynamic-masking training. Every window's partition holds the nodes the
/// model may read (the available sensors); `full` is the graph those
/// windows live on. Each window is one batch: a fresh mask hides part of
/// the available nodes from the encoder, and the loss scores the hidden
/// nodes. Validation reuses the training windows with one mask per window
/// drawn once up front; early stopping and the returned parameters follow
/// that loss. Throws std::runtime_error on a non-finite loss.
FitResult fit(const ModelParams& initial, const std::vector<SignalWindow>& windows,
              const GraphOperators& full, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

}  // namespace dirinet
