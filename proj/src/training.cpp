#include "dirinet/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dirinet/error.hpp"

namespace dirinet {

void TrainConfig::validate() const {
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw InputError("mask_ratio must be in (0, 1)");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("learning_rate must be finite and >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InputError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InputError("beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw InputError("eps must be positive");
  if (max_epochs < 1) throw InputError("max_epochs must be >= 1");
  if (patience < 1) throw InputError("patience must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw InputError("split_ratio must be in (0, 1)");
}

WindowSplit chronological_split(std::vector<SignalWindow> windows, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("split ratio must be in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(windows.size())));
  if (n_train < 1 || n_train >= windows.size()) {
    throw InputError("series too short: " + std::to_string(windows.size()) +
                     " windows cannot be split into non-empty train and test parts");
  }
  WindowSplit out;
  out.train.assign(std::make_move_iterator(windows.begin()),
                   std::make_move_iterator(windows.begin() + static_cast<std::ptrdiff_t>(n_train)));
  out.test.assign(std::make_move_iterator(windows.begin() + static_cast<std::ptrdiff_t>(n_train)),
                  std::make_move_iterator(windows.end()));
  return out;
}

std::vector<std::size_t> sample_mask(const std::vector<std::size_t>& available, double ratio,
                                     std::mt19937_64& rng) {
  const std::size_t n = available.size();
  if (n < 2) throw ProtocolError("masking needs at least 2 available nodes, got " + std::to_string(n));
  if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("mask ratio must be in (0, 1)");
  auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n - 1);
  std::vector<std::size_t> out;
  out.reserve(k);
  std::sample(available.begin(), available.end(), std::back_inserter(out), k, rng);
  std::sort(out.begin(), out.end());
  return out;
}

AdamState AdamState::zeros_for(const ModelParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adaptive_moment_step(ModelParams& params, const ModelParams& grads, AdamState& state,
                          const TrainConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto p = params.arrays();
  auto g = grads.arrays();
  auto m = state.first.arrays();
  auto v = state.second.arrays();
  for (std::size_t i = 0; i < ModelParams::kArrayCount; ++i) {
    *m[i] = cfg.beta1 * *m[i] + (1.0 - cfg.beta1) * *g[i];
    *v[i] = cfg.beta2 * *v[i] + (1.0 - cfg.beta2) * g[i]->cwiseProduct(*g[i]);
    const auto m_hat = (*m[i] / c1).array();
    const auto v_hat = (*v[i] / c2).array();
    p[i]->array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
  }
}

namespace {

struct Batch {
  SignalWindow input;
  MaskMatrix eval_mask;
  std::size_t entries = 0;
};

Batch make_batch(const SignalWindow& window, const std::vector<std::size_t>& masked,
                 LossScope scope) {
  const auto& available = window.partition.observed();
  std::vector<std::size_t> visible;
  visible.reserve(available.size() - masked.size());
  std::set_difference(available.begin(), available.end(), masked.begin(), masked.end(),
                      std::back_inserter(visible));

  Batch b;
  b.input = window;
  b.input.partition = NodePartition(window.node_count(), visible);
  b.eval_mask = MaskMatrix::Zero(window.mask.rows(), window.mask.cols());
  const auto& scored = scope == LossScope::masked_only ? masked : available;
  for (std::size_t node : scored) {
    const auto r = static_cast<Eigen::Index>(node);
    for (Eigen::Index c = 0; c < window.mask.cols(); ++c) {
      if (window.mask(r, c) != 0) {
        b.eval_mask(r, c) = 1;
        ++b.entries;
      }
    }
  }
  return b;
}

double masked_mse(const ModelParams& params, const Batch& batch, const Matrix& targets,
                  const GraphOperators& full, const GraphOperators& observed,
                  const PropagationConfig& latent) {
  const Matrix y = forward(params, batch.input, full, observed, latent);
  double sum = 0.0;
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      if (batch.eval_mask(r, c) == 0) continue;
      const double d = (y(r, c) - targets(r, c)) / params.norm.std;
      sum += d * d;
    }
  }
  return sum / static_cast<double>(batch.entries);
}

}  // namespace

FitResult fit(const ModelParams& initial, const std::vector<SignalWindow>& windows,
              const GraphOperators& full, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (windows.empty()) throw InputError("no training windows");
  for (const SignalWindow& w : windows) {
    if (w.node_count() != full.graph.size()) {
      throw InputError("training window node count does not match the training graph");
    }
  }

  const ModelConfig& mc = initial.config;
  const PropagationConfig latent = latent_config(mc, /*training=*/true);
  std::mt19937_64 rng(cfg.seed);

  struct Validation {
    std::size_t window;
    Batch batch;
    GraphOperators observed;
  };
  std::vector<Validation> validation;
  {
    std::mt19937_64 vrng(cfg.seed ^ 0x5851f42d4c957f2dULL);
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
      const auto masked = sample_mask(windows[wi].partition.observed(), cfg.mask_ratio, vrng);
      Batch b = make_batch(windows[wi], masked, cfg.loss_scope);
      if (b.entries == 0) continue;
      GraphOperators ops =
          GraphOperators::prepare(full.graph.induced_subgraph(b.input.partition.observed()), mc);
      validation.push_back({wi, std::move(b), std::move(ops)});
    }
  }
  if (validation.empty()) throw InputError("no training window has a measured entry on a masked node");

  ModelParams params = initial;
  AdamState state = AdamState::zeros_for(params);
  FitResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
      const SignalWindow& window = windows[wi];
      const auto masked = sample_mask(window.partition.observed(), cfg.mask_ratio, rng);
      Batch batch = make_batch(window, masked, cfg.loss_scope);
      if (batch.entries == 0) continue;

      const GraphOperators observed = GraphOperators::prepare(
          full.graph.induced_subgraph(batch.input.partition.observed()), mc);
      LossAndGradients lg = loss_and_gradients(params, batch.input, window.values, batch.eval_mask,
                                               full, observed, latent);
      if (!std::isfinite(lg.loss) || !lg.gradients.all_finite()) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", window " << wi << " (end time "
           << window.end_time << ", " << masked.size() << " masked nodes, loss " << lg.loss << ")";
        throw std::runtime_error(os.str());
      }
      adaptive_moment_step(params, lg.gradients, state, cfg);
      sum += lg.loss;
      ++used;
    }

    double vsum = 0.0;
    for (const Validation& v : validation) {
      vsum += masked_mse(params, v.batch, windows[v.window].values, full, v.observed, latent);
    }
    EpochRecord rec{epoch, used ? sum / static_cast<double>(used) : 0.0,
                    vsum / static_cast<double>(validation.size()), used};
    if (!std::isfinite(rec.validation_loss)) {
      throw std::runtime_error("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.validation_loss < best) {
      best = rec.validation_loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace dirinet
