#include "dirinet/model.hpp"

#include <cmath>
#include <random>

#include "dirinet/error.hpp"

namespace dirinet {

namespace {

using ParamsMember = Matrix ModelParams::*;

constexpr std::array<ParamsMember, ModelParams::kArrayCount> kMembers = {
    &ModelParams::enc_in_w,       &ModelParams::enc_in_b,        &ModelParams::enc_diff_cog_w,
    &ModelParams::enc_diff_free_w, &ModelParams::enc_out_w,       &ModelParams::enc_out_b,
    &ModelParams::dec_in_w,       &ModelParams::dec_in_b,        &ModelParams::dec_diff_cog_w,
    &ModelParams::dec_diff_free_w, &ModelParams::dec_out_w,       &ModelParams::dec_out_b,
    &ModelParams::timestamp_table, &ModelParams::mask_w,          &ModelParams::mask_b,
};

// Uniform in [-limit, limit) from raw 64-bit draws, independent of the
// standard library's distribution implementations.
double uniform_symmetric(std::mt19937_64& rng, double limit) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * limit;
}

void fill_uniform(Matrix& m, std::mt19937_64& rng, double limit) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = uniform_symmetric(rng, limit);
  }
}

Matrix add_row(const Matrix& m, const Matrix& bias) {
  return m.rowwise() + bias.row(0);
}

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

// One encoder/decoder block:
//   h = X W_in + b_in
//   u = h + S_cog h W_cog + S_free h W_free
//   y = relu(u) W_out + b_out
struct BlockWeights {
  const Matrix& in_w;
  const Matrix& in_b;
  const Matrix& cog_w;
  const Matrix& free_w;
  const Matrix& out_w;
  const Matrix& out_b;
};

struct BlockGrads {
  Matrix& in_w;
  Matrix& in_b;
  Matrix& cog_w;
  Matrix& free_w;
  Matrix& out_w;
  Matrix& out_b;
};

struct BlockTape {
  Matrix input;
  Matrix h;
  Matrix sc_h;  // S_cog h
  Matrix sf_h;  // S_free h
  Matrix u;
  Matrix r;
  Matrix output;
};

BlockTape block_forward(const BlockWeights& w, const Matrix& input, const GraphOperators& ops) {
  BlockTape t;
  t.input = input;
  t.h = add_row(input * w.in_w, w.in_b);
  t.sc_h = ops.congestion.matrix * t.h;
  t.sf_h = ops.freeflow.matrix * t.h;
  t.u = t.h + t.sc_h * w.cog_w + t.sf_h * w.free_w;
  t.r = relu(t.u);
  t.output = add_row(t.r * w.out_w, w.out_b);
  return t;
}

// Accumulates parameter gradients and returns d(loss)/d(input).
Matrix block_backward(const BlockWeights& w, const BlockTape& t, const Matrix& d_output,
                      const GraphOperators& ops, BlockGrads g) {
  g.out_w += t.r.transpose() * d_output;
  g.out_b += d_output.colwise().sum();
  Matrix du = (d_output * w.out_w.transpose()).cwiseProduct(
      (t.u.array() > 0.0).cast<double>().matrix());
  g.cog_w += t.sc_h.transpose() * du;
  g.free_w += t.sf_h.transpose() * du;
  Matrix dh = du;
  dh += ops.congestion.matrix.transpose() * (du * w.cog_w.transpose());
  dh += ops.freeflow.matrix.transpose() * (du * w.free_w.transpose());
  g.in_w += t.input.transpose() * dh;
  g.in_b += dh.colwise().sum();
  return dh * w.in_w.transpose();
}

BlockWeights encoder_weights(const ModelParams& p) {
  return {p.enc_in_w, p.enc_in_b, p.enc_diff_cog_w, p.enc_diff_free_w, p.enc_out_w, p.enc_out_b};
}
BlockWeights decoder_weights(const ModelParams& p) {
  return {p.dec_in_w, p.dec_in_b, p.dec_diff_cog_w, p.dec_diff_free_w, p.dec_out_w, p.dec_out_b};
}
BlockGrads encoder_grads(ModelParams& g) {
  return {g.enc_in_w, g.enc_in_b, g.enc_diff_cog_w, g.enc_diff_free_w, g.enc_out_w, g.enc_out_b};
}
BlockGrads decoder_grads(ModelParams& g) {
  return {g.dec_in_w, g.dec_in_b, g.dec_diff_cog_w, g.dec_diff_free_w, g.dec_out_w, g.dec_out_b};
}

struct AugmentTape {
  Matrix mask_rows;       // N^o x L, 0/1
  Matrix mask_embedding;  // tanh(mask_rows W_m + b_m)
  Matrix features;
};

AugmentTape augment_forward(const SignalWindow& window, const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  if (window.values.cols() != cfg.window_len || window.mask.cols() != cfg.window_len) {
    throw InputError("window length " + std::to_string(window.values.cols()) +
                     " does not match model window length " + std::to_string(cfg.window_len));
  }
  if (window.mask.rows() != window.values.rows()) throw InputError("window mask shape mismatch");
  if (window.slot_of_day < 0 || window.slot_of_day >= kSlotsPerDay) {
    throw InputError("slot_of_day out of range: " + std::to_string(window.slot_of_day));
  }
  if (window.partition.node_count() != window.node_count()) {
    throw InputError("window partition does not match window rows");
  }
  const auto& obs = window.partition.observed();
  const auto n = static_cast<Eigen::Index>(obs.size());
  const Eigen::Index l = cfg.window_len;

  AugmentTape t;
  t.mask_rows = Matrix::Zero(n, l);
  t.features = Matrix::Zero(n, cfg.input_width());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto node = static_cast<Eigen::Index>(obs[static_cast<std::size_t>(k)]);
    for (Eigen::Index c = 0; c < l; ++c) {
      if (window.mask(node, c)) {
        const double v = window.values(node, c);
        if (!std::isfinite(v)) throw InputError("measured window value is not finite");
        t.mask_rows(k, c) = 1.0;
        t.features(k, c) = params.norm.normalize(v);
      }
    }
  }
  t.features.middleCols(l, cfg.time_dim).rowwise() = params.timestamp_table.row(window.slot_of_day);
  t.mask_embedding = add_row(t.mask_rows * params.mask_w, params.mask_b).array().tanh().matrix();
  t.features.rightCols(cfg.mask_dim) = t.mask_embedding;
  return t;
}

void augment_backward(const AugmentTape& t, const SignalWindow& window, const Matrix& d_features,
                      ModelParams& g) {
  const ModelConfig& cfg = g.config;
  g.timestamp_table.row(window.slot_of_day) +=
      d_features.middleCols(cfg.window_len, cfg.time_dim).colwise().sum();
  const Matrix d_embed = d_features.rightCols(cfg.mask_dim);
  const Matrix da =
      d_embed.cwiseProduct((1.0 - t.mask_embedding.array().square()).matrix());
  g.mask_w += t.mask_rows.transpose() * da;
  g.mask_b += da.colwise().sum();
}

struct LatentTape {
  Matrix z;
  std::vector<std::size_t> frozen;
  int iterations = 0;
};

void check_latent_config(const PropagationConfig& cfg) {
  if (cfg.init != InitPolicy::zeros) throw InputError("latent propagation requires init = zeros");
  if (cfg.max_iters < 1) throw InputError("latent propagation needs max_iters >= 1");
}

LatentTape latent_forward(const Matrix& z_observed, const GraphOperators& full,
                          const NodePartition& part, const PropagationConfig& cfg) {
  check_latent_config(cfg);
  if (part.node_count() != full.graph.size()) throw InputError("partition does not match graph");
  const auto& obs = part.observed();
  if (static_cast<std::size_t>(z_observed.rows()) != obs.size()) {
    throw InputError("observed embedding rows do not match the observed set");
  }
  LatentTape t;
  t.z = Matrix::Zero(static_cast<Eigen::Index>(full.graph.size()), z_observed.cols());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    t.z.row(static_cast<Eigen::Index>(obs[k])) = z_observed.row(static_cast<Eigen::Index>(k));
  }
  t.frozen = unreachable_unobserved(full.graph, part);
  t.iterations =
      run_sweeps(full.coupled.matrix, part, t.z, cfg.max_iters, std::nullopt, t.frozen).iterations;
  return t;
}

// Reverse pass of the boundary-reset sweeps; returns d(loss)/d(z_observed).
Matrix latent_backward(const LatentTape& t, const Matrix& d_z, const GraphOperators& full,
                       const NodePartition& part) {
  const SparseMatrix& tr = full.coupled.matrix;
  const auto n = static_cast<Eigen::Index>(part.node_count());
  std::vector<std::uint8_t> active(part.node_count(), 0);
  {
    std::vector<std::uint8_t> frozen(part.node_count(), 0);
    for (std::size_t i : t.frozen) frozen[i] = 1;
    for (std::size_t i : part.unobserved()) {
      const auto r = static_cast<Eigen::Index>(i);
      const bool empty_row = tr.outerIndexPtr()[r + 1] == tr.outerIndexPtr()[r];
      if (!frozen[i] && !empty_row) active[i] = 1;
    }
  }
  const auto& obs = part.observed();
  Matrix d_obs = Matrix::Zero(static_cast<Eigen::Index>(obs.size()), d_z.cols());
  Matrix g = d_z;
  Matrix g_active(n, d_z.cols());
  for (int k = 0; k < t.iterations; ++k) {
    for (std::size_t j = 0; j < obs.size(); ++j) {
      d_obs.row(static_cast<Eigen::Index>(j)) += g.row(static_cast<Eigen::Index>(obs[j]));
    }
    g_active.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (active[static_cast<std::size_t>(i)]) g_active.row(i) = g.row(i);
    }
    Matrix g_prev = tr.transpose() * g_active;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto node = static_cast<std::size_t>(i);
      if (!part.is_observed(node) && !active[node]) g_prev.row(i) += g.row(i);
    }
    g = std::move(g_prev);
  }
  for (std::size_t j = 0; j < obs.size(); ++j) {
    d_obs.row(static_cast<Eigen::Index>(j)) += g.row(static_cast<Eigen::Index>(obs[j]));
  }
  return d_obs;
}

void check_observed_ops(const SignalWindow& window, const GraphOperators& full,
                        const GraphOperators& observed) {
  if (window.node_count() != full.graph.size()) {
    throw InputError("window has " + std::to_string(window.node_count()) + " rows but graph has " +
                     std::to_string(full.graph.size()) + " nodes");
  }
  if (observed.graph.size() != window.partition.observed().size()) {
    throw InputError("observed subgraph size does not match the window's observed set");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (window_len < 1 || hidden < 1 || latent < 1 || time_dim < 1 || mask_dim < 1) {
    throw InputError("model dimensions must be positive");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must be in (0, 1)");
  if (k_max < 1) throw InputError("k_max must be >= 1");
  if (latent_iters_train < 1 || latent_iters_infer < 1) {
    throw InputError("latent iteration counts must be >= 1");
  }
}

std::array<ArrayShape, ModelParams::kArrayCount> ModelParams::layout(const ModelConfig& c) {
  return {{
      {"enc_in_w", c.input_width(), c.hidden},
      {"enc_in_b", 1, c.hidden},
      {"enc_diff_cog_w", c.hidden, c.hidden},
      {"enc_diff_free_w", c.hidden, c.hidden},
      {"enc_out_w", c.hidden, c.latent},
      {"enc_out_b", 1, c.latent},
      {"dec_in_w", c.latent, c.hidden},
      {"dec_in_b", 1, c.hidden},
      {"dec_diff_cog_w", c.hidden, c.hidden},
      {"dec_diff_free_w", c.hidden, c.hidden},
      {"dec_out_w", c.hidden, c.window_len},
      {"dec_out_b", 1, c.window_len},
      {"timestamp_table", kSlotsPerDay, c.time_dim},
      {"mask_w", c.window_len, c.mask_dim},
      {"mask_b", 1, c.mask_dim},
  }};
}

std::array<Matrix*, ModelParams::kArrayCount> ModelParams::arrays() {
  std::array<Matrix*, kArrayCount> out{};
  for (std::size_t i = 0; i < kArrayCount; ++i) out[i] = &(this->*kMembers[i]);
  return out;
}

std::array<const Matrix*, ModelParams::kArrayCount> ModelParams::arrays() const {
  std::array<const Matrix*, kArrayCount> out{};
  for (std::size_t i = 0; i < kArrayCount; ++i) out[i] = &(this->*kMembers[i]);
  return out;
}

ModelParams ModelParams::initialize(const ModelConfig& cfg, const NormStats& norm,
                                    std::uint64_t seed) {
  cfg.validate();
  if (!(norm.std > 0.0) || !std::isfinite(norm.mean)) throw InputError("invalid normalization");
  ModelParams p;
  p.config = cfg;
  p.norm = norm;
  std::mt19937_64 rng(seed);
  const auto shapes = layout(cfg);
  auto arrays = p.arrays();
  for (std::size_t i = 0; i < kArrayCount; ++i) {
    Matrix& m = *arrays[i];
    m = Matrix::Zero(shapes[i].rows, shapes[i].cols);
    const std::string_view name = shapes[i].name;
    if (name.ends_with("_b")) continue;
    if (name == "timestamp_table") {
      fill_uniform(m, rng, 0.1);
    } else if (name.find("_diff_") != std::string_view::npos) {
      // Diffusion branches start small so the residual path dominates.
      fill_uniform(m, rng, 0.5 * std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols())));
    } else {
      fill_uniform(m, rng, std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols())));
    }
  }
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.config = config;
  z.norm = norm;
  auto dst = z.arrays();
  auto src = arrays();
  for (std::size_t i = 0; i < kArrayCount; ++i) *dst[i] = Matrix::Zero(src[i]->rows(), src[i]->cols());
  return z;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : arrays()) n += static_cast<std::size_t>(m->size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const Matrix* m : arrays()) {
    if (!m->allFinite()) return false;
  }
  return true;
}

GraphOperators GraphOperators::prepare(WeightedDigraph graph, const ModelConfig& cfg) {
  GraphOperators ops;
  ops.coupled = transition_coupled(graph);
  const DecoupledTransition split = transition_decoupled(graph);
  ops.congestion = build_kernel(split.congestion, cfg.alpha, cfg.k_max);
  ops.freeflow = build_kernel(split.freeflow, cfg.alpha, cfg.k_max);
  ops.graph = std::move(graph);
  return ops;
}

Matrix augment_features(const SignalWindow& window, const ModelParams& params) {
  return augment_forward(window, params).features;
}

Matrix encode(const ModelParams& params, const Matrix& augmented, const GraphOperators& observed) {
  if (augmented.cols() != params.config.input_width()) throw InputError("augmented width mismatch");
  if (static_cast<std::size_t>(augmented.rows()) != observed.graph.size()) {
    throw InputError("augmented rows do not match the observed subgraph");
  }
  return block_forward(encoder_weights(params), augmented, observed).output;
}

Matrix extend_latent(const Matrix& z_observed, const GraphOperators& full,
                     const NodePartition& part, const PropagationConfig& cfg) {
  return latent_forward(z_observed, full, part, cfg).z;
}

Matrix decode(const ModelParams& params, const Matrix& z, const GraphOperators& full) {
  if (z.cols() != params.config.latent) throw InputError("latent width mismatch");
  if (static_cast<std::size_t>(z.rows()) != full.graph.size()) {
    throw InputError("latent rows do not match the graph");
  }
  return block_forward(decoder_weights(params), z, full).output;
}

Matrix denormalize(const NormStats& norm, const Matrix& z_scored) {
  return (z_scored.array() * norm.std + norm.mean).matrix();
}

PropagationConfig latent_config(const ModelConfig& cfg, bool training) {
  PropagationConfig p;
  p.max_iters = training ? cfg.latent_iters_train : cfg.latent_iters_infer;
  p.tolerance = 0.0;
  p.init = InitPolicy::zeros;
  return p;
}

Matrix forward(const ModelParams& params, const SignalWindow& window, const GraphOperators& full,
               const GraphOperators& observed, const PropagationConfig& cfg) {
  check_observed_ops(window, full, observed);
  const Matrix aug = augment_features(window, params);
  const Matrix z_obs = encode(params, aug, observed);
  const Matrix z = extend_latent(z_obs, full, window.partition, cfg);
  return denormalize(params.norm, decode(params, z, full));
}

Matrix estimate_window(const ModelParams& params, const SignalWindow& window,
                       const GraphOperators& full, bool training) {
  const auto& obs = window.partition.observed();
  GraphOperators observed = GraphOperators::prepare(full.graph.induced_subgraph(obs), params.config);
  return forward(params, window, full, observed, latent_config(params.config, training));
}

LossAndGradients loss_and_gradients(const ModelParams& params, const SignalWindow& window,
                                    const Matrix& targets, const MaskMatrix& eval_mask,
                                    const GraphOperators& full, const GraphOperators& observed,
                                    const PropagationConfig& cfg) {
  check_observed_ops(window, full, observed);
  const Eigen::Index n = static_cast<Eigen::Index>(window.node_count());
  const Eigen::Index l = params.config.window_len;
  if (targets.rows() != n || targets.cols() != l || eval_mask.rows() != n || eval_mask.cols() != l) {
    throw InputError("targets / eval mask must be N x L");
  }

  const AugmentTape aug = augment_forward(window, params);
  const BlockTape enc = block_forward(encoder_weights(params), aug.features, observed);
  const LatentTape lat = latent_forward(enc.output, full, window.partition, cfg);
  const BlockTape dec = block_forward(decoder_weights(params), lat.z, full);

  LossAndGradients out;
  out.gradients = params.zeros_like();
  Matrix d_y = Matrix::Zero(n, l);
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index c = 0; c < l; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      if (!eval_mask(r, c)) continue;
      if (!std::isfinite(targets(r, c))) throw InputError("selected target is not finite");
      const double diff = dec.output(r, c) - params.norm.normalize(targets(r, c));
      sum += diff * diff;
      d_y(r, c) = diff;
      ++count;
    }
  }
  if (count == 0) throw InputError("evaluation mask selects no entries");
  out.loss = sum / static_cast<double>(count);
  out.entries = count;
  d_y *= 2.0 / static_cast<double>(count);

  ModelParams& g = out.gradients;
  const Matrix d_z = block_backward(decoder_weights(params), dec, d_y, full, decoder_grads(g));
  const Matrix d_z_obs = latent_backward(lat, d_z, full, window.partition);
  const Matrix d_aug = block_backward(encoder_weights(params), enc, d_z_obs, observed, encoder_grads(g));
  augment_backward(aug, window, d_aug, g);
  return out;
}

}  // namespace dirinet
