// dirinet command-line front end. Exit codes: 0 ok, 1 unexpected failure,
// 2 input/usage error, 3 protocol error, 4 checkpoint error.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dirinet/checkpoint.hpp"
#include "dirinet/data.hpp"
#include "dirinet/error.hpp"
#include "dirinet/evaluation.hpp"
#include "dirinet/graph.hpp"
#include "dirinet/log.hpp"
#include "dirinet/manifest.hpp"
#include "dirinet/model.hpp"
#include "dirinet/propagation.hpp"
#include "dirinet/synthetic.hpp"
#include "dirinet/text.hpp"
#include "dirinet/training.hpp"

namespace fs = std::filesystem;
using namespace dirinet;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void finish_manifest(RunManifest& m, const Stopwatch& clock, const std::string& path) {
  m.set("duration_s", format_double(std::round(clock.seconds() * 1000.0) / 1000.0));
  m.write(path);
}

std::vector<std::size_t> indices_in(const WeightedDigraph& g, const std::vector<std::string>& ids,
                                    const std::string& what) {
  std::vector<std::size_t> out;
  std::set<std::size_t> seen;
  for (const std::string& id : ids) {
    auto idx = g.index_of(id);
    if (!idx) throw InputError(what + " lists '" + id + "', which is not a graph node");
    if (!seen.insert(*idx).second) throw InputError(what + " lists '" + id + "' twice");
    out.push_back(*idx);
  }
  return out;
}

/// Readings re-indexed to the graph's node order. Graph nodes without a
/// column, and nodes outside `keep` when given, are all-missing.
SpeedSeries to_graph_order(const SpeedSeries& readings, const WeightedDigraph& g,
                           const std::vector<std::size_t>* keep) {
  std::vector<std::uint8_t> allowed(g.size(), keep ? 0 : 1);
  if (keep) {
    for (std::size_t i : *keep) allowed[i] = 1;
  }
  SpeedSeries out;
  out.node_ids = g.node_ids();
  out.timestamps = readings.timestamps;
  out.values = Matrix::Constant(static_cast<Eigen::Index>(readings.steps()),
                                static_cast<Eigen::Index>(g.size()),
                                std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < readings.node_count(); ++c) {
    auto idx = g.index_of(readings.node_ids[c]);
    if (!idx) throw InputError("readings column '" + readings.node_ids[c] + "' is not a graph node");
    if (!allowed[*idx]) continue;
    out.values.col(static_cast<Eigen::Index>(*idx)) = readings.values.col(static_cast<Eigen::Index>(c));
  }
  return out;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  if (path.empty()) return {};
  return parse_key_values(read_file(path), path);
}

// ---------------------------------------------------------------- graph-build

struct GraphBuildArgs {
  std::string nodes, distances, sigma = "auto", out;
  double kappa = std::numeric_limits<double>::infinity();
};

int cmd_graph_build(const GraphBuildArgs& a, RunManifest& m) {
  Stopwatch clock;
  const auto ids = load_id_csv(a.nodes);
  const auto dists = load_distance_csv(a.distances);
  KernelOptions opt;
  opt.kappa = a.kappa;
  if (a.sigma != "auto") {
    auto s = parse_double(a.sigma);
    if (!s) throw InputError("--sigma must be 'auto' or a number, got '" + a.sigma + "'");
    opt.sigma = *s;
  }
  const WeightedDigraph g = build_adjacency(ids, dists, opt);
  save_graph(g, a.out);

  const Vector deg = g.total_degree();
  std::cout << "N=" << g.size() << " edges=" << g.edge_count()
            << " sigma=" << format_double(g.sigma().value_or(0.0))
            << " mean_degree=" << format_double(deg.size() ? deg.mean() : 0.0)
            << " isolated=" << g.isolated_nodes().size() << '\n';

  m.set("input.nodes", a.nodes);
  m.set("input.nodes.digest", file_digest(a.nodes));
  m.set("input.distances", a.distances);
  m.set("input.distances.digest", file_digest(a.distances));
  m.set("config.sigma", a.sigma);
  m.set("config.kappa", format_double(a.kappa));
  m.set("sigma", format_double(g.sigma().value_or(0.0)));
  m.set("output.graph", a.out);
  m.set("output.graph.digest", file_digest(a.out));
  finish_manifest(m, clock, a.out + ".manifest");
  return 0;
}

// ------------------------------------------------------------------ propagate

struct PropagateArgs {
  std::string graph, readings, observed, mode = "coupled", vref, init = "observed_mean", out;
  int iters = 90;
  double tol = 1e-6;
  int window = 12;
  std::uint64_t seed = 0;
};

int cmd_propagate(const PropagateArgs& a, RunManifest& m) {
  Stopwatch clock;
  if (a.mode != "coupled" && a.mode != "decoupled") throw InputError("--mode must be coupled or decoupled");
  if (a.mode == "decoupled" && a.vref.empty()) throw InputError("--mode decoupled requires --vref");
  if (a.window < 1) throw InputError("--window must be >= 1");

  const WeightedDigraph g = load_graph(a.graph);
  const SpeedSeries readings = load_speed_csv(a.readings);
  const auto observed = indices_in(g, load_id_csv(a.observed), a.observed);
  const SpeedSeries series = to_graph_order(readings, g, &observed);

  PropagationConfig cfg;
  cfg.max_iters = a.iters;
  cfg.tolerance = a.tol;
  cfg.seed = a.seed;
  if (a.init == "observed_mean") cfg.init = InitPolicy::observed_mean;
  else if (a.init == "zeros") cfg.init = InitPolicy::zeros;
  else if (a.init == "random") cfg.init = InitPolicy::random;
  else throw InputError("--init must be observed_mean, zeros or random");
  if (a.mode == "decoupled") {
    cfg.mode = PropagationMode::decoupled;
    if (a.vref == "auto") {
      cfg.reference_speed = reference_speed_from_history(series.values);
    } else {
      auto v = parse_double(a.vref);
      if (!v || !(*v > 0.0)) throw InputError("--vref must be 'auto' or a positive speed");
      cfg.reference_speed = Vector::Constant(static_cast<Eigen::Index>(g.size()), *v);
    }
  }
  cfg.validate();

  SpeedSeries est = series;
  const std::size_t steps = series.steps();
  for (std::size_t start = 0, w = 0; start < steps; start += static_cast<std::size_t>(a.window), ++w) {
    const std::size_t end = std::min(steps, start + static_cast<std::size_t>(a.window));
    int max_iters = 0;
    for (std::size_t t = start; t < end; ++t) {
      const auto row = series.values.row(static_cast<Eigen::Index>(t));
      std::vector<std::size_t> present;
      for (std::size_t i : observed) {
        if (std::isfinite(row[static_cast<Eigen::Index>(i)])) present.push_back(i);
      }
      if (present.empty()) {
        throw ProtocolError("window " + std::to_string(w) + " has no observed reading at " +
                            format_timestamp(series.timestamps[t]));
      }
      const NodePartition part(g.size(), present);
      Vector boundary(static_cast<Eigen::Index>(part.observed().size()));
      for (std::size_t k = 0; k < part.observed().size(); ++k) {
        boundary[static_cast<Eigen::Index>(k)] = row[static_cast<Eigen::Index>(part.observed()[k])];
      }
      Vector x;
      if (cfg.mode == PropagationMode::coupled) {
        const PropagationResult r = propagate(g, part, boundary, cfg);
        x = r.values;
        max_iters = std::max(max_iters, r.iterations);
      } else {
        x = propagate_decoupled(g, part, boundary, cfg);
        max_iters = cfg.max_iters;
      }
      est.values.row(static_cast<Eigen::Index>(t)) = x.transpose();
    }
    std::cout << "window " << w << " end=" << format_timestamp(series.timestamps[end - 1])
              << " iterations=" << max_iters << '\n';
  }
  write_speed_csv(est, a.out);

  m.set("input.graph", a.graph);
  m.set("input.graph.digest", file_digest(a.graph));
  m.set("input.readings", a.readings);
  m.set("input.readings.digest", file_digest(a.readings));
  m.set("input.observed", a.observed);
  m.set("input.observed.digest", file_digest(a.observed));
  m.set("config.mode", a.mode);
  m.set("config.vref", a.vref);
  m.set("config.init", a.init);
  m.set("config.iters", std::to_string(a.iters));
  m.set("config.tol", format_double(a.tol));
  m.set("config.window", std::to_string(a.window));
  m.set("seed", std::to_string(a.seed));
  m.set("output.estimates", a.out);
  m.set("output.estimates.digest", file_digest(a.out));
  finish_manifest(m, clock, a.out + ".manifest");
  return 0;
}

// ---------------------------------------------------------------------- train

struct TrainArgs {
  std::string graph, readings, config, observed, out;
  std::uint64_t seed = 0;
  bool quiet = false;
};

void apply_config(const std::map<std::string, std::string>& kv, ModelConfig& mc, TrainConfig& tc) {
  auto num = [&](const std::string& key) {
    auto v = parse_double(kv.at(key));
    if (!v) throw InputError("config '" + key + "' is not a number");
    return *v;
  };
  auto integer = [&](const std::string& key) {
    auto v = parse_integer(kv.at(key));
    if (!v) throw InputError("config '" + key + "' is not an integer");
    return static_cast<int>(*v);
  };
  for (const auto& [key, value] : kv) {
    if (key == "window_len") mc.window_len = integer(key);
    else if (key == "hidden") mc.hidden = integer(key);
    else if (key == "latent") mc.latent = integer(key);
    else if (key == "time_dim") mc.time_dim = integer(key);
    else if (key == "mask_dim") mc.mask_dim = integer(key);
    else if (key == "alpha") mc.alpha = num(key);
    else if (key == "k_max") mc.k_max = integer(key);
    else if (key == "latent_iters_train") mc.latent_iters_train = integer(key);
    else if (key == "latent_iters_infer") mc.latent_iters_infer = integer(key);
    else if (key == "mask_ratio") tc.mask_ratio = num(key);
    else if (key == "learning_rate") tc.learning_rate = num(key);
    else if (key == "beta1") tc.beta1 = num(key);
    else if (key == "beta2") tc.beta2 = num(key);
    else if (key == "eps") tc.eps = num(key);
    else if (key == "max_epochs") tc.max_epochs = integer(key);
    else if (key == "patience") tc.patience = integer(key);
    else if (key == "split_ratio") tc.split_ratio = num(key);
    else if (key == "loss_scope") {
      if (value == "masked_only") tc.loss_scope = LossScope::masked_only;
      else if (value == "all_available") tc.loss_scope = LossScope::all_available;
      else throw InputError("config 'loss_scope' must be masked_only or all_available");
    } else {
      throw InputError("unknown config key '" + key + "'");
    }
  }
  mc.validate();
  tc.validate();
}

NormStats norm_from(const Matrix& values) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (!std::isfinite(v)) continue;
    sum += v;
    sq += v * v;
    ++n;
  }
  if (n == 0) throw InputError("training readings hold no measured value");
  NormStats s;
  s.mean = sum / static_cast<double>(n);
  s.std = std::sqrt(std::max(sq / static_cast<double>(n) - s.mean * s.mean, 0.0));
  if (!(s.std > 0.0)) s.std = 1.0;
  return s;
}

int cmd_train(const TrainArgs& a, RunManifest& m) {
  Stopwatch clock;
  ModelConfig mc;
  TrainConfig tc;
  apply_config(load_config_file(a.config), mc, tc);
  tc.seed = a.seed ^ 0x9e3779b97f4a7c15ULL;

  const WeightedDigraph g = load_graph(a.graph);
  const SpeedSeries readings = load_speed_csv(a.readings);
  std::vector<std::size_t> available;
  if (!a.observed.empty()) {
    available = indices_in(g, load_id_csv(a.observed), a.observed);
  } else {
    available = indices_in(g, readings.node_ids, a.readings);
  }
  std::sort(available.begin(), available.end());
  if (available.size() < 2) throw ProtocolError("training needs at least 2 available sensors");

  // The model only ever sees the available sensors, on their own subgraph.
  const WeightedDigraph train_graph = g.induced_subgraph(available);
  const SpeedSeries series = readings.select_nodes(train_graph.node_ids());

  WindowSplit split = chronological_split(window_iter(series, mc.window_len, mc.window_len), tc.split_ratio);
  const std::size_t train_steps = split.train.size() * static_cast<std::size_t>(mc.window_len);
  const NormStats norm = norm_from(series.values.topRows(static_cast<Eigen::Index>(train_steps)));
  const GraphOperators ops = GraphOperators::prepare(train_graph, mc);

  const ModelParams init = ModelParams::initialize(mc, norm, a.seed);
  const FitResult fitted = fit(init, split.train, ops, tc, [&](const EpochRecord& r) {
    if (!a.quiet) {
      std::cout << "epoch " << r.epoch << " loss=" << format_double(r.mean_loss)
                << " validation=" << format_double(r.validation_loss) << " windows=" << r.windows
                << '\n';
    }
  });
  save_checkpoint(fitted.params, a.out);

  std::string loss_csv = "epoch,mean_loss,validation_loss,windows\n";
  for (const EpochRecord& r : fitted.history) {
    loss_csv += std::to_string(r.epoch) + "," + format_double(r.mean_loss) + "," +
                format_double(r.validation_loss) + "," + std::to_string(r.windows) + "\n";
  }
  write_file_atomic(a.out + ".loss.csv", loss_csv);
  std::cout << "best_epoch=" << fitted.best_epoch << " epochs=" << fitted.history.size()
            << (fitted.stopped_early ? " (early stop)" : "") << '\n';

  m.set("input.graph", a.graph);
  m.set("input.graph.digest", file_digest(a.graph));
  m.set("input.readings", a.readings);
  m.set("input.readings.digest", file_digest(a.readings));
  if (!a.observed.empty()) {
    m.set("input.observed", a.observed);
    m.set("input.observed.digest", file_digest(a.observed));
  }
  if (!a.config.empty()) {
    m.set("input.config", a.config);
    m.set("input.config.digest", file_digest(a.config));
  }
  m.set("config.window_len", std::to_string(mc.window_len));
  m.set("config.hidden", std::to_string(mc.hidden));
  m.set("config.latent", std::to_string(mc.latent));
  m.set("config.time_dim", std::to_string(mc.time_dim));
  m.set("config.mask_dim", std::to_string(mc.mask_dim));
  m.set("config.alpha", format_double(mc.alpha));
  m.set("config.k_max", std::to_string(mc.k_max));
  m.set("config.latent_iters_train", std::to_string(mc.latent_iters_train));
  m.set("config.latent_iters_infer", std::to_string(mc.latent_iters_infer));
  m.set("model.relu", "after_residual");
  m.set("model.decoder_conditioning", "none");
  m.set("config.mask_ratio", format_double(tc.mask_ratio));
  m.set("config.learning_rate", format_double(tc.learning_rate));
  m.set("config.beta1", format_double(tc.beta1));
  m.set("config.beta2", format_double(tc.beta2));
  m.set("config.eps", format_double(tc.eps));
  m.set("config.max_epochs", std::to_string(tc.max_epochs));
  m.set("config.patience", std::to_string(tc.patience));
  m.set("config.split_ratio", format_double(tc.split_ratio));
  m.set("config.loss_scope", tc.loss_scope == LossScope::masked_only ? "masked_only" : "all_available");
  m.set("seed", std::to_string(a.seed));
  m.set("norm.mean", format_double(norm.mean));
  m.set("norm.std", format_double(norm.std));
  m.set("train.windows", std::to_string(split.train.size()));
  m.set("train.test_start", format_timestamp(split.test.front().end_time -
                                             (mc.window_len - 1) * kStepSeconds));
  m.set("train.epochs", std::to_string(fitted.history.size()));
  m.set("train.best_epoch", std::to_string(fitted.best_epoch));
  m.set("train.stopped_early", fitted.stopped_early ? "true" : "false");
  for (const EpochRecord& r : fitted.history) {
    m.set("history." + std::to_string(r.epoch), format_double(r.mean_loss) + " " +
                                                    format_double(r.validation_loss));
  }
  m.set("output.checkpoint", a.out);
  m.set("output.checkpoint.digest", file_digest(a.out));
  finish_manifest(m, clock, a.out + ".manifest");
  return 0;
}

// ------------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string checkpoint, graph, readings, observed, config, out;
};

int cmd_estimate(const EstimateArgs& a, RunManifest& m) {
  Stopwatch clock;
  std::optional<ModelConfig> expected;
  if (!a.config.empty()) {
    ModelConfig mc;
    TrainConfig tc;
    apply_config(load_config_file(a.config), mc, tc);
    expected = mc;
  }
  const ModelParams params = load_checkpoint(a.checkpoint, expected);
  const ModelConfig& mc = params.config;

  const WeightedDigraph g = load_graph(a.graph);
  const SpeedSeries readings = load_speed_csv(a.readings);
  auto observed = indices_in(g, load_id_csv(a.observed), a.observed);
  if (observed.empty()) throw ProtocolError("the observed set is empty");
  std::sort(observed.begin(), observed.end());
  const SpeedSeries series = to_graph_order(readings, g, &observed);
  const std::size_t steps = series.steps();
  const auto l = static_cast<std::size_t>(mc.window_len);
  if (steps < l) {
    throw InputError("readings hold " + std::to_string(steps) + " steps; the model window is " +
                     std::to_string(l));
  }

  const NodePartition part(g.size(), observed);
  const GraphOperators full = GraphOperators::prepare(g, mc);
  const GraphOperators sub = GraphOperators::prepare(g.induced_subgraph(observed), mc);
  const PropagationConfig latent = latent_config(mc, /*training=*/false);

  std::vector<SignalWindow> windows = window_iter(series, mc.window_len, mc.window_len);
  std::vector<std::size_t> starts;
  for (std::size_t k = 0; k < windows.size(); ++k) starts.push_back(window_start(k, mc.window_len));
  if (steps % l != 0) {
    // Cover the tail with one final window aligned to the end.
    const std::size_t s = steps - l;
    auto tail = window_iter(series.slice_steps(s, steps), mc.window_len, mc.window_len);
    windows.push_back(std::move(tail.front()));
    starts.push_back(s);
  }

  SpeedSeries est = series;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    SignalWindow& w = windows[k];
    w.partition = part;
    const Matrix y = forward(params, w, full, sub, latent);  // N x L
    for (std::size_t c = 0; c < l; ++c) {
      const std::size_t t = starts[k] + c;
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double reading = series.values(static_cast<Eigen::Index>(t), i);
        est.values(static_cast<Eigen::Index>(t), i) =
            std::isfinite(reading) ? reading : y(i, static_cast<Eigen::Index>(c));
      }
    }
  }
  write_speed_csv(est, a.out);
  std::cout << "windows=" << windows.size() << " nodes=" << g.size() << " observed=" << observed.size()
            << '\n';

  m.set("input.checkpoint", a.checkpoint);
  m.set("input.checkpoint.digest", file_digest(a.checkpoint));
  m.set("input.graph", a.graph);
  m.set("input.graph.digest", file_digest(a.graph));
  m.set("input.readings", a.readings);
  m.set("input.readings.digest", file_digest(a.readings));
  m.set("input.observed", a.observed);
  m.set("input.observed.digest", file_digest(a.observed));
  if (!a.config.empty()) m.set("input.config", a.config);
  m.set("output.estimates", a.out);
  m.set("output.estimates.digest", file_digest(a.out));
  finish_manifest(m, clock, a.out + ".manifest");
  return 0;
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
  std::string estimates, truth, vs, distances, out;
};

int cmd_eval(const EvalArgs& a, RunManifest& m) {
  Stopwatch clock;
  const SpeedSeries est = load_speed_csv(a.estimates);
  const SpeedSeries truth = load_speed_csv(a.truth);
  const auto vs_ids = load_id_csv(a.vs);
  if (vs_ids.empty()) throw InputError(a.vs + ": no virtual sensors listed");
  if (est.timestamps != truth.timestamps) throw InputError("estimates and truth cover different time steps");

  std::set<std::string> vs_set(vs_ids.begin(), vs_ids.end());
  if (vs_set.size() != vs_ids.size()) throw InputError(a.vs + ": repeated sensor id");
  for (const std::string& id : vs_ids) {
    if (std::find(truth.node_ids.begin(), truth.node_ids.end(), id) == truth.node_ids.end()) {
      throw InputError("virtual sensor '" + id + "' is not covered by the truth file");
    }
    if (std::find(est.node_ids.begin(), est.node_ids.end(), id) == est.node_ids.end()) {
      throw InputError("virtual sensor '" + id + "' has no estimate column");
    }
  }
  const SpeedSeries e = est.select_nodes(vs_ids);
  const SpeedSeries t = truth.select_nodes(vs_ids);
  MaskMatrix valid = t.measured();
  MetricsReport report = metrics(e.values, t.values, valid);

  if (!a.distances.empty()) {
    const auto dists = load_distance_csv(a.distances);
    std::vector<std::size_t> vs, as;
    for (std::size_t i = 0; i < truth.node_ids.size(); ++i) {
      (vs_set.count(truth.node_ids[i]) ? vs : as).push_back(i);
    }
    if (!as.empty()) report.d_v2a_km = d_v2a(truth.node_ids, dists, vs, as).mean_km;
  }
  write_file_atomic(a.out, format_report_csv({{vs_ids.size(), report}}));
  std::cout << "mape=" << format_double(report.mape) << " mae=" << format_double(report.mae)
            << " rmse=" << format_double(report.rmse) << " n=" << report.n_evaluated << '\n';

  m.set("input.estimates", a.estimates);
  m.set("input.estimates.digest", file_digest(a.estimates));
  m.set("input.truth", a.truth);
  m.set("input.truth.digest", file_digest(a.truth));
  m.set("input.vs", a.vs);
  m.set("input.vs.digest", file_digest(a.vs));
  if (!a.distances.empty()) {
    m.set("input.distances", a.distances);
    m.set("input.distances.digest", file_digest(a.distances));
  }
  m.set("output.report", a.out);
  m.set("output.report.digest", file_digest(a.out));
  finish_manifest(m, clock, a.out + ".manifest");
  return 0;
}

// ---------------------------------------------------------------------- synth

struct SynthArgs {
  std::string config, out_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, RunManifest& m) {
  Stopwatch clock;
  auto kv = load_config_file(a.config);
  if (a.seed) kv["seed"] = std::to_string(*a.seed);
  const SynthConfig cfg = SynthConfig::from_key_values(kv);
  const SyntheticDataset ds = generate_synthetic(cfg);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  const std::vector<std::pair<std::string, std::string>> files = {
      {"readings.csv", format_speed_csv(ds.readings)},
      {"truth.csv", format_speed_csv(ds.truth)},
      {"nodes.csv", format_id_csv(ds.node_ids)},
      {"distances.csv", format_distance_csv(ds.distances)},
  };
  for (const auto& [name, body] : files) write_file_atomic((dir / name).string(), body);
  std::cout << "nodes=" << ds.node_ids.size() << " steps=" << ds.readings.steps()
            << " events=" << ds.events.size() << '\n';

  if (!a.config.empty()) {
    m.set("input.config", a.config);
    m.set("input.config.digest", file_digest(a.config));
  }
  for (const auto& [k, v] : cfg.to_key_values()) m.set("config." + k, v);
  m.set("seed", std::to_string(cfg.seed));
  for (const auto& [name, body] : files) m.set("output." + name + ".digest", digest_hex(body));
  finish_manifest(m, clock, (dir / "manifest.txt").string());
  return 0;
}

int run(const std::vector<std::string>& args);

// --------------------------------------------------------------------- replay

int cmd_replay(const std::string& manifest_path) {
  const RunManifest m = RunManifest::load(manifest_path);
  const std::vector<std::string> args = m.invocation();
  if (!args.empty() && args.front() == "replay") throw InputError("a replay manifest cannot be replayed");
  const std::string* cwd = m.find("cwd");
  const fs::path previous = fs::current_path();
  if (cwd) fs::current_path(*cwd);
  const int code = run(args);
  fs::current_path(previous);
  return code;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Traffic speed estimation at sensor-free road segments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kLibraryVersion);

  GraphBuildArgs gb;
  auto* c_gb = app.add_subcommand("graph-build", "Build the Gaussian-kernel graph from distances");
  c_gb->add_option("--nodes", gb.nodes, "Node id CSV (header 'id')")->required();
  c_gb->add_option("--distances", gb.distances, "Distance CSV (from,to,dist in meters)")->required();
  c_gb->add_option("--sigma", gb.sigma, "Kernel bandwidth in meters, or 'auto'");
  c_gb->add_option("--kappa", gb.kappa, "Distance threshold in meters");
  c_gb->add_option("--out", gb.out, "Graph JSON output")->required();

  PropagateArgs pr;
  auto* c_pr = app.add_subcommand("propagate", "Feature propagation from observed sensors");
  c_pr->add_option("--graph", pr.graph)->required();
  c_pr->add_option("--readings", pr.readings)->required();
  c_pr->add_option("--observed", pr.observed, "Id CSV of sensors whose readings are used")->required();
  c_pr->add_option("--mode", pr.mode, "coupled or decoupled");
  c_pr->add_option("--vref", pr.vref, "Reference speed (mph) or 'auto'; decoupled mode");
  c_pr->add_option("--init", pr.init, "observed_mean, zeros or random");
  c_pr->add_option("--iters", pr.iters, "Maximum sweeps per step");
  c_pr->add_option("--tol", pr.tol, "Stop once the max-abs change is at most this");
  c_pr->add_option("--window", pr.window, "Steps per reported window");
  c_pr->add_option("--seed", pr.seed);
  c_pr->add_option("--out", pr.out, "Estimates CSV")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the graph auto-encoder with dynamic masking");
  c_tr->add_option("--graph", tr.graph)->required();
  c_tr->add_option("--readings", tr.readings)->required();
  c_tr->add_option("--config", tr.config, "key = value model/training config");
  c_tr->add_option("--observed", tr.observed, "Id CSV of available sensors (default: every column)");
  c_tr->add_option("--out-checkpoint", tr.out)->required();
  c_tr->add_option("--seed", tr.seed);
  c_tr->add_flag("--quiet", tr.quiet, "No per-epoch output");

  EstimateArgs es;
  auto* c_es = app.add_subcommand("estimate", "Run a trained model over readings");
  c_es->add_option("--checkpoint", es.checkpoint)->required();
  c_es->add_option("--graph", es.graph)->required();
  c_es->add_option("--readings", es.readings)->required();
  c_es->add_option("--observed", es.observed)->required();
  c_es->add_option("--config", es.config, "Expected model config; mismatches are rejected");
  c_es->add_option("--out", es.out)->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score estimates at virtual sensors");
  c_ev->add_option("--estimates", ev.estimates)->required();
  c_ev->add_option("--truth", ev.truth)->required();
  c_ev->add_option("--vs", ev.vs, "Id CSV of virtual sensors")->required();
  c_ev->add_option("--distances", ev.distances, "Distance CSV for the VS-to-AS distance");
  c_ev->add_option("--out", ev.out, "Report CSV")->required();

  SynthArgs sy;
  std::uint64_t synth_seed = 0;
  auto* c_sy = app.add_subcommand("synth", "Generate a synthetic corridor dataset");
  c_sy->add_option("--config", sy.config, "key = value generator config");
  auto* o_seed = c_sy->add_option("--seed", synth_seed);
  c_sy->add_option("--out-dir", sy.out_dir)->required();

  std::string replay_manifest;
  auto* c_rp = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  c_rp->add_option("--manifest", replay_manifest)->required();

  std::vector<const char*> argv{"dirinet"};
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunManifest m(app.get_subcommands().front()->get_name());
  m.record_invocation(args, fs::current_path().string());
  if (*c_gb) return cmd_graph_build(gb, m);
  if (*c_pr) return cmd_propagate(pr, m);
  if (*c_tr) return cmd_train(tr, m);
  if (*c_es) return cmd_estimate(es, m);
  if (*c_ev) return cmd_eval(ev, m);
  if (*c_sy) {
    if (*o_seed) sy.seed = synth_seed;
    return cmd_synth(sy, m);
  }
  return cmd_replay(replay_manifest);
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> seen;
  set_warning_sink([&seen](const std::string& msg) {
    if (seen.insert(msg).second) std::cerr << "warning: " << msg << '\n';
  });
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ProtocolError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const SingularSystemError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
