#include "dirinet/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "dirinet/error.hpp"
#include "dirinet/text.hpp"

namespace dirinet {

namespace {

constexpr double kMphToMps = 0.44704;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double require_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto v = parse_double(kv.at(key));
  if (!v) throw InputError("synth config: '" + key + "' is not a number");
  return *v;
}

long long require_integer(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto v = parse_integer(kv.at(key));
  if (!v) throw InputError("synth config: '" + key + "' is not an integer");
  return *v;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_nodes < 2) throw InputError("synth: n_nodes must be >= 2");
  if (!(segment_len_m > 0.0)) throw InputError("synth: segment_len_m must be positive");
  if (days < 1) throw InputError("synth: days must be >= 1");
  if (!(free_flow_mph > 0.0)) throw InputError("synth: free_flow_mph must be positive");
  if (!(congestion_wave_mph < 0.0)) {
    throw InputError("synth: congestion_wave_mph must be negative (queues grow upstream)");
  }
  if (!(recovery_wave_mph > 0.0)) throw InputError("synth: recovery_wave_mph must be positive");
  if (!(congested_speed_mph >= 0.0 && congested_speed_mph < free_flow_mph)) {
    throw InputError("synth: congested_speed_mph must be in [0, free_flow_mph)");
  }
  if (n_waves_per_day < 0) throw InputError("synth: n_waves_per_day must be >= 0");
  if (!(noise_std_mph >= 0.0)) throw InputError("synth: noise_std_mph must be >= 0");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw InputError("synth: missing_rate must be in [0, 1)");
  if (max_hops < 1) throw InputError("synth: max_hops must be >= 1");
}

SynthConfig SynthConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  SynthConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "n_nodes") c.n_nodes = static_cast<int>(require_integer(kv, key));
    else if (key == "segment_len_m") c.segment_len_m = require_double(kv, key);
    else if (key == "days") c.days = static_cast<int>(require_integer(kv, key));
    else if (key == "free_flow_mph") c.free_flow_mph = require_double(kv, key);
    else if (key == "congestion_wave_mph") c.congestion_wave_mph = require_double(kv, key);
    else if (key == "recovery_wave_mph") c.recovery_wave_mph = require_double(kv, key);
    else if (key == "congested_speed_mph") c.congested_speed_mph = require_double(kv, key);
    else if (key == "n_waves_per_day") c.n_waves_per_day = static_cast<int>(require_integer(kv, key));
    else if (key == "noise_std_mph") c.noise_std_mph = require_double(kv, key);
    else if (key == "missing_rate") c.missing_rate = require_double(kv, key);
    else if (key == "max_hops") c.max_hops = static_cast<int>(require_integer(kv, key));
    else if (key == "start_epoch") c.start_epoch = require_integer(kv, key);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(require_integer(kv, key));
    else throw InputError("synth config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::map<std::string, std::string> SynthConfig::to_key_values() const {
  return {
      {"n_nodes", std::to_string(n_nodes)},
      {"segment_len_m", format_double(segment_len_m)},
      {"days", std::to_string(days)},
      {"free_flow_mph", format_double(free_flow_mph)},
      {"congestion_wave_mph", format_double(congestion_wave_mph)},
      {"recovery_wave_mph", format_double(recovery_wave_mph)},
      {"congested_speed_mph", format_double(congested_speed_mph)},
      {"n_waves_per_day", std::to_string(n_waves_per_day)},
      {"noise_std_mph", format_double(noise_std_mph)},
      {"missing_rate", format_double(missing_rate)},
      {"max_hops", std::to_string(max_hops)},
      {"start_epoch", std::to_string(start_epoch)},
      {"seed", std::to_string(seed)},
  };
}

double base_profile_mph(const SynthConfig& cfg, double seconds_of_day) {
  double s = std::fmod(seconds_of_day, 86400.0);
  if (s < 0.0) s += 86400.0;
  const double h = s / 3600.0;
  const double am = std::exp(-std::pow((h - 8.0) / 1.2, 2.0));
  const double pm = std::exp(-std::pow((h - 17.5) / 1.5, 2.0));
  return cfg.free_flow_mph * (1.0 - 0.12 * am - 0.18 * pm);
}

SyntheticDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SyntheticDataset ds;

  const int n = cfg.n_nodes;
  const int steps = cfg.days * 288;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "n%03d", i);
    ds.node_ids.emplace_back(buf);
  }
  for (int i = 0; i < n; ++i) {
    for (int hop = 1; hop <= cfg.max_hops && i + hop < n; ++hop) {
      ds.distances.push_back({ds.node_ids[static_cast<std::size_t>(i)],
                              ds.node_ids[static_cast<std::size_t>(i + hop)],
                              hop * cfg.segment_len_m});
    }
  }

  const double length = (n - 1) * cfg.segment_len_m;
  for (int d = 0; d < cfg.days; ++d) {
    for (int k = 0; k < cfg.n_waves_per_day; ++k) {
      CongestionEvent ev;
      ev.start_s = d * 86400.0 + uniform(rng, 6.0 * 3600.0, 20.0 * 3600.0);
      ev.bottleneck_m = uniform(rng, 0.25 * length, length);
      ev.duration_s = uniform(rng, 30.0 * 60.0, 90.0 * 60.0);
      ds.events.push_back(ev);
    }
  }

  const double v_ff = cfg.free_flow_mph * kMphToMps;
  const double w = cfg.congestion_wave_mph * kMphToMps;  // < 0
  const double r = cfg.recovery_wave_mph * kMphToMps;    // > 0

  Matrix truth(steps, n);
  for (int i = 0; i < n; ++i) {
    const double x = i * cfg.segment_len_m;
    const double offset = x / v_ff;
    for (int t = 0; t < steps; ++t) {
      const double time = t * static_cast<double>(kStepSeconds);
      const double base = base_profile_mph(cfg, time - offset);
      double v = base;
      for (const CongestionEvent& ev : ds.events) {
        // Queue tail x0 + w (t - t0) moves upstream while the bottleneck is
        // active; afterwards a recovery front moves back downstream from
        // the furthest tail position. The region is a triangle in (x, t).
        const double reach = ev.bottleneck_m + w * ev.duration_s;
        if (x > ev.bottleneck_m || x < reach) continue;
        const double t_in = ev.start_s + (x - ev.bottleneck_m) / w;
        const double t_out = ev.start_s + ev.duration_s + (x - reach) / r;
        if (time < t_in || time >= t_out) continue;
        const double phase = (time - t_in) / (t_out - t_in);
        const double queued = cfg.congested_speed_mph + (base - cfg.congested_speed_mph) * phase * phase;
        v = std::min(v, queued);
      }
      truth(t, i) = v;
    }
  }

  Matrix observed = truth;
  if (cfg.noise_std_mph > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_std_mph);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < steps; ++t) observed(t, i) = std::max(0.0, truth(t, i) + noise(rng));
    }
  }
  if (cfg.missing_rate > 0.0) {
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < steps; ++t) {
        if (uniform(rng, 0.0, 1.0) < cfg.missing_rate) {
          observed(t, i) = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
  }

  std::vector<std::int64_t> stamps(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) stamps[static_cast<std::size_t>(t)] = cfg.start_epoch + t * kStepSeconds;
  ds.truth = {ds.node_ids, stamps, truth};
  ds.readings = {ds.node_ids, stamps, observed};
  return ds;
}

}  // namespace dirinet
