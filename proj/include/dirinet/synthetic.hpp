#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dirinet/data.hpp"
#include "dirinet/graph.hpp"

namespace dirinet {

/// Linear directed corridor (node i upstream of node i+1) with a daily
/// speed profile and moving congestion events.
struct SynthConfig {
  int n_nodes = 60;
  double segment_len_m = 800.0;
  int days = 20;
  double free_flow_mph = 65.0;
  double congestion_wave_mph = -12.0;  // queue tail speed, negative = upstream
  double recovery_wave_mph = 30.0;     // recovery front speed, downstream
  double congested_speed_mph = 18.0;   // speed right behind the queue tail
  int n_waves_per_day = 4;
  double noise_std_mph = 1.5;
  double missing_rate = 0.0;           // fraction of readings blanked
  int max_hops = 3;                    // routes listed up to this many segments downstream
  std::int64_t start_epoch = 1704067200;  // 2024-01-01T00:00:00Z
  std::uint64_t seed = 7;

  void validate() const;
  /// Accepts the keys of `key = value` config files; unknown keys throw.
  static SynthConfig from_key_values(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_key_values() const;
};

struct CongestionEvent {
  double bottleneck_m = 0.0;  // position where the queue forms
  double start_s = 0.0;       // seconds since series start
  double duration_s = 0.0;    // time the bottleneck stays active
};

struct SyntheticDataset {
  SpeedSeries readings;  // noisy, with missing cells
  SpeedSeries truth;     // noiseless field, complete
  std::vector<std::string> node_ids;
  std::vector<DistanceRecord> distances;
  std::vector<CongestionEvent> events;
};

/// Free-flow speed with two rush-hour dips, at time-of-day `seconds`.
double base_profile_mph(const SynthConfig& cfg, double seconds_of_day);

SyntheticDataset generate_synthetic(const SynthConfig& cfg);

}  // namespace dirinet
