#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dirinet/graph.hpp"
#include "dirinet/model.hpp"
#include "dirinet/types.hpp"

namespace dirinet {

inline constexpr std::int64_t kStepSeconds = 300;

/// Speed readings on a uniform 5-minute grid. Missing readings are NaN.
struct SpeedSeries {
  std::vector<std::string> node_ids;
  std::vector<std::int64_t> timestamps;  // epoch seconds, UTC
  Matrix values;                         // T x N, mph

  std::size_t steps() const { return timestamps.size(); }
  std::size_t node_count() const { return node_ids.size(); }
  MaskMatrix measured() const;  // T x N
  double missing_rate() const;

  /// Columns for `ids`, in that order. Throws InputError for unknown ids.
  SpeedSeries select_nodes(const std::vector<std::string>& ids) const;
  /// Rows [begin, end).
  SpeedSeries slice_steps(std::size_t begin, std::size_t end) const;
};

/// Wide CSV: header `timestamp,<id1>,<id2>,...`; timestamps ISO-8601
/// (UTC) or epoch seconds; empty cell or `NaN` = missing. The grid must be
/// strictly increasing with a 300 s step.
SpeedSeries parse_speed_csv(const std::string& text, const std::string& source_name);
SpeedSeries load_speed_csv(const std::string& path);

/// Writes ISO-8601 timestamps and empty cells for missing readings.
std::string format_speed_csv(const SpeedSeries& series);
void write_speed_csv(const SpeedSeries& series, const std::string& path);

std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t epoch_seconds);
int slot_of_day(std::int64_t epoch_seconds);

/// Windows [s, s + L) for s = 0, stride, 2 stride, ...; a short tail is
/// dropped. Every node is marked observed; callers narrow the partition.
std::vector<SignalWindow> window_iter(const SpeedSeries& series, int window_len = 12,
                                      int stride = 12);
/// First step index of window `k` produced by window_iter with `stride`.
inline std::size_t window_start(std::size_t k, int stride) { return k * static_cast<std::size_t>(stride); }

/// Distance CSV with header `from,to,dist` (meters).
std::vector<DistanceRecord> parse_distance_csv(const std::string& text, const std::string& source_name);
std::vector<DistanceRecord> load_distance_csv(const std::string& path);
std::string format_distance_csv(const std::vector<DistanceRecord>& records);

/// Node CSV with header `id`; also used for id lists (observed, VS).
std::vector<std::string> parse_id_csv(const std::string& text, const std::string& source_name);
std::vector<std::string> load_id_csv(const std::string& path);
std::string format_id_csv(const std::vector<std::string>& ids);

/// Graph interchange file (JSON): node ids, kernel parameters and weighted
/// edges with full double precision.
std::string serialize_graph(const WeightedDigraph& g);
WeightedDigraph deserialize_graph(const std::string& text, const std::string& source_name);
void save_graph(const WeightedDigraph& g, const std::string& path);
WeightedDigraph load_graph(const std::string& path);

}  // namespace dirinet
