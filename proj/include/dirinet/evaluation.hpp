#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dirinet/graph.hpp"
#include "dirinet/types.hpp"

namespace dirinet {

struct MetricsReport {
  double mape = 0.0;  // percent
  double mae = 0.0;   // mph
  double rmse = 0.0;  // mph
  std::size_t n_evaluated = 0;
  std::size_t n_excluded_missing = 0;
  std::size_t n_mape_skipped = 0;  // valid entries with zero truth
  std::optional<double> d_v2a_km;
};

/// MAPE / MAE / RMSE over entries with valid = 1. Shapes must agree.
/// MAPE skips zero-truth entries and is NaN when every valid entry is zero.
MetricsReport metrics(const Matrix& estimates, const Matrix& truth, const MaskMatrix& valid);

struct DistanceToAvailable {
  std::optional<double> mean_km;           // nullopt if no VS reaches an AS
  std::vector<std::size_t> unreachable;    // VS without any route to an AS
};

/// Mean over VS of the travel distance to the nearest AS, in km. Uses the
/// listed VS -> AS distance when present and the directed shortest path
/// over the listed distances otherwise. Indices refer to `node_ids`.
DistanceToAvailable d_v2a(std::span<const std::string> node_ids,
                          std::span<const DistanceRecord> distances,
                          const std::vector<std::size_t>& vs, const std::vector<std::size_t>& as);

/// `count` distinct nodes out of `node_count`, sorted, drawn from a
/// generator seeded by (seed, count).
std::vector<std::size_t> sample_virtual_sensors(std::size_t node_count, std::size_t count,
                                                std::uint64_t seed);

/// Complement of `subset` in [0, node_count).
std::vector<std::size_t> complement(std::size_t node_count, const std::vector<std::size_t>& subset);

struct SweepRow {
  std::size_t vs_count = 0;
  MetricsReport report;
};

/// Receives the sorted VS indices and returns the report for that split.
using SweepRunner = std::function<MetricsReport(const std::vector<std::size_t>& vs)>;

/// One row per VS count, each with its own seeded VS draw. Rows run
/// concurrently on up to `threads` workers (0 = worker_threads()); the
/// table does not depend on the thread count.
std::vector<SweepRow> density_sweep(std::size_t node_count, const std::vector<std::size_t>& vs_counts,
                                    std::uint64_t seed, const SweepRunner& runner,
                                    unsigned threads = 0);

/// Worker cap: DIRINET_THREADS when set, else the hardware concurrency.
unsigned worker_threads();

inline constexpr const char* kReportHeader =
    "vs_count,d_v2a_km,mape_pct,mae_mph,rmse_mph,n_evaluated,n_excluded";

std::string format_report_csv(const std::vector<SweepRow>& rows);

}  // namespace dirinet
