#include "dirinet/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "dirinet/error.hpp"
#include "dirinet/log.hpp"
#include "dirinet/text.hpp"

namespace dirinet {

MetricsReport metrics(const Matrix& estimates, const Matrix& truth, const MaskMatrix& valid) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols() ||
      valid.rows() != truth.rows() || valid.cols() != truth.cols()) {
    throw InputError("metrics: estimates, truth and mask shapes differ");
  }
  MetricsReport r;
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double pct_sum = 0.0;
  std::size_t pct_count = 0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      if (valid(i, j) == 0) {
        ++r.n_excluded_missing;
        continue;
      }
      const double t = truth(i, j);
      const double e = estimates(i, j);
      if (!std::isfinite(t)) throw InputError("metrics: valid truth entry is not finite");
      if (!std::isfinite(e)) throw InputError("metrics: estimate is not finite on a valid entry");
      const double err = e - t;
      abs_sum += std::abs(err);
      sq_sum += err * err;
      if (t == 0.0) {
        ++r.n_mape_skipped;
      } else {
        pct_sum += std::abs(err / t);
        ++pct_count;
      }
      ++r.n_evaluated;
    }
  }
  if (r.n_evaluated == 0) throw InputError("metrics: no valid entries to evaluate");
  const double n = static_cast<double>(r.n_evaluated);
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  r.mape = pct_count > 0 ? 100.0 * pct_sum / static_cast<double>(pct_count)
                         : std::numeric_limits<double>::quiet_NaN();
  return r;
}

DistanceToAvailable d_v2a(std::span<const std::string> node_ids,
                          std::span<const DistanceRecord> distances,
                          const std::vector<std::size_t>& vs, const std::vector<std::size_t>& as) {
  const std::size_t n = node_ids.size();
  if (vs.empty() || as.empty()) throw InputError("d_v2a: VS and AS sets must be nonempty");
  std::vector<std::uint8_t> is_as(n, 0);
  for (std::size_t j : as) {
    if (j >= n) throw InputError("d_v2a: AS index out of range");
    is_as[j] = 1;
  }
  for (std::size_t i : vs) {
    if (i >= n) throw InputError("d_v2a: VS index out of range");
    if (is_as[i]) throw InputError("d_v2a: node " + node_ids[i] + " is both VS and AS");
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(node_ids[i], i);
  std::vector<std::map<std::size_t, double>> out_edges(n);
  for (const DistanceRecord& d : distances) {
    auto a = index.find(d.from);
    auto b = index.find(d.to);
    if (a == index.end() || b == index.end()) continue;  // sensors outside this node set
    if (!(d.meters >= 0.0) || !std::isfinite(d.meters)) continue;
    auto [it, inserted] = out_edges[a->second].emplace(b->second, d.meters);
    if (!inserted) it->second = std::min(it->second, d.meters);
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  DistanceToAvailable out;
  double sum = 0.0;
  std::size_t counted = 0;
  std::vector<double> dist(n);
  using Item = std::pair<double, std::size_t>;
  for (std::size_t source : vs) {
    std::fill(dist.begin(), dist.end(), kInf);
    dist[source] = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      for (auto [v, w] : out_edges[u]) {
        if (d + w < dist[v]) {
          dist[v] = d + w;
          heap.emplace(dist[v], v);
        }
      }
    }
    double best = kInf;
    for (std::size_t j : as) {
      auto direct = out_edges[source].find(j);
      best = std::min(best, direct != out_edges[source].end() ? direct->second : dist[j]);
    }
    if (std::isfinite(best)) {
      sum += best;
      ++counted;
    } else {
      out.unreachable.push_back(source);
    }
  }
  if (!out.unreachable.empty()) {
    std::string names;
    for (std::size_t i : out.unreachable) names += (names.empty() ? "" : ", ") + node_ids[i];
    warn("d_v2a: no route to an available sensor from " + names + "; excluded from the mean");
  }
  if (counted > 0) out.mean_km = sum / static_cast<double>(counted) / 1000.0;
  return out;
}

std::vector<std::size_t> sample_virtual_sensors(std::size_t node_count, std::size_t count,
                                                std::uint64_t seed) {
  if (count == 0) throw InputError("VS count must be positive");
  if (count >= node_count) {
    throw InputError("VS count " + std::to_string(count) + " must be below the node count " +
                     std::to_string(node_count));
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(count)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> all(node_count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(count);
  std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng);
  return out;
}

std::vector<std::size_t> complement(std::size_t node_count, const std::vector<std::size_t>& subset) {
  std::vector<std::uint8_t> in(node_count, 0);
  for (std::size_t i : subset) in.at(i) = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < node_count; ++i) {
    if (!in[i]) out.push_back(i);
  }
  return out;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("DIRINET_THREADS")) {
    if (auto v = parse_integer(env); v && *v >= 1) return static_cast<unsigned>(*v);
    warn("ignoring DIRINET_THREADS='" + std::string(env) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<SweepRow> density_sweep(std::size_t node_count, const std::vector<std::size_t>& vs_counts,
                                    std::uint64_t seed, const SweepRunner& runner, unsigned threads) {
  for (std::size_t c : vs_counts) {
    if (c == 0 || c >= node_count) {
      throw InputError("VS count " + std::to_string(c) + " must be in [1, " +
                       std::to_string(node_count - 1) + "]");
    }
  }
  std::vector<SweepRow> rows(vs_counts.size());
  std::vector<std::exception_ptr> errors(vs_counts.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < vs_counts.size(); k = next++) {
      try {
        const auto vs = sample_virtual_sensors(node_count, vs_counts[k], seed);
        rows[k] = {vs_counts[k], runner(vs)};
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned n_workers =
      std::min<unsigned>(threads == 0 ? worker_threads() : threads, static_cast<unsigned>(vs_counts.size()));
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::string format_report_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << kReportHeader << '\n';
  auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };
  for (const SweepRow& r : rows) {
    os << r.vs_count << ',' << (r.report.d_v2a_km ? num(*r.report.d_v2a_km) : std::string()) << ','
       << num(r.report.mape) << ',' << num(r.report.mae) << ',' << num(r.report.rmse) << ','
       << r.report.n_evaluated << ',' << r.report.n_excluded_missing << '\n';
  }
  return os.str();
}

}  // namespace dirinet
