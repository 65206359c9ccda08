#include "dirinet/data.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "dirinet/error.hpp"
#include "dirinet/log.hpp"
#include "dirinet/text.hpp"

namespace dirinet {

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines = split(text, '\n');
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::string where(const std::string& source, std::size_t line_no) {
  return source + ":" + std::to_string(line_no);
}

bool two_digits(std::string_view s, std::size_t at, int& out) {
  if (at + 2 > s.size() || !std::isdigit(static_cast<unsigned char>(s[at])) ||
      !std::isdigit(static_cast<unsigned char>(s[at + 1]))) {
    return false;
  }
  out = (s[at] - '0') * 10 + (s[at + 1] - '0');
  return true;
}

}  // namespace

MaskMatrix SpeedSeries::measured() const {
  MaskMatrix m(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    for (Eigen::Index r = 0; r < values.rows(); ++r) m(r, c) = std::isnan(values(r, c)) ? 0 : 1;
  }
  return m;
}

double SpeedSeries::missing_rate() const {
  if (values.size() == 0) return 0.0;
  Eigen::Index missing = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) missing += std::isnan(values.data()[i]) ? 1 : 0;
  return static_cast<double>(missing) / static_cast<double>(values.size());
}

SpeedSeries SpeedSeries::select_nodes(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < node_ids.size(); ++i) index[node_ids[i]] = static_cast<Eigen::Index>(i);
  SpeedSeries out;
  out.node_ids = ids;
  out.timestamps = timestamps;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    auto it = index.find(ids[k]);
    if (it == index.end()) throw InputError("series has no column for node '" + ids[k] + "'");
    out.values.col(static_cast<Eigen::Index>(k)) = values.col(it->second);
  }
  return out;
}

SpeedSeries SpeedSeries::slice_steps(std::size_t begin, std::size_t end) const {
  if (begin > end || end > steps()) throw InputError("step slice out of range");
  SpeedSeries out;
  out.node_ids = node_ids;
  out.timestamps.assign(timestamps.begin() + static_cast<long>(begin),
                        timestamps.begin() + static_cast<long>(end));
  out.values = values.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  return out;
}

std::int64_t parse_timestamp(const std::string& raw) {
  const std::string_view s = trim(raw);
  if (auto epoch = parse_integer(s)) return *epoch;

  // YYYY-MM-DD[T ]HH:MM[:SS][Z]
  int year = 0;
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') {
    throw InputError("unrecognized timestamp '" + std::string(s) + "'");
  }
  auto y = parse_integer(s.substr(0, 4));
  int month = 0, day = 0, hour = 0, minute = 0, second = 0;
  bool ok = y.has_value() && two_digits(s, 5, month) && two_digits(s, 8, day) &&
            two_digits(s, 11, hour) && two_digits(s, 14, minute);
  std::size_t pos = 16;
  if (ok && pos < s.size() && s[pos] == ':') {
    ok = two_digits(s, pos + 1, second);
    pos += 3;
  }
  if (ok && pos < s.size() && s[pos] == 'Z') ++pos;
  if (!ok || pos != s.size()) throw InputError("unrecognized timestamp '" + std::string(s) + "'");
  year = static_cast<int>(*y);

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 59) {
    throw InputError("invalid calendar timestamp '" + std::string(s) + "'");
  }
  const auto days = sys_days(ymd).time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hour * 3600 + minute * 60 + second;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                static_cast<int>(rem % 60));
  return buf;
}

int slot_of_day(std::int64_t epoch_seconds) {
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) rem += 86400;
  return static_cast<int>(rem / kStepSeconds);
}

SpeedSeries parse_speed_csv(const std::string& text, const std::string& source_name) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw InputError(source_name + ": empty speed file");
  const auto header = split(lines[0], ',');
  if (header.size() < 2 || trim(header[0]) != "timestamp") {
    throw InputError(where(source_name, 1) + ": header must be 'timestamp,<id>,...'");
  }
  SpeedSeries s;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < header.size(); ++i) {
    std::string id(trim(header[i]));
    if (id.empty()) throw InputError(where(source_name, 1) + ": empty node id in header");
    if (!seen.insert(id).second) throw InputError(where(source_name, 1) + ": duplicate node id '" + id + "'");
    s.node_ids.push_back(std::move(id));
  }
  const std::size_t n = s.node_ids.size();
  const std::size_t t = lines.size() - 1;
  s.values.resize(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
  s.timestamps.reserve(t);
  std::size_t out_of_range = 0;
  for (std::size_t row = 0; row < t; ++row) {
    const std::size_t line_no = row + 2;
    const auto cells = split(lines[row + 1], ',');
    if (cells.size() != n + 1) {
      throw InputError(where(source_name, line_no) + ": expected " + std::to_string(n + 1) +
                       " cells, found " + std::to_string(cells.size()));
    }
    std::int64_t ts = 0;
    try {
      ts = parse_timestamp(cells[0]);
    } catch (const InputError& e) {
      throw InputError(where(source_name, line_no) + ": " + e.what());
    }
    if (!s.timestamps.empty()) {
      const std::int64_t step = ts - s.timestamps.back();
      if (step <= 0) throw InputError(where(source_name, line_no) + ": timestamps must increase");
      if (step != kStepSeconds) {
        throw InputError(where(source_name, line_no) + ": irregular step of " + std::to_string(step) +
                         " s (expected 300 s)");
      }
    }
    s.timestamps.push_back(ts);
    for (std::size_t j = 0; j < n; ++j) {
      const std::string_view cell = trim(cells[j + 1]);
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!cell.empty() && cell != "NaN" && cell != "nan") {
        auto parsed = parse_double(cell);
        if (!parsed || std::isinf(*parsed)) {
          throw InputError(where(source_name, line_no) + ": bad speed value '" + std::string(cell) + "'");
        }
        v = *parsed;
        if (v < 0.0 || v > 120.0) ++out_of_range;
      }
      s.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = v;
    }
  }
  if (out_of_range) {
    warn(source_name + ": " + std::to_string(out_of_range) + " reading(s) outside [0, 120] mph");
  }
  return s;
}

SpeedSeries load_speed_csv(const std::string& path) { return parse_speed_csv(read_file(path), path); }

std::string format_speed_csv(const SpeedSeries& series) {
  std::string out = "timestamp";
  for (const auto& id : series.node_ids) out += "," + id;
  out += '\n';
  for (std::size_t r = 0; r < series.steps(); ++r) {
    out += format_timestamp(series.timestamps[r]);
    for (std::size_t c = 0; c < series.node_count(); ++c) {
      out += ',';
      const double v = series.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      if (!std::isnan(v)) out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void write_speed_csv(const SpeedSeries& series, const std::string& path) {
  write_file_atomic(path, format_speed_csv(series));
}

std::vector<SignalWindow> window_iter(const SpeedSeries& series, int window_len, int stride) {
  if (window_len < 1 || stride < 1) throw InputError("window length and stride must be >= 1");
  std::vector<SignalWindow> out;
  const auto l = static_cast<std::size_t>(window_len);
  const auto n = static_cast<Eigen::Index>(series.node_count());
  for (std::size_t start = 0; start + l <= series.steps(); start += static_cast<std::size_t>(stride)) {
    SignalWindow w;
    w.values = series.values.middleRows(static_cast<Eigen::Index>(start), window_len).transpose();
    w.mask.resize(n, window_len);
    for (Eigen::Index c = 0; c < window_len; ++c) {
      for (Eigen::Index r = 0; r < n; ++r) w.mask(r, c) = std::isnan(w.values(r, c)) ? 0 : 1;
    }
    w.end_time = series.timestamps[start + l - 1];
    w.slot_of_day = slot_of_day(w.end_time);
    w.partition = NodePartition::all_observed(series.node_count());
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<DistanceRecord> parse_distance_csv(const std::string& text, const std::string& source_name) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw InputError(source_name + ": empty distance file");
  const auto header = split(lines[0], ',');
  if (header.size() != 3 || trim(header[0]) != "from" || trim(header[1]) != "to" ||
      trim(header[2]) != "dist") {
    throw InputError(where(source_name, 1) + ": header must be 'from,to,dist'");
  }
  std::vector<DistanceRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto cells = split(lines[i], ',');
    if (cells.size() != 3) throw InputError(where(source_name, i + 1) + ": expected 3 cells");
    auto d = parse_double(cells[2]);
    if (!d) throw InputError(where(source_name, i + 1) + ": bad distance '" + cells[2] + "'");
    if (*d < 0.0) throw InputError(where(source_name, i + 1) + ": negative distance");
    out.push_back({std::string(trim(cells[0])), std::string(trim(cells[1])), *d});
  }
  return out;
}

std::vector<DistanceRecord> load_distance_csv(const std::string& path) {
  return parse_distance_csv(read_file(path), path);
}

std::string format_distance_csv(const std::vector<DistanceRecord>& records) {
  std::string out = "from,to,dist\n";
  for (const auto& r : records) out += r.from + "," + r.to + "," + format_double(r.meters) + "\n";
  return out;
}

std::vector<std::string> parse_id_csv(const std::string& text, const std::string& source_name) {
  const auto lines = lines_of(text);
  if (lines.empty() || trim(lines[0]) != "id") {
    throw InputError(where(source_name, 1) + ": header must be 'id'");
  }
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string id(trim(lines[i]));
    if (id.empty()) continue;
    if (!seen.insert(id).second) throw InputError(where(source_name, i + 1) + ": duplicate id '" + id + "'");
    out.push_back(std::move(id));
  }
  return out;
}

std::vector<std::string> load_id_csv(const std::string& path) { return parse_id_csv(read_file(path), path); }

std::string format_id_csv(const std::vector<std::string>& ids) {
  std::string out = "id\n";
  for (const auto& id : ids) out += id + "\n";
  return out;
}

std::string serialize_graph(const WeightedDigraph& g) {
  nlohmann::ordered_json j;
  j["format"] = "dirinet-graph-1";
  j["nodes"] = g.node_ids();
  if (g.sigma()) j["sigma"] = *g.sigma();
  if (g.kappa() && std::isfinite(*g.kappa())) j["kappa"] = *g.kappa();
  auto edges = nlohmann::json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.from, e.to, e.weight});
  j["edges"] = std::move(edges);
  return j.dump(1) + "\n";
}

WeightedDigraph deserialize_graph(const std::string& text, const std::string& source_name) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string()) != "dirinet-graph-1") {
      throw InputError(source_name + ": not a dirinet graph file");
    }
    auto nodes = j.at("nodes").get<std::vector<std::string>>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
    }
    WeightedDigraph g = WeightedDigraph::from_edges(std::move(nodes), edges);
    if (j.contains("sigma")) {
      g.set_kernel_parameters(j["sigma"].get<double>(),
                              j.contains("kappa") ? j["kappa"].get<double>()
                                                  : std::numeric_limits<double>::infinity());
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(source_name + ": malformed graph file: " + e.what());
  } catch (const InputError& e) {
    throw InputError(source_name + ": " + e.what());
  }
}

void save_graph(const WeightedDigraph& g, const std::string& path) {
  write_file_atomic(path, serialize_graph(g));
}

WeightedDigraph load_graph(const std::string& path) { return deserialize_graph(read_file(path), path); }

}  // namespace dirinet
