#include "doctest.h"
#include "dirinet/data.hpp"
#include "dirinet/error.hpp"
#include "dirinet/synthetic.hpp"
#include "support.hpp"

#include <cmath>

using namespace dirinet;

namespace {

std::string error_of(const std::string& csv) {
  try {
    parse_speed_csv(csv, "speeds.csv");
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

SynthConfig quiet(int waves) {
  SynthConfig c;
  c.n_nodes = 20;
  c.days = 1;
  c.noise_std_mph = 0.0;
  c.n_waves_per_day = waves;
  return c;
}

}  // namespace

TEST_CASE("speed CSV parsing") {
  const std::string csv =
      "timestamp,a,b\n"
      "2024-01-01T00:00:00Z,50,60\n"
      "2024-01-01T00:05:00Z,,61.5\n"
      "2024-01-01T00:10:00Z,52,NaN\n";
  const auto s = parse_speed_csv(csv, "speeds.csv");
  CHECK(s.node_ids == std::vector<std::string>{"a", "b"});
  CHECK(s.steps() == 3);
  const MaskMatrix m = s.measured();
  CHECK(m.cast<int>().sum() == 4);
  CHECK(m(1, 0) == 0);
  CHECK(m(2, 1) == 0);
  CHECK(s.values(1, 1) == 61.5);

  const auto epoch = parse_speed_csv("timestamp,a\n1704067200,1\n1704067500,2\n", "e.csv");
  CHECK(epoch.timestamps == std::vector<std::int64_t>{1704067200, 1704067500});
}

TEST_CASE("speed CSV rejects bad grids with the row number") {
  const auto irregular = error_of(
      "timestamp,a\n2024-01-01T00:00:00Z,1\n2024-01-01T00:05:00Z,1\n2024-01-01T00:09:00Z,1\n");
  CHECK(irregular.find("speeds.csv:4") != std::string::npos);
  CHECK(!error_of("timestamp,a\n1704067500,1\n1704067200,2\n").empty());
  CHECK(!error_of("timestamp,a,b\n1704067200,1\n").empty());
  CHECK(!error_of("time,a\n1704067200,1\n").empty());
  CHECK(!error_of("timestamp,a\n1704067200,fast\n").empty());
}

TEST_CASE("speed CSV round trip keeps missing cells") {
  SynthConfig c = quiet(2);
  c.noise_std_mph = 1.0;
  c.missing_rate = 0.1;
  const auto s = generate_synthetic(c).readings;
  const std::string text = format_speed_csv(s);
  const auto back = parse_speed_csv(text, "rt");
  CHECK(back.timestamps == s.timestamps);
  CHECK(back.measured() == s.measured());
  CHECK(format_speed_csv(back) == text);
  CHECK(text.find("NaN") == std::string::npos);
}

TEST_CASE("timestamps and slots") {
  CHECK(parse_timestamp("2024-01-01T00:00:00Z") == 1704067200);
  CHECK(format_timestamp(1704067200 + 300) == "2024-01-01T00:05:00");
  CHECK(slot_of_day(1704067200 + 287 * 300) == 287);
  CHECK(slot_of_day(1704067200 + 288 * 300) == 0);
  CHECK_THROWS_AS(parse_timestamp("yesterday"), InputError);
}

TEST_CASE("window_iter counts and slots") {
  SpeedSeries s{{"a"}, {}, Matrix::Zero(36, 1)};
  for (int t = 0; t < 36; ++t) s.timestamps.push_back(1704067200 + t * kStepSeconds);
  const auto w = window_iter(s);
  REQUIRE(w.size() == 3);
  CHECK(w.back().slot_of_day == 35 % 288);
  CHECK(w[1].end_time == s.timestamps[23]);
  CHECK(window_iter(s, 12, 1).size() == 36 - 12 + 1);
  s.values.conservativeResize(40, 1);
  s.values.bottomRows(4).setZero();
  for (int t = 36; t < 40; ++t) s.timestamps.push_back(1704067200 + t * kStepSeconds);
  CHECK(window_iter(s).size() == 3);
}

TEST_CASE("synthetic generation is deterministic") {
  SynthConfig c = quiet(3);
  c.noise_std_mph = 1.5;
  c.missing_rate = 0.05;
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  CHECK(format_speed_csv(a.readings) == format_speed_csv(b.readings));
  CHECK(format_speed_csv(a.truth) == format_speed_csv(b.truth));
  CHECK(format_distance_csv(a.distances) == format_distance_csv(b.distances));
  c.seed += 1;
  CHECK(format_speed_csv(generate_synthetic(c).readings) != format_speed_csv(a.readings));
}

TEST_CASE("quiet synthetic field is the shifted base profile") {
  const SynthConfig c = quiet(0);
  const auto ds = generate_synthetic(c);
  CHECK(ds.readings.values == ds.truth.values);
  const double v_ff = c.free_flow_mph * 0.44704;
  for (int i = 0; i < c.n_nodes; i += 5) {
    const double offset = i * c.segment_len_m / v_ff;
    for (int t = 0; t < 288; t += 7) {
      CHECK(ds.truth.values(t, i) == doctest::Approx(base_profile_mph(c, t * 300.0 - offset)));
    }
  }
}

TEST_CASE("queue minima move upstream at the congestion wave speed") {
  SynthConfig c = quiet(1);
  c.n_nodes = 40;
  const auto ds = generate_synthetic(c);
  const CongestionEvent& ev = ds.events.at(0);
  const double reach = ev.bottleneck_m + c.congestion_wave_mph * 0.44704 * ev.duration_s;
  const double lag = c.segment_len_m / std::abs(c.congestion_wave_mph * 0.44704);
  int checked = 0;
  for (int i = 1; i < c.n_nodes; ++i) {
    const double x_up = (i - 1) * c.segment_len_m;
    const double x = i * c.segment_len_m;
    if (x_up < reach || x > ev.bottleneck_m) continue;
    Eigen::Index t_up = 0, t_here = 0;
    ds.truth.values.col(i - 1).minCoeff(&t_up);
    ds.truth.values.col(i).minCoeff(&t_here);
    CHECK(t_up >= t_here);
    CHECK(std::abs(static_cast<double>(t_up - t_here) * 300.0 - lag) <= 300.0);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("congestion fronts slope backwards and recovery fronts forwards") {
  SynthConfig c = quiet(1);
  c.n_nodes = 40;
  const auto ds = generate_synthetic(c);
  SynthConfig base_cfg = c;
  base_cfg.n_waves_per_day = 0;
  const auto base = generate_synthetic(base_cfg);
  std::vector<std::pair<int, int>> spans;  // first and last congested step per node
  for (int i = 0; i < c.n_nodes; ++i) {
    int first = -1, last = -1;
    for (int t = 0; t < 288; ++t) {
      if (ds.truth.values(t, i) < base.truth.values(t, i) - 1e-9) {
        if (first < 0) first = t;
        last = t;
      }
    }
    if (first >= 0) spans.push_back({first, last});
  }
  REQUIRE(spans.size() >= 2);
  for (std::size_t k = 1; k < spans.size(); ++k) {
    CHECK(spans[k].first <= spans[k - 1].first);
    CHECK(spans[k].second >= spans[k - 1].second);
  }
  CHECK(spans.front().first > spans.back().first);
  CHECK(spans.front().second < spans.back().second);
}

TEST_CASE("synthetic config parsing") {
  const auto c = SynthConfig::from_key_values({{"n_nodes", "12"}, {"noise_std_mph", "0.5"}});
  CHECK(c.n_nodes == 12);
  CHECK(c.noise_std_mph == 0.5);
  CHECK(SynthConfig::from_key_values(c.to_key_values()).to_key_values() == c.to_key_values());
  CHECK_THROWS_AS(SynthConfig::from_key_values({{"colour", "red"}}), InputError);
  SynthConfig bad;
  bad.congestion_wave_mph = 5.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("distance and id files") {
  const auto d = parse_distance_csv("from,to,dist\na,b,100.5\nb,c,200\n", "d.csv");
  REQUIRE(d.size() == 2);
  CHECK(d[0].meters == 100.5);
  CHECK(parse_distance_csv(format_distance_csv(d), "rt").size() == 2);
  CHECK_THROWS_AS(parse_distance_csv("from,to,dist\na,b,-1\n", "d.csv"), InputError);
  const auto ids = parse_id_csv("id\nx\ny\n", "ids.csv");
  CHECK(ids == std::vector<std::string>{"x", "y"});
  CHECK(parse_id_csv(format_id_csv(ids), "rt") == ids);
  CHECK_THROWS_AS(parse_id_csv("id\nx\nx\n", "ids.csv"), InputError);
}

TEST_CASE("graph file round trip keeps weights exactly") {
  std::mt19937_64 rng(3);
  auto g = testing::random_digraph(9, 0.4, rng);
  g.set_kernel_parameters(812.5, 2000.0);
  const auto back = deserialize_graph(serialize_graph(g), "g.json");
  CHECK(back.node_ids() == g.node_ids());
  CHECK(back.sigma() == g.sigma());
  CHECK(back.kappa() == g.kappa());
  CHECK(testing::dense(back.adjacency()) == testing::dense(g.adjacency()));
  CHECK(serialize_graph(back) == serialize_graph(g));
  CHECK_THROWS_AS(deserialize_graph("{}", "g.json"), InputError);
  CHECK_THROWS_AS(deserialize_graph("not json", "g.json"), InputError);
}
