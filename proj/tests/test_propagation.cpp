#include <cmath>

#include "doctest.h"
#include "dirinet/error.hpp"
#include "dirinet/propagation.hpp"
#include "support.hpp"

using namespace dirinet;
using testing::dense;

namespace {

// Random directed graph whose unobserved nodes all reach an observed one.
std::pair<WeightedDigraph, NodePartition> reachable_instance(std::mt19937_64& rng, std::size_t n) {
  for (;;) {
    const auto g = testing::random_digraph(n, testing::uniform(rng, 0.1, 0.4), rng);
    const NodePartition part(n, testing::random_observed(n, testing::uniform(rng, 0.2, 0.6), rng));
    if (unreachable_unobserved(g, part).empty()) return {g, part};
  }
}

// Dense Jacobi sweeps with boundary reset, for hand-checkable chains.
Vector dense_sweeps(const Matrix& t, const NodePartition& part, Vector x, int sweeps) {
  for (int k = 0; k < sweeps; ++k) {
    const Vector next = t * x;
    for (std::size_t i : part.unobserved()) {
      if (t.row(static_cast<Eigen::Index>(i)).cwiseAbs().sum() > 0) x[i] = next[i];
    }
  }
  return x;
}

}  // namespace

TEST_CASE("dirichlet energy: constant, two-node, and two independent formulas") {
  const auto g2 = WeightedDigraph::from_edges(testing::make_ids(2), std::vector<Edge>{{0, 1, 1.0}});
  CHECK(dirichlet_energy(g2, Vector::Constant(2, 3.0)) == 0.0);
  CHECK(dirichlet_energy(g2, (Vector(2) << 1.0, 0.0).finished()) == 0.5);

  std::mt19937_64 rng(1);
  const auto g = testing::random_digraph(10, 0.4, rng);
  const Matrix a = dense(g.adjacency());
  const Matrix q = Matrix(a.rowwise().sum().asDiagonal()) + Matrix(a.colwise().sum().asDiagonal()) - 2.0 * a;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = Vector::NullaryExpr(10, [&] { return testing::uniform(rng, -5, 5); });
    CHECK(dirichlet_energy(g, x) == doctest::Approx(0.5 * x.dot(q * x)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(dirichlet_energy(g, Vector::Zero(3)), InputError);
}

TEST_CASE("constant boundary propagates to a constant") {
  std::mt19937_64 rng(2);
  auto [g, part] = reachable_instance(rng, 15);
  PropagationConfig cfg;
  cfg.max_iters = 5000;
  cfg.tolerance = 1e-12;
  cfg.init = InitPolicy::zeros;
  const auto r = propagate(g, part, Vector::Constant(static_cast<Eigen::Index>(part.observed().size()), 42.0), cfg);
  CHECK((r.values.array() - 42.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("3-node path: iterative and closed form give the midpoint") {
  const auto g = testing::chain(3);
  const NodePartition part(3, {0, 2});
  const Vector xo = (Vector(2) << 0.0, 1.0).finished();
  PropagationConfig cfg;
  const auto r = propagate(g, part, xo, cfg);
  CHECK(r.values[1] == doctest::Approx(0.5));
  CHECK(r.iterations == 1);  // observed_mean init is already the fixed point
  const Vector cf = propagate_closed_form(g, part, xo);
  CHECK(cf[1] == 0.5);
}

TEST_CASE("observed entries are preserved bit-for-bit") {
  std::mt19937_64 rng(3);
  auto [g, part] = reachable_instance(rng, 20);
  const Vector xo = Vector::NullaryExpr(static_cast<Eigen::Index>(part.observed().size()),
                                        [&] { return testing::uniform(rng, 0, 70); });
  for (InitPolicy init : {InitPolicy::zeros, InitPolicy::observed_mean, InitPolicy::random}) {
    PropagationConfig cfg;
    cfg.init = init;
    cfg.seed = 4;
    const auto r = propagate(g, part, xo, cfg);
    for (std::size_t k = 0; k < part.observed().size(); ++k) {
      CHECK(r.values[part.observed()[k]] == xo[static_cast<Eigen::Index>(k)]);
    }
  }
}

TEST_CASE("closed form: empty unobserved set and singular components") {
  const auto g = testing::chain(3);
  const Vector xo = (Vector(3) << 1.0, 2.0, 3.0).finished();
  CHECK(propagate_closed_form(g, NodePartition::all_observed(3), xo) == xo);

  const auto split = WeightedDigraph::from_edges(testing::make_ids(4), std::vector<Edge>{{0, 1, 1.0}, {2, 3, 1.0}});
  try {
    propagate_closed_form(split, NodePartition(4, {0, 1}), (Vector(2) << 1.0, 2.0).finished());
    FAIL("expected SingularSystemError");
  } catch (const SingularSystemError& e) {
    CHECK(e.nodes() == std::vector<std::size_t>{2, 3});
    CHECK(std::string(e.what()).find("v2") != std::string::npos);
    CHECK(std::string(e.what()).find("v3") != std::string::npos);
  }
}

TEST_CASE("unreachable nodes keep their initial value on the iterative path") {
  testing::WarningCapture cap;
  const auto g = WeightedDigraph::from_edges(testing::make_ids(4), std::vector<Edge>{{0, 1, 1.0}, {2, 3, 1.0}});
  PropagationConfig cfg;
  cfg.init = InitPolicy::zeros;
  const auto r = propagate(g, NodePartition(4, {0}), (Vector(1) << 7.0).finished(), cfg);
  CHECK(r.values[1] == 7.0);
  CHECK(r.values[2] == 0.0);
  CHECK(r.values[3] == 0.0);
  REQUIRE(!cap.messages.empty());
  CHECK(cap.messages[0].find("v2") != std::string::npos);
}

TEST_CASE("iterative matches closed form on random graphs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto [g, part] = reachable_instance(rng, 30);
    const Vector xo = Vector::NullaryExpr(static_cast<Eigen::Index>(part.observed().size()),
                                          [&] { return testing::uniform(rng, 0, 70); });
    PropagationConfig cfg;
    cfg.max_iters = 100000;
    cfg.tolerance = 1e-10;
    const auto r = propagate(g, part, xo, cfg);
    CHECK((r.values - propagate_closed_form(g, part, xo)).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("init independence, fixed point and energy optimality") {
  std::mt19937_64 rng(6);
  auto [g, part] = reachable_instance(rng, 25);
  const Vector xo = Vector::NullaryExpr(static_cast<Eigen::Index>(part.observed().size()),
                                        [&] { return testing::uniform(rng, 0, 70); });
  PropagationConfig cfg;
  cfg.max_iters = 100000;
  cfg.tolerance = 1e-11;
  cfg.init = InitPolicy::zeros;
  const auto a = propagate(g, part, xo, cfg);
  cfg.init = InitPolicy::random;
  cfg.seed = 99;
  const auto b = propagate(g, part, xo, cfg);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-6);

  Matrix state = a.values;
  const auto stats = run_sweeps(transition_coupled(g).matrix, part, state, 1, std::nullopt);
  CHECK(stats.final_residual <= cfg.tolerance);

  const Vector best = propagate_closed_form(g, part, xo);
  const double e0 = dirichlet_energy(g, best);
  for (int trial = 0; trial < 100; ++trial) {
    Vector x = best;
    for (std::size_t i : part.unobserved()) x[i] += testing::uniform(rng, -0.1, 0.1);
    CHECK(e0 <= dirichlet_energy(g, x) + 1e-12);
  }
}

TEST_CASE("maximum principle holds after every sweep") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto [g, part] = reachable_instance(rng, 15);
    const Vector xo = Vector::NullaryExpr(static_cast<Eigen::Index>(part.observed().size()),
                                          [&] { return testing::uniform(rng, -10, 10); });
    Matrix state = Matrix::Constant(15, 1, xo.mean());
    for (std::size_t k = 0; k < part.observed().size(); ++k) {
      state(static_cast<Eigen::Index>(part.observed()[k]), 0) = xo[static_cast<Eigen::Index>(k)];
    }
    const auto t = transition_coupled(g).matrix;
    for (int k = 0; k < 60; ++k) {
      CHECK(state.minCoeff() >= xo.minCoeff() - 1e-12);
      CHECK(state.maxCoeff() <= xo.maxCoeff() + 1e-12);
      run_sweeps(t, part, state, 1, std::nullopt);
    }
  }
}

TEST_CASE("propagation rejects bad input") {
  const auto g = testing::chain(3);
  PropagationConfig cfg;
  CHECK_THROWS_AS(propagate(g, NodePartition(3, {0}), (Vector(1) << NAN).finished(), cfg), InputError);
  CHECK_THROWS_AS(propagate(g, NodePartition(3, {0}), Vector::Zero(2), cfg), InputError);
  cfg.max_iters = 0;
  CHECK_THROWS_AS(propagate(g, NodePartition(3, {0}), Vector::Zero(1), cfg), InputError);
  PropagationConfig dec;
  dec.mode = PropagationMode::decoupled;
  CHECK_THROWS_AS(propagate_decoupled(g, NodePartition(3, {0}), Vector::Zero(1), dec), InputError);
}

TEST_CASE("decoupled: uncongested input equals coupled propagation") {
  std::mt19937_64 rng(8);
  auto [g, part] = reachable_instance(rng, 12);
  const Eigen::Index n_obs = static_cast<Eigen::Index>(part.observed().size());
  PropagationConfig cfg;
  cfg.max_iters = 5000;
  cfg.tolerance = 1e-12;
  const Vector xo = Vector::Constant(n_obs, 61.0);
  const Vector coupled = propagate(g, part, xo, cfg).values;
  cfg.mode = PropagationMode::decoupled;
  cfg.reference_speed = Vector::Constant(12, 61.0);
  const Vector dec = propagate_decoupled(g, part, xo, cfg);
  for (std::size_t i = 0; i < 12; ++i) {
    // Nodes with no upstream path keep the zero-deficit / observed-mean
    // free-flow start, which is also 61 here.
    CHECK(dec[static_cast<Eigen::Index>(i)] == doctest::Approx(coupled[static_cast<Eigen::Index>(i)]));
  }
}

TEST_CASE("decoupled: directional support on a 4-node chain, traced by hand") {
  // 0 -> 1 -> 2 -> 3, traffic flows toward 3. Node 2 observed congested.
  const auto g = testing::chain(4);
  const NodePartition part(4, {2});
  const double x2 = 20.0, vref = 60.0;
  PropagationConfig cfg;
  cfg.mode = PropagationMode::decoupled;
  cfg.init = InitPolicy::zeros;
  cfg.reference_speed = Vector::Constant(4, vref);
  const Vector out = propagate_decoupled(g, part, (Vector(1) << x2).finished(), cfg);

  // Congestion operator D_o^{-1} A pulls from the downstream neighbour;
  // free-flow operator D_I^{-1} A^T from the upstream one.
  Matrix cog = Matrix::Zero(4, 4), free = Matrix::Zero(4, 4);
  for (int i = 0; i < 3; ++i) cog(i, i + 1) = 1.0;
  for (int i = 1; i < 4; ++i) free(i, i - 1) = 1.0;
  Vector c0 = Vector::Zero(4), f0 = Vector::Zero(4);
  c0[2] = vref - x2;
  f0[2] = vref;
  const Vector c = dense_sweeps(cog, part, c0, 10);
  const Vector f = dense_sweeps(free, part, f0, 10);
  CHECK(c[0] == 40.0);  // deficit reaches upstream nodes
  CHECK(c[1] == 40.0);
  CHECK(c[3] == 0.0);   // never downstream
  CHECK(f[3] == 60.0);  // free flow reaches downstream only
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);

  Vector expected = (f - c).cwiseMax(0.0).cwiseMin(vref);
  expected[2] = x2;
  CHECK((out - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decoupled: a reference speed below every reading is free-flow-only propagation") {
  const auto g = testing::chain(5);
  const NodePartition part(5, {0, 2});
  const Vector xo = (Vector(2) << 50.0, 30.0).finished();
  PropagationConfig cfg;
  cfg.mode = PropagationMode::decoupled;
  cfg.init = InitPolicy::zeros;
  cfg.reference_speed = Vector::Constant(5, 1.0);
  const Vector out = propagate_decoupled(g, part, xo, cfg);

  Matrix free = Matrix::Zero(5, 5);
  for (int i = 1; i < 5; ++i) free(i, i - 1) = 1.0;
  Vector f0 = Vector::Zero(5);
  f0[0] = 50.0;
  f0[2] = 30.0;
  const Vector f = dense_sweeps(free, part, f0, 10);
  CHECK((out - f).cwiseAbs().maxCoeff() == 0.0);
  CHECK(out[1] == 50.0);
  CHECK(out[4] == 30.0);
}

TEST_CASE("reference speed from history: per-node quantile with fallback") {
  Matrix h(5, 3);
  h << 10, NAN, 1,
       20, NAN, 2,
       30, NAN, 3,
       40, NAN, 4,
       50, NAN, 5;
  const Vector v = reference_speed_from_history(h, 0.85);
  CHECK(v[0] == doctest::Approx(10 + 0.85 * 4 * 10));  // linear interpolation at rank 3.4
  CHECK(v[2] == doctest::Approx(1 + 0.85 * 4));
  // Network-wide: 10 values 1..5,10..50 sorted; rank 0.85 * 9 = 7.65.
  std::vector<double> all = {1, 2, 3, 4, 5, 10, 20, 30, 40, 50};
  CHECK(v[1] == doctest::Approx(all[7] + 0.65 * (all[8] - all[7])));
}
