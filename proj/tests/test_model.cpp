#include "doctest.h"
#include "dirinet/error.hpp"
#include "dirinet/model.hpp"
#include "support.hpp"

using namespace dirinet;

namespace {

ModelConfig small_config(int l = 4, int h = 8, int d = 3) {
  ModelConfig c;
  c.window_len = l;
  c.hidden = h;
  c.latent = d;
  c.time_dim = 3;
  c.mask_dim = 2;
  c.latent_iters_train = 6;
  c.latent_iters_infer = 10;
  return c;
}

SignalWindow random_window(std::size_t n, int l, const std::vector<std::size_t>& observed,
                           std::mt19937_64& rng, double missing = 0.1) {
  SignalWindow w;
  w.values = Matrix(static_cast<Eigen::Index>(n), l);
  w.mask = MaskMatrix::Ones(static_cast<Eigen::Index>(n), l);
  for (Eigen::Index r = 0; r < w.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < l; ++c) {
      w.values(r, c) = testing::uniform(rng, 20.0, 70.0);
      if (testing::uniform(rng, 0.0, 1.0) < missing) w.mask(r, c) = 0;
    }
  }
  w.slot_of_day = 100;
  w.partition = NodePartition(n, observed);
  return w;
}

double loss_of(const ModelParams& p, const SignalWindow& w, const Matrix& targets,
               const MaskMatrix& eval, const GraphOperators& full, const GraphOperators& obs) {
  return loss_and_gradients(p, w, targets, eval, full, obs, latent_config(p.config, true)).loss;
}

}  // namespace

TEST_CASE("augment: shape, shared timestamp row, mask embedding") {
  std::mt19937_64 rng(1);
  const auto p = ModelParams::initialize(small_config(), {50.0, 10.0}, 3);
  SignalWindow w = random_window(5, 4, {0, 2, 3}, rng, 0.0);
  w.values.row(2) = w.values.row(0);
  w.mask(3, 1) = 0;
  const Matrix f = augment_features(w, p);
  REQUIRE(f.rows() == 3);
  REQUIRE(f.cols() == p.config.input_width());
  CHECK(f(0, 0) == doctest::Approx((w.values(0, 0) - 50.0) / 10.0));
  CHECK(f.row(0) == f.row(1));
  CHECK(f(2, 1) == 0.0);
  for (int r = 1; r < 3; ++r) CHECK(f.row(r).segment(4, 3) == f.row(0).segment(4, 3));
  CHECK(f.row(0).segment(4, 3) == p.timestamp_table.row(100));
  CHECK(f.row(2).tail(2) != f.row(0).tail(2));
}

TEST_CASE("augment rejects malformed windows") {
  std::mt19937_64 rng(2);
  const auto p = ModelParams::initialize(small_config(), {}, 3);
  SignalWindow w = random_window(3, 5, {0, 1}, rng);
  CHECK_THROWS_AS(augment_features(w, p), InputError);
  w = random_window(3, 4, {0, 1}, rng);
  w.slot_of_day = kSlotsPerDay;
  CHECK_THROWS_AS(augment_features(w, p), InputError);
  w.slot_of_day = 0;
  w.values(0, 0) = std::nan("");
  w.mask(0, 0) = 1;
  CHECK_THROWS_AS(augment_features(w, p), InputError);
}

TEST_CASE("encode on a single node is the plain per-node map") {
  const auto p = ModelParams::initialize(small_config(), {}, 5);
  const auto single = GraphOperators::prepare(WeightedDigraph::from_edges({"a"}, {}), p.config);
  const Matrix x = Matrix::Random(1, p.config.input_width());
  const Matrix expected =
      ((x * p.enc_in_w + p.enc_in_b).cwiseMax(0.0)) * p.enc_out_w + p.enc_out_b;
  CHECK((encode(p, x, single) - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("encode is permutation equivariant and maps zero to zero") {
  std::mt19937_64 rng(6);
  const auto p = ModelParams::initialize(small_config(), {}, 7);
  const auto g = testing::random_digraph(6, 0.4, rng);
  const auto ops = GraphOperators::prepare(g, p.config);
  const Matrix x = Matrix::Random(6, p.config.input_width());
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  const auto permuted = GraphOperators::prepare(g.induced_subgraph(perm), p.config);
  Matrix px(6, x.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    px.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(perm[k]));
  }
  const Matrix y = encode(p, x, ops);
  const Matrix py = encode(p, px, permuted);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    CHECK((py.row(static_cast<Eigen::Index>(k)) - y.row(static_cast<Eigen::Index>(perm[k])))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
  CHECK(encode(p, Matrix::Zero(6, x.cols()), ops).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("extend_latent: constant boundary, D = 1 and the closed form") {
  std::mt19937_64 rng(8);
  const ModelConfig cfg = small_config();
  const auto g = testing::random_symmetric(12, 0.35, rng);
  const auto ops = GraphOperators::prepare(g, cfg);
  const NodePartition part(12, testing::random_observed(12, 0.4, rng));
  const auto no = static_cast<Eigen::Index>(part.observed().size());

  PropagationConfig many = latent_config(cfg, false);
  many.max_iters = 5000;
  const bool connected = unreachable_unobserved(g, part).empty();

  const Matrix c = Matrix::Constant(no, 2, 3.5);
  const Matrix zc = extend_latent(c, ops, part, many);
  if (connected) CHECK((zc.array() - 3.5).abs().maxCoeff() < 1e-8);

  const Matrix z1 = Matrix::Random(no, 1);
  PropagationConfig pc = latent_config(cfg, true);
  const Vector scalar = propagate(g, part, z1.col(0), pc).values;
  CHECK((extend_latent(z1, ops, part, pc).col(0) - scalar).cwiseAbs().maxCoeff() == 0.0);

  if (connected) {
    const Matrix z3 = Matrix::Random(no, 3);
    const Matrix ext = extend_latent(z3, ops, part, many);
    for (int j = 0; j < 3; ++j) {
      const Vector exact = propagate_closed_form(g, part, z3.col(j));
      CHECK((ext.col(j) - exact).cwiseAbs().maxCoeff() < 1e-8);
    }
  }

  PropagationConfig bad = pc;
  bad.init = InitPolicy::observed_mean;
  CHECK_THROWS_AS(extend_latent(z1, ops, part, bad), InputError);
}

TEST_CASE("decode of a zero latent with zero biases is the dataset mean") {
  const auto p = ModelParams::initialize(small_config(), {42.0, 7.0}, 9);
  const auto ops = GraphOperators::prepare(testing::chain(4), p.config);
  const Matrix y = denormalize(p.norm, decode(p, Matrix::Zero(4, p.config.latent), ops));
  CHECK((y.array() - 42.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("forward is deterministic and covers every node") {
  std::mt19937_64 rng(10);
  const auto p = ModelParams::initialize(small_config(), {50.0, 10.0}, 11);
  const auto ops = GraphOperators::prepare(testing::random_digraph(9, 0.3, rng), p.config);
  const SignalWindow w = random_window(9, 4, {0, 3, 4, 7}, rng);
  const Matrix a = estimate_window(p, w, ops);
  const Matrix b = estimate_window(p, w, ops);
  CHECK(a.rows() == 9);
  CHECK(a.cols() == 4);
  CHECK(a == b);
  CHECK(a.allFinite());
}

TEST_CASE("finite-difference gradient check") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const ModelConfig cfg = small_config(4, 8, 3);
    ModelParams p = ModelParams::initialize(cfg, {50.0, 10.0}, seed);
    for (Matrix* m : p.arrays()) {
      *m += 0.1 * Matrix::NullaryExpr(m->rows(), m->cols(),
                                     [&] { return testing::uniform(rng, -1.0, 1.0); });
    }
    const auto g = testing::random_digraph(10, 0.3, rng);
    const auto full = GraphOperators::prepare(g, cfg);
    const std::vector<std::size_t> obs{0, 1, 3, 4, 6, 8};
    const auto observed = GraphOperators::prepare(g.induced_subgraph(obs), cfg);
    const SignalWindow w = random_window(10, 4, obs, rng);
    const Matrix targets = Matrix::NullaryExpr(10, 4, [&] { return testing::uniform(rng, 20.0, 70.0); });
    const MaskMatrix eval = MaskMatrix::Ones(10, 4);

    const auto lg = loss_and_gradients(p, w, targets, eval, full, observed, latent_config(cfg, true));
    const auto params = p.arrays();
    const auto grads = lg.gradients.arrays();
    const auto layout = ModelParams::layout(cfg);
    const double eps = 1e-4;
    for (std::size_t a = 0; a < ModelParams::kArrayCount; ++a) {
      Matrix& m = *params[a];
      for (int probe = 0; probe < 6; ++probe) {
        Eigen::Index r = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.rows()));
        Eigen::Index c = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.cols()));
        if (a == 12) r = w.slot_of_day;  // only this timestamp row is used
        const double saved = m(r, c);
        m(r, c) = saved + eps;
        const double up = loss_of(p, w, targets, eval, full, observed);
        m(r, c) = saved - eps;
        const double down = loss_of(p, w, targets, eval, full, observed);
        m(r, c) = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double an = (*grads[a])(r, c);
        INFO(layout[a].name, " (", r, ", ", c, ") fd=", fd, " analytic=", an);
        CHECK(std::abs(fd - an) <= 1e-3 * std::max({1.0, std::abs(fd), std::abs(an)}));
      }
    }
  }
}

TEST_CASE("doubling the residuals quadruples the loss") {
  std::mt19937_64 rng(12);
  const ModelConfig cfg = small_config();
  const auto p = ModelParams::initialize(cfg, {50.0, 10.0}, 13);
  const auto g = testing::random_digraph(8, 0.35, rng);
  const auto full = GraphOperators::prepare(g, cfg);
  const std::vector<std::size_t> obs{1, 2, 5, 6};
  const auto observed = GraphOperators::prepare(g.induced_subgraph(obs), cfg);
  const SignalWindow w = random_window(8, 4, obs, rng);
  const Matrix targets = Matrix::NullaryExpr(8, 4, [&] { return testing::uniform(rng, 20.0, 70.0); });
  MaskMatrix eval = MaskMatrix::Zero(8, 4);
  eval.row(0).setOnes();
  eval.row(3).setOnes();
  const Matrix y = forward(p, w, full, observed, latent_config(cfg, true));
  const Matrix doubled = y + 2.0 * (targets - y);
  const double l1 = loss_of(p, w, targets, eval, full, observed);
  const double l2 = loss_of(p, w, doubled, eval, full, observed);
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-10));
  CHECK_THROWS_AS(loss_of(p, w, targets, MaskMatrix::Zero(8, 4), full, observed), InputError);
}

TEST_CASE("parameters carry over to a graph of a different size") {
  std::mt19937_64 rng(14);
  const ModelConfig cfg = small_config();
  const auto p = ModelParams::initialize(cfg, {50.0, 10.0}, 15);
  const auto big = GraphOperators::prepare(testing::random_digraph(25, 0.15, rng), cfg);
  const SignalWindow w = random_window(25, 4, testing::random_observed(25, 0.5, rng), rng);
  const Matrix y = estimate_window(p, w, big);
  CHECK(y.rows() == 25);
  CHECK(y.allFinite());
}

TEST_CASE("model config and shapes") {
  ModelConfig bad = small_config();
  bad.alpha = 1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  const auto p = ModelParams::initialize(small_config(), {}, 1);
  std::size_t total = 0;
  const auto arrays = p.arrays();
  const auto layout = ModelParams::layout(p.config);
  for (std::size_t i = 0; i < ModelParams::kArrayCount; ++i) {
    CHECK(arrays[i]->rows() == layout[i].rows);
    CHECK(arrays[i]->cols() == layout[i].cols);
    total += static_cast<std::size_t>(arrays[i]->size());
  }
  CHECK(total == p.parameter_count());
  CHECK_THROWS_AS(ModelParams::initialize(small_config(), {0.0, 0.0}, 1), InputError);
}
