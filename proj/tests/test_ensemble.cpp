#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "anchored/ensemble.hpp"
#include "anchored/gp_reference.hpp"

using namespace anchored;

namespace {

NetworkShape make_shape(Activation a, Index d, Index h) {
  NetworkShape s;
  s.activation = a;
  s.input_dim = d;
  s.hidden_width = h;
  return s;
}

// Few observations and large noise: the prior dominates, so anchors drawn
// from the prior are close to the exact anchor distribution.
RegressionDataset prior_dominated_data() {
  RegressionDataset d;
  d.x = (MatrixXd(5, 1) << -1.2, -0.4, 0.3, 0.9, 1.6).finished();
  d.y = (VectorXd(5) << -60, -10, 25, 70, 110).finished();
  d.sigma_eps_sq = 200.0;
  return d;
}

}  // namespace

TEST_CASE("materialize_prior") {
  PriorSpec spec;
  SUBCASE("unit variances for a single relu unit") {
    const DiagonalGaussian p =
        materialize_prior(make_shape(Activation::relu, 1, 1), spec);
    CHECK(p.var == VectorXd::Ones(4));
    CHECK(p.mean == VectorXd::Zero(4));
  }
  SUBCASE("output-weight variance scales with 1/H") {
    spec.first_layer_var = 2;
    spec.bias_var = 3;
    spec.output_layer_var_base = 4;
    const NetworkShape s1 = make_shape(Activation::erf, 2, 5);
    const NetworkShape s2 = make_shape(Activation::erf, 2, 10);
    const DiagonalGaussian a = materialize_prior(s1, spec);
    const DiagonalGaussian b = materialize_prior(s2, spec);
    CHECK(a.var.segment(s1.output_weights_offset(), 5) == VectorXd::Constant(5, 0.8));
    CHECK(b.var.segment(s2.output_weights_offset(), 10) == VectorXd::Constant(10, 0.4));
    CHECK(a.var.head(10) == VectorXd::Constant(10, 2.0));
    CHECK(a.var.segment(10, 5) == VectorXd::Constant(5, 3.0));
    CHECK(a.var(s1.output_bias_offset()) == 3.0);
  }
  SUBCASE("rbf centres use the centre variance") {
    spec.center_var = 0.25;
    const NetworkShape s = make_shape(Activation::rbf, 2, 3);
    const DiagonalGaussian p = materialize_prior(s, spec);
    CHECK(p.var.head(6) == VectorXd::Constant(6, 0.25));
    CHECK(p.var.size() == s.param_count());
  }
  SUBCASE("invalid spec") {
    spec.bias_var = 0;
    CHECK_THROWS(materialize_prior(make_shape(Activation::relu, 1, 1), spec));
  }
}

TEST_CASE("prior draws through the network have the kernel's variance") {
  const NetworkShape s = make_shape(Activation::relu, 1, 2000);
  const PriorSpec spec;
  const DiagonalGaussian prior = materialize_prior(s, spec);
  const VectorXd x = VectorXd::Constant(1, 0.7);
  const Index chunk = 1000, chunks = 50;
  double sum = 0, sumsq = 0;
  for (Index c = 0; c < chunks; ++c) {
    const MatrixXd draws = sample_gaussian(prior, 1000 + c, chunk);
    for (Index r = 0; r < chunk; ++r) {
      const double f = forward(NetworkParams(s, draws.row(r).transpose()), x);
      sum += f;
      sumsq += f * f;
    }
  }
  const double n = double(chunk * chunks);
  const double var = (sumsq - sum * sum / n) / (n - 1);
  const double k = kernel_eval(kernel_for(s, spec), x, x);
  CHECK(std::abs(var - k) / k < 0.03);
}

TEST_CASE("build_ensemble") {
  const NetworkShape s = make_shape(Activation::erf, 2, 4);
  PriorSpec spec;
  spec.output_layer_var_base = 2.0;
  const Ensemble a = build_ensemble(5, s, spec, 0.1, 77);
  const Ensemble b = build_ensemble(5, s, spec, 0.1, 77);
  const Ensemble c = build_ensemble(5, s, spec, 0.1, 78);
  REQUIRE(a.members.size() == 5);
  const DiagonalGaussian prior = materialize_prior(s, spec);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.members[i].anchor == b.members[i].anchor);
    CHECK(a.members[i].seed == 77 + i);
    CHECK(a.members[i].params.theta == a.members[i].anchor);
    CHECK((a.members[i].gamma - 0.1 * prior.var.cwiseInverse()).norm() < 1e-15);
  }
  CHECK(a.members[0].anchor != a.members[1].anchor);
  CHECK(a.members[1].anchor == c.members[0].anchor);
  CHECK_THROWS(build_ensemble(0, s, spec, 0.1, 1));
  CHECK_THROWS(build_ensemble(2, s, spec, 0.0, 1));
}

TEST_CASE("train_ensemble") {
  const NetworkShape s = make_shape(Activation::relu, 1, 10);
  RegressionDataset data;
  data.x = VectorXd::LinSpaced(8, -1, 1);
  data.y = data.x.col(0).array().sin();
  data.sigma_eps_sq = 0.01;
  TrainConfig cfg;
  cfg.epochs = 200;

  SUBCASE("deterministic and independent of the thread count") {
    Ensemble a = build_ensemble(6, s, PriorSpec{}, 0.01, 3);
    Ensemble b = a;
    train_ensemble(a, data, cfg, 1);
    train_ensemble(b, data, cfg, 4);
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(a.members[i].params.theta == b.members[i].params.theta);
  }
  SUBCASE("a diverging member is named") {
    Ensemble e = build_ensemble(3, s, PriorSpec{}, 0.01, 3);
    e.members[2].params.theta.setConstant(1e6);
    cfg.optimizer = Optimizer::gradient_descent;
    try {
      train_ensemble(e, data, cfg, 2);
      FAIL("expected an error");
    } catch (const std::exception& ex) {
      CHECK(std::string(ex.what()).find("member 2") != std::string::npos);
    }
  }
}

TEST_CASE("linear shape: trained members sample the conjugate posterior") {
  const NetworkShape s = make_shape(Activation::linear, 1, 1);
  const PriorSpec spec;
  const RegressionDataset data = prior_dominated_data();
  Ensemble e = build_ensemble(10000, s, spec, data.sigma_eps_sq, 500);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::gradient_descent;
  cfg.learning_rate = 0.01;
  cfg.epochs = 300;
  train_ensemble(e, data, cfg);

  LinearDesign design;
  design.features.resize(5, 2);
  design.features << data.x, VectorXd::Ones(5);
  design.targets = data.y;
  design.noise_var = data.sigma_eps_sq;
  const GaussianDist post =
      blr_fit(design, materialize_prior(s, spec).to_dense());

  MatrixXd th(10000, 2);
  for (Index i = 0; i < 10000; ++i) {
    const auto& m = e.members[std::size_t(i)];
    th.row(i) = m.params.theta.transpose();
    if (i < 20)
      CHECK((m.params.theta - blr_anchored_map(design, m.gamma, m.anchor))
                .cwiseAbs()
                .maxCoeff() < 1e-4);
  }
  const VectorXd mean = th.colwise().mean().transpose();
  const MatrixXd c = th.rowwise() - mean.transpose();
  const MatrixXd cov = c.transpose() * c / 9999.0;
  CHECK((mean - post.mean).norm() / post.mean.norm() < 0.02);
  CHECK((cov - post.cov).norm() / post.cov.norm() < 0.05);
}

TEST_CASE("predict") {
  const NetworkShape s = make_shape(Activation::linear, 1, 1);
  Ensemble e = build_ensemble(2, s, PriorSpec{}, 0.3, 1);
  e.members[0].params.theta << 0.0, 1.0;
  e.members[1].params.theta << 0.0, 3.0;
  const MatrixXd xq = (MatrixXd(2, 1) << -5, 5).finished();

  SUBCASE("two members, hand arithmetic") {
    for (const auto& d : predict(e, xq)) {
      CHECK(d.mean == 2.0);
      CHECK(d.epistemic_var == 2.0);
      CHECK(d.aleatoric_var == 0.3);
      CHECK(d.total_var() == doctest::Approx(2.3));
    }
  }
  SUBCASE("identical members have no epistemic variance") {
    e.members[1].params = e.members[0].params;
    for (const auto& d : predict(e, xq)) {
      CHECK(d.epistemic_var == 0.0);
      CHECK(d.total_var() == 0.3);
    }
  }
  SUBCASE("a single member has no epistemic variance") {
    e.members.pop_back();
    for (const auto& d : predict(e, xq)) CHECK(d.epistemic_var == 0.0);
  }
  SUBCASE("member order does not matter") {
    Ensemble big = build_ensemble(7, make_shape(Activation::erf, 1, 5),
                                  PriorSpec{}, 0.1, 9);
    Ensemble rev = big;
    std::reverse(rev.members.begin(), rev.members.end());
    const auto a = predict(big, xq);
    const auto b = predict(rev, xq);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].mean == doctest::Approx(b[i].mean).epsilon(1e-14));
      CHECK(a[i].epistemic_var ==
            doctest::Approx(b[i].epistemic_var).epsilon(1e-12));
      CHECK(a[i].epistemic_var >= 0.0);
    }
  }
}

TEST_CASE("untrained wide ensemble reproduces the prior predictive variance") {
  for (Activation a : {Activation::relu, Activation::erf, Activation::rbf}) {
    const NetworkShape s = make_shape(a, 1, 500);
    const PriorSpec spec;
    const Ensemble e = build_ensemble(2000, s, spec, 0.1, 42);
    const MatrixXd xq = (MatrixXd(3, 1) << -1.5, 0.2, 2.0).finished();
    const auto pred = predict(e, xq);
    const KernelSpec k = kernel_for(s, spec);
    for (Index i = 0; i < 3; ++i) {
      const VectorXd x = xq.row(i).transpose();
      const double kxx = kernel_eval(k, x, x);
      INFO(to_string(a), " x=", x(0));
      CHECK(std::abs(pred[std::size_t(i)].epistemic_var - kxx) / kxx < 0.1);
    }
  }
}

TEST_CASE("ensembles persist and reload bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "anchored_ens_test";
  std::filesystem::remove_all(dir);
  NetworkShape s = make_shape(Activation::rbf, 2, 6);
  s.rbf_width = 0.5;
  PriorSpec spec;
  spec.center_var = 2.0;
  Ensemble e = build_ensemble(3, s, spec, 0.05, 11);
  RegressionDataset data;
  data.x = MatrixXd::Random(10, 2);
  data.y = VectorXd::Random(10);
  TrainConfig cfg;
  cfg.epochs = 50;
  train_ensemble(e, data, cfg);
  save_ensemble(dir.string(), e);
  const Ensemble back = load_ensemble(dir.string());
  CHECK(back.shape == e.shape);
  CHECK(back.prior == e.prior);
  CHECK(back.sigma_eps_sq == e.sigma_eps_sq);
  REQUIRE(back.members.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.members[i].params.theta == e.members[i].params.theta);
    CHECK(back.members[i].anchor == e.members[i].anchor);
    CHECK(back.members[i].gamma == e.members[i].gamma);
  }
  const auto p1 = predict(e, data.x);
  const auto p2 = predict(back, data.x);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].mean == p2[i].mean);
    CHECK(p1[i].epistemic_var == p2[i].epistemic_var);
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS(load_ensemble(dir.string()));
}
