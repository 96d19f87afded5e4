#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "anchored/bench.hpp"

using namespace anchored;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path.string();
}

RegressionDataset small_data() {
  RegressionDataset d;
  d.name = "small";
  d.x = (MatrixXd(4, 3) << 1, 5, 2, 2, 5, 4, 3, 5, 6, 4, 5, 9).finished();
  d.y = (VectorXd(4) << 10, 20, 25, 45).finished();
  return d;
}

}  // namespace

TEST_CASE("load_csv") {
  SUBCASE("header, named target") {
    const auto path = write_temp("anchored_a.csv", "a,b,y\n1,2,3\n4,5,6\n7,8.5,-9\n");
    const RegressionDataset d = load_csv(path, "y");
    CHECK(d.size() == 3);
    CHECK(d.x == (MatrixXd(3, 2) << 1, 2, 4, 5, 7, 8.5).finished());
    CHECK(d.y == (VectorXd(3) << 3, 6, -9).finished());
  }
  SUBCASE("no header, index and negative index") {
    const auto path = write_temp("anchored_b.csv", "1,2,3\n4,5,6\n");
    CHECK(load_csv(path, "0").y == (VectorXd(2) << 1, 4).finished());
    const RegressionDataset d = load_csv(path, "-1");
    CHECK(d.y == (VectorXd(2) << 3, 6).finished());
    CHECK(d.x == (MatrixXd(2, 2) << 1, 2, 4, 5).finished());
  }
  SUBCASE("whitespace separated") {
    const auto path = write_temp("anchored_c.txt", "1 2  3\n4\t5 6\n");
    CHECK(load_csv(path, "-1").x == (MatrixXd(2, 2) << 1, 2, 4, 5).finished());
  }
  SUBCASE("a NaN cell is reported with its position") {
    const auto path = write_temp("anchored_d.csv", "a,b\n1,2\n3,nan\n");
    try {
      load_csv(path, "b");
      FAIL("expected an error");
    } catch (const std::exception& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 3") != std::string::npos);
      CHECK(msg.find("column 2") != std::string::npos);
    }
  }
  SUBCASE("non-numeric and ragged rows") {
    CHECK_THROWS(load_csv(write_temp("anchored_e.csv", "a,b\n1,x\n"), "b"));
    CHECK_THROWS(load_csv(write_temp("anchored_f.csv", "1,2\n3\n"), "0"));
  }
  SUBCASE("missing target or file") {
    const auto path = write_temp("anchored_g.csv", "a,b\n1,2\n3,4\n");
    CHECK_THROWS(load_csv(path, "c"));
    CHECK_THROWS(load_csv(path, "5"));
    CHECK_THROWS(load_csv("/nonexistent/file.csv", "0"));
  }
}

TEST_CASE("normalisation") {
  const RegressionDataset raw = small_data();
  const RegressionDataset n = normalize(raw);
  REQUIRE(n.norm.has_value());

  SUBCASE("moments and the constant column") {
    for (Index j : {0, 2}) {
      CHECK(std::abs(n.x.col(j).mean()) < 1e-12);
      CHECK(std::sqrt(n.x.col(j).array().square().mean()) ==
            doctest::Approx(1.0));
    }
    CHECK(n.x.col(1) == VectorXd::Zero(4));
    CHECK(n.norm->feature_std(1) == 0.0);
  }
  SUBCASE("standardised input is unchanged") {
    RegressionDataset again = n;
    again.norm.reset();
    const RegressionDataset twice = normalize(again);
    CHECK((twice.x - n.x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((twice.y - n.y).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("targets round-trip") {
    for (Index i = 0; i < 4; ++i)
      CHECK(std::abs(denormalize_target(n.y(i), *n.norm) - raw.y(i)) < 1e-10);
    const PredictiveDist d = denormalize({0.5, 0.1, 0.2}, *n.norm);
    const double s = n.norm->target_std;
    CHECK(d.mean == doctest::Approx(n.norm->target_mean + 0.5 * s));
    CHECK(d.epistemic_var == doctest::Approx(0.1 * s * s));
    CHECK(d.aleatoric_var == doctest::Approx(0.2 * s * s));
  }
  SUBCASE("normalising twice is an error") {
    CHECK_THROWS(normalize(n));
  }
}

TEST_CASE("split") {
  RegressionDataset d;
  d.x = VectorXd::LinSpaced(10, 0, 9);
  d.y = VectorXd::LinSpaced(10, 0, 9);
  const auto [train, test] = split(d, 0.9, 5);
  CHECK(train.size() == 9);
  CHECK(test.size() == 1);
  const auto [train2, test2] = split(d, 0.9, 5);
  CHECK(train2.y == train.y);
  std::set<double> all;
  for (Index i = 0; i < train.size(); ++i) all.insert(train.y(i));
  for (Index i = 0; i < test.size(); ++i) all.insert(test.y(i));
  CHECK(all.size() == 10);

  const auto idx = split_indices(100, 0.7, 9);
  CHECK(idx.size() == 70);
  CHECK(std::set<Index>(idx.begin(), idx.end()).size() == 70);
  CHECK(split_indices(100, 0.7, 10) != idx);
  CHECK_THROWS(split(d, 1.0, 1));
  CHECK_THROWS(split(d, 0.0, 1));
}

TEST_CASE("metrics") {
  const VectorXd y = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
  SUBCASE("rmse") {
    CHECK(rmse(y, y) == 0.0);
    const VectorXd p = (VectorXd(3) << 2.0, -2.0, -0.5).finished();
    CHECK(rmse(p, y) == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK_THROWS(rmse(p.head(2), y));
  }
  SUBCASE("nll closed forms") {
    const double v = 1.0 / (2.0 * std::numbers::pi);
    CHECK(gaussian_nll({{1.0, v, 0.0}}, VectorXd::Constant(1, 1.0)) ==
          doctest::Approx(0.0).epsilon(1e-15));
    // Hand values: 0.5 log(2 pi v) + r^2 / (2 v) for
    // (r, v) = (0, 1), (1, 2), (-0.5, 0.25).
    const std::vector<PredictiveDist> d = {{1.0, 0.5, 0.5}, {-3.0, 1.5, 0.5},
                                           {1.0, 0.05, 0.2}};
    const double expected =
        (0.5 * std::log(2 * std::numbers::pi) +
         (0.5 * std::log(4 * std::numbers::pi) + 0.25) +
         (0.5 * std::log(0.5 * std::numbers::pi) + 0.5)) /
        3.0;
    CHECK(gaussian_nll(d, y) == doctest::Approx(expected));
    CHECK_THROWS(gaussian_nll({{0.0, 0.0, 0.0}}, VectorXd::Zero(1)));
  }
  SUBCASE("order invariance") {
    std::vector<PredictiveDist> d = {{0.1, 0.2, 0.1}, {-1.0, 0.3, 0.1},
                                     {0.7, 0.1, 0.1}};
    const double a = gaussian_nll(d, y);
    std::swap(d[0], d[2]);
    const VectorXd ys = (VectorXd(3) << 0.5, -2.0, 1.0).finished();
    CHECK(gaussian_nll(d, ys) == doctest::Approx(a));
  }
  SUBCASE("constant variance minimising the nll is the mean squared error") {
    const VectorXd mean = (VectorXd(3) << 0.0, -1.0, 1.5).finished();
    const double mse = (mean - y).squaredNorm() / 3.0;
    auto nll_at = [&](double v) {
      std::vector<PredictiveDist> d;
      for (Index i = 0; i < 3; ++i) d.push_back({mean(i), v, 0.0});
      return gaussian_nll(d, y);
    };
    CHECK(nll_at(mse) < nll_at(mse * 1.01));
    CHECK(nll_at(mse) < nll_at(mse * 0.99));
  }
  SUBCASE("mean and standard error") {
    const MeanStderr m = mean_stderr({1.0, 2.0, 3.0, 4.0});
    CHECK(m.mean == 2.5);
    CHECK(m.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(mean_stderr({7.0}).stderr_ == 0.0);
  }
}

TEST_CASE("prior dominance diagnostic") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  MatrixXd phi(40, 11);
  for (Index i = 0; i < phi.size(); ++i) phi.data()[i] = g(rng);
  phi.col(10).setOnes();
  const VectorXd v = VectorXd::Constant(11, 0.1);
  const double base = prior_dominance_ratio(phi, v, 0.5);
  CHECK(prior_dominance_ratio(phi, v, 0.05) == doctest::Approx(10 * base));
  CHECK(prior_dominance_ratio(phi, 2 * v, 0.5) == doctest::Approx(4 * base));

  // Direct evaluation of trace(S_prior^2 S_like^-1) / H.
  const MatrixXd like_prec = phi.transpose() * phi / 0.5;
  const MatrixXd sp = MatrixXd(v.asDiagonal());
  CHECK(base == doctest::Approx((sp * sp * like_prec).trace() / 10.0));
  CHECK_THROWS(prior_dominance_ratio(MatrixXd::Zero(5, 3), VectorXd::Ones(3), 1));
}

TEST_CASE("theorem1 trend on a synthetic set") {
  const RegressionDataset d = make_linear_dataset(200, 2, 0.1, 4);
  for (Activation a : {Activation::relu, Activation::erf}) {
    int decreasing = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto pts = theorem1_check(d, {10, 100, 1000}, PriorSpec{}, a, seed);
      REQUIRE(pts.size() == 3);
      CHECK(pts[0].hidden_width == 10);
      decreasing += strictly_decreasing(pts) ? 1 : 0;
    }
    CHECK(decreasing >= 2);
  }
  CHECK_THROWS(theorem1_check(d, {100, 10}, PriorSpec{}, Activation::relu, 0));
}

TEST_CASE("benchmark on a synthetic linear set approaches the noise entropy") {
  RegressionDataset d = make_linear_dataset(300, 4, 0.01, 99);
  const double var_y = (d.y.array() - d.y.mean()).square().mean();
  d.sigma_eps_sq = 0.01 / var_y;
  BenchConfig cfg;
  cfg.activation = Activation::linear;
  cfg.hidden_width = 4;
  cfg.members = 5;
  cfg.train.epochs = 2000;
  const MetricReport r = run_benchmark(d, cfg);
  REQUIRE(r.splits.size() == 5);
  const double floor = 0.5 * std::log(2 * std::numbers::pi * std::numbers::e * 0.01);
  CHECK(std::abs(r.nll.mean - floor) < 0.1 * std::abs(floor));
  CHECK(r.rmse.mean == doctest::Approx(0.1).epsilon(0.15));
  for (const auto& s : r.splits) CHECK(s.rmse >= 0.0);

  const MetricReport again = run_benchmark(d, cfg);
  CHECK(again.rmse.mean == r.rmse.mean);
}
