#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "dysfluency/losses.hpp"

using namespace dysfluency;

namespace {

// Long-double reference written straight from the definition.
long double focal_reference(long double p, int y, long double alpha, long double gamma) {
  const long double pt = y ? p : 1.0L - p;
  const long double at = y ? alpha : 1.0L - alpha;
  return -at * std::pow(1.0L - pt, gamma) * std::log(pt);
}

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("focal_term examples") {
  CHECK(focal_term(1.0, 1, 0.7, 3.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(focal_term(0.5, 1, 0.7, 3.0) == doctest::Approx(0.7 * 0.125 * std::log(2.0)).epsilon(1e-14));
  CHECK(focal_term(0.5, 1, 0.7, 3.0) == doctest::Approx(0.060650).epsilon(1e-5));
  for (double p : {0.01, 0.3, 0.77, 0.999}) {
    CHECK(focal_term(p, 1, 1.0, 0.0) == doctest::Approx(-std::log(p)).epsilon(1e-14));
  }
}

TEST_CASE("focal_term agrees with a long-double reference") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (int i = 0; i < 2000; ++i) {
    const double p = u(rng);
    const int y = static_cast<int>(rng() % 2);
    const double alpha = u(rng);
    const double gamma = static_cast<double>(rng() % 4);
    const auto ref = static_cast<double>(focal_reference(p, y, alpha, gamma));
    CHECK(focal_term(p, y, alpha, gamma) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("focal_term_derivative matches central differences and vanishes under the clamp") {
  for (double gamma : {0.0, 1.0, 2.0, 3.0}) {
    for (int y : {0, 1}) {
      for (double p : {0.05, 0.3, 0.5, 0.81, 0.97}) {
        const double h = 1e-6;
        const double numeric = (focal_term(p + h, y, 0.7, gamma) - focal_term(p - h, y, 0.7, gamma)) / (2 * h);
        CHECK(focal_term_derivative(p, y, 0.7, gamma) == doctest::Approx(numeric).epsilon(1e-6));
      }
      CHECK(focal_term_derivative(0.0, y, 0.7, gamma) == 0.0);
      CHECK(focal_term_derivative(1.0, y, 0.7, gamma) == 0.0);
    }
  }
}

TEST_CASE("clamped probabilities stay finite") {
  for (int y : {0, 1}) {
    CHECK(std::isfinite(focal_term(0.0, y, 0.7, 3.0)));
    CHECK(std::isfinite(focal_term(1.0, y, 0.7, 3.0)));
  }
  CHECK(focal_term(0.0, 0, 0.7, 3.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(focal_term(1.0, 1, 0.7, 3.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("focal_multi") {
  SUBCASE("two-class example") {
    const double v = focal_multi(row({0.9, 0.2}), LabelVector{1, 0}, 0.7, 2.0);
    const double c0 = 0.7 * 0.01 * -std::log(0.9);
    const double c1 = 0.3 * 0.04 * -std::log(0.8);
    CHECK(v == doctest::Approx((c0 + c1) / 2).epsilon(1e-14));
    CHECK(v == doctest::Approx(0.001708).epsilon(1e-3));
  }
  SUBCASE("perfect predictions at the clamp limits") {
    CHECK(focal_multi(row({1.0, 0.0, 1.0}), LabelVector{1, 0, 1}, 0.7, 3.0) < 1e-12);
  }
  SUBCASE("alpha 0.5 and gamma 0 is half the mean BCE") {
    const Matrix p = row({0.9, 0.2, 0.6, 0.35});
    const LabelVector y{1, 0, 0, 1};
    double bce = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      bce += y[static_cast<std::size_t>(c)] ? -std::log(p(0, c)) : -std::log(1 - p(0, c));
    }
    CHECK(focal_multi(p, y, 0.5, 0.0) == doctest::Approx(0.5 * bce / 4).epsilon(1e-14));
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(focal_multi(row({0.9, 0.2}), LabelVector{1, 0, 0}, 0.7, 3.0), ShapeError);
  }
}

TEST_CASE("weighted_ce") {
  CHECK(weighted_ce(row({0.5, 0.5}), 0, {1.0, 1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(weighted_ce(row({1.0, 0.0}), 0, {1.0, 1.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(weighted_ce(row({0.25, 0.75}), 1, {0.5, 2.0}) == doctest::Approx(-2.0 * std::log(0.75)).epsilon(1e-14));
  CHECK(std::isfinite(weighted_ce(row({1.0, 0.0}), 1, {1.0, 1.0})));
  CHECK_THROWS_AS(weighted_ce(row({0.7, 0.7}), 0, {1.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(weighted_ce(row({-0.1, 1.1}), 0, {1.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(weighted_ce(row({0.5, 0.5}), 2, {1.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(weighted_ce(row({0.2, 0.3, 0.5}), 0, {1.0, 1.0}), ShapeError);
}

TEST_CASE("mtl_loss") {
  CHECK(mtl_loss(1.0, 2.0, 0.9) == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(mtl_loss(0.37, 5.5, 1.0) == 0.37);
  CHECK(mtl_loss(0.37, 5.5, 0.0) == 5.5);
}

TEST_CASE("loss tape nodes agree with the scalar versions and central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix p(1, 7);
    LabelVector y(7);
    for (Eigen::Index c = 0; c < 7; ++c) {
      p(0, c) = u(rng);
      y.set(static_cast<std::size_t>(c), rng() % 2 == 1);
    }
    const double a = u(rng);
    Matrix aux(1, 2);
    aux(0, 0) = a;
    aux(0, 1) = 1 - a;
    const int target = static_cast<int>(rng() % 2);
    const std::array<double, 2> w{0.6, 1.4};
    const double w_main = 0.9;

    Tape<double> t;
    Var pv = t.parameter(p);
    Var av = t.parameter(aux);
    Var lm = focal_multi(t, pv, y, 0.7, 3.0);
    Var la = weighted_ce(t, av, target, w);
    Var total = mtl_loss(t, lm, la, w_main);
    const double expected = mtl_loss(focal_multi(p, y, 0.7, 3.0), weighted_ce(aux, target, w), w_main);
    CHECK(t.value(total)(0, 0) == doctest::Approx(expected).epsilon(1e-14));
    t.backward(total);

    const double h = 1e-7;
    for (Eigen::Index c = 0; c < 7; ++c) {
      Matrix up = p, down = p;
      up(0, c) += h;
      down(0, c) -= h;
      const double numeric = w_main * (focal_multi(up, y, 0.7, 3.0) - focal_multi(down, y, 0.7, 3.0)) / (2 * h);
      CHECK(t.grad(pv)(0, c) == doctest::Approx(numeric).epsilon(1e-6));
    }
    // The auxiliary gradient only touches the target probability.
    const double d_target = -(1 - w_main) * w[static_cast<std::size_t>(target)] / aux(0, target);
    CHECK(t.grad(av)(0, target) == doctest::Approx(d_target).epsilon(1e-12));
    CHECK(t.grad(av)(0, 1 - target) == 0.0);
  }
}

TEST_CASE("inverse_frequency_weights") {
  const std::vector<int> balanced{0, 1, 0, 1};
  auto w = inverse_frequency_weights(balanced);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(1.0));

  const std::vector<int> skewed{0, 0, 0, 1};
  w = inverse_frequency_weights(skewed);
  CHECK(w[1] / w[0] == doctest::Approx(3.0));
  CHECK((w[0] + w[1]) / 2 == doctest::Approx(1.0));

  const std::vector<int> one_class{1, 1, 1};
  w = inverse_frequency_weights(one_class);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 1.0);
}

TEST_CASE("LossConfig validation") {
  LossConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = LossConfig{};
  cfg.gamma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = LossConfig{};
  cfg.w_main = 1.2;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = LossConfig{};
  cfg.aux_class_weights = {-1.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
