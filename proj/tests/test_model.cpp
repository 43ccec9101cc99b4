#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "otdro/error.hpp"
#include "otdro/model.hpp"

using namespace otdro;
using otdro::testing::vec;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("otdro_" + name);
  std::ofstream(path) << content;
  return path.string();
}

}  // namespace

TEST_CASE("logistic loss values and constants") {
  const LossSpec loss = make_logistic_loss();
  CHECK(loss.value(0.0, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(loss.kappa == 0.0);
  CHECK(*loss.M == 0.25);
  CHECK(*loss.k1 == 1.0);
  CHECK(*loss.k2 == 1.0);
  CHECK(loss.dplus(0.0, 1.0) == doctest::Approx(-0.5));
  CHECK(loss.dminus(0.0, 1.0) == doctest::Approx(-0.5));
}

TEST_CASE("squared loss values and constants") {
  const LossSpec loss = make_squared_loss();
  CHECK(loss.value(1.0, 1.0) == 0.0);
  CHECK(loss.kappa == 1.0);
  CHECK(*loss.M == 2.0);
  for (double u : {-3.0, 0.0, 2.5}) CHECK(loss.d2(u, 0.7) == 2.0);

  Matrix x(1, 3);
  x << 0.0, 1.0, 2.0;
  const LossSpec bound = bind_loss(loss, SampleSet(x, vec({-3.0, 1.0, 2.0})));
  CHECK(*bound.k1 == 3.0);
}

TEST_CASE("hinge loss kink and growth") {
  const LossSpec loss = make_hinge_loss();
  CHECK(loss.value(2.0, 1.0) == 0.0);
  CHECK(loss.value(0.0, 1.0) == 1.0);
  CHECK(loss.dminus(1.0, 1.0) == -1.0);
  CHECK(loss.dplus(1.0, 1.0) == 0.0);
  CHECK(loss.dminus(-1.0, -1.0) == 0.0);
  CHECK(loss.dplus(-1.0, -1.0) == 1.0);
  CHECK(loss.kappa == 0.0);
  CHECK(loss.components.size() == 2);
  CHECK_FALSE(loss.smooth());
}

TEST_CASE("built-in losses are convex along random chords") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::uniform_real_distribution<double> w(0.0, 1.0);
  for (const LossSpec& loss : {make_logistic_loss(), make_squared_loss(), make_hinge_loss()}) {
    int violations = 0;
    for (int t = 0; t < 1000; ++t) {
      const double a = u(rng);
      const double b = u(rng);
      const double alpha = w(rng);
      const double y = loss.name == "squared" ? u(rng) : (w(rng) < 0.5 ? -1.0 : 1.0);
      const double lhs = loss.value(alpha * a + (1 - alpha) * b, y);
      const double rhs = alpha * loss.value(a, y) + (1 - alpha) * loss.value(b, y);
      if (lhs > rhs + 1e-12 * (1.0 + std::abs(rhs))) ++violations;
    }
    CHECK_MESSAGE(violations == 0, loss.name);
  }
}

TEST_CASE("smooth loss derivatives agree with central differences") {
  for (const LossSpec& loss : {make_logistic_loss(), make_squared_loss()}) {
    for (double y : {-1.0, 1.0}) {
      for (double u = -10.0; u <= 10.0; u += 0.25) {
        const double h = 1e-6;
        const double fd = (loss.value(u + h, y) - loss.value(u - h, y)) / (2 * h);
        const double d = loss.dplus(u, y);
        CHECK(std::abs(d - fd) <= 1e-6 * (1.0 + std::abs(d)));
        CHECK(loss.d2(u, y) <= *loss.M + 1e-15);
      }
    }
  }
}

TEST_CASE("growth rate kappa matches the quadratic tail") {
  for (const LossSpec& loss : {make_logistic_loss(), make_squared_loss(), make_hinge_loss()}) {
    for (double sign : {-1.0, 1.0}) {
      const double u = sign * 1e6;
      CHECK_MESSAGE(loss.value(u, 1.0) / (u * u) == doctest::Approx(loss.kappa).epsilon(1e-5), loss.name);
    }
  }
}

TEST_CASE("quadratic form for each cost kind") {
  CHECK(CostField::identity(2).quadratic_form(0, vec({3.0, 4.0})) == doctest::Approx(25.0));
  Matrix a(2, 2);
  a << 2.0, 0.0, 0.0, 2.0;
  CHECK(CostField::constant(a).quadratic_form(0, vec({1.0, 1.0})) == doctest::Approx(1.0));
  const CostField scaled = CostField::scaled_identity(2, vec({2.0, 1.0}));
  CHECK(scaled.quadratic_form(0, vec({1.0, 0.0})) == doctest::Approx(0.5));
  CHECK(scaled.rho_min() == 1.0);
  CHECK(scaled.rho_max() == 2.0);
}

TEST_CASE("quadratic form respects spectral bounds") {
  Matrix a(3, 3);
  a << 4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0;
  const CostField cost = CostField::constant(a);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 100; ++t) {
    const Vector beta = vec({n01(rng), n01(rng), n01(rng)});
    const double q = cost.quadratic_form(0, beta);
    CHECK(q >= beta.squaredNorm() / cost.rho_max() - 1e-12);
    CHECK(q <= beta.squaredNorm() / cost.rho_min() + 1e-12);
  }
}

TEST_CASE("implied volatility scaling") {
  const CostField cost = CostField::from_implied_volatility(2, vec({0.1, 0.3}));
  // V̄ = 0.2: scales 2 and 2/3.
  CHECK(cost.scales()(0) == doctest::Approx(2.0));
  CHECK(cost.scales()(1) == doctest::Approx(2.0 / 3.0));
  CHECK(cost.matrix(0)(0, 0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(CostField::from_implied_volatility(2, vec({0.1, -0.3})), ConfigError);
}

TEST_CASE("invalid cost matrices are rejected") {
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(CostField::constant(asym), ConfigError);
  Matrix indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(CostField::constant(indefinite), ConfigError);
}

TEST_CASE("callback cost checks the supplied bounds") {
  auto at = [](int i) { return Matrix::Identity(2, 2) * (1.0 + i); };
  const CostField cost = CostField::callback(2, 3, at, 1.0, 3.0);
  CHECK(cost.quadratic_form(2, vec({3.0, 0.0})) == doctest::Approx(3.0));
  CHECK(cost.max_quadratic_form(vec({1.0, 0.0}), 3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(CostField::callback(2, 3, at, 1.0, 2.0), ConfigError);
}

TEST_CASE("problem validation") {
  Matrix x(1, 1);
  x << 0.0;
  const SampleSet data(x, vec({1.0}));
  CHECK_THROWS_AS(DroProblem(data, CostField::identity(1), make_squared_loss(), -0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(DroProblem(data, CostField::identity(1), make_squared_loss(), 0.1, 0.0), ConfigError);
  CHECK_THROWS_AS(DroProblem(data, CostField::identity(2), make_squared_loss(), 0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(DroProblem(data, CostField::identity(1), make_squared_loss(), 0.1, 1.0, Nondegeneracy{1, 1, 1.5}),
                  ConfigError);
  CHECK_NOTHROW(DroProblem(data, CostField::identity(1), make_squared_loss(), 0.0, 1.0));
}

TEST_CASE("load_csv with label column") {
  const std::string path = write_temp("labeled.csv", "a,b,y\n1,2,1\n3,4,-1\n5,6,1\n");
  const SampleSet s = load_csv(path, CsvSchema{{}, "y"});
  CHECK(s.size() == 3);
  CHECK(s.dim() == 2);
  CHECK(s.has_labels());
  CHECK(s.point(1)(0) == 3.0);
  CHECK(s.label(1) == -1.0);
}

TEST_CASE("load_csv feature-only file has no labels") {
  const std::string path = write_temp("features.csv", "a,b\n1,2\n3,4\n");
  const SampleSet s = load_csv(path, CsvSchema{});
  CHECK(s.size() == 2);
  CHECK_FALSE(s.has_labels());
}

TEST_CASE("load_csv errors name the row and column") {
  const std::string missing = write_temp("missing.csv", "a,b,y\n1,2,1\n3,,1\n");
  try {
    load_csv(missing, CsvSchema{{}, "y"});
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == 1);
    CHECK(std::string(e.what()).find("column 'b'") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv(write_temp("ragged.csv", "a,b\n1,2\n3\n"), CsvSchema{}), ParseError);
  CHECK_THROWS_AS(load_csv(write_temp("text.csv", "a,b\n1,x\n"), CsvSchema{}), ParseError);
  CHECK_THROWS_AS(load_csv(write_temp("empty.csv", ""), CsvSchema{}), ParseError);
  CHECK_THROWS_AS(load_csv(write_temp("nolabel.csv", "a,b\n1,2\n"), CsvSchema{{}, "y"}), ConfigError);
}
