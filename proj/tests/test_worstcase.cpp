#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "otdro/experiments.hpp"
#include "otdro/oracle.hpp"
#include "otdro/worstcase.hpp"

using namespace otdro;
using otdro::testing::single_atom;
using otdro::testing::vec;

TEST_CASE("single atom worst case") {
  const DroProblem p = single_atom();
  const WorstCaseTransport w = worst_case(p, vec({1.0}));
  CHECK(w.regime == WorstCaseRegime::unique);
  CHECK(w.lambda_star == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(w.g(0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(w.x_star(0, 0) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(w.budget == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(w.worst_value == doctest::Approx(2.25).epsilon(1e-9));
  CHECK(w.dual_value == doctest::Approx(2.25).epsilon(1e-9));
  CHECK(w.loss_before(0) == doctest::Approx(1.0));
  CHECK(w.max_residual <= 1e-8);
}

TEST_CASE("zero beta and zero delta give constant loss") {
  const DroProblem p = single_atom();
  CHECK(worst_case(p, vec({0.0})).regime == WorstCaseRegime::constant_loss);
  CHECK(worst_case(p.with_delta(0.0), vec({1.0})).regime == WorstCaseRegime::constant_loss);
}

TEST_CASE("logistic worst case spends the budget exactly") {
  const SampleSet data = generate_classification(24, 2, 1.0, 1.0, 14);
  const DroProblem p(data, CostField::identity(2), make_logistic_loss(), 0.01, 2.0);
  const Vector beta = vec({0.8, 0.5});
  const WorstCaseTransport w = worst_case(p, beta);
  CHECK(w.regime == WorstCaseRegime::unique);
  CHECK(std::abs(w.budget - p.delta()) <= 1e-6 * p.delta());
  CHECK(std::abs(w.worst_value - w.dual_value) <= 1e-6);
  double cost = 0.0;
  for (int i = 0; i < p.n(); ++i) cost += p.cost().cost(i, p.data().point(i), w.x_star.col(i));
  CHECK(cost / p.n() == doctest::Approx(w.budget).epsilon(1e-10));
}

TEST_CASE("hinge worst case spends the budget") {
  // Under hinge loss each piece peaks at its own γ, so a sample can have
  // two maximizers and the worst case may need a Bernoulli mixture.
  Matrix x = Matrix::Zero(1, 2);
  x(0, 1) = 3.0;
  const DroProblem p(SampleSet(x, vec({1.0, 1.0})), CostField::identity(1), make_hinge_loss(), 0.25, 2.0);
  const WorstCaseTransport w = worst_case(p, vec({1.0}));
  CHECK(w.budget == doctest::Approx(p.delta()).epsilon(1e-8));
  CHECK(w.dual_value >= w.worst_value - 1e-9);
  if (w.regime == WorstCaseRegime::randomized) {
    REQUIRE(w.randomization.has_value());
    const Randomization& r = *w.randomization;
    CHECK(r.p >= 0.0);
    CHECK(r.p <= 1.0);
    CHECK(r.c_lower <= 1.0 + 1e-9);
    CHECK(r.c_upper >= 1.0 - 1e-9);
  }
}

TEST_CASE("displacements grow along a fixed line") {
  const SampleSet data = generate_classification(16, 2, 1.0, 1.0, 15);
  const DroProblem p(data, CostField::identity(2), make_logistic_loss(), 0.01, 2.0);
  const Vector beta = vec({0.6, 0.9});
  const ComparativeStatics cs = comparative_statics(p, beta, {0.01, 0.04, 0.09, 0.16, 0.25});
  CHECK(cs.monotonicity_violations == 0);
  CHECK(cs.min_cosine >= 1.0 - 1e-10);
  CHECK(cs.transports.size() == 5);
  const ComparativeStatics flagged = comparative_statics(p, beta, {0.01, 0.04}, 0.02);
  CHECK(flagged.flagged.size() == 1);
}

TEST_CASE("worst case value never exceeds the primal bound oracle's dual") {
  const SampleSet data = generate_classification(8, 1, 1.0, 1.0, 16);
  const DroProblem p(data, CostField::identity(1), make_logistic_loss(), 0.05, 2.0);
  const Vector beta = vec({1.3});
  Matrix support(1, 201);
  for (int j = 0; j < 201; ++j) support(0, j) = -5.0 + 0.05 * j;
  const WorstCaseTransport w = worst_case(p, beta);
  const double primal = primal_bound(p, beta, support);
  CHECK(primal <= w.dual_value + 1e-9);
  CHECK(w.dual_value - primal <= 5e-3);
}
