#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "otdro/dual_objective.hpp"
#include "otdro/error.hpp"
#include "otdro/experiments.hpp"
#include "otdro/oracle.hpp"
#include "otdro/regions.hpp"

using namespace otdro;
using otdro::testing::single_atom;
using otdro::testing::vec;

TEST_CASE("single atom inner solution at lambda = 2") {
  const DroProblem p = single_atom();
  const Decision theta{vec({1.0}), 2.0};
  const InnerSolution s = inner_maximize(p, theta, 0);
  CHECK(s.g == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
  CHECK(s.lrob == doctest::Approx(7.0 / 3.0).epsilon(1e-12));
  CHECK(s.x_tilde(0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(s.certified);
  CHECK(s.method == InnerMethod::bisection);
  const SubgradientSample gr = grad_lrob(p, theta, 0, s);
  CHECK(gr.d_beta(0) == doctest::Approx(8.0 / 9.0).epsilon(1e-10));
  CHECK(gr.d_lambda == doctest::Approx(5.0 / 18.0).epsilon(1e-10));
}

TEST_CASE("eval_F matches its definition") {
  const DroProblem p = single_atom();
  const Decision theta{vec({1.0}), 2.0};
  // l(0 + γ/2) − 2 · 0.5 (γ² − 1) with l(u) = (u − 1)².
  for (double g : {-1.0, 0.0, 0.5}) {
    const double expected = (0.5 * g - 1) * (0.5 * g - 1) - (g * g - 1);
    CHECK(eval_F(p, g, theta, 0) == doctest::Approx(expected));
  }
}

TEST_CASE("domain classification") {
  const DroProblem p = single_atom();
  CHECK(classify_domain(Decision{vec({1.0}), 1.0}, p) == Domain::interior);
  CHECK(classify_domain(Decision{vec({1.0}), 0.5}, p) == Domain::boundary);
  CHECK(classify_domain(Decision{vec({1.0}), 0.4}, p) == Domain::infeasible);
  CHECK(std::isinf(f_delta(Decision{vec({1.0}), 0.4}, p)));
  CHECK(std::isinf(f_delta(Decision{vec({1.0}), 0.5}, p)));
  CHECK_THROWS_AS(inner_maximize(p, Decision{vec({1.0}), 0.5}, 0), InfeasibleDomain);
}

TEST_CASE("zero beta and zero delta shortcuts") {
  const DroProblem p = single_atom();
  const InnerSolution z = inner_maximize(p, Decision{vec({0.0}), 0.7}, 0);
  CHECK(z.method == InnerMethod::zero_beta);
  CHECK(z.lrob == doctest::Approx(1.0 + 0.7 * 0.5));
  const InnerSolution n = inner_maximize(p.with_delta(0.0), Decision{vec({1.0}), 0.0}, 0);
  CHECK(n.method == InnerMethod::nonrobust);
  CHECK(n.lrob == doctest::Approx(1.0));
}

TEST_CASE("squared loss closed form on random instances") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> pos(0.01, 0.5);
  for (int t = 0; t < 200; ++t) {
    Matrix x(2, 1);
    x << u(rng), u(rng);
    const DroProblem p(SampleSet(x, vec({u(rng)})), CostField::identity(2), make_squared_loss(), pos(rng), 5.0);
    const Vector beta = vec({u(rng), u(rng)});
    const Decision theta{beta, lambda_thr(p, beta) + pos(rng)};
    const double fast = inner_maximize(p, theta, 0).lrob;
    const double closed = squared_loss_lrob_closed_form(p, theta, 0);
    CHECK(std::abs(fast - closed) <= 1e-8);
  }
}

TEST_CASE("logistic inner maximum agrees with a grid oracle") {
  const SampleSet data = generate_classification(20, 2, 1.0, 1.0, 5);
  const DroProblem p(data, CostField::identity(2), make_logistic_loss(), 0.3, 2.0);
  const Decision theta{vec({1.2, -0.4}), 0.05};
  for (int i = 0; i < p.n(); ++i) {
    const InnerSolution s = inner_maximize(p, theta, i);
    const GridMax g = grid_inner_max(p, theta, i, 20001);
    CHECK(s.lrob >= g.value - 1e-9);
    CHECK(std::abs(s.lrob - g.value) <= 1e-7);
  }
}

TEST_CASE("nonconcave logistic inner problem goes through the fallback") {
  Matrix x(1, 1);
  x << 0.0;
  const DroProblem p(SampleSet(x, vec({1.0})), CostField::identity(1), make_logistic_loss(), 1.0, 10.0);
  // λ far below (M/2)√δ a = 0.125 · 16 = 2 with a = 16.
  const Decision theta{vec({4.0}), 0.05};
  const InnerSolution s = inner_maximize(p, theta, 0);
  CHECK(s.method == InnerMethod::fallback);
  CHECK_FALSE(s.certified);
  const GridMax g = grid_inner_max(p, theta, 0, 200001);
  CHECK(std::abs(s.lrob - g.value) <= 1e-7);
  InnerOptions strict;
  strict.allow_fallback = false;
  CHECK_THROWS_AS(inner_maximize(p, theta, 0, strict), NumericalError);
}

TEST_CASE("hinge maximizer set and kink handling") {
  // x = 0, y = 1, β = 1, δ = 1: u0 = 0 and l(u) = max(0, 1 − u).
  Matrix x(1, 1);
  x << 0.0;
  const DroProblem p(SampleSet(x, vec({1.0})), CostField::identity(1), make_hinge_loss(), 1.0, 2.0);
  // Piece 1 − γ peaks at γ = −1/(2λ) = −1 with value 2; piece 0 peaks at λ.
  const Decision theta{vec({1.0}), 0.5};
  const std::vector<double> set = inner_maximizer_set(p, theta, 0, {});
  REQUIRE(set.size() == 1);
  CHECK(set[0] == doctest::Approx(-1.0));
  const InnerSolution s = inner_maximize(p, theta, 0);
  CHECK(s.lrob == doctest::Approx(1.0 + 0.5 + 0.5));
  // Here u_tilde = −1 lies off the kink.
  CHECK_NOTHROW(grad_lrob(p, theta, 0, s));

  // The maximizers of the two pieces never sit on the kink, so build one
  // there by hand to exercise the kink path.
  InnerSolution on_kink = s;
  on_kink.u_tilde = 1.0;
  on_kink.x_tilde = vec({1.0});
  CHECK_THROWS_AS(grad_lrob(p, theta, 0, on_kink), KinkError);
  std::mt19937_64 rng(1);
  const SubgradientSample sub = subgrad_lrob(p, theta, 0, on_kink, rng);
  CHECK(sub.lprime_choice >= -1.0);
  CHECK(sub.lprime_choice <= 0.0);
}

TEST_CASE("analytic gradient matches finite differences for logistic loss") {
  const SampleSet data = generate_classification(10, 3, 1.0, 1.0, 6);
  const DroProblem p(data, CostField::identity(3), make_logistic_loss(), 0.02, 1.0);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01(0.0, 0.4);
  for (int t = 0; t < 10; ++t) {
    const Decision theta{vec({n01(rng), n01(rng), n01(rng)}), 0.6 + std::abs(n01(rng))};
    const SubgradientSample g = grad_f_delta(theta, p, InnerOptions{80});
    const FdGradient fd = fd_gradient(theta, p);
    Vector a(4), b(4);
    a << g.d_beta, g.d_lambda;
    b << fd.d_beta, fd.d_lambda;
    CHECK((a - b).norm() <= 1e-5 * std::max(1.0, b.norm()));
  }
}

TEST_CASE("d_lambda never exceeds sqrt(delta)") {
  const SampleSet data = generate_classification(16, 2, 1.0, 1.0, 8);
  const DroProblem p(data, CostField::identity(2), make_logistic_loss(), 0.09, 2.0);
  const Decision theta{vec({0.7, 0.2}), 0.4};
  for (int i = 0; i < p.n(); ++i) {
    const InnerSolution s = inner_maximize(p, theta, i);
    CHECK(grad_lrob(p, theta, i, s).d_lambda <= p.sqrt_delta() + 1e-15);
    CHECK(s.residual <= 1e-9);
  }
}

TEST_CASE("robust loss dominates the nominal loss") {
  const SampleSet data = generate_classification(16, 2, 1.0, 1.0, 10);
  const DroProblem p(data, CostField::identity(2), make_logistic_loss(), 0.05, 2.0);
  const Decision theta{vec({0.5, -0.5}), 0.3};
  for (int i = 0; i < p.n(); ++i) {
    const double u0 = theta.beta.dot(p.data().point(i));
    CHECK(inner_maximize(p, theta, i).lrob >= p.loss().value(u0, p.data().label(i)) + theta.lambda * p.sqrt_delta() - 1e-12);
  }
}
