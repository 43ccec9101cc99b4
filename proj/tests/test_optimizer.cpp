#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "otdro/error.hpp"
#include "otdro/experiments.hpp"
#include "otdro/optimizer.hpp"
#include "otdro/oracle.hpp"

using namespace otdro;
using otdro::testing::single_atom;
using otdro::testing::vec;

namespace {

DroProblem small_logistic(double delta = 0.01) {
  const SampleSet data = generate_classification(16, 2, 1.0, 1.0, 12);
  return DroProblem(data, CostField::identity(2), make_logistic_loss(), delta, 1.0);
}

}  // namespace

TEST_CASE("step schedule") {
  const StepSchedule s{2.0, 0.5};
  CHECK(s.at(1) == 2.0);
  CHECK(s.at(4) == doctest::Approx(1.0));
  CHECK_NOTHROW(s.validate());
  CHECK_THROWS_AS((StepSchedule{2.0, 0.4}).validate(), ConfigError);
  CHECK_THROWS_AS((StepSchedule{0.0, 0.6}).validate(), ConfigError);
}

TEST_CASE("cut schedule grows with k and is floored") {
  const StepSchedule s{1.0, 0.55};
  CHECK(cut_schedule(1, s, 0.0) == 10);
  CHECK(cut_schedule(1L << 40, s, 10.0) > cut_schedule(1L << 20, s, 10.0));
  CHECK(cut_schedule(1L << 40, s, 10.0) >= static_cast<int>(std::ceil(0.55 * 40 + 2 * std::log2(11.0))));
}

TEST_CASE("single atom multiplier root") {
  const DroProblem p = single_atom();
  const LambdaStar root = solve_lambda_star(p, vec({1.0}));
  CHECK(root.lambda == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(root.boundary == RootBoundary::none);
  CHECK(root.monotone);
  CHECK(f_delta(Decision{vec({1.0}), root.lambda}, p) == doctest::Approx(2.25).epsilon(1e-9));
  CHECK(mean_g2a(p, Decision{vec({1.0}), 1.5}) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("smooth SGD stays in W and approaches the reference minimum") {
  const DroProblem p = small_logistic();
  SupervisedSetup setup;
  const ConstantsBundle c = constants_for(p, setup);
  REQUIRE(c.smooth_regime);
  SgdOptions o;
  o.iterations = 4000;
  o.trace_points = 20;
  o.seed = 3;
  const RunTrace t = sgd_smooth(p, c, StepSchedule{1.0, 0.55}, o);
  CHECK(t.region_violations == 0);
  CHECK(t.max_d_lambda <= p.sqrt_delta() + 1e-15);
  CHECK(in_W(t.final_theta, c, 1e-10));
  const GridMin ref = reference_minimize(p, c);
  const double first = t.checkpoints.front().f_delta - ref.f_star;
  const double last = t.checkpoints.back().f_delta - ref.f_star;
  CHECK(last >= -1e-9);
  CHECK(last < first);
  CHECK(last < 5e-3);
}

TEST_CASE("identical seeds give identical traces") {
  const DroProblem p = small_logistic();
  SupervisedSetup setup;
  const ConstantsBundle c = constants_for(p, setup);
  SgdOptions o;
  o.iterations = 500;
  o.trace_points = 5;
  const RunTrace a = sgd_smooth(p, c, StepSchedule{1.0, 0.55}, o);
  const RunTrace b = sgd_smooth(p, c, StepSchedule{1.0, 0.55}, o);
  CHECK(a.final_theta_bar.beta == b.final_theta_bar.beta);
  CHECK(a.final_theta_bar.lambda == b.final_theta_bar.lambda);
  o.seed = 2;
  const RunTrace d = sgd_smooth(p, c, StepSchedule{1.0, 0.55}, o);
  CHECK(d.final_theta_bar.beta != a.final_theta_bar.beta);
}

TEST_CASE("nonsmooth SGD validates its parameters") {
  const DroProblem p = small_logistic().with_loss(make_hinge_loss());
  SgdOptions o;
  o.iterations = 10;
  o.xi = 1.0;
  CHECK_THROWS_AS(sgd_nonsmooth(p, StepSchedule{1.0, 0.55}, 0.1, o), ConfigError);
  CHECK_THROWS_AS(sgd_nonsmooth(p, StepSchedule{1.0, 0.5}, 0.0, o), ConfigError);
  o.xi = 0.0;
  CHECK_THROWS_AS(sgd_nonsmooth(p, StepSchedule{1.0, 0.5}, 0.1, o), ConfigError);
}

TEST_CASE("nonsmooth SGD on hinge loss stays in U_eta") {
  const DroProblem p = small_logistic(0.04).with_loss(make_hinge_loss());
  SgdOptions o;
  o.iterations = 3000;
  o.xi = 1.0;
  o.trace_points = 10;
  const RunTrace t = sgd_nonsmooth(p, StepSchedule{0.5, 0.5}, 0.05, o);
  CHECK(t.region_violations == 0);
  CHECK(t.final_theta.lambda >= 0.05 - 1e-12);
  CHECK(t.checkpoints.back().f_delta < t.checkpoints.front().f_delta);
}

TEST_CASE("two-timescale variant checks its exponents") {
  const DroProblem p = small_logistic();
  SupervisedSetup setup;
  const ConstantsBundle c = constants_for(p, setup);
  SgdOptions o;
  o.iterations = 200;
  o.trace_points = 4;
  CHECK_THROWS_AS(sgd_two_timescale(p, c, StepSchedule{1.0, 0.6}, StepSchedule{1.0, 0.7}, o), ConfigError);
  CHECK_THROWS_AS(sgd_two_timescale(p, c, StepSchedule{1.0, 1.0}, StepSchedule{1.0, 0.6}, o), ConfigError);
  const RunTrace t = sgd_two_timescale(p, c, StepSchedule{1.0, 0.8}, StepSchedule{1.0, 0.6}, o);
  CHECK(t.region_violations == 0);
}

TEST_CASE("non-robust baseline keeps lambda at zero") {
  const DroProblem p = small_logistic().with_delta(0.0);
  SgdOptions o;
  o.iterations = 300;
  o.trace_points = 3;
  const RunTrace t = sgd_nonrobust(p, StepSchedule{1.0, 0.55}, o);
  CHECK(t.final_theta.lambda == 0.0);
  CHECK(t.final_theta.beta.norm() <= p.r_beta() + 1e-12);
}

TEST_CASE("outer line search narrows its bracket") {
  const DroProblem p = small_logistic(0.02);
  SupervisedSetup setup;
  const ConstantsBundle c = constants_for(p, setup);
  const LineSearchResult r = line_search_outer(p, c, 200, 1e-2, 5);
  REQUIRE(r.widths.size() >= 2);
  for (std::size_t j = 1; j < r.widths.size(); ++j) CHECK(r.widths[j] < r.widths[j - 1]);
  CHECK(r.lambda_star >= 0.0);
  CHECK(r.lambda_star <= c.lambda_cap());
  CHECK(r.beta_star.norm() <= p.r_beta() + 1e-12);
}

TEST_CASE("rate diagnostic recovers a known slope") {
  RunTrace t;
  for (long k = 10; k <= 100000; k *= 10) {
    Checkpoint cp;
    cp.k = k;
    cp.f_delta = 1.0 + 3.0 / static_cast<double>(k);
    t.checkpoints.push_back(cp);
  }
  Checkpoint bad;
  bad.k = 500;
  bad.f_delta = 0.5;
  t.checkpoints.push_back(bad);
  const RateFit fit = rate_diagnostic(t, 1.0, 10, 100000);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(fit.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-9));
  CHECK(fit.used == 5);
  CHECK(fit.excluded == 1);
}
