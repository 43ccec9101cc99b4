#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "otdro/error.hpp"
#include "otdro/experiments.hpp"

using namespace otdro;
using otdro::testing::vec;

TEST_CASE("synthetic generators are seeded") {
  const SampleSet a = generate_classification(20, 3, 1.0, 0.5, 1);
  const SampleSet b = generate_classification(20, 3, 1.0, 0.5, 1);
  CHECK(a.points() == b.points());
  CHECK(*a.labels() == *b.labels());
  for (int i = 0; i < a.size(); ++i) CHECK(std::abs(a.label(i)) == 1.0);
  const SampleSet r = generate_regression(10, 2, 0.1, 2);
  CHECK(r.size() == 10);
  CHECK(r.has_labels());
}

TEST_CASE("method names round trip") {
  for (SgdMethod m : {SgdMethod::automatic, SgdMethod::smooth, SgdMethod::nonsmooth, SgdMethod::two_timescale}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("adam"), ConfigError);
}

TEST_CASE("train dispatches on the loss") {
  const SampleSet data = generate_classification(12, 2, 1.0, 1.0, 3);
  SupervisedSetup setup;
  setup.sgd.iterations = 200;
  setup.sgd.trace_points = 2;
  const DroProblem logistic(data, CostField::identity(2), make_logistic_loss(), 0.01, 1.0);
  std::optional<ConstantsBundle> consts;
  const RunTrace smooth = train(logistic, setup, &consts);
  CHECK(smooth.method == "sgd_smooth");
  CHECK(consts.has_value());
  const RunTrace hinge = train(logistic.with_loss(make_hinge_loss()), setup);
  CHECK(hinge.method == "sgd_nonsmooth");
}

TEST_CASE("supervised comparison reports nonnegative gaps") {
  const SampleSet data = generate_classification(12, 2, 1.0, 1.0, 4);
  const DroProblem p(data, CostField::identity(2), make_logistic_loss(), 0.01, 1.0);
  SupervisedSetup setup;
  setup.sgd.iterations = 300;
  setup.sgd.trace_points = 3;
  const SupervisedComparison c = run_supervised_experiment(p, setup);
  for (const Checkpoint& cp : c.dro.checkpoints) CHECK(cp.f_delta >= c.f_star_dro - 1e-12);
  for (const Checkpoint& cp : c.plain.checkpoints) CHECK(cp.f_delta >= c.f_star_plain - 1e-12);
  CHECK(c.f_star_plain <= c.f_star_dro);
}

TEST_CASE("worst-case sweep tracks misclassification") {
  const SampleSet data = generate_classification(16, 2, 1.0, 1.0, 5);
  const DroProblem p(data, CostField::identity(2), make_logistic_loss(), 0.01, 2.0);
  const WorstCaseSweep s = run_worstcase_trace(p, vec({1.0, 1.0}), {0.01, 0.05, 0.2});
  CHECK(s.rows.size() == 3 * 16);
  REQUIRE(s.misclassification.size() == 3);
  CHECK(s.misclassification[0] <= s.misclassification[2]);
}

TEST_CASE("portfolio weights sum to one and stay bounded") {
  const MarketData m = generate_market(60, 4, 8);
  const Matrix window = m.returns.topRows(36);
  const PortfolioWeights w = solve_portfolio(window, CostField::identity(4), 0.5, 0.01);
  CHECK(w.beta.sum() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(w.beta.norm() <= 10.0 + 1e-9);
  CHECK(std::isfinite(w.objective));
  // δ = 0 reduces to the sample mean-variance problem, whose objective is lower.
  const PortfolioWeights plain = solve_portfolio(window, CostField::identity(4), 0.5, 0.0);
  CHECK(plain.objective <= w.objective + 1e-9);
}

TEST_CASE("frontier validates its inputs") {
  const MarketData m = generate_market(48, 3, 9);
  FrontierSetup setup;
  setup.window = 36;
  setup.zeta_grid = {0.5};
  setup.delta_grid = {0.0};
  setup.cost_kinds = {PortfolioCost::constant};
  const std::vector<FrontierPoint> f = run_portfolio_frontier(m.returns, m.vol, setup);
  REQUIRE(f.size() == 1);
  CHECK(f[0].months == 12);
  CHECK(f[0].std_return > 0.0);
  setup.window = 12;
  CHECK_THROWS_AS(run_portfolio_frontier(m.returns, m.vol, setup), ConfigError);
  setup.window = 48;
  CHECK_THROWS_AS(run_portfolio_frontier(m.returns, m.vol, setup), ConfigError);
  setup.window = 36;
  Vector bad = m.vol;
  bad(3) = -1.0;
  CHECK_THROWS_AS(run_portfolio_frontier(m.returns, bad, setup), ConfigError);
}

TEST_CASE("built-in check suite passes") {
  for (const CheckResult& r : run_check_suite(1)) CHECK_MESSAGE(r.passed, r.name);
}
