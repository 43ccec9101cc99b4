#include "otdro/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "otdro/error.hpp"
#include "otdro/oracle.hpp"

namespace otdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_classification(const LossSpec& loss) { return loss.name == "logistic" || loss.name == "hinge"; }

double min_checkpoint(const RunTrace& trace) {
  double best = kInf;
  for (const auto& c : trace.checkpoints) best = std::min(best, c.f_delta);
  return best;
}

}  // namespace

SampleSet generate_classification(int n, int d, double separation, double noise, std::uint64_t seed) {
  if (n < 1 || d < 1) throw ConfigError("synthetic data needs n >= 1 and d >= 1");
  if (!(noise > 0.0)) throw ConfigError("synthetic noise must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const double shift = separation / std::sqrt(static_cast<double>(d));
  Matrix points(d, n);
  Vector labels(n);
  for (int i = 0; i < n; ++i) {
    const double y = coin(rng) ? 1.0 : -1.0;
    labels(i) = y;
    for (int j = 0; j < d; ++j) points(j, i) = y * shift + noise * normal(rng);
  }
  return SampleSet(std::move(points), std::move(labels));
}

SampleSet generate_regression(int n, int d, double noise, std::uint64_t seed) {
  if (n < 1 || d < 1) throw ConfigError("synthetic data needs n >= 1 and d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(d);
  for (int j = 0; j < d; ++j) w(j) = normal(rng) / std::sqrt(static_cast<double>(d));
  Matrix points(d, n);
  Vector labels(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) points(j, i) = normal(rng);
    labels(i) = w.dot(points.col(i)) + noise * normal(rng);
  }
  return SampleSet(std::move(points), std::move(labels));
}

SgdMethod parse_method(const std::string& name) {
  if (name == "auto" || name == "automatic") return SgdMethod::automatic;
  if (name == "smooth") return SgdMethod::smooth;
  if (name == "nonsmooth") return SgdMethod::nonsmooth;
  if (name == "two_timescale") return SgdMethod::two_timescale;
  throw ConfigError("unknown method '" + name + "' (expected auto, smooth, nonsmooth or two_timescale)");
}

const char* to_string(SgdMethod method) {
  switch (method) {
    case SgdMethod::automatic:
      return "auto";
    case SgdMethod::smooth:
      return "smooth";
    case SgdMethod::nonsmooth:
      return "nonsmooth";
    case SgdMethod::two_timescale:
      return "two_timescale";
  }
  return "?";
}

ConstantsBundle constants_for(const DroProblem& problem, const SupervisedSetup& setup) {
  const LBounds bounds =
      setup.L ? *setup.L : estimate_L_bounds(problem, setup.sphere_samples, setup.refine_steps);
  return build_constants(problem, bounds);
}

RunTrace train(const DroProblem& problem, const SupervisedSetup& setup,
               std::optional<ConstantsBundle>* consts_out) {
  SgdMethod method = setup.method;
  if (method == SgdMethod::automatic) {
    method = problem.loss().smooth() ? SgdMethod::smooth : SgdMethod::nonsmooth;
  }
  switch (method) {
    case SgdMethod::smooth:
    case SgdMethod::two_timescale: {
      const ConstantsBundle consts = constants_for(problem, setup);
      if (consts_out) *consts_out = consts;
      if (method == SgdMethod::smooth) return sgd_smooth(problem, consts, setup.schedule, setup.sgd);
      return sgd_two_timescale(problem, consts, setup.schedule, setup.lambda_schedule, setup.sgd);
    }
    case SgdMethod::nonsmooth:
    case SgdMethod::automatic: {
      StepSchedule schedule = setup.schedule;
      SgdOptions opts = setup.sgd;
      std::vector<std::string> notes;
      if (setup.method == SgdMethod::automatic) {
        if (schedule.tau != 0.5) notes.push_back("tau set to 1/2 for the subgradient method");
        if (opts.xi < 1.0) notes.push_back("xi raised to 1 for the subgradient method");
        schedule.tau = 0.5;
        opts.xi = std::max(opts.xi, 1.0);
      }
      RunTrace trace = sgd_nonsmooth(problem, schedule, setup.eta, opts);
      trace.warnings.insert(trace.warnings.end(), notes.begin(), notes.end());
      return trace;
    }
  }
  throw ConfigError("unsupported method");
}

SupervisedComparison run_supervised_experiment(const DroProblem& problem, const SupervisedSetup& setup) {
  SupervisedComparison out;
  out.dro = train(problem, setup, &out.consts);
  StepSchedule plain_schedule = setup.schedule;
  if (!problem.loss().smooth() && setup.method == SgdMethod::automatic) plain_schedule.tau = 0.5;
  out.plain = sgd_nonrobust(problem, plain_schedule, setup.sgd);

  if (out.consts) {
    out.f_star_dro = reference_minimize(problem, *out.consts).f_star;
    out.f_star_plain = reference_minimize(problem.with_delta(0.0), *out.consts).f_star;
  } else {
    // No deterministic gradient for piecewise losses: a longer run with an
    // independent stream serves as the reference.
    SupervisedSetup longer = setup;
    longer.sgd.iterations = 4 * setup.sgd.iterations;
    longer.sgd.seed = setup.sgd.seed + 1;
    out.f_star_dro = min_checkpoint(train(problem, longer));
    SgdOptions plain_opts = longer.sgd;
    out.f_star_plain = min_checkpoint(sgd_nonrobust(problem, plain_schedule, plain_opts));
  }
  out.f_star_dro = std::min(out.f_star_dro, min_checkpoint(out.dro));
  out.f_star_plain = std::min(out.f_star_plain, min_checkpoint(out.plain));
  return out;
}

WorstCaseSweep run_worstcase_trace(const DroProblem& problem, const Vector& beta,
                                   const std::vector<double>& delta_grid, std::optional<double> delta1,
                                   const WorstCaseOptions& options) {
  if (beta.size() != problem.dim()) throw ConfigError("beta dimension does not match the data");
  WorstCaseSweep sweep;
  sweep.statics = comparative_statics(problem, beta, delta_grid, delta1, options);
  const bool classify = is_classification(problem.loss());
  const auto& data = problem.data();
  for (const auto& t : sweep.statics.transports) {
    int wrong = 0;
    for (int i = 0; i < problem.n(); ++i) {
      WorstCaseRow row{t.delta,          i, data.point(i), t.g(i), t.x_star.col(i), t.displacement(i),
                       t.loss_before(i), t.loss_after(i)};
      if (classify && data.label(i) * beta.dot(t.x_star.col(i)) <= 0.0) ++wrong;
      sweep.rows.push_back(std::move(row));
    }
    if (classify) sweep.misclassification.push_back(static_cast<double>(wrong) / problem.n());
  }
  return sweep;
}

// --- Portfolio -------------------------------------------------------------

PortfolioCost parse_portfolio_cost(const std::string& name) {
  if (name == "constant" || name == "identity") return PortfolioCost::constant;
  if (name == "implied_vol" || name == "implied-vol-scaled") return PortfolioCost::implied_vol;
  throw ConfigError("unknown portfolio cost '" + name + "' (expected constant or implied_vol)");
}

const char* to_string(PortfolioCost kind) {
  return kind == PortfolioCost::constant ? "constant" : "implied_vol";
}

PortfolioWeights solve_portfolio(const Matrix& returns, const CostField& cost, double zeta, double delta,
                                 const PortfolioSolverOptions& options) {
  const auto n = static_cast<int>(returns.rows());
  const auto d = static_cast<int>(returns.cols());
  if (n < 2 || d < 1) throw ConfigError("portfolio window needs at least 2 rows");
  if (!returns.allFinite()) throw ConfigError("portfolio returns contain NaN or infinite values");
  const double radius = options.r_beta;
  if (radius * radius <= 1.0 / d) throw ConfigError("r_beta too small for weights summing to one");

  const SampleSet base(returns.transpose());
  const LossSpec loss = make_mean_variance_loss(zeta);
  const bool plain = delta == 0.0;
  const double s = std::sqrt(delta);
  const double min_scale = cost.kind() == CostKind::scaled_identity ? cost.scales().minCoeff() : 1.0;
  if (cost.kind() != CostKind::identity && cost.kind() != CostKind::scaled_identity) {
    throw ConfigError("portfolio costs must be identity or scaled identity");
  }
  const double c = loss.kappa * s / min_scale;
  const double t_max = std::sqrt(radius * radius - 1.0 / d);
  const double eta = options.eta;

  struct State {
    Vector beta;
    double mu;
    double lambda;
  };
  auto project = [&](const State& x) {
    State out = x;
    out.beta.array() -= (x.beta.sum() - 1.0) / d;
    Vector v = out.beta.array() - 1.0 / d;
    const double t = v.norm();
    if (plain) {
      if (t > t_max) v *= t_max / t;
      out.beta = v.array() + 1.0 / d;
      out.lambda = 0.0;
      return out;
    }
    const RadialPoint p = project_radial(
        t, x.lambda, [&](double r) { return c * (1.0 / d + r * r) + eta; }, [&](double r) { return 2.0 * c * r; },
        t_max, kInf);
    if (t > 0.0) v *= p.t / t;
    out.beta = v.array() + 1.0 / d;
    out.lambda = p.lambda;
    return out;
  };

  InnerOptions inner;
  inner.cuts = 56;
  auto problem_for = [&](double mu) {
    return DroProblem(base.with_constant_label(mu), cost, loss, delta, radius);
  };
  auto objective = [&](const State& x) {
    return f_delta(Decision{x.beta, x.lambda}, problem_for(x.mu), inner);
  };
  auto gradient = [&](const State& x) {
    const DroProblem problem = problem_for(x.mu);
    const Decision theta{x.beta, x.lambda};
    State g{Vector::Zero(d), 0.0, 0.0};
    for (int i = 0; i < n; ++i) {
      const InnerSolution sol = inner_maximize(problem, theta, i, inner);
      const SubgradientSample sg = grad_lrob(problem, theta, i, sol);
      g.beta += sg.d_beta;
      g.lambda += sg.d_lambda;
      g.mu += -2.0 * (sol.u_tilde - x.mu);
    }
    g.beta /= n;
    g.lambda /= n;
    g.mu /= n;
    if (plain) g.lambda = 0.0;
    return g;
  };
  auto distance2 = [](const State& a, const State& b) {
    return (a.beta - b.beta).squaredNorm() + (a.mu - b.mu) * (a.mu - b.mu) +
           (a.lambda - b.lambda) * (a.lambda - b.lambda);
  };

  State x{Vector::Constant(d, 1.0 / d), 0.0, 0.0};
  x.mu = (returns * x.beta).mean();
  x.lambda = plain ? 0.0 : 2.0 * (c / d + eta) + s;
  x = project(x);
  double fx = objective(x);
  double step = 1.0;
  PortfolioWeights out;
  for (int it = 0; it < options.max_iterations; ++it) {
    const State g = gradient(x);
    State next;
    double fn = kInf;
    bool accepted = false;
    for (int back = 0; back < 80; ++back) {
      next = project(State{x.beta - step * g.beta, x.mu - step * g.mu, x.lambda - step * g.lambda});
      fn = objective(next);
      if (fn <= fx - distance2(next, x) / (2.0 * step)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) break;
    const double moved = std::sqrt(distance2(next, x));
    x = next;
    fx = fn;
    step *= 2.0;
    if (moved <= options.tol * (1.0 + x.beta.norm() + std::abs(x.mu) + x.lambda)) break;
  }
  out.beta = x.beta;
  out.mu = x.mu;
  out.lambda = x.lambda;
  out.objective = fx;
  return out;
}

std::vector<FrontierPoint> run_portfolio_frontier(const Matrix& returns, const Vector& vol,
                                                  const FrontierSetup& setup) {
  const auto T = static_cast<int>(returns.rows());
  const auto d = static_cast<int>(returns.cols());
  if (vol.size() != T) throw ConfigError("return and volatility series are not aligned");
  if (setup.window < 24) throw ConfigError("window must be >= 24 months");
  if (setup.window >= T) throw ConfigError("window exceeds the available history");
  if (!returns.allFinite() || !vol.allFinite()) throw ConfigError("NaN in return or volatility series");
  if ((vol.array() <= 0.0).any()) throw ConfigError("volatility entries must be > 0");

  std::vector<FrontierPoint> out;
  for (PortfolioCost kind : setup.cost_kinds) {
    for (double zeta : setup.zeta_grid) {
      for (double delta : setup.delta_grid) {
        std::vector<double> realized;
        for (int t = setup.window; t < T; ++t) {
          const Matrix window = returns.middleRows(t - setup.window, setup.window);
          const CostField cost = kind == PortfolioCost::constant
                                     ? CostField::identity(d)
                                     : CostField::from_implied_volatility(d, vol.segment(t - setup.window, setup.window));
          const PortfolioWeights w = solve_portfolio(window, cost, zeta, delta, setup.solver);
          realized.push_back(returns.row(t).dot(w.beta));
        }
        const double m = static_cast<double>(realized.size());
        double mean = 0.0;
        for (double r : realized) mean += r;
        mean /= m;
        double var = 0.0;
        for (double r : realized) var += (r - mean) * (r - mean);
        var = m > 1.0 ? var / (m - 1.0) : 0.0;
        out.push_back(FrontierPoint{zeta, delta, kind, mean * setup.periods_per_year,
                                    std::sqrt(var) * std::sqrt(setup.periods_per_year),
                                    static_cast<int>(realized.size())});
      }
    }
  }
  return out;
}

MarketData generate_market(int months, int assets, std::uint64_t seed) {
  if (months < 2 || assets < 1) throw ConfigError("synthetic market needs months >= 2 and assets >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector drift(assets);
  Vector loading(assets);
  Vector idio(assets);
  for (int j = 0; j < assets; ++j) {
    drift(j) = 0.004 + 0.004 * j / std::max(assets - 1, 1);
    loading(j) = 0.6 + 0.8 * j / std::max(assets - 1, 1);
    idio(j) = 0.02 + 0.02 * j / std::max(assets - 1, 1);
  }
  MarketData m;
  m.returns.resize(months, assets);
  m.vol.resize(months);
  for (int t = 0; t < months; ++t) {
    const double shock = normal(rng);
    const double factor = 0.035 * shock;
    m.vol(t) = 0.15 * std::exp(0.25 * std::abs(shock) + 0.1 * normal(rng));
    for (int j = 0; j < assets; ++j) m.returns(t, j) = drift(j) + loading(j) * factor + idio(j) * normal(rng);
  }
  return m;
}

// --- Oracle suite ------------------------------------------------------------

std::vector<CheckResult> run_check_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto record = [&](std::string name, double oracle, double fast, double error, double tol) {
    out.push_back(CheckResult{std::move(name), error <= tol, oracle, fast, error, tol});
  };

  // Squared loss: bisection against the closed form.
  {
    double worst = 0.0;
    double o = 0.0;
    double f = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      Matrix x(2, 1);
      x << unit(rng), unit(rng);
      Vector y(1);
      y << 2.0 * unit(rng);
      const double delta = 0.5 * (unit(rng) + 1.0) + 1e-3;
      const DroProblem p(SampleSet(x, y), CostField::identity(2), make_squared_loss(), delta, 2.0);
      Vector beta(2);
      beta << unit(rng), unit(rng);
      const double thr = std::sqrt(delta) * beta.squaredNorm();
      const Decision theta{beta, thr + 0.05 + (unit(rng) + 1.0)};
      const double fast = inner_maximize(p, theta, 0).lrob;
      const double oracle = squared_loss_lrob_closed_form(p, theta, 0);
      const double err = std::abs(fast - oracle);
      if (err >= worst) {
        worst = err;
        o = oracle;
        f = fast;
      }
    }
    record("squared_closed_form", o, f, worst, 1e-8);
  }

  // Logistic: bisection against the dense grid.
  {
    double worst = 0.0;
    double o = 0.0;
    double f = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      Matrix x(2, 1);
      x << 2.0 * unit(rng), 2.0 * unit(rng);
      Vector y(1);
      y << (unit(rng) > 0.0 ? 1.0 : -1.0);
      const DroProblem p(SampleSet(x, y), CostField::identity(2), make_logistic_loss(), 0.1, 2.0);
      Vector beta(2);
      beta << unit(rng), unit(rng);
      const Decision theta{beta, 0.2 + (unit(rng) + 1.0)};
      const GridMax grid = grid_inner_max(p, theta, 0, 100001);
      const InnerSolution fast = inner_maximize(p, theta, 0);
      const double err = std::abs(grid.g - fast.g);
      if (err >= worst) {
        worst = err;
        o = grid.g;
        f = fast.g;
      }
    }
    record("logistic_grid_inner_max", o, f, worst, 1e-6);
  }

  // Gradient against central differences.
  {
    const SampleSet data = generate_classification(20, 3, 1.0, 1.0, seed + 1);
    const DroProblem p(data, CostField::identity(3), make_logistic_loss(), 0.01, 2.0);
    double worst = 0.0;
    double o = 0.0;
    double f = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      Vector beta(3);
      beta << unit(rng), unit(rng), unit(rng);
      const Decision theta{beta, 0.3 + (unit(rng) + 1.0)};
      const SubgradientSample g = grad_f_delta(theta, p);
      const FdGradient fd = fd_gradient(theta, p);
      Vector a(4);
      Vector b(4);
      a << g.d_beta, g.d_lambda;
      b << fd.d_beta, fd.d_lambda;
      const double err = (a - b).norm() / std::max(b.norm(), 1e-12);
      if (err >= worst) {
        worst = err;
        o = b.norm();
        f = a.norm();
      }
    }
    record("gradient_fd", o, f, worst, 1e-5);
  }

  // Single atom: analytic optimum and strong duality on a grid.
  {
    Matrix x(1, 1);
    x << 0.0;
    Vector y(1);
    y << 1.0;
    const DroProblem p(SampleSet(x, y), CostField::identity(1), make_squared_loss(), 0.25, 2.0);
    Vector beta(1);
    beta << 1.0;
    const LambdaStar ls = solve_lambda_star(p, beta);
    record("single_atom_lambda_star", 1.5, ls.lambda, std::abs(ls.lambda - 1.5), 1e-6);
    const double dual = f_delta(Decision{beta, ls.lambda}, p);
    record("single_atom_f_star", 2.25, dual, std::abs(dual - 2.25), 1e-6);
    Matrix support(1, 4001);
    for (int j = 0; j < 4001; ++j) support(0, j) = -2.0 + 4.0 * j / 4000.0;
    const double primal = primal_bound(p, beta, support);
    record("weak_duality", dual, primal, std::max(0.0, primal - dual), 1e-9);
    record("strong_duality_gap", dual, primal, std::abs(dual - primal), 1e-3);
  }

  // Worst-case budget on a small logistic instance.
  {
    const SampleSet data = generate_classification(16, 2, 1.0, 1.0, seed + 2);
    const DroProblem p(data, CostField::identity(2), make_logistic_loss(), 0.01, 2.0);
    Vector beta(2);
    beta << 0.8, 0.6;
    const WorstCaseTransport wc = worst_case(p, beta);
    record("worst_case_budget", p.delta(), wc.budget, std::abs(wc.budget - p.delta()), 1e-6 * p.delta());
    record("complementary_slackness", wc.dual_value, wc.worst_value, std::abs(wc.dual_value - wc.worst_value),
           1e-6);
  }
  return out;
}

}  // namespace otdro
