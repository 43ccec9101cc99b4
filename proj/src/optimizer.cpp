#include "otdro/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>

#include "otdro/error.hpp"

namespace otdro {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::set<long> checkpoint_set(const SgdOptions& options) {
  std::set<long> ks;
  const long total = options.iterations;
  const int points = std::max(options.trace_points, 1);
  if (options.geometric_checkpoints) {
    const double ratio = std::log(static_cast<double>(std::max(total, 1L))) / points;
    for (int j = 0; j <= points; ++j) ks.insert(std::max(1L, std::lround(std::exp(ratio * j))));
  } else {
    const long stride = std::max(1L, (total + points - 1) / points);
    for (long k = stride; k <= total; k += stride) ks.insert(k);
  }
  ks.insert(total);
  return ks;
}

struct StepResult {
  SubgradientSample grad;
  long cuts = 0;
  bool certified = true;
};

using Projector = std::function<Decision(const Decision&)>;
using Membership = std::function<bool(const Decision&)>;
using GradientOracle = std::function<StepResult(const Decision&, int, long, std::mt19937_64&)>;
// Step lengths for (β, λ) at iteration k.
using Steps = std::function<std::pair<double, double>(long)>;

RunTrace run_engine(const DroProblem& problem, const std::string& method, const SgdOptions& options,
                    const Decision& start, const Projector& project, const Membership& inside,
                    const GradientOracle& oracle, const Steps& steps, bool freeze_lambda) {
  if (options.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (options.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (options.xi < 0.0) throw ConfigError("xi must be >= 0");

  const auto t0 = Clock::now();
  RunTrace trace;
  trace.method = method;
  trace.seed = options.seed;
  trace.iterations = options.iterations;

  std::mt19937_64 sample_rng(options.seed);
  std::mt19937_64 subgrad_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> pick(0, problem.n() - 1);

  InnerOptions eval;
  eval.cuts = options.eval_cuts;

  const std::set<long> ks = checkpoint_set(options);
  Decision theta = project(start);
  Decision theta_bar = theta;
  long cuts_since = 0;

  for (long k = 1; k <= options.iterations; ++k) {
    Vector d_beta = Vector::Zero(problem.dim());
    double d_lambda = 0.0;
    for (int b = 0; b < options.batch_size; ++b) {
      const int i = pick(sample_rng);
      const StepResult r = oracle(theta, i, k, subgrad_rng);
      d_beta += r.grad.d_beta;
      d_lambda += r.grad.d_lambda;
      trace.max_d_lambda = std::max(trace.max_d_lambda, r.grad.d_lambda);
      cuts_since += r.cuts;
      trace.total_cuts += r.cuts;
      if (!r.certified) ++trace.uncertified_solves;
    }
    d_beta /= options.batch_size;
    d_lambda /= options.batch_size;

    const auto [step_beta, step_lambda] = steps(k);
    Decision next{theta.beta - step_beta * d_beta,
                  freeze_lambda ? theta.lambda : theta.lambda - step_lambda * d_lambda};
    theta = project(next);
    if (!inside(theta)) ++trace.region_violations;

    const double w = (options.xi + 1.0) / (static_cast<double>(k) + options.xi);
    theta_bar.beta += w * (theta.beta - theta_bar.beta);
    theta_bar.lambda += w * (theta.lambda - theta_bar.lambda);

    if (ks.count(k) != 0) {
      Checkpoint c;
      c.k = k;
      c.theta = theta;
      c.theta_bar = theta_bar;
      c.f_delta = f_delta(theta_bar, problem, eval);
      c.cuts = cuts_since;
      c.elapsed_ms = ms_since(t0);
      trace.checkpoints.push_back(std::move(c));
      cuts_since = 0;
    }
  }
  trace.final_theta = theta;
  trace.final_theta_bar = theta_bar;
  trace.elapsed_ms = ms_since(t0);
  return trace;
}

Vector clip_ball(const Vector& beta, double radius) {
  const double norm = beta.norm();
  return norm <= radius ? beta : Vector(beta * (radius / norm));
}

GradientOracle smooth_oracle(const DroProblem& problem, const StepSchedule& schedule,
                             const SgdOptions& options, std::optional<double> phi_min) {
  return [&problem, schedule, options, phi_min](const Decision& theta, int i, long k, std::mt19937_64&) {
    InnerOptions inner;
    inner.cuts = options.cuts ? *options.cuts
                              : cut_schedule(k, schedule, problem.data().point(i).norm());
    if (phi_min && *phi_min > 0.0) inner.phi_min = phi_min;
    const InnerSolution sol = inner_maximize(problem, theta, i, inner);
    return StepResult{grad_lrob(problem, theta, i, sol), sol.cuts_used, sol.certified};
  };
}

GradientOracle subgradient_oracle(const DroProblem& problem, const StepSchedule& schedule,
                                  const SgdOptions& options) {
  return [&problem, schedule, options](const Decision& theta, int i, long k, std::mt19937_64& rng) {
    InnerOptions inner;
    inner.cuts = options.cuts ? *options.cuts
                              : cut_schedule(k, schedule, problem.data().point(i).norm());
    const InnerSolution sol = inner_maximize(problem, theta, i, inner);
    return StepResult{subgrad_lrob(problem, theta, i, sol, rng), sol.cuts_used, sol.certified};
  };
}

Decision default_start_W(const DroProblem& problem, const ConstantsBundle& consts) {
  return Decision{Vector::Zero(problem.dim()), 0.5 * consts.lambda_cap()};
}

}  // namespace

double StepSchedule::at(long k) const { return alpha * std::pow(static_cast<double>(k), -tau); }

void StepSchedule::validate(double lo, double hi) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("step alpha must be > 0");
  if (!(tau >= lo && tau <= hi)) {
    throw ConfigError("step tau = " + std::to_string(tau) + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
}

int cut_schedule(long k, const StepSchedule& schedule, double x_norm) {
  const double raw = schedule.tau * std::log2(static_cast<double>(k)) - std::log2(schedule.alpha) +
                     2.0 * std::log2(1.0 + x_norm);
  return std::max(10, static_cast<int>(std::ceil(raw)));
}

RunTrace sgd_smooth(const DroProblem& problem, const ConstantsBundle& consts,
                    const StepSchedule& schedule, const SgdOptions& options) {
  schedule.validate();
  if (!problem.loss().smooth()) throw ConfigError("sgd_smooth needs a twice differentiable loss");
  const double radius = problem.r_beta();
  const Projector project = [&consts, radius](const Decision& t) { return project_W(t, consts, radius); };
  const Membership inside = [&consts](const Decision& t) { return in_W(t, consts, 1e-9); };
  const Steps steps = [schedule](long k) {
    const double a = schedule.at(k);
    return std::make_pair(a, a);
  };
  RunTrace trace = run_engine(problem, "sgd_smooth", options,
                              options.start.value_or(default_start_W(problem, consts)), project, inside,
                              smooth_oracle(problem, schedule, options, consts.phi_min), steps, false);
  if (!consts.smooth_regime) {
    trace.warnings.push_back("delta >= delta0: smoothness of f_delta on W is not guaranteed");
  }
  return trace;
}

RunTrace sgd_nonsmooth(const DroProblem& problem, const StepSchedule& schedule, double eta,
                       const SgdOptions& options) {
  schedule.validate(0.5, 0.5);
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (options.xi < 1.0) throw ConfigError("nonsmooth SGD needs xi >= 1");
  const double radius = problem.r_beta();
  long inexact = 0;
  const Projector project = [&problem, eta, &inexact](const Decision& t) {
    Projected p = project_U_eta(t, problem, eta);
    if (!p.exact) ++inexact;
    return p.theta;
  };
  const Membership inside = [&problem, eta, radius](const Decision& t) {
    return t.beta.norm() <= radius * (1.0 + 1e-12) &&
           t.lambda >= lambda_thr(problem, t.beta) + eta - 1e-9;
  };
  const Steps steps = [schedule](long k) {
    const double a = schedule.at(k);
    return std::make_pair(a, a);
  };
  const Decision start = options.start.value_or(Decision{Vector::Zero(problem.dim()), eta + 1.0});
  RunTrace trace = run_engine(problem, "sgd_nonsmooth", options, start, project, inside,
                              subgradient_oracle(problem, schedule, options), steps, false);
  if (inexact > 0) {
    trace.warnings.push_back(std::to_string(inexact) + " projections onto U_eta were approximate");
  }
  return trace;
}

RunTrace sgd_two_timescale(const DroProblem& problem, const ConstantsBundle& consts,
                           const StepSchedule& beta_schedule, const StepSchedule& lambda_schedule,
                           const SgdOptions& options) {
  constexpr double kOpenLo = 0.5 + 1e-12;
  constexpr double kOpenHi = 1.0 - 1e-12;
  beta_schedule.validate(kOpenLo, kOpenHi);
  lambda_schedule.validate(kOpenLo, kOpenHi);
  if (!(beta_schedule.tau > lambda_schedule.tau)) {
    throw ConfigError("two-timescale SGD needs tau_beta > tau_lambda so that the beta steps vanish "
                      "relative to the lambda steps");
  }
  if (!problem.loss().smooth()) throw ConfigError("two-timescale SGD needs a twice differentiable loss");
  SgdOptions opts = options;
  opts.xi = 0.0;
  const double radius = problem.r_beta();
  const Projector project = [&consts, radius](const Decision& t) { return project_W(t, consts, radius); };
  const Membership inside = [&consts](const Decision& t) { return in_W(t, consts, 1e-9); };
  const Steps steps = [beta_schedule, lambda_schedule](long k) {
    return std::make_pair(beta_schedule.at(k), lambda_schedule.at(k));
  };
  return run_engine(problem, "sgd_two_timescale", opts,
                    opts.start.value_or(default_start_W(problem, consts)), project, inside,
                    smooth_oracle(problem, beta_schedule, opts, consts.phi_min), steps, false);
}

RunTrace sgd_nonrobust(const DroProblem& problem, const StepSchedule& schedule,
                       const SgdOptions& options) {
  schedule.validate();
  const DroProblem plain = problem.with_delta(0.0);
  const double radius = problem.r_beta();
  const Projector project = [radius](const Decision& t) { return Decision{clip_ball(t.beta, radius), 0.0}; };
  const Membership inside = [radius](const Decision& t) { return t.beta.norm() <= radius * (1.0 + 1e-12); };
  const Steps steps = [schedule](long k) {
    const double a = schedule.at(k);
    return std::make_pair(a, a);
  };
  const Decision start{options.start ? options.start->beta : Vector::Zero(problem.dim()), 0.0};
  // δ = 0 is stored on a copy; the oracles capture the problem by reference,
  // so the run happens inside this scope.
  const GradientOracle oracle = subgradient_oracle(plain, schedule, options);
  return run_engine(plain, "sgd_nonrobust", options, start, project, inside, oracle, steps, true);
}

LineSearchResult line_search_outer(const DroProblem& problem, const ConstantsBundle& consts,
                                   long inner_iterations, double lambda_tol, std::uint64_t seed,
                                   const StepSchedule& schedule) {
  if (!(lambda_tol > 0.0)) throw ConfigError("lambda_tol must be > 0");
  if (inner_iterations < 1) throw ConfigError("inner_iterations must be >= 1");
  schedule.validate();
  LineSearchResult result;
  int probe_index = 0;

  auto h = [&](double lambda, Vector& beta_out) {
    const double radius = consts.K1 > 0.0 ? std::min(problem.r_beta(), lambda / consts.K1) : problem.r_beta();
    SgdOptions opts;
    opts.iterations = inner_iterations;
    opts.seed = seed + static_cast<std::uint64_t>(probe_index++);
    opts.trace_points = 1;
    const Projector project = [radius, lambda](const Decision& t) { return Decision{clip_ball(t.beta, radius), lambda}; };
    const Membership inside = [radius](const Decision& t) { return t.beta.norm() <= radius * (1.0 + 1e-12); };
    const Steps steps = [schedule](long k) { return std::make_pair(schedule.at(k), 0.0); };
    GradientOracle oracle = problem.loss().smooth() ? smooth_oracle(problem, schedule, opts, std::nullopt)
                                                    : subgradient_oracle(problem, schedule, opts);
    const RunTrace run = run_engine(problem, "line_search_inner", opts, Decision{Vector::Zero(problem.dim()), lambda},
                                    project, inside, oracle, steps, true);
    beta_out = run.final_theta_bar.beta;
    const double value = run.checkpoints.back().f_delta;
    result.probes.emplace_back(lambda, value);
    return value;
  };

  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = 0.0;
  double hi = consts.lambda_cap();
  double c = hi - phi * (hi - lo);
  double d = lo + phi * (hi - lo);
  Vector bc;
  Vector bd;
  double fc = h(c, bc);
  double fd = h(d, bd);
  while (hi - lo > lambda_tol) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      bd = bc;
      c = hi - phi * (hi - lo);
      fc = h(c, bc);
    } else {
      lo = c;
      c = d;
      fc = fd;
      bc = bd;
      d = lo + phi * (hi - lo);
      fd = h(d, bd);
    }
    result.widths.push_back(hi - lo);
    if (result.widths.size() > 200) break;
  }
  if (fc <= fd) {
    result.lambda_star = c;
    result.beta_star = bc;
    result.value = fc;
  } else {
    result.lambda_star = d;
    result.beta_star = bd;
    result.value = fd;
  }
  return result;
}

double mean_g2a(const DroProblem& problem, const Decision& theta, const InnerOptions& options) {
  double sum = 0.0;
  for (int i = 0; i < problem.n(); ++i) {
    const InnerSolution sol = inner_maximize(problem, theta, i, options);
    sum += sol.g * sol.g * sol.a;
  }
  return sum / problem.n();
}

LambdaStar solve_lambda_star(const DroProblem& problem, const Vector& beta, double tol,
                             const InnerOptions& options) {
  LambdaStar out;
  if (beta.squaredNorm() == 0.0 || problem.delta() == 0.0) {
    out.lambda = 0.0;
    out.boundary = beta.squaredNorm() == 0.0 ? RootBoundary::none : RootBoundary::lower;
    return out;
  }
  const LambdaBracket bracket = lambda_bracket(problem, beta);
  // λ has to clear the effective-domain threshold for every inner problem to be finite.
  const double thr = lambda_thr(problem, beta);
  double lo = std::max(bracket.lower, thr > 0.0 ? thr * (1.0 + 1e-12) + 1e-300 : 0.0);
  if (lo <= 0.0) lo = std::numeric_limits<double>::min();
  double hi = bracket.upper;

  auto probe = [&](double lambda) {
    const double v = mean_g2a(problem, Decision{beta, lambda}, options);
    out.probes.emplace_back(lambda, v);
    return v;
  };

  double f_lo = probe(lo);
  if (f_lo <= 1.0) {
    out.lambda = lo;
    out.residual = std::abs(f_lo - 1.0);
    out.boundary = f_lo < 1.0 - tol ? RootBoundary::lower : RootBoundary::none;
    return out;
  }
  if (!std::isfinite(hi)) {
    hi = std::max(2.0 * lo, 1.0);
    for (int it = 0; it < 200 && probe(hi) > 1.0; ++it) hi *= 2.0;
  }
  double f_hi = probe(hi);
  if (f_hi >= 1.0) {
    out.lambda = hi;
    out.residual = std::abs(f_hi - 1.0);
    out.boundary = f_hi > 1.0 + tol ? RootBoundary::upper : RootBoundary::none;
    return out;
  }
  double mid = 0.5 * (lo + hi);
  double f_mid = f_lo;
  for (int it = 0; it < 300; ++it) {
    mid = 0.5 * (lo + hi);
    f_mid = probe(mid);
    if (std::abs(f_mid - 1.0) <= tol) break;
    if (f_mid > 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  out.lambda = mid;
  out.residual = std::abs(f_mid - 1.0);

  auto sorted = out.probes;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t j = 1; j < sorted.size(); ++j) {
    if (sorted[j].second > sorted[j - 1].second * (1.0 + 1e-9) + 1e-12) out.monotone = false;
  }
  return out;
}

RateFit rate_diagnostic(const RunTrace& trace, double f_star, long k_min, long k_max) {
  RateFit fit;
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& c : trace.checkpoints) {
    if (c.k < k_min || c.k > k_max) continue;
    const double gap = c.f_delta - f_star;
    if (!(gap > 0.0) || !std::isfinite(gap)) {
      ++fit.excluded;
      continue;
    }
    xs.push_back(std::log(static_cast<double>(c.k)));
    ys.push_back(std::log(gap));
  }
  fit.used = static_cast<int>(xs.size());
  if (xs.size() < 2) return fit;
  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    mx += xs[j];
    my += ys[j];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    sxx += (xs[j] - mx) * (xs[j] - mx);
    sxy += (xs[j] - mx) * (ys[j] - my);
  }
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

}  // namespace otdro
