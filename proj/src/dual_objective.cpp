#include "otdro/dual_objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "otdro/error.hpp"
#include "otdro/regions.hpp"

namespace otdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Sample {
  double u0;
  double y;
  double a;
  double s;
};

Sample sample_at(const DroProblem& problem, const Decision& theta, int i) {
  return Sample{theta.beta.dot(problem.data().point(i)), problem.data().label(i),
                problem.cost().quadratic_form(i, theta.beta), problem.sqrt_delta()};
}

double value_at(const LossSpec& loss, const Sample& s, double gamma, double lambda) {
  return loss.value(s.u0 + gamma * s.s * s.a, s.y) - lambda * s.s * (gamma * gamma * s.a - 1.0);
}

double residual_at(const LossSpec& loss, double u, double y, double lambda, double g) {
  const double target = 2.0 * lambda * g;
  const double lo = loss.dminus(u, y);
  const double hi = loss.dplus(u, y);
  if (target < lo) return lo - target;
  if (target > hi) return target - hi;
  return 0.0;
}

InnerSolution finish(const DroProblem& problem, const Decision& theta, int i, const Sample& s,
                     double g, InnerMethod method, int cuts, bool certified) {
  InnerSolution out;
  out.g = g;
  out.a = s.a;
  out.method = method;
  out.cuts_used = cuts;
  out.certified = certified;
  out.u_tilde = s.u0 + s.s * g * s.a;
  out.lrob = value_at(problem.loss(), s, g, theta.lambda);
  if (g == 0.0) {
    out.x_tilde = problem.data().point(i);
  } else {
    out.x_tilde = problem.data().point(i) + (s.s * g) * problem.cost().inverse_apply(i, theta.beta);
  }
  out.residual = residual_at(problem.loss(), out.u_tilde, s.y, theta.lambda, g);
  return out;
}

// Root of h(γ) = d(u0 + γ√δ a) − 2λγ for a nonincreasing h, by `cuts` halvings.
struct Root {
  double g;
  int cuts;
};

Root bisect_piece(const ScalarFn& deriv, const Sample& s, double lambda, double half_width, int cuts) {
  auto h = [&](double gamma) { return deriv(s.u0 + gamma * s.s * s.a, s.y) - 2.0 * lambda * gamma; };
  const double h0 = h(0.0);
  if (h0 == 0.0) return {0.0, 0};
  const double dir = h0 > 0.0 ? 1.0 : -1.0;
  double width = std::isfinite(half_width) && half_width > 0.0 ? half_width : 1.0;
  int extra = 0;
  while (dir * h(dir * width) > 0.0) {
    width *= 2.0;
    if (++extra > 2000) throw NumericalError("inner bisection: no sign change found");
  }
  double lo = 0.0;
  double hi = width;
  for (int c = 0; c < cuts; ++c) {
    const double mid = 0.5 * (lo + hi);
    if (dir * h(dir * mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {dir * 0.5 * (lo + hi), cuts + extra};
}

bool piece_is_concave(const SmoothPiece& piece, const Sample& s, double lambda) {
  if (!piece.curvature_bound) return false;
  return lambda > 0.5 * *piece.curvature_bound * s.s * s.a;
}

double loss_second(const LossSpec& loss, double u, double y) {
  if (loss.d2) return loss.d2(u, y);
  const double h = 1e-6 * (1.0 + std::abs(u));
  return (loss.dplus(u + h, y) - loss.dminus(u - h, y)) / (2.0 * h);
}

// Local maximizer of F inside [lo, hi]: Newton steps on ∂F/∂γ safeguarded by
// bisection when the derivative changes sign, golden section otherwise.
double polish_local(const LossSpec& loss, const Sample& s, double lambda, double lo, double hi) {
  auto value = [&](double gamma) { return value_at(loss, s, gamma, lambda); };
  auto slope = [&](double gamma) {
    return loss.dplus(s.u0 + gamma * s.s * s.a, s.y) - 2.0 * lambda * gamma;
  };
  if (slope(lo) > 0.0 && slope(hi) < 0.0) {
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(x)); ++it) {
      const double hx = slope(x);
      if (hx == 0.0) return x;
      (hx > 0.0 ? lo : hi) = x;
      const double curvature = loss_second(loss, s.u0 + x * s.s * s.a, s.y) * s.s * s.a - 2.0 * lambda;
      double next = curvature < 0.0 ? x - hx / curvature : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      x = next;
    }
    return x;
  }
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo;
  double b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = value(c);
  double fd = value(d);
  for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = value(d);
    }
  }
  return fc >= fd ? c : d;
}

struct Candidate {
  double g;
  double value;
};

// Interval where F can beat F(0): grown by doubling until F falls below F(0)
// and keeps decreasing outward on both sides.
double fallback_half_width(const LossSpec& loss, const Sample& s, double lambda) {
  const double f0 = value_at(loss, s, 0.0, lambda);
  double width = std::max(1.0, (1.0 + std::abs(s.u0)) / (s.s * s.a));
  for (int it = 0; it < 200; ++it) {
    bool ok = true;
    for (double dir : {-1.0, 1.0}) {
      const double fw = value_at(loss, s, dir * width, lambda);
      const double f2w = value_at(loss, s, 2.0 * dir * width, lambda);
      if (!(fw < f0 && f2w < fw)) ok = false;
    }
    if (ok) return 2.0 * width;
    width *= 2.0;
  }
  throw NumericalError("inner maximization: F is not bounded on any tested interval");
}

std::vector<Candidate> fallback_candidates(const DroProblem& problem, const Decision& theta,
                                           const Sample& s, int grid_points, int restarts) {
  const LossSpec& loss = problem.loss();
  const double width = fallback_half_width(loss, s, theta.lambda);
  const int points = std::max(grid_points, 3) | 1;  // odd count so γ = 0 is a node
  std::vector<double> grid(static_cast<std::size_t>(points));
  std::vector<double> values(grid.size());
  for (int j = 0; j < points; ++j) {
    grid[static_cast<std::size_t>(j)] = -width + 2.0 * width * j / (points - 1);
    if (2 * j == points - 1) grid[static_cast<std::size_t>(j)] = 0.0;
    values[static_cast<std::size_t>(j)] = value_at(loss, s, grid[static_cast<std::size_t>(j)], theta.lambda);
  }
  std::vector<int> peaks;
  for (int j = 1; j + 1 < points; ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (values[k] >= values[k - 1] && values[k] >= values[k + 1]) peaks.push_back(j);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](int l, int r) {
    return values[static_cast<std::size_t>(l)] > values[static_cast<std::size_t>(r)];
  });
  if (static_cast<int>(peaks.size()) > std::max(restarts, 1)) peaks.resize(static_cast<std::size_t>(std::max(restarts, 1)));

  std::vector<Candidate> out;
  for (int j : peaks) {
    const auto k = static_cast<std::size_t>(j);
    const double g = polish_local(loss, s, theta.lambda, grid[k - 1], grid[k + 1]);
    const double v = value_at(loss, s, g, theta.lambda);
    out.push_back(v >= values[k] ? Candidate{g, v} : Candidate{grid[k], values[k]});
  }
  if (out.empty()) out.push_back({0.0, values[static_cast<std::size_t>(points / 2)]});
  std::stable_sort(out.begin(), out.end(), [](const Candidate& l, const Candidate& r) { return l.value > r.value; });
  return out;
}

// Shared by inner_maximize and inner_maximizer_set: per-piece maxima in the
// concave case.
std::optional<std::vector<Candidate>> concave_piece_maxima(const DroProblem& problem, const Decision& theta,
                                                           const Sample& s, const InnerOptions& options,
                                                           int& cuts_used) {
  const LossSpec& loss = problem.loss();
  for (const auto& piece : loss.components) {
    if (!piece_is_concave(piece, s, theta.lambda)) return std::nullopt;
  }
  std::vector<Candidate> out;
  cuts_used = 0;
  const double beta_norm = theta.beta.norm();
  for (const auto& piece : loss.components) {
    const double d0 = std::abs(piece.deriv(s.u0, s.y));
    double half_width;
    if (options.phi_min && *options.phi_min > 0.0) {
      half_width = d0 / (*options.phi_min * beta_norm);
    } else {
      half_width = d0 / (2.0 * theta.lambda - *piece.curvature_bound * s.s * s.a);
    }
    const Root root = bisect_piece(piece.deriv, s, theta.lambda, half_width, options.cuts);
    cuts_used += root.cuts;
    const double piece_value = piece.value(s.u0 + root.g * s.s * s.a, s.y) -
                               theta.lambda * s.s * (root.g * root.g * s.a - 1.0);
    out.push_back({root.g, piece_value});
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& l, const Candidate& r) { return l.value > r.value; });
  return out;
}

void check_feasible(const DroProblem& problem, const Decision& theta, const Sample& s, int i) {
  const double kappa = problem.loss().kappa;
  if (theta.lambda < 0.0 || !(theta.lambda > kappa * s.s * s.a)) {
    throw InfeasibleDomain("lambda = " + std::to_string(theta.lambda) +
                           " is not above the threshold kappa*sqrt(delta)*a = " +
                           std::to_string(kappa * s.s * s.a) + " at sample " + std::to_string(i));
  }
}

}  // namespace

double eval_F(const DroProblem& problem, double gamma, const Decision& theta, int i) {
  return value_at(problem.loss(), sample_at(problem, theta, i), gamma, theta.lambda);
}

Domain classify_domain(const Decision& theta, const DroProblem& problem) {
  const double thr = lambda_thr(problem, theta.beta);
  if (theta.lambda > thr) return Domain::interior;
  if (theta.lambda < thr) return Domain::infeasible;
  return Domain::boundary;
}

const char* to_string(Domain domain) {
  switch (domain) {
    case Domain::interior:
      return "interior";
    case Domain::boundary:
      return "boundary";
    case Domain::infeasible:
      return "infeasible";
  }
  return "?";
}

const char* to_string(InnerMethod method) {
  switch (method) {
    case InnerMethod::bisection:
      return "bisection";
    case InnerMethod::zero_beta:
      return "zero_beta";
    case InnerMethod::nonrobust:
      return "nonrobust";
    case InnerMethod::fallback:
      return "fallback";
  }
  return "?";
}

InnerSolution inner_maximize(const DroProblem& problem, const Decision& theta, int i,
                             const InnerOptions& options) {
  const Sample s = sample_at(problem, theta, i);
  if (s.a == 0.0) return finish(problem, theta, i, s, 0.0, InnerMethod::zero_beta, 0, true);
  if (s.s == 0.0) return finish(problem, theta, i, s, 0.0, InnerMethod::nonrobust, 0, true);
  check_feasible(problem, theta, s, i);

  int cuts = 0;
  if (auto maxima = concave_piece_maxima(problem, theta, s, options, cuts)) {
    return finish(problem, theta, i, s, maxima->front().g, InnerMethod::bisection, cuts, true);
  }
  if (!options.allow_fallback) {
    throw NumericalError("inner maximization is not concave at sample " + std::to_string(i) +
                         " and the fallback is disabled");
  }
  return fallback_maximize(problem, theta, i, options.grid_points, options.newton_restarts);
}

InnerSolution fallback_maximize(const DroProblem& problem, const Decision& theta, int i,
                                int grid_points, int newton_restarts) {
  const Sample s = sample_at(problem, theta, i);
  if (s.a == 0.0) return finish(problem, theta, i, s, 0.0, InnerMethod::zero_beta, 0, true);
  if (s.s == 0.0) return finish(problem, theta, i, s, 0.0, InnerMethod::nonrobust, 0, true);
  check_feasible(problem, theta, s, i);
  const auto candidates = fallback_candidates(problem, theta, s, grid_points, newton_restarts);
  return finish(problem, theta, i, s, candidates.front().g, InnerMethod::fallback, 0, false);
}

std::vector<double> inner_maximizer_set(const DroProblem& problem, const Decision& theta, int i,
                                        const InnerOptions& options, double value_tol) {
  const Sample s = sample_at(problem, theta, i);
  if (s.a == 0.0 || s.s == 0.0) return {0.0};
  check_feasible(problem, theta, s, i);
  int cuts = 0;
  std::vector<Candidate> candidates;
  if (auto maxima = concave_piece_maxima(problem, theta, s, options, cuts)) {
    candidates = *maxima;
  } else {
    candidates = fallback_candidates(problem, theta, s, options.grid_points, options.newton_restarts);
  }
  double best = -kInf;
  for (const auto& c : candidates) best = std::max(best, c.value);
  const double tol = value_tol * (1.0 + std::abs(best));
  std::vector<double> out;
  for (const auto& c : candidates) {
    if (c.value >= best - tol) out.push_back(c.g);
  }
  std::sort(out.begin(), out.end());
  std::vector<double> unique;
  for (double g : out) {
    if (unique.empty() || std::abs(g - unique.back()) > 1e-9 * (1.0 + std::abs(g))) unique.push_back(g);
  }
  return unique;
}

SubgradientSample grad_lrob(const DroProblem& problem, const Decision& theta, int i,
                            const InnerSolution& inner) {
  const double y = problem.data().label(i);
  const double lo = problem.loss().dminus(inner.u_tilde, y);
  const double hi = problem.loss().dplus(inner.u_tilde, y);
  if (lo != hi) {
    throw KinkError("loss has a kink at beta'x_tilde for sample " + std::to_string(i));
  }
  (void)theta;
  SubgradientSample out;
  out.lprime_choice = hi;
  out.d_beta = hi * inner.x_tilde;
  out.d_lambda = -problem.sqrt_delta() * (inner.g * inner.g * inner.a - 1.0);
  return out;
}

SubgradientSample subgrad_lrob(const DroProblem& problem, const Decision& theta, int i,
                               const InnerSolution& inner, std::mt19937_64& rng) {
  (void)theta;
  const double y = problem.data().label(i);
  const double lo = problem.loss().dminus(inner.u_tilde, y);
  const double hi = problem.loss().dplus(inner.u_tilde, y);
  double choice = hi;
  if (lo != hi) choice = std::uniform_real_distribution<double>(lo, hi)(rng);
  SubgradientSample out;
  out.lprime_choice = choice;
  out.d_beta = choice * inner.x_tilde;
  out.d_lambda = problem.sqrt_delta() * (1.0 - inner.g * inner.g * inner.a);
  return out;
}

double f_delta(const Decision& theta, const DroProblem& problem, const InnerOptions& options) {
  if (classify_domain(theta, problem) != Domain::interior && problem.delta() > 0.0 &&
      theta.beta.squaredNorm() > 0.0) {
    return kInf;
  }
  double sum = 0.0;
  try {
    for (int i = 0; i < problem.n(); ++i) sum += inner_maximize(problem, theta, i, options).lrob;
  } catch (const InfeasibleDomain&) {
    return kInf;
  }
  return sum / problem.n();
}

SubgradientSample grad_f_delta(const Decision& theta, const DroProblem& problem,
                               const InnerOptions& options) {
  SubgradientSample total;
  total.d_beta = Vector::Zero(problem.dim());
  for (int i = 0; i < problem.n(); ++i) {
    const InnerSolution inner = inner_maximize(problem, theta, i, options);
    const SubgradientSample g = grad_lrob(problem, theta, i, inner);
    total.d_beta += g.d_beta;
    total.d_lambda += g.d_lambda;
  }
  total.d_beta /= problem.n();
  total.d_lambda /= problem.n();
  return total;
}

double squared_loss_lrob_closed_form(const DroProblem& problem, const Decision& theta, int i) {
  const Sample s = sample_at(problem, theta, i);
  const double denom = theta.lambda - s.s * s.a;
  if (!(denom > 0.0)) throw InfeasibleDomain("closed form needs lambda > sqrt(delta) * a");
  const double r = s.u0 - s.y;
  return theta.lambda * s.s + theta.lambda * r * r / denom;
}

}  // namespace otdro
