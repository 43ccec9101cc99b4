#include "otdro/worstcase.hpp"

#include <algorithm>
#include <cmath>

#include "otdro/error.hpp"
#include "otdro/regions.hpp"

namespace otdro {

namespace {

Vector transported(const DroProblem& problem, const Vector& beta, int i, double g) {
  if (g == 0.0) return problem.data().point(i);
  return problem.data().point(i) + (problem.sqrt_delta() * g) * problem.cost().inverse_apply(i, beta);
}

double subdiff_distance(const LossSpec& loss, double u, double y, double target) {
  const double lo = loss.dminus(u, y);
  const double hi = loss.dplus(u, y);
  if (target < lo) return lo - target;
  if (target > hi) return target - hi;
  return 0.0;
}

void fill_losses(const DroProblem& problem, const Vector& beta, WorstCaseTransport& out) {
  const auto& data = problem.data();
  const int n = problem.n();
  out.loss_before.resize(n);
  out.loss_after.resize(n);
  out.displacement.resize(n);
  for (int i = 0; i < n; ++i) {
    out.loss_before(i) = problem.loss().value(beta.dot(data.point(i)), data.label(i));
    out.loss_after(i) = problem.loss().value(beta.dot(out.x_star.col(i)), data.label(i));
    out.displacement(i) = (out.x_star.col(i) - data.point(i)).norm();
  }
}

}  // namespace

const char* to_string(WorstCaseRegime regime) {
  switch (regime) {
    case WorstCaseRegime::unique:
      return "unique";
    case WorstCaseRegime::randomized:
      return "randomized";
    case WorstCaseRegime::nonexistent:
      return "nonexistent";
    case WorstCaseRegime::constant_loss:
      return "constant_loss";
  }
  return "?";
}

WorstCaseTransport worst_case(const DroProblem& problem, const Vector& beta,
                              const WorstCaseOptions& options) {
  const int n = problem.n();
  const auto& data = problem.data();
  WorstCaseTransport out;
  out.delta = problem.delta();
  out.g = Vector::Zero(n);
  out.x_star = data.points();

  if (beta.squaredNorm() == 0.0 || problem.delta() == 0.0) {
    out.regime = WorstCaseRegime::constant_loss;
    out.interpretation = beta.squaredNorm() == 0.0
                             ? "beta = 0: the loss does not depend on X, every distribution in the "
                               "ambiguity set is worst-case and lambda = 0 attains the minimum"
                             : "delta = 0: the ambiguity set is the baseline distribution";
    fill_losses(problem, beta, out);
    out.worst_value = out.loss_before.mean();
    out.dual_value = out.worst_value;
    return out;
  }

  const LambdaStar ls = solve_lambda_star(problem, beta, options.tol, options.inner);
  out.lambda_star = ls.lambda;
  out.boundary = ls.boundary;
  const double thr = lambda_thr(problem, beta);
  if (problem.loss().kappa > 0.0 && ls.boundary == RootBoundary::lower &&
      ls.lambda <= thr * (1.0 + 1e-9) + 1e-300) {
    out.regime = WorstCaseRegime::nonexistent;
    out.interpretation =
        "lambda* sits on the effective-domain threshold: the worst-case value is approached by "
        "transports escaping to infinity and no worst-case distribution attains it";
    fill_losses(problem, beta, out);
    out.certified = false;
    return out;
  }

  const Decision theta{beta, ls.lambda};
  std::vector<std::vector<double>> sets(static_cast<std::size_t>(n));
  bool unique = true;
  for (int i = 0; i < n; ++i) {
    const InnerSolution sol = inner_maximize(problem, theta, i, options.inner);
    if (!sol.certified) out.certified = false;
    auto& set = sets[static_cast<std::size_t>(i)];
    set = inner_maximizer_set(problem, theta, i, options.inner);
    if (set.empty()) set.push_back(sol.g);
    if (set.size() > 1) unique = false;
  }

  Vector a(n);
  for (int i = 0; i < n; ++i) a(i) = problem.cost().quadratic_form(i, beta);

  if (unique) {
    out.regime = WorstCaseRegime::unique;
    for (int i = 0; i < n; ++i) out.g(i) = sets[static_cast<std::size_t>(i)].front();
    for (int i = 0; i < n; ++i) out.x_star.col(i) = transported(problem, beta, i, out.g(i));
    out.g2a = out.g.cwiseProduct(out.g).dot(a) / n;
    fill_losses(problem, beta, out);
    out.worst_value = out.loss_after.mean();
    out.interpretation = "every sample has a unique maximizer; the transport is deterministic";
  } else {
    out.regime = WorstCaseRegime::randomized;
    Randomization r;
    r.g_minus.resize(n);
    r.g_plus.resize(n);
    for (int i = 0; i < n; ++i) {
      const auto& set = sets[static_cast<std::size_t>(i)];
      auto by_square = [](double l, double rr) { return l * l < rr * rr; };
      r.g_minus(i) = *std::min_element(set.begin(), set.end(), by_square);
      r.g_plus(i) = *std::max_element(set.begin(), set.end(), by_square);
    }
    r.c_lower = r.g_minus.cwiseProduct(r.g_minus).dot(a) / n;
    r.c_upper = r.g_plus.cwiseProduct(r.g_plus).dot(a) / n;
    r.p = r.c_upper > r.c_lower ? std::clamp((r.c_upper - 1.0) / (r.c_upper - r.c_lower), 0.0, 1.0) : 0.0;
    r.x_star_minus = data.points();
    r.x_star_plus = data.points();
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      r.x_star_minus.col(i) = transported(problem, beta, i, r.g_minus(i));
      r.x_star_plus.col(i) = transported(problem, beta, i, r.g_plus(i));
      out.g(i) = r.p * r.g_minus(i) + (1.0 - r.p) * r.g_plus(i);
      out.x_star.col(i) = r.p * r.x_star_minus.col(i) + (1.0 - r.p) * r.x_star_plus.col(i);
      const double y = data.label(i);
      worst += r.p * problem.loss().value(beta.dot(r.x_star_minus.col(i)), y) +
               (1.0 - r.p) * problem.loss().value(beta.dot(r.x_star_plus.col(i)), y);
    }
    out.g2a = r.p * r.c_lower + (1.0 - r.p) * r.c_upper;
    fill_losses(problem, beta, out);
    out.worst_value = worst / n;
    out.interpretation =
        "some samples have several maximizers; X* mixes the extreme maximizers with an independent "
        "Bernoulli choice (x_star and g report the mixture mean)";
    out.randomization = std::move(r);
  }

  out.budget = problem.delta() * out.g2a;
  for (int i = 0; i < n; ++i) {
    const double u = beta.dot(problem.data().point(i)) + problem.sqrt_delta() * out.g(i) * a(i);
    if (out.regime == WorstCaseRegime::unique) {
      out.max_residual = std::max(out.max_residual,
                                  subdiff_distance(problem.loss(), u, data.label(i), 2.0 * ls.lambda * out.g(i)));
    }
  }
  InnerOptions eval = options.inner;
  out.dual_value = f_delta(theta, problem, eval);
  return out;
}

ComparativeStatics comparative_statics(const DroProblem& problem, const Vector& beta,
                                       std::vector<double> delta_grid, std::optional<double> delta1,
                                       const WorstCaseOptions& options) {
  std::sort(delta_grid.begin(), delta_grid.end());
  ComparativeStatics out;
  const int n = problem.n();
  std::vector<Vector> directions;
  for (int i = 0; i < n; ++i) directions.push_back(problem.cost().inverse_apply(i, beta));

  for (double delta : delta_grid) {
    if (!(delta >= 0.0)) throw ConfigError("delta grid entries must be >= 0");
    if (delta1 && delta >= *delta1) out.flagged.push_back(delta);
    WorstCaseTransport t = worst_case(problem.with_delta(delta), beta, options);
    for (int i = 0; i < n; ++i) {
      const Vector move = t.x_star.col(i) - problem.data().point(i);
      const double norms = move.norm() * directions[static_cast<std::size_t>(i)].norm();
      if (norms > 0.0) {
        out.min_cosine = std::min(out.min_cosine, std::abs(move.dot(directions[static_cast<std::size_t>(i)])) / norms);
      }
      if (!out.transports.empty()) {
        const double before = out.transports.back().displacement(i);
        if (t.displacement(i) < before - 1e-12 * (1.0 + before)) ++out.monotonicity_violations;
      }
    }
    out.transports.push_back(std::move(t));
  }
  return out;
}

}  // namespace otdro
