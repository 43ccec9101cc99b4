#include "otdro/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "otdro/error.hpp"
#include "otdro/optimizer.hpp"

namespace otdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

InnerOptions oracle_inner() {
  InnerOptions o;
  o.cuts = 80;
  return o;
}

double f_at(const DroProblem& problem, const Vector& stacked, const InnerOptions& inner) {
  return f_delta(Decision::from_stacked(stacked), problem, inner);
}


Vector clip_ball(const Vector& beta, double radius) {
  const double norm = beta.norm();
  return norm <= radius ? beta : Vector(beta * (radius / norm));
}

/// λ(β) = argmin of λ -> f_δ(β, λ) over the W slice [K1‖β‖, K2 R_β].
Decision eliminate_lambda(const DroProblem& problem, const ConstantsBundle& consts, const Vector& beta,
                          const InnerOptions& inner) {
  const double root = solve_lambda_star(problem, beta, 1e-12, inner).lambda;
  return Decision{beta, std::clamp(root, consts.K1 * beta.norm(), consts.lambda_cap())};
}

Decision reduced_descent(const DroProblem& problem, const ConstantsBundle& consts, int iterations, double tol,
                         const InnerOptions& inner, long* evaluations) {
  const double radius = problem.r_beta();
  Decision x = eliminate_lambda(problem, consts, Vector::Zero(problem.dim()), inner);
  double fx = f_delta(x, problem, inner);
  double step = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const SubgradientSample g = grad_f_delta(x, problem, inner);
    Vector d = g.d_beta;
    const double norm = x.beta.norm();
    // On the cone edge λ moves with ‖β‖.
    if (norm > 0.0 && x.lambda <= consts.K1 * norm * (1.0 + 1e-12)) d += g.d_lambda * consts.K1 * x.beta / norm;
    bool accepted = false;
    Decision next;
    double fn = kInf;
    for (int back = 0; back < 60; ++back) {
      next = eliminate_lambda(problem, consts, clip_ball(x.beta - step * d, radius), inner);
      fn = f_delta(next, problem, inner);
      ++*evaluations;
      if (fn <= fx - (next.beta - x.beta).squaredNorm() / (2.0 * step)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double moved = (next.beta - x.beta).norm();
    x = next;
    fx = fn;
    step *= 2.0;
    if (moved <= tol * (1.0 + x.beta.norm())) break;
  }
  return x;
}

}  // namespace

OracleReport make_report(std::string quantity, double oracle_value, double fast_value,
                         std::map<std::string, double> parameters) {
  OracleReport r;
  r.quantity = std::move(quantity);
  r.oracle_value = oracle_value;
  r.fast_value = fast_value;
  r.abs_error = std::abs(oracle_value - fast_value);
  r.rel_error = r.abs_error / std::max(std::abs(oracle_value), 1e-300);
  r.parameters = std::move(parameters);
  return r;
}

GridMax grid_inner_max(const DroProblem& problem, const Decision& theta, int i, int points) {
  auto F = [&](double gamma) { return eval_F(problem, gamma, theta, i); };
  const double a = problem.cost().quadratic_form(i, theta.beta);
  GridMax out;
  if (a == 0.0 || problem.delta() == 0.0) {
    out.value = F(0.0);
    return out;
  }
  const double f0 = F(0.0);
  const double u0 = theta.beta.dot(problem.data().point(i));
  const double slope0 = std::abs(problem.loss().dplus(u0, problem.data().label(i)));
  double width = std::max(slope0 / std::max(theta.lambda, 1e-300), 1e-6);
  for (int it = 0;; ++it) {
    if (it > 200) throw NumericalError("grid_inner_max: F does not decay on any tested interval");
    const bool left = F(-width) < f0 && F(-width) < F(-0.5 * width);
    const bool right = F(width) < f0 && F(width) < F(0.5 * width);
    if (left && right) break;
    width *= 2.0;
  }
  out.half_width = width;

  const int m = std::max(points, 3);
  double best_g = 0.0;
  double best_v = f0;
  for (int j = 0; j < m; ++j) {
    const double gamma = -width + 2.0 * width * j / (m - 1);
    const double v = F(gamma);
    if (v > best_v) {
      best_v = v;
      best_g = gamma;
    }
  }
  // One Newton step on finite differences, kept only when it helps.
  const double spacing = 2.0 * width / (m - 1);
  const double h = std::max(2.0 * spacing, 1e-6 * (1.0 + std::abs(best_g)));
  const double fp = F(best_g + h);
  const double fm = F(best_g - h);
  const double d1 = (fp - fm) / (2.0 * h);
  const double d2 = (fp - 2.0 * best_v + fm) / (h * h);
  if (d2 < 0.0) {
    const double step = -d1 / d2;
    if (std::abs(step) <= spacing) {
      const double cand = best_g + step;
      const double v = F(cand);
      if (v >= best_v) {
        best_g = cand;
        best_v = v;
      }
    }
  }
  out.g = best_g;
  out.value = best_v;
  return out;
}

FdGradient fd_gradient(const Decision& theta, const DroProblem& problem, std::optional<double> h) {
  const Vector x = theta.stacked();
  const double step = h ? *h : 1e-5 * (1.0 + x.norm());
  const InnerOptions inner = oracle_inner();
  Vector grad(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector plus = x;
    Vector minus = x;
    plus(j) += step;
    minus(j) -= step;
    grad(j) = (f_at(problem, plus, inner) - f_at(problem, minus, inner)) / (2.0 * step);
  }
  return FdGradient{grad.head(x.size() - 1), grad(x.size() - 1)};
}

GridMin grid_min_fdelta(const DroProblem& problem, const Vector& beta_lo, const Vector& beta_hi,
                        double lambda_lo, double lambda_hi, int resolution, int refinements) {
  const int d = problem.dim();
  if (d > 2) throw ConfigError("grid_min_fdelta supports d <= 2");
  if (beta_lo.size() != d || beta_hi.size() != d) throw ConfigError("grid_min_fdelta: box dimension mismatch");
  if (resolution < 2) throw ConfigError("grid_min_fdelta: resolution must be >= 2");
  const InnerOptions inner = oracle_inner();

  Vector lo(d + 1);
  Vector hi(d + 1);
  lo << beta_lo, lambda_lo;
  hi << beta_hi, lambda_hi;
  const Vector outer_lo = lo;
  const Vector outer_hi = hi;

  GridMin best;
  best.f_star = kInf;
  Vector best_x = 0.5 * (lo + hi);
  for (int round = 0; round <= refinements; ++round) {
    const int axes = d + 1;
    long total = 1;
    for (int k = 0; k < axes; ++k) total *= resolution;
    for (long idx = 0; idx < total; ++idx) {
      Vector x(axes);
      long rest = idx;
      for (int k = 0; k < axes; ++k) {
        const long j = rest % resolution;
        rest /= resolution;
        x(k) = lo(k) + (hi(k) - lo(k)) * static_cast<double>(j) / (resolution - 1);
      }
      const double v = f_at(problem, x, inner);
      ++best.evaluations;
      if (v < best.f_star) {
        best.f_star = v;
        best_x = x;
      }
    }
    // Zoom to two grid spacings around the incumbent.
    for (int k = 0; k < axes; ++k) {
      const double span = 2.0 * (hi(k) - lo(k)) / (resolution - 1);
      lo(k) = std::max(outer_lo(k), best_x(k) - span);
      hi(k) = std::min(outer_hi(k), best_x(k) + span);
    }
  }
  best.theta = Decision::from_stacked(best_x);
  return best;
}

double primal_bound(const DroProblem& problem, const Vector& beta, const Matrix& support) {
  if (support.rows() != problem.dim() || support.cols() < 1) {
    throw ConfigError("primal_bound: support must have one column per candidate location");
  }
  const int n = problem.n();
  const auto& data = problem.data();
  struct Segment {
    double slope;
    double length;
  };
  std::vector<Segment> segments;
  double base_value = 0.0;
  double base_cost = 0.0;
  for (int i = 0; i < n; ++i) {
    struct Pt {
      double c;
      double v;
    };
    std::vector<Pt> pts;
    for (Eigen::Index j = 0; j < support.cols(); ++j) {
      const Vector z = support.col(j);
      pts.push_back({problem.cost().cost(i, data.point(i), z), problem.loss().value(beta.dot(z), data.label(i))});
    }
    std::sort(pts.begin(), pts.end(), [](const Pt& l, const Pt& r) { return l.c < r.c || (l.c == r.c && l.v > r.v); });
    // Upper concave envelope starting from the cheapest location.
    std::vector<Pt> hull;
    for (const auto& p : pts) {
      if (!hull.empty() && p.c == hull.back().c) continue;
      if (!hull.empty() && p.v <= hull.back().v) continue;
      while (hull.size() >= 2) {
        const Pt& o = hull[hull.size() - 2];
        const Pt& q = hull.back();
        if ((q.v - o.v) * (p.c - o.c) <= (p.v - o.v) * (q.c - o.c)) {
          hull.pop_back();
        } else {
          break;
        }
      }
      hull.push_back(p);
    }
    base_value += hull.front().v;
    base_cost += hull.front().c;
    for (std::size_t k = 1; k < hull.size(); ++k) {
      const double len = hull[k].c - hull[k - 1].c;
      segments.push_back({(hull[k].v - hull[k - 1].v) / len, len});
    }
  }
  double budget = n * problem.delta() - base_cost;
  if (budget < -1e-12 * (1.0 + n * problem.delta())) {
    throw ConfigError("primal_bound: no transport plan on this grid fits the budget");
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const Segment& l, const Segment& r) { return l.slope > r.slope; });
  double value = base_value;
  for (const auto& s : segments) {
    if (budget <= 0.0) break;
    const double used = std::min(budget, s.length);
    value += s.slope * used;
    budget -= used;
  }
  return value / n;
}

std::vector<HessianProbe> hessian_probe(const DroProblem& problem, const ConstantsBundle& consts,
                                        const std::vector<Decision>& thetas, double h) {
  const InnerOptions inner = oracle_inner();
  std::vector<HessianProbe> out;
  for (const auto& theta : thetas) {
    HessianProbe p;
    p.theta = theta;
    const Vector x = theta.stacked();
    const Eigen::Index m = x.size();
    const double f0 = f_at(problem, x, inner);
    Matrix hess(m, m);
    bool ok = std::isfinite(f0);
    for (Eigen::Index j = 0; j < m && ok; ++j) {
      for (Eigen::Index k = j; k < m && ok; ++k) {
        double v;
        if (j == k) {
          Vector xp = x;
          Vector xm = x;
          xp(j) += h;
          xm(j) -= h;
          const double fp = f_at(problem, xp, inner);
          const double fm = f_at(problem, xm, inner);
          v = (fp - 2.0 * f0 + fm) / (h * h);
        } else {
          double acc = 0.0;
          for (int sj : {1, -1}) {
            for (int sk : {1, -1}) {
              Vector y = x;
              y(j) += sj * h;
              y(k) += sk * h;
              acc += sj * sk * f_at(problem, y, inner);
            }
          }
          v = acc / (4.0 * h * h);
        }
        if (!std::isfinite(v)) ok = false;
        hess(j, k) = v;
        hess(k, j) = v;
      }
    }
    if (!ok) {
      p.skipped = true;
      out.push_back(p);
      continue;
    }
    p.min_eigenvalue = Eigen::SelfAdjointEigenSolver<Matrix>(hess, Eigen::EigenvaluesOnly).eigenvalues()(0);
    const Matrix block = hess.topLeftCorner(m - 1, m - 1);
    p.min_eigenvalue_beta = Eigen::SelfAdjointEigenSolver<Matrix>(block, Eigen::EigenvaluesOnly).eigenvalues()(0);
    // Chord modulus along the eigenvector of the smallest eigenvalue.
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(hess);
    const Vector dir = eig.eigenvectors().col(0);
    const double t = 10.0 * h;
    const double fa = f_at(problem, x + t * dir, inner);
    const double fb = f_at(problem, x - t * dir, inner);
    p.chord_modulus = 8.0 * (0.5 * fa + 0.5 * fb - f0) / (4.0 * t * t);
    p.beta_curvature_bound = theta.lambda > 0.0 ? problem.sqrt_delta() * consts.kappa0 / theta.lambda : 0.0;
    out.push_back(p);
  }
  return out;
}

GridMin reference_minimize(const DroProblem& problem, const ConstantsBundle& consts, int iterations,
                           double tol) {
  const bool plain = problem.delta() == 0.0;
  const double radius = problem.r_beta();
  auto project = [&](const Decision& t) {
    if (plain) {
      const double norm = t.beta.norm();
      return Decision{norm <= radius ? t.beta : Vector(t.beta * (radius / norm)), 0.0};
    }
    return project_W(t, consts, radius);
  };
  const InnerOptions inner = oracle_inner();
  GridMin out;
  Decision x = project(Decision{Vector::Zero(problem.dim()), plain ? 0.0 : 0.5 * consts.lambda_cap()});
  if (!plain) {
    // The λ direction has curvature of order √δ and stalls plain gradient
    // steps, so first descend on the reduced function β -> min_λ f_δ(β, λ)
    // with λ eliminated by the one-dimensional root solve.
    x = reduced_descent(problem, consts, iterations, tol, inner, &out.evaluations);
  }
  double fx = f_delta(x, problem, inner);
  double step = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const SubgradientSample g = grad_f_delta(x, problem, inner);
    bool accepted = false;
    Decision next;
    double fn = kInf;
    for (int back = 0; back < 60; ++back) {
      next = project(Decision{x.beta - step * g.d_beta, plain ? 0.0 : x.lambda - step * g.d_lambda});
      fn = f_delta(next, problem, inner);
      ++out.evaluations;
      const double moved = (next.stacked() - x.stacked()).squaredNorm();
      if (fn <= fx - moved / (2.0 * step)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double moved = (next.stacked() - x.stacked()).norm();
    x = next;
    fx = fn;
    step *= 2.0;
    if (moved <= tol * (1.0 + x.stacked().norm())) break;
  }
  out.theta = x;
  out.f_star = fx;
  return out;
}

}  // namespace otdro
