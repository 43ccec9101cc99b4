#include "otdro/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "otdro/error.hpp"

namespace otdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector clip_to_ball(const Vector& beta, double radius) {
  const double norm = beta.norm();
  if (norm <= radius) return beta;
  return beta * (radius / norm);
}

double second_derivative(const LossSpec& loss, double u, double y) {
  if (loss.d2) return loss.d2(u, y);
  const double h = 1e-6 * (1.0 + std::abs(u));
  return (loss.dplus(u + h, y) - loss.dplus(u - h, y)) / (2.0 * h);
}

Vector grad_mean_squared_derivative(const DroProblem& problem, const Vector& beta) {
  const auto& data = problem.data();
  Vector grad = Vector::Zero(problem.dim());
  for (int i = 0; i < problem.n(); ++i) {
    const double u = beta.dot(data.point(i));
    const double y = data.label(i);
    grad += (2.0 * problem.loss().dplus(u, y) * second_derivative(problem.loss(), u, y)) *
            data.point(i);
  }
  return grad / problem.n();
}

// Projected gradient steps on β -> E[l'(β'X)^2] over the ball; sign = +1
// ascends, -1 descends. Backtracking keeps every accepted step monotone.
Vector polish(const DroProblem& problem, Vector beta, double sign, int steps) {
  const double radius = problem.r_beta();
  double value = mean_squared_derivative(problem, beta);
  double step = radius;
  for (int it = 0; it < steps; ++it) {
    const Vector grad = grad_mean_squared_derivative(problem, beta);
    if (grad.norm() == 0.0) break;
    bool moved = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Vector candidate = clip_to_ball(beta + sign * step * grad / grad.norm(), radius);
      const double cand_value = mean_squared_derivative(problem, candidate);
      if (sign * (cand_value - value) > 0.0) {
        beta = candidate;
        value = cand_value;
        moved = true;
        step = std::min(2.0 * step, radius);
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return beta;
}

// Euclidean projection of (β, λ) onto {λ >= c β'Pβ + η} for P symmetric positive definite.
Decision project_quadratic_epigraph(const Decision& theta, const Eigen::SelfAdjointEigenSolver<Matrix>& eig,
                                    const Matrix& p, double c, double eta) {
  const double value = c * theta.beta.dot(p * theta.beta) + eta;
  if (theta.lambda >= value) return theta;
  const Vector b = eig.eigenvectors().transpose() * theta.beta;
  const Vector& d = eig.eigenvalues();
  auto shrunk = [&](double mu) {
    Vector out(b.size());
    for (Eigen::Index j = 0; j < b.size(); ++j) out(j) = b(j) / (1.0 + mu * c * d(j));
    return out;
  };
  auto excess = [&](double mu) {
    const Vector s = shrunk(mu);
    return theta.lambda + 0.5 * mu - c * s.cwiseProduct(s).dot(d) - eta;
  };
  double lo = 0.0;
  double hi = 1.0;
  while (excess(hi) < 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-17 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  Decision out;
  out.beta = eig.eigenvectors() * shrunk(0.5 * (lo + hi));
  out.lambda = c * out.beta.dot(p * out.beta) + eta;
  return out;
}

// Dykstra's alternating projections; converges to the projection onto the
// intersection.
Projected dykstra(const Decision& theta, const std::vector<std::function<Decision(const Decision&)>>& sets) {
  Vector x = theta.stacked();
  std::vector<Vector> increments(sets.size(), Vector::Zero(x.size()));
  for (int sweep = 0; sweep < 20000; ++sweep) {
    const Vector start = x;
    for (std::size_t j = 0; j < sets.size(); ++j) {
      const Vector shifted = x + increments[j];
      const Vector projected = sets[j](Decision::from_stacked(shifted)).stacked();
      increments[j] = shifted - projected;
      x = projected;
    }
    if ((x - start).norm() <= 1e-15 * (1.0 + x.norm())) {
      return {Decision::from_stacked(x), true};
    }
  }
  return {Decision::from_stacked(x), false};
}

}  // namespace

double lambda_thr(const DroProblem& problem, const Vector& beta) {
  if (problem.loss().kappa == 0.0) return 0.0;
  return problem.loss().kappa * problem.sqrt_delta() *
         problem.cost().max_quadratic_form(beta, problem.n());
}

double lambda_thr_prime(const DroProblem& problem, const Vector& beta) {
  if (!problem.loss().M) throw ConfigError("lambda_thr_prime needs a curvature bound M");
  return 0.5 * *problem.loss().M * problem.sqrt_delta() *
         problem.cost().max_quadratic_form(beta, problem.n());
}

double mean_squared_derivative(const DroProblem& problem, const Vector& beta) {
  const auto& data = problem.data();
  double sum = 0.0;
  for (int i = 0; i < problem.n(); ++i) {
    const double d = problem.loss().dplus(beta.dot(data.point(i)), data.label(i));
    sum += d * d;
  }
  return sum / problem.n();
}

LambdaBracket lambda_bracket(const DroProblem& problem, const Vector& beta) {
  const double norm = beta.norm();
  const double root = std::sqrt(mean_squared_derivative(problem, beta));
  const auto& cost = problem.cost();
  LambdaBracket bracket;
  bracket.lower = 0.5 * norm * root / std::sqrt(cost.rho_max());
  if (problem.loss().M) {
    bracket.upper = norm * root / std::sqrt(cost.rho_min()) +
                    0.5 * problem.sqrt_delta() * *problem.loss().M * norm * norm / cost.rho_min();
  } else {
    bracket.upper = kInf;
  }
  return bracket;
}

LBounds estimate_L_bounds(const DroProblem& problem, int sphere_samples, int refine_steps,
                          std::uint64_t seed) {
  if (sphere_samples < 1) throw ConfigError("estimate_L_bounds: sphere_samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  struct Candidate {
    Vector beta;
    double value;
  };
  std::vector<Candidate> candidates;
  const Vector origin = Vector::Zero(problem.dim());
  candidates.push_back({origin, mean_squared_derivative(problem, origin)});
  for (int s = 0; s < sphere_samples; ++s) {
    Vector dir(problem.dim());
    for (Eigen::Index j = 0; j < dir.size(); ++j) dir(j) = normal(rng);
    if (dir.norm() == 0.0) continue;
    const Vector beta = dir * (problem.r_beta() / dir.norm());
    candidates.push_back({beta, mean_squared_derivative(problem, beta)});
  }

  auto by_value = [](const Candidate& a, const Candidate& b) { return a.value < b.value; };
  std::sort(candidates.begin(), candidates.end(), by_value);
  const std::size_t starts = std::min<std::size_t>(3, candidates.size());

  double lower = candidates.front().value;
  double upper = candidates.back().value;
  if (refine_steps > 0) {
    for (std::size_t k = 0; k < starts; ++k) {
      const Vector low = polish(problem, candidates[k].beta, -1.0, refine_steps);
      lower = std::min(lower, mean_squared_derivative(problem, low));
      const Vector high = polish(problem, candidates[candidates.size() - 1 - k].beta, 1.0, refine_steps);
      upper = std::max(upper, mean_squared_derivative(problem, high));
    }
  }
  if (!(lower > 1e-14)) {
    throw NumericalError(
        "estimated lower bound of E[l'(b'X)^2] is not positive: l'(b'X) vanishes for some b");
  }
  return LBounds{lower, upper, true};
}

LBounds supplied_L_bounds(double lower, double upper) {
  if (!(lower > 0.0) || !(upper >= lower)) throw ConfigError("need 0 < L_lower <= L_upper");
  return LBounds{lower, upper, false};
}

ConstantsBundle build_constants(const DroProblem& problem, const LBounds& bounds) {
  if (!problem.loss().M) {
    throw ConfigError("constants need a loss with a bounded second derivative");
  }
  if (!(bounds.lower > 0.0) || bounds.upper < bounds.lower) {
    throw ConfigError("constants need 0 < L_lower <= L_upper");
  }
  const double M = *problem.loss().M;
  const double rho_min = problem.cost().rho_min();
  const double rho_max = problem.cost().rho_max();
  const double radius = problem.r_beta();
  const double sd = problem.sqrt_delta();

  ConstantsBundle c;
  c.L_lower = bounds.lower;
  c.L_upper = bounds.upper;
  c.estimated = bounds.estimated;
  c.r_beta = radius;
  c.K1 = 0.5 * std::sqrt(bounds.lower / rho_max);
  c.K2 = 0.5 * sd * M * radius / rho_min + std::sqrt(bounds.upper / rho_min);
  c.K2_table = sd * M * radius / rho_min + bounds.upper / std::sqrt(rho_min);
  c.delta0 = rho_min * rho_min * bounds.lower / (radius * radius * M * M * rho_max);
  c.phi_min = std::sqrt(bounds.lower / rho_max) - sd * radius * M / rho_min;
  c.kappa0 = 0.5 * bounds.lower / rho_max;
  if (problem.nondegeneracy()) {
    const auto& nd = *problem.nondegeneracy();
    const double nondeg = nd.c1 * nd.c1 * nd.c2 * nd.c2 * nd.p * nd.p * rho_min * rho_min /
                          rho_max * bounds.lower / (bounds.upper * bounds.upper) / 256.0;
    c.delta1 = std::min(c.delta0 / 4.0, nondeg);
  }
  c.smooth_regime = problem.delta() < c.delta0;
  return c;
}

double estimate_nondegeneracy_p(const DroProblem& problem, double c1, double c2, int directions,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto& data = problem.data();
  double worst = 1.0;
  for (int s = 0; s < directions; ++s) {
    Vector dir(problem.dim());
    for (Eigen::Index j = 0; j < dir.size(); ++j) dir(j) = normal(rng);
    if (dir.norm() == 0.0) continue;
    dir /= dir.norm();
    for (int k = 1; k <= 8; ++k) {
      const Vector beta = dir * (problem.r_beta() * k / 8.0);
      int hits = 0;
      for (int i = 0; i < problem.n(); ++i) {
        const double u = beta.dot(data.point(i));
        if (std::abs(problem.loss().dplus(u, data.label(i))) > c1 &&
            std::abs(u) > c2 * beta.norm()) {
          ++hits;
        }
      }
      worst = std::min(worst, static_cast<double>(hits) / problem.n());
    }
  }
  return worst;
}

bool in_W(const Decision& theta, const ConstantsBundle& consts, double slack) {
  const double norm = theta.beta.norm();
  return norm <= consts.r_beta + slack && consts.K1 * norm <= theta.lambda + slack &&
         theta.lambda <= consts.lambda_cap() + slack;
}

bool in_V(const Decision& theta, const ConstantsBundle& consts, double slack) {
  const double norm = theta.beta.norm();
  return norm <= consts.r_beta + slack && consts.K1 * norm <= theta.lambda + slack &&
         theta.lambda <= consts.K2 * norm + slack;
}

Decision project_W(const Decision& theta, const ConstantsBundle& consts, double r_beta) {
  const double k1 = consts.K1;
  const double cap = consts.K2 * r_beta;
  const double r = theta.beta.norm();
  const double lam = theta.lambda;

  Decision out;
  if (r == 0.0) {
    return Decision{theta.beta, std::clamp(lam, 0.0, cap)};
  }
  const Vector unit = theta.beta / r;
  if (k1 * r <= lam && lam <= cap) {
    out = theta;
  } else if (r <= cap / k1 && lam > cap) {
    out = Decision{theta.beta, cap};
  } else if (lam < -r / k1) {
    out = Decision{Vector::Zero(theta.beta.size()), 0.0};
  } else if (lam < std::min(k1 * r, cap * (1.0 + 1.0 / (k1 * k1)) - r / k1)) {
    // Foot of the perpendicular on the cone boundary λ = K1‖β‖.
    const double t = (r + k1 * lam) / (1.0 + k1 * k1);
    out = Decision{t * unit, k1 * t};
  } else {
    out = Decision{(cap / k1) * unit, cap};
  }

  // The ball constraint can only bind when the cone-and-cap projection lands
  // outside it; the nearest point then sits on the sphere along β.
  if (out.beta.norm() > r_beta) {
    out.beta = r_beta * unit;
    out.lambda = std::clamp(lam, std::min(k1 * r_beta, cap), cap);
  }
  return out;
}

RadialPoint project_radial(double r, double lambda, const std::function<double(double)>& lower,
                           const std::function<double(double)>& lower_slope, double t_max,
                           double upper) {
  if (lower(0.0) > upper) throw ConfigError("project_radial: empty region");
  if (r <= t_max && lower(r) <= lambda && lambda <= upper) return {r, lambda};

  double t_hi = std::min(r, t_max);
  if (lower(t_hi) > upper) {
    // Largest t with lower(t) <= upper.
    double lo = 0.0;
    double hi = t_hi;
    for (int it = 0; it < 200 && hi - lo > 1e-17 * (1.0 + hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (lower(mid) <= upper ? lo : hi) = mid;
    }
    t_hi = lo;
  }
  auto slope = [&](double t) {
    return 2.0 * (t - r) + 2.0 * std::max(0.0, lower(t) - lambda) * lower_slope(t);
  };
  double t;
  if (slope(t_hi) <= 0.0) {
    t = t_hi;
  } else if (slope(0.0) >= 0.0) {
    t = 0.0;
  } else {
    double lo = 0.0;
    double hi = t_hi;
    for (int it = 0; it < 200 && hi - lo > 1e-17 * (1.0 + hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (slope(mid) < 0.0 ? lo : hi) = mid;
    }
    t = 0.5 * (lo + hi);
  }
  return {t, std::clamp(lambda, lower(t), upper)};
}

Projected project_U_eta(const Decision& theta, const DroProblem& problem, double eta) {
  if (eta < 0.0) throw ConfigError("eta must be >= 0");
  const double radius = problem.r_beta();
  const double kappa = problem.loss().kappa;
  if (kappa == 0.0 || problem.delta() == 0.0) {
    return {Decision{clip_to_ball(theta.beta, radius), std::max(theta.lambda, eta)}, true};
  }

  const auto& cost = problem.cost();
  const double scale = kappa * problem.sqrt_delta();
  switch (cost.kind()) {
    case CostKind::identity:
    case CostKind::scaled_identity: {
      // λ_thr(β) = c ‖β‖^2 with c = κ√δ / min_i scale_i: a radial region.
      const double min_scale =
          cost.kind() == CostKind::identity ? 1.0 : cost.scales().head(problem.n()).minCoeff();
      const double c = scale / min_scale;
      const double r = theta.beta.norm();
      const RadialPoint p = project_radial(
          r, theta.lambda, [&](double t) { return c * t * t + eta; },
          [&](double t) { return 2.0 * c * t; }, radius, kInf);
      Vector beta = r > 0.0 ? Vector(theta.beta * (p.t / r)) : Vector(theta.beta);
      return {Decision{std::move(beta), p.lambda}, true};
    }
    case CostKind::constant_matrix: {
      const Matrix p = cost.matrix(0).inverse();
      const Matrix sym = 0.5 * (p + p.transpose());
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
      const Decision first = project_quadratic_epigraph(theta, eig, sym, scale, eta);
      if (first.beta.norm() <= radius) return {first, true};
      return dykstra(theta, {[&](const Decision& x) { return project_quadratic_epigraph(x, eig, sym, scale, eta); },
                             [&](const Decision& x) { return Decision{clip_to_ball(x.beta, radius), x.lambda}; }});
    }
    case CostKind::callback: {
      std::vector<Matrix> inverses;
      std::vector<Eigen::SelfAdjointEigenSolver<Matrix>> solvers;
      for (int i = 0; i < problem.n(); ++i) {
        Matrix p = cost.matrix(i).inverse();
        p = 0.5 * (p + p.transpose());
        solvers.emplace_back(p);
        inverses.push_back(std::move(p));
      }
      std::vector<std::function<Decision(const Decision&)>> sets;
      for (int i = 0; i < problem.n(); ++i) {
        sets.push_back([&, i](const Decision& x) {
          return project_quadratic_epigraph(x, solvers[static_cast<std::size_t>(i)],
                                            inverses[static_cast<std::size_t>(i)], scale, eta);
        });
      }
      sets.push_back([&](const Decision& x) { return Decision{clip_to_ball(x.beta, radius), x.lambda}; });
      Projected out = dykstra(theta, sets);
      out.exact = false;
      return out;
    }
  }
  return {theta, false};
}

}  // namespace otdro
