#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "otdro/model.hpp"

namespace otdro {

/// λ_thr(β) = κ √δ max_i β'A(X_i)^{-1}β. Below it the robust loss is +∞.
double lambda_thr(const DroProblem& problem, const Vector& beta);

/// λ'_thr(β) = (M/2) √δ max_i β'A(X_i)^{-1}β. Above it every inner problem
/// is strongly concave. Throws ConfigError when the loss has no curvature bound.
double lambda_thr_prime(const DroProblem& problem, const Vector& beta);

/// E_n[l'(β'X; Y)^2] at a fixed β.
double mean_squared_derivative(const DroProblem& problem, const Vector& beta);

/// Bracket [λ_min(β), λ_max(β)] that contains every partial minimizer of
/// λ -> f_δ(β, λ).
struct LambdaBracket {
  double lower;
  double upper;
};
LambdaBracket lambda_bracket(const DroProblem& problem, const Vector& beta);

/// Extremes of β -> E_n[l'(β'X)^2] over the decision ball.
struct LBounds {
  double lower = 0.0;
  double upper = 0.0;
  bool estimated = true;
};

/// Sphere sampling at radius R_β plus the origin, followed by projected
/// gradient polishing of the best candidates. Throws NumericalError when
/// the estimated lower bound is not positive.
LBounds estimate_L_bounds(const DroProblem& problem, int sphere_samples, int refine_steps,
                          std::uint64_t seed = 7);

/// Passes user supplied values through, marked as not estimated.
LBounds supplied_L_bounds(double lower, double upper);

/// Derived constants of the smooth regime.
struct ConstantsBundle {
  double L_lower = 0.0;
  double L_upper = 0.0;
  double K1 = 0.0;
  double K2 = 0.0;
  /// Tabulated variant √δ M R_β/ρ_min + L̄/√ρ_min, emitted for comparison only.
  double K2_table = 0.0;
  double delta0 = 0.0;
  /// Needs the nondegeneracy constants; empty when they are unknown.
  std::optional<double> delta1;
  double phi_min = 0.0;
  double kappa0 = 0.0;
  double r_beta = 0.0;
  bool estimated = true;
  /// δ < δ0: the objective is smooth on V and the inner problems are concave on W.
  bool smooth_regime = false;

  double lambda_cap() const { return K2 * r_beta; }
};

ConstantsBundle build_constants(const DroProblem& problem, const LBounds& bounds);

/// Fraction of samples meeting the nondegeneracy event, minimized over
/// `directions` random unit directions (scale invariant in β except through l').
double estimate_nondegeneracy_p(const DroProblem& problem, double c1, double c2, int directions,
                                std::uint64_t seed = 11);

/// θ ∈ W = {‖β‖ <= R_β, K1‖β‖ <= λ <= K2 R_β}, with absolute slack.
bool in_W(const Decision& theta, const ConstantsBundle& consts, double slack = 1e-12);
/// θ ∈ V = {‖β‖ <= R_β, K1‖β‖ <= λ <= K2‖β‖}.
bool in_V(const Decision& theta, const ConstantsBundle& consts, double slack = 1e-12);

/// Euclidean projection onto W ∩ {‖β‖ <= R_β}.
Decision project_W(const Decision& theta, const ConstantsBundle& consts, double r_beta);

struct Projected {
  Decision theta;
  /// False when the projection came from a truncated alternating scheme.
  bool exact = true;
};

/// Euclidean projection onto U_η = {‖β‖ <= R_β, λ >= λ_thr(β) + η}.
Projected project_U_eta(const Decision& theta, const DroProblem& problem, double eta);

/// Projects (r, λ) with r >= 0 onto the planar convex set
/// {(t, μ) : 0 <= t <= t_max, lower(t) <= μ <= upper}, where `lower` is convex
/// and nondecreasing on [0, inf) with derivative `lower_slope`.
/// Any rotationally symmetric region in (β, λ) reduces to this.
struct RadialPoint {
  double t;
  double lambda;
};
RadialPoint project_radial(double r, double lambda, const std::function<double(double)>& lower,
                           const std::function<double(double)>& lower_slope, double t_max,
                           double upper);

}  // namespace otdro
