#pragma once

#include <optional>
#include <random>
#include <vector>

#include "otdro/model.hpp"

namespace otdro {

/// F(γ, β, λ; X_i) = l(β'X_i + γ√δ a; Y_i) − λ√δ(γ² a − 1), a = β'A(X_i)^{-1}β.
double eval_F(const DroProblem& problem, double gamma, const Decision& theta, int i);

enum class Domain { interior, boundary, infeasible };

/// interior iff λ > λ_thr(β); infeasible iff λ < λ_thr(β).
Domain classify_domain(const Decision& theta, const DroProblem& problem);

const char* to_string(Domain domain);

enum class InnerMethod { bisection, zero_beta, nonrobust, fallback };

const char* to_string(InnerMethod method);

struct InnerOptions {
  int cuts = 60;
  /// Uniform curvature margin from the constants bundle. When set and
  /// positive the search interval is |γ| <= |l'(β'x)| / (φ_min ‖β‖);
  /// otherwise the per-sample bound |l'(β'x)| / (2λ − M√δ a) is used.
  std::optional<double> phi_min;
  /// Settings of the multistart solver used when F is not concave.
  int grid_points = 4001;
  int newton_restarts = 8;
  bool allow_fallback = true;
};

struct InnerSolution {
  double g = 0.0;
  double lrob = 0.0;
  Vector x_tilde;
  /// Distance from 2λg to the subdifferential of l at β'x̃.
  double residual = 0.0;
  int cuts_used = 0;
  /// False when the maximizer came from the multistart fallback.
  bool certified = true;
  InnerMethod method = InnerMethod::bisection;
  double a = 0.0;
  double u_tilde = 0.0;
};

/// sup_γ F(γ, β, λ; X_i). Bisection on the sign of ∂F/∂γ when every smooth
/// piece of the loss makes F concave at this sample; otherwise routes to
/// fallback_maximize (or throws NumericalError when the fallback is
/// disabled). Throws InfeasibleDomain when λ <= κ√δ a.
InnerSolution inner_maximize(const DroProblem& problem, const Decision& theta, int i,
                             const InnerOptions& options = {});

/// Grid search plus local polishing over an interval grown until F drops
/// below F(0) at both ends. Returns the best local maximum, flagged as not
/// certified.
InnerSolution fallback_maximize(const DroProblem& problem, const Decision& theta, int i,
                                int grid_points, int newton_restarts);

/// Every maximizer of F(·, β, λ; X_i) found, sorted, with values within
/// `value_tol` of the best. A single entry when the maximizer is unique.
std::vector<double> inner_maximizer_set(const DroProblem& problem, const Decision& theta, int i,
                                        const InnerOptions& options, double value_tol = 1e-12);

/// An element of the subgradient set of l_rob at (β, λ) for one sample.
struct SubgradientSample {
  Vector d_beta;
  double d_lambda = 0.0;
  double lprime_choice = 0.0;
};

/// ∇l_rob: d_beta = l'(β'x̃) x̃, d_lambda = −√δ(g² a − 1). Throws KinkError
/// when l has a kink at β'x̃.
SubgradientSample grad_lrob(const DroProblem& problem, const Decision& theta, int i,
                            const InnerSolution& inner);

/// Same form with L' drawn uniformly from [∂₋l(β'x̃), ∂₊l(β'x̃)].
SubgradientSample subgrad_lrob(const DroProblem& problem, const Decision& theta, int i,
                               const InnerSolution& inner, std::mt19937_64& rng);

/// Empirical mean of l_rob, or +∞ outside the interior of the domain.
double f_delta(const Decision& theta, const DroProblem& problem, const InnerOptions& options = {});

/// ∇f_δ as the empirical mean of per-sample gradients.
SubgradientSample grad_f_delta(const Decision& theta, const DroProblem& problem,
                               const InnerOptions& options = {});

/// λ√δ + λ r² / (λ − √δ a) with r = β'x − y, the robust squared loss.
/// Throws InfeasibleDomain when λ <= √δ a.
double squared_loss_lrob_closed_form(const DroProblem& problem, const Decision& theta, int i);

}  // namespace otdro
