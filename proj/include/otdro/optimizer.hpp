#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "otdro/dual_objective.hpp"
#include "otdro/model.hpp"
#include "otdro/regions.hpp"

namespace otdro {

/// α_k = α k^{-τ}.
struct StepSchedule {
  double alpha = 1.0;
  double tau = 0.55;

  double at(long k) const;
  /// Throws ConfigError unless α > 0 and τ ∈ [lo, hi].
  void validate(double lo = 0.5, double hi = 1.0) const;
};

struct Checkpoint {
  long k = 0;
  Decision theta;
  Decision theta_bar;
  /// f_δ at the averaged iterate θ̄_k.
  double f_delta = 0.0;
  long cuts = 0;
  double elapsed_ms = 0.0;
};

struct RunTrace {
  std::string method;
  std::uint64_t seed = 0;
  long iterations = 0;
  std::vector<Checkpoint> checkpoints;
  Decision final_theta;
  Decision final_theta_bar;
  long total_cuts = 0;
  /// Iterates that left the projection region (should stay 0).
  long region_violations = 0;
  /// Inner solves that went through the uncertified fallback.
  long uncertified_solves = 0;
  /// Largest d_lambda seen; never exceeds √δ.
  double max_d_lambda = -1e300;
  std::vector<std::string> warnings;
  double elapsed_ms = 0.0;
};

struct SgdOptions {
  long iterations = 10000;
  std::uint64_t seed = 1;
  double xi = 0.0;
  int batch_size = 1;
  /// Number of full f_δ evaluations recorded in the trace.
  int trace_points = 200;
  /// Log-spaced checkpoints instead of every ⌈iterations/trace_points⌉ steps.
  bool geometric_checkpoints = false;
  int eval_cuts = 60;
  /// Fixed cut count per inner solve; empty means the k-dependent schedule.
  std::optional<int> cuts;
  std::optional<Decision> start;
};

/// n_k = ⌈τ log2 k − log2 α + 2 log2(1 + ‖X_k‖)⌉, floored at 10.
int cut_schedule(long k, const StepSchedule& schedule, double x_norm);

/// Projected SGD onto W with polynomial-decay averaging.
RunTrace sgd_smooth(const DroProblem& problem, const ConstantsBundle& consts,
                    const StepSchedule& schedule, const SgdOptions& options);

/// Stochastic subgradient descent onto U_η with τ = 1/2 and ξ >= 1.
RunTrace sgd_nonsmooth(const DroProblem& problem, const StepSchedule& schedule, double eta,
                       const SgdOptions& options);

/// β and λ steps with their own schedules, joint projection onto W, ξ = 0.
RunTrace sgd_two_timescale(const DroProblem& problem, const ConstantsBundle& consts,
                           const StepSchedule& beta_schedule, const StepSchedule& lambda_schedule,
                           const SgdOptions& options);

/// Plain projected (sub)gradient descent on β for the non-robust problem
/// (δ = 0); λ stays at 0.
RunTrace sgd_nonrobust(const DroProblem& problem, const StepSchedule& schedule,
                       const SgdOptions& options);

struct LineSearchResult {
  double lambda_star = 0.0;
  Vector beta_star;
  double value = 0.0;
  /// (λ, h(λ)) at every probe, in evaluation order.
  std::vector<std::pair<double, double>> probes;
  /// Bracket width after each section step.
  std::vector<double> widths;
};

/// Golden-section search over λ ∈ [0, K2 R_β] of h(λ) = inf_β f_δ(β, λ),
/// with h evaluated by averaged SGD over β on {‖β‖ <= min(R_β, λ/K1)}.
LineSearchResult line_search_outer(const DroProblem& problem, const ConstantsBundle& consts,
                                   long inner_iterations, double lambda_tol, std::uint64_t seed,
                                   const StepSchedule& schedule = {1.0, 0.55});

enum class RootBoundary { none, lower, upper };

struct LambdaStar {
  double lambda = 0.0;
  double residual = 0.0;
  RootBoundary boundary = RootBoundary::none;
  /// (λ, E_n[g² a]) at every bisection probe.
  std::vector<std::pair<double, double>> probes;
  /// E_n[g² a] was nonincreasing across the probes.
  bool monotone = true;
};

/// E_n[g(β, λ; X)² a(β; X)] at a fixed (β, λ).
double mean_g2a(const DroProblem& problem, const Decision& theta, const InnerOptions& options = {});

/// Root of E_n[g² a] = 1 in λ over [λ_min(β), λ_max(β)] by bisection.
LambdaStar solve_lambda_star(const DroProblem& problem, const Vector& beta, double tol = 1e-10,
                             const InnerOptions& options = {});

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  int used = 0;
  /// Checkpoints in the window with a non-positive gap.
  int excluded = 0;
};

/// Least-squares slope of log(f_δ(θ̄_k) − f*) against log k over k ∈ [k_min, k_max].
RateFit rate_diagnostic(const RunTrace& trace, double f_star, long k_min, long k_max);

}  // namespace otdro
