#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "otdro/dual_objective.hpp"
#include "otdro/model.hpp"
#include "otdro/regions.hpp"

namespace otdro {

/// One comparison between a brute-force oracle and the fast path.
struct OracleReport {
  std::string quantity;
  double oracle_value = 0.0;
  double fast_value = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  std::map<std::string, double> parameters;
};

OracleReport make_report(std::string quantity, double oracle_value, double fast_value,
                         std::map<std::string, double> parameters = {});

struct GridMax {
  double g = 0.0;
  double value = 0.0;
  double half_width = 0.0;
};

/// Dense grid over γ on an interval grown until F drops below F(0) at both
/// ends, then one finite-difference Newton polish. Uses eval_F only.
GridMax grid_inner_max(const DroProblem& problem, const Decision& theta, int i, int points);

struct FdGradient {
  Vector d_beta;
  double d_lambda = 0.0;
};

/// Central differences of f_δ with step h (default 1e-5 (1 + ‖θ‖)) and
/// 80-cut inner solves.
FdGradient fd_gradient(const Decision& theta, const DroProblem& problem,
                       std::optional<double> h = std::nullopt);

struct GridMin {
  Decision theta;
  double f_star = 0.0;
  long evaluations = 0;
};

/// Grid minimization of f_δ over a box in (β, λ) (d <= 2), refined by
/// `refinements` zoom rounds centred on the incumbent.
GridMin grid_min_fdelta(const DroProblem& problem, const Vector& beta_lo, const Vector& beta_hi,
                        double lambda_lo, double lambda_hi, int resolution, int refinements = 0);

/// Worst-case expected loss over transport plans from the atoms onto the
/// candidate locations (columns of `support`), solved exactly as a linear
/// program: per-atom concave envelopes in (cost, loss) plus a greedy fill of
/// the budget. A lower bound on the primal worst case.
double primal_bound(const DroProblem& problem, const Vector& beta, const Matrix& support);

struct HessianProbe {
  Decision theta;
  double min_eigenvalue = 0.0;
  /// Smallest eigenvalue of the β block.
  double min_eigenvalue_beta = 0.0;
  double chord_modulus = 0.0;
  /// Predicted lower bound √δ κ₀ / λ on the β block.
  double beta_curvature_bound = 0.0;
  bool skipped = false;
};

/// Finite-difference Hessians of f_δ at the given points. Points whose
/// stencil leaves the effective domain are marked skipped.
std::vector<HessianProbe> hessian_probe(const DroProblem& problem, const ConstantsBundle& consts,
                                        const std::vector<Decision>& thetas, double h = 1e-4);

/// Deterministic projected gradient descent with backtracking on f_δ over W;
/// a reference minimum for gap curves at dimensions beyond grid reach.
GridMin reference_minimize(const DroProblem& problem, const ConstantsBundle& consts,
                           int iterations = 2000, double tol = 1e-13);

}  // namespace otdro
