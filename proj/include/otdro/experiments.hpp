#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "otdro/model.hpp"
#include "otdro/optimizer.hpp"
#include "otdro/regions.hpp"
#include "otdro/worstcase.hpp"

namespace otdro {

/// Two equally likely classes y = ±1 with X | y ~ N(y m, σ² I), where m has
/// norm `separation` along the all-ones direction.
SampleSet generate_classification(int n, int d, double separation, double noise, std::uint64_t seed);

/// Y = w'X + ε with X ~ N(0, I), ε ~ N(0, noise²), w drawn once from N(0, I/d).
SampleSet generate_regression(int n, int d, double noise, std::uint64_t seed);

enum class SgdMethod { automatic, smooth, nonsmooth, two_timescale };

SgdMethod parse_method(const std::string& name);
const char* to_string(SgdMethod method);

struct SupervisedSetup {
  SgdMethod method = SgdMethod::automatic;
  StepSchedule schedule{1.0, 0.55};
  /// λ schedule of the two-timescale variant.
  StepSchedule lambda_schedule{1.0, 0.6};
  SgdOptions sgd;
  double eta = 0.05;
  /// Overrides the sampled extremes of E[l'(β'X)^2].
  std::optional<LBounds> L;
  int sphere_samples = 64;
  int refine_steps = 50;
};

/// Constants for a smooth problem, using supplied L bounds when present.
ConstantsBundle constants_for(const DroProblem& problem, const SupervisedSetup& setup);

/// One SGD run with the method chosen from the loss (smooth -> projected SGD
/// on W, piecewise -> subgradient descent on U_η) unless forced.
RunTrace train(const DroProblem& problem, const SupervisedSetup& setup,
               std::optional<ConstantsBundle>* consts_out = nullptr);

struct SupervisedComparison {
  RunTrace dro;
  RunTrace plain;
  /// Reference minima the gaps are measured against.
  double f_star_dro = 0.0;
  double f_star_plain = 0.0;
  std::optional<ConstantsBundle> consts;
};

/// DRO arm and non-robust arm (δ = 0, projected SGD on the ball) with the
/// same step sizes and the same sample stream.
SupervisedComparison run_supervised_experiment(const DroProblem& problem, const SupervisedSetup& setup);

struct WorstCaseRow {
  double delta;
  int i;
  Vector x;
  double g;
  Vector x_star;
  double displacement;
  double loss_before;
  double loss_after;
};

struct WorstCaseSweep {
  ComparativeStatics statics;
  std::vector<WorstCaseRow> rows;
  /// Fraction of samples with y β'X* <= 0 per grid point; empty for regression losses.
  std::vector<double> misclassification;
};

/// β held fixed while δ sweeps the grid.
WorstCaseSweep run_worstcase_trace(const DroProblem& problem, const Vector& beta,
                                   const std::vector<double>& delta_grid,
                                   std::optional<double> delta1 = std::nullopt,
                                   const WorstCaseOptions& options = {});

// --- Portfolio -----------------------------------------------------------------

enum class PortfolioCost { constant, implied_vol };

PortfolioCost parse_portfolio_cost(const std::string& name);
const char* to_string(PortfolioCost kind);

struct PortfolioWeights {
  Vector beta;
  double mu = 0.0;
  double lambda = 0.0;
  double objective = 0.0;
  int iterations = 0;
};

struct PortfolioSolverOptions {
  double r_beta = 10.0;
  /// Margin kept above the effective-domain threshold for λ.
  double eta = 1e-8;
  int max_iterations = 400;
  double tol = 1e-10;
};

/// min over β with 1'β = 1, ‖β‖ <= R and over μ, λ of the robust
/// mean-variance objective E_n[sup (β'X' − μ)² − ζ β'X' − λ c(X, X')] + λδ,
/// by projected gradient descent with backtracking on (β, μ, λ).
PortfolioWeights solve_portfolio(const Matrix& returns, const CostField& cost, double zeta, double delta,
                                 const PortfolioSolverOptions& options = {});

struct FrontierPoint {
  double zeta;
  double delta;
  PortfolioCost cost_kind;
  double mean_return;
  double std_return;
  int months;
};

struct FrontierSetup {
  int window = 36;
  std::vector<double> zeta_grid{0.0, 0.5, 1.0};
  std::vector<double> delta_grid{0.0, 0.01};
  std::vector<PortfolioCost> cost_kinds{PortfolioCost::constant, PortfolioCost::implied_vol};
  PortfolioSolverOptions solver;
  /// Periods per year for annualization.
  double periods_per_year = 12.0;
};

/// Rolling-window backtest: `returns` is T x d (one row per month), `vol`
/// has length T. Weights fitted on the trailing window are held one month.
std::vector<FrontierPoint> run_portfolio_frontier(const Matrix& returns, const Vector& vol,
                                                  const FrontierSetup& setup);

struct MarketData {
  Matrix returns;
  Vector vol;
};

/// Monthly factor-model returns with a volatility index that rises with the
/// factor shock.
MarketData generate_market(int months, int assets, std::uint64_t seed);

// --- Oracle suite ------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = false;
  double oracle_value = 0.0;
  double fast_value = 0.0;
  double error = 0.0;
  double tolerance = 0.0;
};

/// Built-in oracle comparisons on small instances.
std::vector<CheckResult> run_check_suite(std::uint64_t seed);

}  // namespace otdro
