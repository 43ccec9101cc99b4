#pragma once

#include <optional>
#include <string>
#include <vector>

#include "otdro/dual_objective.hpp"
#include "otdro/model.hpp"
#include "otdro/optimizer.hpp"

namespace otdro {

enum class WorstCaseRegime { unique, randomized, nonexistent, constant_loss };

const char* to_string(WorstCaseRegime regime);

/// Extreme maximizers per sample and the Bernoulli weight that mixes them
/// so that E[G² a] = 1.
struct Randomization {
  Vector g_minus;
  Vector g_plus;
  double c_lower = 0.0;
  double c_upper = 0.0;
  /// P(Z = 1), the probability of picking G₋.
  double p = 0.0;
  Matrix x_star_minus;
  Matrix x_star_plus;
};

/// Adversarial relocation X*_i = X_i + √δ G_i A(X_i)^{-1}β of every sample.
struct WorstCaseTransport {
  double delta = 0.0;
  WorstCaseRegime regime = WorstCaseRegime::unique;
  double lambda_star = 0.0;
  RootBoundary boundary = RootBoundary::none;
  /// Per-sample G_i (E[G] under the mixture in the randomized regime).
  Vector g;
  Matrix x_star;
  Vector displacement;
  Vector loss_before;
  Vector loss_after;
  /// E_n[c(X, X*)].
  double budget = 0.0;
  /// E_n[G² a].
  double g2a = 0.0;
  /// E_n[l(β'X*)] and f_δ(β, λ*).
  double worst_value = 0.0;
  double dual_value = 0.0;
  /// Largest |2λ*G_i − l'(β'X*_i)| over the samples (subdifferential distance).
  double max_residual = 0.0;
  bool certified = true;
  std::optional<Randomization> randomization;
  std::string interpretation;
};

struct WorstCaseOptions {
  double tol = 1e-10;
  InnerOptions inner;
};

WorstCaseTransport worst_case(const DroProblem& problem, const Vector& beta,
                              const WorstCaseOptions& options = {});

struct ComparativeStatics {
  std::vector<WorstCaseTransport> transports;
  /// Samples whose displacement shrank between consecutive grid points.
  int monotonicity_violations = 0;
  /// Smallest |cos| between X*_i − X_i and A(X_i)^{-1}β over nonzero moves.
  double min_cosine = 1.0;
  /// Grid points at or above δ̂₁, where the claims are not guaranteed.
  std::vector<double> flagged;
};

/// Worst-case transports along a δ grid (sorted ascending) for a fixed β.
ComparativeStatics comparative_statics(const DroProblem& problem, const Vector& beta,
                                       std::vector<double> delta_grid,
                                       std::optional<double> delta1 = std::nullopt,
                                       const WorstCaseOptions& options = {});

}  // namespace otdro
