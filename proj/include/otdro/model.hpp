#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace otdro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Empirical baseline distribution: n equally weighted atoms X_i in R^d with
/// optional scalar labels Y_i. Labels are loss parameters and are never
/// transported.
class SampleSet {
 public:
  /// `points` is d x n, one column per sample.
  explicit SampleSet(Matrix points, std::optional<Vector> labels = std::nullopt);

  int size() const { return static_cast<int>(points_.cols()); }
  int dim() const { return static_cast<int>(points_.rows()); }
  bool has_labels() const { return labels_.has_value(); }

  const Matrix& points() const { return points_; }
  auto point(int i) const { return points_.col(i); }
  /// Label of sample i, or 0 when the set is unlabeled.
  double label(int i) const { return labels_ ? (*labels_)(i) : 0.0; }
  const std::optional<Vector>& labels() const { return labels_; }

  /// Copy with every label replaced by `value` (used to pass a scalar loss
  /// parameter such as a target mean).
  SampleSet with_constant_label(double value) const;
  SampleSet subset(const std::vector<int>& rows) const;

 private:
  Matrix points_;
  std::optional<Vector> labels_;
};

enum class CostKind { identity, constant_matrix, scaled_identity, callback };

/// State-dependent Mahalanobis transport cost c(x, x') = (x - x')' A(x) (x - x'),
/// with A evaluated at the support points of the baseline distribution.
class CostField {
 public:
  static CostField identity(int dim);
  /// A(x) = A for every x. Throws ConfigError unless A is symmetric positive definite.
  static CostField constant(const Matrix& a);
  /// A(X_i) = scales_i * I.
  static CostField scaled_identity(int dim, const Vector& scales);
  /// A(X_i) = (V̄ / V_i) I with V̄ the mean of the volatilities.
  static CostField from_implied_volatility(int dim, const Vector& volatility);
  /// General per-sample matrices. The spectral bounds cannot be derived
  /// from a callback in general, so the caller supplies them; every matrix
  /// is checked against them.
  static CostField callback(int dim, int n, const std::function<Matrix(int)>& matrix_at,
                            double rho_min, double rho_max);

  CostKind kind() const { return kind_; }
  int dim() const { return dim_; }
  double rho_min() const { return rho_min_; }
  double rho_max() const { return rho_max_; }
  /// Number of per-sample entries, or -1 when A does not depend on the sample.
  int sample_count() const;
  /// A(X_i) as a dense matrix.
  Matrix matrix(int i) const;
  /// A(X_i)^{-1} β.
  Vector inverse_apply(int i, const Vector& beta) const;
  /// β' A(X_i)^{-1} β.
  double quadratic_form(int i, const Vector& beta) const;
  /// max_i β' A(X_i)^{-1} β over the first n support points.
  double max_quadratic_form(const Vector& beta, int n) const;
  /// c(X_i, to) where X_i = from.
  double cost(int i, const Vector& from, const Vector& to) const;
  /// Scale factors for the scaled-identity kind (empty otherwise).
  const Vector& scales() const { return scales_; }

 private:
  CostField() = default;

  CostKind kind_ = CostKind::identity;
  int dim_ = 0;
  double rho_min_ = 1.0;
  double rho_max_ = 1.0;
  Matrix matrix_;
  Matrix inverse_;
  Vector scales_;
  std::vector<Matrix> matrices_;
  std::vector<Matrix> inverses_;
};

/// Scalar loss u -> l(u; y).
using ScalarFn = std::function<double(double u, double y)>;

/// One continuously differentiable piece of a loss l = max_i l_i.
struct SmoothPiece {
  ScalarFn value;
  ScalarFn deriv;
  ScalarFn second;  // may be empty
  /// sup of the second derivative; empty when unbounded or unknown.
  std::optional<double> curvature_bound;
};

/// Univariate convex loss with the growth and curvature constants the
/// robust reformulation needs.
struct LossSpec {
  std::string name;
  ScalarFn value;
  ScalarFn dplus;
  ScalarFn dminus;
  ScalarFn d2;  // empty when the loss is not twice differentiable
  std::vector<SmoothPiece> components;
  /// Quadratic growth rate: inf{s >= 0 : sup_u l(u) - s u^2 < inf}.
  double kappa = 0.0;
  /// Upper bound on l''; present only for twice differentiable losses.
  std::optional<double> M;
  std::optional<double> k1;
  std::optional<double> k2;

  bool smooth() const { return static_cast<bool>(d2) && M.has_value(); }
  double derivative(double u, double y) const { return dplus(u, y); }
};

LossSpec make_logistic_loss();
LossSpec make_squared_loss();
LossSpec make_hinge_loss();
/// l(u; mu) = (u - mu)^2 - zeta * u, the single-index mean-variance loss.
/// The label slot carries the target mean mu.
LossSpec make_mean_variance_loss(double zeta);
/// Arbitrary twice differentiable loss. `kappa` and `M` must be supplied.
LossSpec make_smooth_loss(std::string name, ScalarFn value, ScalarFn deriv, ScalarFn second,
                          double kappa, double M);
/// Looks up a built-in loss by name: logistic, squared, hinge.
LossSpec make_loss(const std::string& name);
/// Fills data-dependent constants (k1 = max|Y_i| for the squared loss).
LossSpec bind_loss(LossSpec loss, const SampleSet& data);

/// Constants (c1, c2, p) of the nondegeneracy condition
/// P0(|l'(β'X)| > c1, |β'X| > c2 |β|) >= p for all β in B.
struct Nondegeneracy {
  double c1 = 0.0;
  double c2 = 0.0;
  double p = 0.0;
};

/// Everything that defines one robust learning problem. δ = 0 is accepted
/// and denotes the non-robust problem (the robust loss reduces to l).
class DroProblem {
 public:
  DroProblem(SampleSet data, CostField cost, LossSpec loss, double delta, double r_beta,
             std::optional<Nondegeneracy> nondegeneracy = std::nullopt);

  const SampleSet& data() const { return data_; }
  const CostField& cost() const { return cost_; }
  const LossSpec& loss() const { return loss_; }
  double delta() const { return delta_; }
  double sqrt_delta() const { return sqrt_delta_; }
  double r_beta() const { return r_beta_; }
  const std::optional<Nondegeneracy>& nondegeneracy() const { return nondegeneracy_; }
  int n() const { return data_.size(); }
  int dim() const { return data_.dim(); }

  DroProblem with_delta(double delta) const;
  DroProblem with_loss(LossSpec loss) const;
  DroProblem with_data(SampleSet data, CostField cost) const;

 private:
  void validate() const;

  SampleSet data_;
  CostField cost_;
  LossSpec loss_;
  double delta_;
  double sqrt_delta_;
  double r_beta_;
  std::optional<Nondegeneracy> nondegeneracy_;
};

/// Optimization state θ = (β, λ).
struct Decision {
  Vector beta;
  double lambda = 0.0;

  Vector stacked() const;
  static Decision from_stacked(const Vector& v);
};

/// Column selection for load_csv. An empty feature list means "every
/// column except the label".
struct CsvSchema {
  std::vector<std::string> features;
  std::optional<std::string> label;
};

/// Header plus numeric body of a comma separated file.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;
};

CsvTable read_csv_table(const std::string& path);
SampleSet load_csv(const std::string& path, const CsvSchema& schema);

}  // namespace otdro
