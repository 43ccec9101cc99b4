#include "otdro/model.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "otdro/error.hpp"

namespace otdro {

namespace {

constexpr double kSpectralSlack = 1e-10;

void check_symmetric(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw ConfigError(std::string(what) + ": matrix is not square");
  }
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ConfigError(std::string(what) + ": matrix is not symmetric");
  }
}

Eigen::VectorXd eigenvalues_of(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

double softplus(double z) {
  // log(1 + e^z) without overflow
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

// --- SampleSet -------------------------------------------------------------

SampleSet::SampleSet(Matrix points, std::optional<Vector> labels)
    : points_(std::move(points)), labels_(std::move(labels)) {
  if (points_.cols() < 1) throw ConfigError("sample set needs at least one point");
  if (points_.rows() < 1) throw ConfigError("sample set needs dimension >= 1");
  if (labels_ && labels_->size() != points_.cols()) {
    throw ConfigError("label count does not match the number of points");
  }
  if (!points_.allFinite() || (labels_ && !labels_->allFinite())) {
    throw ConfigError("sample set contains non-finite values");
  }
}

SampleSet SampleSet::with_constant_label(double value) const {
  return SampleSet(points_, Vector::Constant(points_.cols(), value));
}

SampleSet SampleSet::subset(const std::vector<int>& rows) const {
  Matrix pts(dim(), static_cast<Eigen::Index>(rows.size()));
  Vector lab(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    pts.col(static_cast<Eigen::Index>(k)) = points_.col(rows[k]);
    lab(static_cast<Eigen::Index>(k)) = label(rows[k]);
  }
  if (labels_) return SampleSet(std::move(pts), std::move(lab));
  return SampleSet(std::move(pts));
}

// --- CostField -------------------------------------------------------------

CostField CostField::identity(int dim) {
  if (dim < 1) throw ConfigError("cost dimension must be >= 1");
  CostField c;
  c.kind_ = CostKind::identity;
  c.dim_ = dim;
  return c;
}

CostField CostField::constant(const Matrix& a) {
  check_symmetric(a, "constant cost");
  const Vector eig = eigenvalues_of(a);
  if (eig.minCoeff() <= 0.0) throw ConfigError("constant cost: matrix is not positive definite");
  CostField c;
  c.kind_ = CostKind::constant_matrix;
  c.dim_ = static_cast<int>(a.rows());
  c.matrix_ = a;
  c.inverse_ = a.llt().solve(Matrix::Identity(a.rows(), a.cols()));
  c.rho_min_ = eig.minCoeff();
  c.rho_max_ = eig.maxCoeff();
  return c;
}

CostField CostField::scaled_identity(int dim, const Vector& scales) {
  if (dim < 1) throw ConfigError("cost dimension must be >= 1");
  if (scales.size() < 1) throw ConfigError("scaled cost needs at least one scale factor");
  if (!scales.allFinite() || scales.minCoeff() <= 0.0) {
    throw ConfigError("scaled cost: scale factors must be positive and finite");
  }
  CostField c;
  c.kind_ = CostKind::scaled_identity;
  c.dim_ = dim;
  c.scales_ = scales;
  c.rho_min_ = scales.minCoeff();
  c.rho_max_ = scales.maxCoeff();
  return c;
}

CostField CostField::from_implied_volatility(int dim, const Vector& volatility) {
  if (volatility.size() < 1 || !volatility.allFinite() || volatility.minCoeff() <= 0.0) {
    throw ConfigError("implied volatilities must be positive and finite");
  }
  const double mean = volatility.mean();
  return scaled_identity(dim, volatility.cwiseInverse() * mean);
}

CostField CostField::callback(int dim, int n, const std::function<Matrix(int)>& matrix_at,
                              double rho_min, double rho_max) {
  if (!(rho_min > 0.0) || !(rho_max >= rho_min)) {
    throw ConfigError("callback cost: need 0 < rho_min <= rho_max");
  }
  CostField c;
  c.kind_ = CostKind::callback;
  c.dim_ = dim;
  c.rho_min_ = rho_min;
  c.rho_max_ = rho_max;
  c.matrices_.reserve(static_cast<std::size_t>(n));
  c.inverses_.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Matrix a = matrix_at(i);
    if (a.rows() != dim) throw ConfigError("callback cost: matrix has the wrong dimension");
    check_symmetric(a, "callback cost");
    const Vector eig = eigenvalues_of(a);
    if (eig.minCoeff() < rho_min - kSpectralSlack || eig.maxCoeff() > rho_max + kSpectralSlack) {
      throw ConfigError("callback cost: matrix " + std::to_string(i) +
                        " has eigenvalues outside [rho_min, rho_max]");
    }
    c.inverses_.push_back(a.llt().solve(Matrix::Identity(dim, dim)));
    c.matrices_.push_back(std::move(a));
  }
  return c;
}

int CostField::sample_count() const {
  switch (kind_) {
    case CostKind::scaled_identity:
      return static_cast<int>(scales_.size());
    case CostKind::callback:
      return static_cast<int>(matrices_.size());
    default:
      return -1;
  }
}

Matrix CostField::matrix(int i) const {
  switch (kind_) {
    case CostKind::identity:
      return Matrix::Identity(dim_, dim_);
    case CostKind::constant_matrix:
      return matrix_;
    case CostKind::scaled_identity:
      return scales_(i) * Matrix::Identity(dim_, dim_);
    case CostKind::callback:
      return matrices_.at(static_cast<std::size_t>(i));
  }
  return {};
}

Vector CostField::inverse_apply(int i, const Vector& beta) const {
  switch (kind_) {
    case CostKind::identity:
      return beta;
    case CostKind::constant_matrix:
      return inverse_ * beta;
    case CostKind::scaled_identity:
      return beta / scales_(i);
    case CostKind::callback:
      return inverses_[static_cast<std::size_t>(i)] * beta;
  }
  return beta;
}

double CostField::quadratic_form(int i, const Vector& beta) const {
  switch (kind_) {
    case CostKind::identity:
      return beta.squaredNorm();
    case CostKind::constant_matrix:
      return beta.dot(inverse_ * beta);
    case CostKind::scaled_identity:
      return beta.squaredNorm() / scales_(i);
    case CostKind::callback:
      return beta.dot(inverses_[static_cast<std::size_t>(i)] * beta);
  }
  return 0.0;
}

double CostField::max_quadratic_form(const Vector& beta, int n) const {
  switch (kind_) {
    case CostKind::identity:
    case CostKind::constant_matrix:
      return quadratic_form(0, beta);
    case CostKind::scaled_identity:
      return beta.squaredNorm() / scales_.head(n).minCoeff();
    case CostKind::callback: {
      double best = 0.0;
      for (int i = 0; i < n; ++i) best = std::max(best, quadratic_form(i, beta));
      return best;
    }
  }
  return 0.0;
}

double CostField::cost(int i, const Vector& from, const Vector& to) const {
  const Vector diff = to - from;
  switch (kind_) {
    case CostKind::identity:
      return diff.squaredNorm();
    case CostKind::constant_matrix:
      return diff.dot(matrix_ * diff);
    case CostKind::scaled_identity:
      return scales_(i) * diff.squaredNorm();
    case CostKind::callback:
      return diff.dot(matrices_[static_cast<std::size_t>(i)] * diff);
  }
  return 0.0;
}

// --- Losses ----------------------------------------------------------------

LossSpec make_logistic_loss() {
  LossSpec loss;
  loss.name = "logistic";
  loss.value = [](double u, double y) { return softplus(-y * u); };
  loss.dplus = [](double u, double y) { return -y * sigmoid(-y * u); };
  loss.dminus = loss.dplus;
  loss.d2 = [](double u, double y) {
    const double s = sigmoid(y * u);
    return y * y * s * (1.0 - s);
  };
  loss.components = {SmoothPiece{loss.value, loss.dplus, loss.d2, 0.25}};
  loss.kappa = 0.0;
  loss.M = 0.25;
  loss.k1 = 1.0;
  loss.k2 = 1.0;
  return loss;
}

LossSpec make_squared_loss() {
  LossSpec loss;
  loss.name = "squared";
  loss.value = [](double u, double y) { return (y - u) * (y - u); };
  loss.dplus = [](double u, double y) { return 2.0 * (u - y); };
  loss.dminus = loss.dplus;
  loss.d2 = [](double, double) { return 2.0; };
  loss.components = {SmoothPiece{loss.value, loss.dplus, loss.d2, 2.0}};
  loss.kappa = 1.0;
  loss.M = 2.0;
  loss.k2 = 1.0;
  return loss;
}

LossSpec make_hinge_loss() {
  LossSpec loss;
  loss.name = "hinge";
  loss.value = [](double u, double y) { return std::max(0.0, 1.0 - y * u); };
  loss.dplus = [](double u, double y) {
    const double margin = 1.0 - y * u;
    if (margin > 0.0) return -y;
    if (margin < 0.0) return 0.0;
    return std::max(0.0, -y);
  };
  loss.dminus = [](double u, double y) {
    const double margin = 1.0 - y * u;
    if (margin > 0.0) return -y;
    if (margin < 0.0) return 0.0;
    return std::min(0.0, -y);
  };
  const ScalarFn zero = [](double, double) { return 0.0; };
  loss.components = {
      SmoothPiece{zero, zero, zero, 0.0},
      SmoothPiece{[](double u, double y) { return 1.0 - y * u; },
                  [](double, double y) { return -y; }, zero, 0.0},
  };
  loss.kappa = 0.0;
  return loss;
}

LossSpec make_mean_variance_loss(double zeta) {
  LossSpec loss;
  loss.name = "mean_variance";
  loss.value = [zeta](double u, double mu) { return (u - mu) * (u - mu) - zeta * u; };
  loss.dplus = [zeta](double u, double mu) { return 2.0 * (u - mu) - zeta; };
  loss.dminus = loss.dplus;
  loss.d2 = [](double, double) { return 2.0; };
  loss.components = {SmoothPiece{loss.value, loss.dplus, loss.d2, 2.0}};
  loss.kappa = 1.0;
  loss.M = 2.0;
  return loss;
}

LossSpec make_smooth_loss(std::string name, ScalarFn value, ScalarFn deriv, ScalarFn second,
                          double kappa, double M) {
  if (kappa < 0.0 || !(M > 0.0) || kappa > M / 2.0 + 1e-15) {
    throw ConfigError("smooth loss: need M > 0 and 0 <= kappa <= M/2");
  }
  LossSpec loss;
  loss.name = std::move(name);
  loss.value = std::move(value);
  loss.dplus = std::move(deriv);
  loss.dminus = loss.dplus;
  loss.d2 = std::move(second);
  loss.components = {SmoothPiece{loss.value, loss.dplus, loss.d2, M}};
  loss.kappa = kappa;
  loss.M = M;
  return loss;
}

LossSpec make_loss(const std::string& name) {
  if (name == "logistic") return make_logistic_loss();
  if (name == "squared") return make_squared_loss();
  if (name == "hinge") return make_hinge_loss();
  throw ConfigError("unknown loss '" + name + "' (expected logistic, squared or hinge)");
}

LossSpec bind_loss(LossSpec loss, const SampleSet& data) {
  if (loss.name == "squared") {
    loss.k1 = data.labels() ? data.labels()->cwiseAbs().maxCoeff() : 0.0;
  }
  return loss;
}

// --- DroProblem ------------------------------------------------------------

DroProblem::DroProblem(SampleSet data, CostField cost, LossSpec loss, double delta, double r_beta,
                       std::optional<Nondegeneracy> nondegeneracy)
    : data_(std::move(data)),
      cost_(std::move(cost)),
      loss_(std::move(loss)),
      delta_(delta),
      sqrt_delta_(std::sqrt(delta)),
      r_beta_(r_beta),
      nondegeneracy_(nondegeneracy) {
  validate();
}

void DroProblem::validate() const {
  if (!std::isfinite(delta_) || delta_ < 0.0) throw ConfigError("delta must be >= 0");
  if (!std::isfinite(r_beta_) || r_beta_ <= 0.0) throw ConfigError("r_beta must be > 0");
  if (cost_.dim() != data_.dim()) throw ConfigError("cost dimension does not match the data");
  const int per_sample = cost_.sample_count();
  if (per_sample >= 0 && per_sample != data_.size()) {
    throw ConfigError("per-sample cost has " + std::to_string(per_sample) + " entries for " +
                      std::to_string(data_.size()) + " samples");
  }
  if (!loss_.value || !loss_.dplus || !loss_.dminus || loss_.components.empty()) {
    throw ConfigError("loss specification is incomplete");
  }
  if (nondegeneracy_) {
    const auto& nd = *nondegeneracy_;
    if (!(nd.c1 > 0.0) || !(nd.c2 > 0.0) || !(nd.p > 0.0 && nd.p <= 1.0)) {
      throw ConfigError("nondegeneracy needs c1, c2 > 0 and p in (0, 1]");
    }
  }
}

DroProblem DroProblem::with_delta(double delta) const {
  return DroProblem(data_, cost_, loss_, delta, r_beta_, nondegeneracy_);
}

DroProblem DroProblem::with_loss(LossSpec loss) const {
  return DroProblem(data_, cost_, std::move(loss), delta_, r_beta_, nondegeneracy_);
}

DroProblem DroProblem::with_data(SampleSet data, CostField cost) const {
  return DroProblem(std::move(data), std::move(cost), loss_, delta_, r_beta_, nondegeneracy_);
}

// --- Decision --------------------------------------------------------------

Vector Decision::stacked() const {
  Vector v(beta.size() + 1);
  v.head(beta.size()) = beta;
  v(beta.size()) = lambda;
  return v;
}

Decision Decision::from_stacked(const Vector& v) {
  return Decision{v.head(v.size() - 1), v(v.size() - 1)};
}

// --- CSV -------------------------------------------------------------------

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("column '" + name + "' not found in CSV header");
  return static_cast<int>(it - header.begin());
}

CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  long line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_row(line);
    if (!have_header) {
      if (line_no == 1 && cells.size() > 0 && cells[0].rfind("\xEF\xBB\xBF", 0) == 0) {
        cells[0] = cells[0].substr(3);
      }
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ParseError(path + ": row " + std::to_string(line_no) + " has " +
                           std::to_string(cells.size()) + " cells, header has " +
                           std::to_string(table.header.size()),
                       line_no);
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      if (cell.empty()) {
        throw ParseError(path + ": missing value at row " + std::to_string(line_no) +
                             ", column '" + table.header[c] + "'",
                         line_no, static_cast<long>(c));
      }
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size() || errno == ERANGE) {
        throw ParseError(path + ": non-numeric value '" + cell + "' at row " +
                             std::to_string(line_no) + ", column '" + table.header[c] + "'",
                         line_no, static_cast<long>(c));
      }
      row[c] = v;
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(path + ": empty file");
  if (table.rows.empty()) throw ParseError(path + ": no data rows");
  return table;
}

SampleSet load_csv(const std::string& path, const CsvSchema& schema) {
  const CsvTable table = read_csv_table(path);
  std::optional<int> label_col;
  if (schema.label) label_col = table.column(*schema.label);
  std::vector<int> feature_cols;
  if (schema.features.empty()) {
    for (int c = 0; c < static_cast<int>(table.header.size()); ++c) {
      if (!label_col || c != *label_col) feature_cols.push_back(c);
    }
  } else {
    for (const auto& name : schema.features) feature_cols.push_back(table.column(name));
  }
  if (feature_cols.empty()) throw ConfigError(path + ": no feature columns");

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  Matrix points(static_cast<Eigen::Index>(feature_cols.size()), n);
  Vector labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      points(static_cast<Eigen::Index>(j), i) = row[static_cast<std::size_t>(feature_cols[j])];
    }
    if (label_col) labels(i) = row[static_cast<std::size_t>(*label_col)];
  }
  if (label_col) return SampleSet(std::move(points), std::move(labels));
  return SampleSet(std::move(points));
}

}  // namespace otdro
