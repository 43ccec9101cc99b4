#pragma once

#include "otdro/model.hpp"

namespace otdro::testing {

/// d = 1, A = 1, one atom x = 0 with label y = 1, squared loss, δ = 0.25.
inline DroProblem single_atom(double delta = 0.25, double r_beta = 2.0) {
  Matrix x(1, 1);
  x << 0.0;
  Vector y(1);
  y << 1.0;
  return DroProblem(SampleSet(x, y), CostField::identity(1), make_squared_loss(), delta, r_beta);
}

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index j = 0;
  for (double x : values) v(j++) = x;
  return v;
}

}  // namespace otdro::testing
