#include "symdiff/matrix.hpp"

#include <cmath>

namespace symdiff {

double max_row_sum_deviation(const Matrix& m) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    worst = std::max(worst, std::abs(m.row(r).sum() - 1.0));
  }
  return worst;
}

bool is_row_stochastic(const Matrix& m, double tol) {
  if (m.size() == 0 || !m.allFinite()) return false;
  if (m.minCoeff() < -tol) return false;
  return max_row_sum_deviation(m) <= tol;
}

Vector negative_mass_per_row(const Matrix& m) {
  return (-m.array()).max(0.0).matrix().rowwise().sum();
}

Vector clip_and_renormalize(Matrix& m) {
  Vector clipped = negative_mass_per_row(m);
  m = m.array().max(0.0).matrix();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double s = m.row(r).sum();
    if (s > 0.0) {
      m.row(r) /= s;
    } else {
      m.row(r).setZero();
      m(r, r) = 1.0;
    }
  }
  return clipped;
}

double nmse(const Matrix& reference, const Matrix& estimate) {
  return (reference - estimate).squaredNorm() / reference.squaredNorm();
}

}  // namespace symdiff
