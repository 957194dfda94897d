#pragma once

#include "symdiff/matrix.hpp"

#include <vector>

namespace symdiff {

/// A discrete forward process on M states: cumulative matrices Qbar_{k|0}
/// and single-step matrices Q_{k|k-1} for k = 0..T (entry 0 is the identity).
class DiffusionProcess {
 public:
  /// Validates row-stochasticity (1e-9), the identity at k = 0 and
  /// ||Qbar_k - Qbar_{k-1} Q_k||_F <= `consistency_tol`.
  static DiffusionProcess from_matrices(std::vector<Matrix> cumulative,
                                        std::vector<Matrix> single_step,
                                        double consistency_tol = 1e-6);

  /// Cumulative matrices built as running products of the step matrices.
  /// `single_step[0]` is ignored.
  static DiffusionProcess from_steps(std::vector<Matrix> single_step);

  int order() const noexcept { return order_; }
  int steps() const noexcept { return static_cast<int>(cumulative_.size()) - 1; }
  const Matrix& cumulative(int k) const;
  const Matrix& step(int k) const;

  /// Largest ||Qbar_k - Qbar_{k-1} Q_k||_F over k.
  double consistency_residual() const;

 private:
  DiffusionProcess() = default;
  int order_ = 0;
  std::vector<Matrix> cumulative_;
  std::vector<Matrix> step_;
};

}  // namespace symdiff
