#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace symdiff {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Symbol / codeword indices are zero-based throughout the library.
using Index = int;
using IndexSequence = std::vector<Index>;

/// Largest |row sum - 1| over all rows.
double max_row_sum_deviation(const Matrix& m);

/// True when all entries are >= -tol and every row sums to 1 within tol.
bool is_row_stochastic(const Matrix& m, double tol);

/// Sum of |negative entries| per row.
Vector negative_mass_per_row(const Matrix& m);

/// Clip negative entries to zero and renormalize rows. Rows that become all
/// zero are replaced by the identity row. Returns the clipped mass per row.
Vector clip_and_renormalize(Matrix& m);

/// ||a - b||_F^2 / ||a||_F^2 with `a` the reference.
double nmse(const Matrix& reference, const Matrix& estimate);

}  // namespace symdiff
