#pragma once

#include "symdiff/matrix.hpp"
#include "symdiff/truth_transitions.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace symdiff {

/// Default subsampled steps for T = 100.
std::vector<int> default_fit_steps();

struct FitConfig {
  double lambda1 = 10.0;  // negative-entry penalty on the fitted matrices
  double lambda2 = 10.0;  // negative-entry penalty on the eigenvalues
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_iterations = 20000;
  /// Stop once the relative loss improvement over `plateau_window`
  /// iterations falls below `plateau_tol`.
  int plateau_window = 200;
  double plateau_tol = 1e-9;
  /// Standard deviation of the perturbation added to the identity block of V.
  double init_noise = 0.1;
  std::uint64_t seed = 1;
};

/// Eigen-structured transition model Qbar(t_k) = V diag(D_k) V^{-1}.
///
/// `diag` holds one row per entry of `steps`. For a coarse fit those are the
/// subsampled steps; after interpolate_full they are 0..T with row 0 = 1.
/// Column 0 of V is all ones and column 0 of every diag row is 1, which makes
/// each Qbar row-stochastic before clipping.
struct MarkovFit {
  int order = 0;
  int total_steps = 0;  // T
  std::uint64_t constellation_hash = 0;
  Matrix v;
  std::vector<int> steps;
  Matrix diag;

  // Diagnostics.
  std::vector<double> loss_trace;  // every 10th iteration, plus the final one
  std::vector<double> nmse;        // per entry of `steps` (coarse fits only)
  int iterations = 0;
  bool converged = false;
  double v_condition = 0.0;
  /// Largest change made when projecting the optimized diagonals onto
  /// [0, 1] and non-increasing sequences.
  double monotone_adjustment = 0.0;

  bool is_full() const;
};

struct P2Objective {
  double loss = 0.0;
  Matrix grad_v;     // column 0 zeroed (frozen)
  Matrix grad_diag;  // one row per target, column 0 zeroed (frozen)
};

/// Loss and analytic gradients of
///   sum_l ||Q_l - V D_l V^-1||_F^2 + lambda1 ||relu(-V D_l V^-1)||_F^2
///         + lambda2 ||relu(-D_l)||_F^2
/// with d(V^-1) = -V^-1 dV V^-1. Throws NumericalError if V is singular.
P2Objective p2_objective(const Matrix& v, const Matrix& diag, const std::vector<Matrix>& targets,
                         double lambda1, double lambda2);

/// Loss only (no gradient work).
double p2_loss(const Matrix& v, const Matrix& diag, const std::vector<Matrix>& targets,
               double lambda1, double lambda2);

/// Block coordinate descent with separate Adam states for V and the diagonals;
/// negative diagonals are clipped to zero after each diagonal update.
MarkovFit fit_p2(const TruthTransitionSet& targets, int total_steps, const FitConfig& config);

/// Per-coordinate monotone cubic Hermite interpolation of the coarse
/// diagonals over the knots {0} U steps (D(t_0) = I), evaluated at k = 0..T.
/// Throws ValidationError naming the coordinate if a coarse sequence is not
/// non-increasing or leaves [0, 1].
MarkovFit interpolate_full(const MarkovFit& coarse);

/// Fitted matrices before and after validity post-processing.
struct MaterializedProcess {
  int order = 0;
  int total_steps = 0;
  std::vector<Matrix> cumulative;  // [0..T], Qbar_{k|0}, clipped + renormalized
  std::vector<Matrix> single_step;  // [0..T], entry 0 unused (identity)
  std::vector<double> cumulative_clip_mass;  // max per-row clipped mass, per k
  std::vector<double> step_clip_mass;
  int floored_diagonals = 0;  // diagonal entries raised to the epsilon floor
};

constexpr double kDiagonalFloor = 1e-8;

Matrix fitted_cumulative(const MarkovFit& fit, int k);
/// V diag(D_to / D_from) V^-1 with both diagonals floored at kDiagonalFloor.
Matrix fitted_transition(const MarkovFit& fit, int k_from, int k_to);

MaterializedProcess materialize(const MarkovFit& full);

/// max over 0 <= k < l <= T of ||Qbar_{l|0} - Qbar_{k|0} Qbar_{l|k}||_F before clipping.
double chapman_kolmogorov_residual(const MarkovFit& full);

/// Fit artifact (JSON) round trip.
std::string fit_to_json(const MarkovFit& fit);
MarkovFit fit_from_json(const std::string& text);

}  // namespace symdiff
