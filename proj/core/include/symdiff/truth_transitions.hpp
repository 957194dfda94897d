#pragma once

#include "symdiff/constellation.hpp"
#include "symdiff/matrix.hpp"
#include "symdiff/schedule.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace symdiff {

enum class TransitionMethod { kAnalytic, kMonteCarlo, kHeuristic };

std::string to_string(TransitionMethod m);

/// One emitted transition matrix with its provenance.
struct TransitionMatrix {
  int k_from = 0;
  int k_to = 0;
  double variance = 0.0;  // cumulative (analytic) or added (region-to-region)
  TransitionMethod method = TransitionMethod::kAnalytic;
  std::uint64_t seed = 0;
  long long samples_per_symbol = 0;
  std::vector<int> unvisited_rows;  // MC rows replaced by identity rows
  Matrix matrix;
};

/// Ground-truth cumulative matrices Q_{t_k|t_0} for a set of steps.
struct TruthTransitionSet {
  int order = 0;
  std::uint64_t constellation_hash = 0;
  std::vector<TransitionMatrix> matrices;

  const TransitionMatrix& at_step(int k) const;
};

/// Entry (i, j): probability that s_i plus CN(0, v) noise lands in region j.
/// Separable per axis with per-axis standard deviation sqrt(v / 2).
Matrix point_to_region_matrix(const Constellation& c, double cum_variance);

TruthTransitionSet analytic_truth_set(const Constellation& c, const NoiseSchedule& s,
                                      const std::vector<int>& steps);

/// Monte-Carlo region-to-region matrix between schedule steps k_from < k_to.
///
/// For every start symbol u0, `samples_per_symbol` paths are simulated:
/// x' = s_u0 + n1 (variance cum_var(k_from)), i = detect(x');
/// x = x' + n2 (variance cum_var(k_to) - cum_var(k_from)), j = detect(x).
/// Counts are weighted by prior[u0] and rows normalized. The result is
/// identical for any thread count.
TransitionMatrix region_to_region_matrix(const Constellation& c, const NoiseSchedule& s,
                                         int k_from, int k_to, const Vector& prior,
                                         long long samples_per_symbol, std::uint64_t seed);

struct MarkovViolation {
  double error = 0.0;        // ||Q_{k2|0} - Q_{k1|0} Q_{k2|k1}||_F from run 1
  double error_rerun = 0.0;  // same with an independent MC estimate
  double fluctuation = 0.0;  // |error - error_rerun|
};

MarkovViolation markov_violation(const Constellation& c, const NoiseSchedule& s, int k1, int k2,
                                 const Vector& prior, long long samples_per_symbol,
                                 std::uint64_t seed);

/// Pairwise error probability P(s_i -> closer to s_j) under CN(0, v).
double pairwise_error_probability(const Constellation& c, Index i, Index j, double variance);

/// Heuristic per-step matrix: diagonal = probability of correct detection at
/// the step's noise variance, off-diagonal mass split in proportion to the
/// pairwise error probabilities.
Matrix dcddm_step_matrix(const Constellation& c, double step_variance);

/// Product of the first k heuristic step matrices of `linear_schedule`.
Matrix dcddm_cumulative_matrix(const Constellation& c, const NoiseSchedule& linear_schedule,
                               int k);

/// Heuristic cumulative matrix at the linear-schedule step whose cumulative
/// variance is closest to `target_cum_variance`.
Matrix dcddm_matched_matrix(const Constellation& c, const NoiseSchedule& linear_schedule,
                            double target_cum_variance);

Vector uniform_prior(int order);

std::string truth_set_to_json(const TruthTransitionSet& set);
TruthTransitionSet truth_set_from_json(const std::string& text);

}  // namespace symdiff
