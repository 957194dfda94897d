#pragma once

#include "symdiff/codebook.hpp"
#include "symdiff/denoiser.hpp"
#include "symdiff/diffusion_process.hpp"
#include "symdiff/matrix.hpp"

#include <cstdint>
#include <vector>

namespace symdiff {

/// u_k ~ Qbar_{k|0}(u0_i, .) independently per position. Position i uses a
/// counter draw keyed on (seed, k, i).
IndexSequence forward_sample(const DiffusionProcess& p, const IndexSequence& u0, int k,
                             std::uint64_t seed);

/// q(u_{k-1} | u_k, u_0) for 1 <= k <= T. Throws NumericalError when
/// Qbar_{k|0}(u0, uk) = 0.
Vector posterior(const DiffusionProcess& p, Index uk, Index u0, int k);

/// posterior() for all (u_k, u_0): element [uk](u0, a). Rows with
/// Qbar_{k|0}(u0, uk) = 0 are left at zero and flagged in `reachable`.
struct PosteriorTable {
  std::vector<Matrix> by_uk;
  Matrix reachable;  // (u0, uk) -> 1 or 0
};
PosteriorTable posterior_table(const DiffusionProcess& p, int k);

/// p(u_{k-1} = a | u_k) = sum_u0 q(a | u_k, u_0) p(u_0 | u_k) for every
/// position (N x M). Checks the denoiser contract and throws NumericalError
/// if the denoiser puts mass on a clean symbol that cannot reach u_k.
Matrix reverse_kernel(const DiffusionProcess& p, const Denoiser& d, const Codebook& cb,
                      const IndexSequence& uk, int k);

enum class ReverseMode {
  kSample,    // draw u_{k-1} from the kernel at each step, argmax at the end
  kMarginal,  // propagate the full distribution, argmax at the end
};

/// Run the reverse chain from step k_start down to 0 starting at `observed`.
/// kMarginal requires a position-independent denoiser.
IndexSequence reverse_infer(const DiffusionProcess& p, const Denoiser& d, const Codebook& cb,
                            const IndexSequence& observed, int k_start, std::uint64_t seed,
                            ReverseMode mode = ReverseMode::kMarginal);

/// Distribution over u_0 after exact reverse propagation from a single
/// observed state (position-independent denoisers only), one row per state.
Matrix reverse_marginals(const DiffusionProcess& p, const Denoiser& d, const Codebook& cb,
                         int k_start);

struct DiffusionLosses {
  double l_dt = 0.0;      // per-position average of the T-term bound estimate
  double l_g = 0.0;       // per-position average of -log p(u_0 | u_k)
  double l_lambda = 0.0;  // l_dt + lambda * l_g
};

/// Monte-Carlo estimate over a dataset of clean sequences. Each sequence
/// draws its own k (uniform on 2..T for the KL term, 1..T for L_G). Values
/// may be +inf when the denoiser assigns zero probability to the truth.
DiffusionLosses diffusion_losses(const DiffusionProcess& p, const Denoiser& d, const Codebook& cb,
                                 const std::vector<IndexSequence>& dataset, double lambda,
                                 std::uint64_t seed);

/// Index of the largest entry; ties to the lowest index.
Index argmax_lowest(const Eigen::Ref<const RowVector>& row);

}  // namespace symdiff
