#pragma once

#include "symdiff/codebook.hpp"
#include "symdiff/constellation.hpp"
#include "symdiff/denoiser.hpp"
#include "symdiff/diffusion.hpp"
#include "symdiff/diffusion_process.hpp"
#include "symdiff/markov_fit.hpp"
#include "symdiff/schedule.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace symdiff {

/// Adds CN(0, P/eta) noise to each point. Position i uses counter draws keyed
/// on (seed, i), so the result does not depend on the thread count.
std::vector<Point2> awgn(const std::vector<Point2>& symbols, double eta_linear, double power,
                         std::uint64_t seed);

/// Diffusion process backed by a fitted model. The cumulative matrices are
/// the running products of the materialized single-step matrices.
DiffusionProcess process_from_fit(const MarkovFit& fit);

/// Everything the receiver needs; all pieces must agree on M.
struct SimContext {
  std::shared_ptr<const Constellation> constellation;
  std::shared_ptr<const NoiseSchedule> schedule;
  std::shared_ptr<const DiffusionProcess> process;
  std::shared_ptr<const Codebook> codebook;
  std::shared_ptr<const FeatureSource> source;
  std::shared_ptr<const Denoiser> denoiser;
  Vector prior;  // over symbols; also drives the MAP oracle

  void validate() const;
};

enum class DenoiserKind { kExactBayes, kUniform, kObserved };
DenoiserKind parse_denoiser_kind(const std::string& name);
std::string to_string(DenoiserKind kind);

/// Builds a context around a fitted process. The prior is estimated from
/// `prior_samples` source draws (add-one smoothing).
SimContext make_context(const Constellation& c, const NoiseSchedule& s, const MarkovFit& fit,
                        const Codebook& cb, const FeatureSource& src, DenoiserKind kind,
                        long long prior_samples, std::uint64_t prior_seed);

struct SimConfig {
  std::vector<double> snr_db;
  long long n_symbols = 100000;
  std::uint64_t seed = 1;
  ReverseMode mode = ReverseMode::kMarginal;
};

struct SimRow {
  double snr_db = 0.0;
  int k_star = 0;
  long long n_symbols = 0;
  double ser_detected = 0.0;
  double ser_corrected = 0.0;
  double ser_map_oracle = 0.0;
  double mse_plain = 0.0;
  double mse_corrected = 0.0;
  double ci_halfwidth = 0.0;  // 95% Wilson half-width of ser_corrected
  double wall_seconds = 0.0;  // not part of the CSV
  std::uint64_t seed = 0;
};

struct SimReport {
  std::vector<SimRow> rows;
};

/// 95% Wilson score interval half-width for `errors` out of `n`.
double wilson_halfwidth(long long errors, long long n, double z = 1.959963984540054);

/// One SNR point: features -> quantize -> modulate -> AWGN -> detect ->
/// reverse diffusion from k* -> dequantize. The MAP oracle decides
/// argmax_a prior(a) P(detect b | sent a) under the true channel.
SimRow run_point(const SimContext& ctx, double snr_db, long long n_symbols, std::uint64_t seed,
                 ReverseMode mode = ReverseMode::kMarginal);

/// Runs every SNR point; point p uses seed derive_seed(cfg.seed, p).
SimReport sweep(const SimContext& ctx, const SimConfig& cfg);

/// CSV with columns snr_db, ser_detected, ser_corrected, ser_map_oracle,
/// mse_plain, mse_corrected, n_symbols, ci_halfwidth.
std::string report_to_csv(const SimReport& report);

}  // namespace symdiff
