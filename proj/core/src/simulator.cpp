#include "symdiff/simulator.hpp"

#include "symdiff/error.hpp"
#include "symdiff/io.hpp"
#include "symdiff/parallel.hpp"
#include "symdiff/rng.hpp"
#include "symdiff/truth_transitions.hpp"

#include <chrono>
#include <cmath>

namespace symdiff {

std::vector<Point2> awgn(const std::vector<Point2>& symbols, double eta_linear, double power,
                         std::uint64_t seed) {
  if (!(eta_linear > 0.0)) throw ValidationError("SNR must be positive");
  const double sd = std::isinf(eta_linear) ? 0.0 : std::sqrt(power / (2.0 * eta_linear));
  std::vector<Point2> out(symbols.size());
  constexpr std::size_t kChunk = 8192;
  parallel_for((symbols.size() + kChunk - 1) / kChunk, [&](std::size_t c) {
    const std::size_t end = std::min(symbols.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      out[i] = {symbols[i].i + sd * counter_normal(seed, i, 0),
                symbols[i].q + sd * counter_normal(seed, i, 1)};
    }
  });
  return out;
}

DiffusionProcess process_from_fit(const MarkovFit& fit) {
  const MarkovFit full = fit.is_full() ? fit : interpolate_full(fit);
  MaterializedProcess mp = materialize(full);
  return DiffusionProcess::from_steps(std::move(mp.single_step));
}

void SimContext::validate() const {
  if (!constellation || !schedule || !process || !codebook || !source || !denoiser) {
    throw ValidationError("simulation context is incomplete");
  }
  const int m = constellation->order();
  if (process->order() != m || codebook->size() != m || denoiser->order() != m ||
      prior.size() != m) {
    throw ValidationError("artifact mismatch: constellation, process, codebook, denoiser and "
                          "prior disagree on M");
  }
  if (process->steps() != schedule->steps()) {
    throw ValidationError("artifact mismatch: process has " + std::to_string(process->steps()) +
                          " steps, schedule has " + std::to_string(schedule->steps()));
  }
  if (codebook->dim() != source->dim()) {
    throw ValidationError("artifact mismatch: codebook dimension differs from the source");
  }
}

DenoiserKind parse_denoiser_kind(const std::string& name) {
  if (name == "exact-bayes") return DenoiserKind::kExactBayes;
  if (name == "uniform") return DenoiserKind::kUniform;
  if (name == "observed") return DenoiserKind::kObserved;
  throw ValidationError("unknown denoiser '" + name + "' (exact-bayes, uniform, observed)");
}

std::string to_string(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::kExactBayes: return "exact-bayes";
    case DenoiserKind::kUniform: return "uniform";
    case DenoiserKind::kObserved: return "observed";
  }
  return "?";
}

SimContext make_context(const Constellation& c, const NoiseSchedule& s, const MarkovFit& fit,
                        const Codebook& cb, const FeatureSource& src, DenoiserKind kind,
                        long long prior_samples, std::uint64_t prior_seed) {
  if (fit.order != c.order()) {
    throw ValidationError("artifact mismatch: fit has M=" + std::to_string(fit.order) +
                          ", constellation has M=" + std::to_string(c.order()));
  }
  if (fit.constellation_hash != 0 && fit.constellation_hash != c.hash()) {
    throw ValidationError("artifact mismatch: fit was produced for a different constellation");
  }
  if (fit.total_steps != s.steps()) {
    throw ValidationError("artifact mismatch: fit has T=" + std::to_string(fit.total_steps) +
                          ", schedule has T=" + std::to_string(s.steps()));
  }
  SimContext ctx;
  ctx.constellation = std::make_shared<Constellation>(c);
  ctx.schedule = std::make_shared<NoiseSchedule>(s);
  ctx.process = std::make_shared<DiffusionProcess>(process_from_fit(fit));
  auto codebook = std::make_shared<Codebook>(cb);
  ctx.codebook = codebook;
  ctx.source = std::make_shared<FeatureSource>(src);
  ctx.prior = estimate_prior(cb, src, prior_samples, prior_seed);
  switch (kind) {
    case DenoiserKind::kExactBayes:
      ctx.denoiser = std::make_shared<ExactBayesDenoiser>(ctx.prior, ctx.process, codebook);
      break;
    case DenoiserKind::kUniform:
      ctx.denoiser = std::make_shared<UniformDenoiser>(c.order());
      break;
    case DenoiserKind::kObserved:
      ctx.denoiser = std::make_shared<ObservedDeltaDenoiser>(codebook);
      break;
  }
  ctx.validate();
  return ctx;
}

double wilson_halfwidth(long long errors, long long n, double z) {
  if (n <= 0) return 0.0;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(errors) / nn;
  const double z2 = z * z;
  return z / (1.0 + z2 / nn) * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
}

SimRow run_point(const SimContext& ctx, double snr_db, long long n_symbols, std::uint64_t seed,
                 ReverseMode mode) {
  ctx.validate();
  if (n_symbols < 1) throw ValidationError("n_symbols must be >= 1");
  if (!std::isfinite(snr_db)) throw ValidationError("SNR must be finite");
  const auto t0 = std::chrono::steady_clock::now();
  const Constellation& c = *ctx.constellation;
  const Codebook& cb = *ctx.codebook;
  const double eta = std::pow(10.0, snr_db / 10.0);

  const Matrix y = ctx.source->sample(n_symbols, derive_seed(seed, 0), 0);
  const IndexSequence z = cb.quantize(y);
  IndexSequence u(z.size());
  std::vector<Point2> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    u[i] = cb.symbol_of(z[i]);
    x[i] = c.point(u[i]);
  }
  const std::vector<Point2> rx = awgn(x, eta, c.avg_power(), derive_seed(seed, 1));
  IndexSequence detected(rx.size());
  for (std::size_t i = 0; i < rx.size(); ++i) detected[i] = c.detect(rx[i]);

  SimRow row;
  row.snr_db = snr_db;
  row.seed = seed;
  row.n_symbols = n_symbols;
  row.k_star = ctx.schedule->starting_index(eta);
  const IndexSequence corrected =
      reverse_infer(*ctx.process, *ctx.denoiser, cb, detected, row.k_star, derive_seed(seed, 2), mode);

  // MAP under the true channel at this SNR.
  const Matrix channel = point_to_region_matrix(c, c.avg_power() / eta);
  IndexSequence map_decision(c.order());
  for (Index b = 0; b < c.order(); ++b) {
    map_decision[b] = argmax_lowest(ctx.prior.cwiseProduct(channel.col(b)).transpose());
  }

  long long err_det = 0, err_cor = 0, err_map = 0;
  double se_plain = 0.0, se_cor = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    err_det += detected[i] != u[i];
    err_cor += corrected[i] != u[i];
    err_map += map_decision[detected[i]] != u[i];
    const auto sent = cb.codeword_for_symbol(u[i]);
    se_plain += (cb.codeword_for_symbol(detected[i]) - sent).squaredNorm();
    se_cor += (cb.codeword_for_symbol(corrected[i]) - sent).squaredNorm();
  }
  const double n = static_cast<double>(n_symbols);
  row.ser_detected = err_det / n;
  row.ser_corrected = err_cor / n;
  row.ser_map_oracle = err_map / n;
  row.mse_plain = se_plain / (n * cb.dim());
  row.mse_corrected = se_cor / (n * cb.dim());
  row.ci_halfwidth = wilson_halfwidth(err_cor, n_symbols);
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

SimReport sweep(const SimContext& ctx, const SimConfig& cfg) {
  SimReport rep;
  rep.rows.reserve(cfg.snr_db.size());
  for (std::size_t p = 0; p < cfg.snr_db.size(); ++p) {
    rep.rows.push_back(run_point(ctx, cfg.snr_db[p], cfg.n_symbols, derive_seed(cfg.seed, p), cfg.mode));
  }
  return rep;
}

std::string report_to_csv(const SimReport& report) {
  std::string out =
      "snr_db,ser_detected,ser_corrected,ser_map_oracle,mse_plain,mse_corrected,n_symbols,"
      "ci_halfwidth\n";
  for (const auto& r : report.rows) {
    out += format_double(r.snr_db) + ',' + format_double(r.ser_detected) + ',' +
           format_double(r.ser_corrected) + ',' + format_double(r.ser_map_oracle) + ',' +
           format_double(r.mse_plain) + ',' + format_double(r.mse_corrected) + ',' +
           std::to_string(r.n_symbols) + ',' + format_double(r.ci_halfwidth) + '\n';
  }
  return out;
}

}  // namespace symdiff
