// symdiff command-line front end.
//
// Every subcommand accepts --config FILE with "key = value" lines, where key
// is a long flag name without the leading dashes. Flags given on the command
// line override the file. Outputs go to --output-dir (or $SYMDIFF_OUTPUT_DIR,
// or the working directory) and are written atomically, each with a
// <name>.manifest.json next to it.

#include "symdiff/codebook.hpp"
#include "symdiff/constellation.hpp"
#include "symdiff/error.hpp"
#include "symdiff/io.hpp"
#include "symdiff/markov_fit.hpp"
#include "symdiff/parallel.hpp"
#include "symdiff/schedule.hpp"
#include "symdiff/simulator.hpp"
#include "symdiff/truth_transitions.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef SYMDIFF_VERSION
#define SYMDIFF_VERSION "dev"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace symdiff;

namespace {

// Options that describe where/how a run happens rather than what it computes.
// They go into the manifest but not into data outputs.
const std::vector<std::string> kRunOnlyOptions = {"config", "output-dir", "threads", "out"};

struct Common {
  std::string config;
  std::string output_dir;
  std::string out;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

struct QamOpts {
  int order = 16;
  double power = 1.0;
};

struct Artifact {
  std::string name;
  fs::path path;
  std::uint64_t hash = 0;
};

struct RunState {
  std::string command;
  CLI::App* sub = nullptr;
  Common common;
  QamOpts qam;
  ScheduleParams sched;
  std::vector<Artifact> inputs;
  std::vector<Artifact> outputs;
  std::chrono::steady_clock::time_point start;
};

void add_common(CLI::App* sub, RunState& st, const std::string& default_out, bool stochastic) {
  sub->add_option("--config", st.common.config, "Flat key = value config file");
  sub->add_option("--output-dir", st.common.output_dir,
                  "Output directory (default: $SYMDIFF_OUTPUT_DIR or .)");
  st.common.out = default_out;
  sub->add_option("--out", st.common.out, "Primary output file name");
  sub->add_option("--threads", st.common.threads, "Worker cap, 0 = all cores")
      ->check(CLI::NonNegativeNumber);
  if (stochastic) {
    st.common.seed_opt = sub->add_option("--seed", st.common.seed, "Random seed (required)");
  }
}

void add_qam(CLI::App* sub, RunState& st) {
  sub->add_option("--order", st.qam.order, "QAM order M (perfect square)");
  sub->add_option("--power", st.qam.power, "Average symbol power P");
}

void add_schedule(CLI::App* sub, RunState& st) {
  sub->add_option("--steps", st.sched.steps, "Number of diffusion steps T");
  sub->add_option("--nu-start", st.sched.nu_start, "Sigmoid ramp start");
  sub->add_option("--nu-end", st.sched.nu_end, "Sigmoid ramp end");
  sub->add_option("--xi1", st.sched.xi1, "SNR scale (dB)");
  sub->add_option("--xi2", st.sched.xi2, "SNR offset (dB)");
  sub->add_option("--snr-cap-db", st.sched.snr_cap_db, "Upper SNR clamp (dB)");
}

Constellation make_constellation(const RunState& st) {
  return Constellation::square_qam(st.qam.order, st.qam.power);
}

NoiseSchedule make_schedule(const RunState& st) {
  ScheduleParams p = st.sched;
  p.power = st.qam.power;
  return NoiseSchedule::sigmoid(p);
}

std::vector<int> parse_int_list(const std::string& field, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ValidationError(field + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& field, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ValidationError(field + ": '" + item + "' is not a number");
    }
  }
  return out;
}

fs::path output_dir(const RunState& st) {
  if (!st.common.output_dir.empty()) return st.common.output_dir;
  if (const char* env = std::getenv("SYMDIFF_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

fs::path output_path(const RunState& st, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : output_dir(st) / p;
}

std::string load_input(RunState& st, const std::string& field, const std::string& path) {
  if (path.empty()) throw ValidationError(field + ": path is required");
  if (!fs::exists(path)) throw ValidationError(field + ": file not found: " + path);
  std::string text = read_file(path);
  st.inputs.push_back({field, path, fnv1a64(text)});
  return text;
}

void write_output(RunState& st, const fs::path& path, const std::string& content) {
  atomic_write(path, content);
  st.outputs.push_back({path.filename().string(), path, fnv1a64(content)});
}

std::string option_value(const CLI::Option* opt) {
  if (opt->count() > 0) {
    std::string v;
    for (const auto& r : opt->results()) v = r;  // last wins
    return v;
  }
  return opt->get_default_str();
}

/// Resolved configuration of the subcommand, optionally without run-only options.
json resolved_config(const RunState& st, bool include_run_only) {
  json cfg;
  for (const CLI::Option* opt : st.sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    const bool run_only =
        std::find(kRunOnlyOptions.begin(), kRunOnlyOptions.end(), name) != kRunOnlyOptions.end();
    if (run_only && !include_run_only) continue;
    cfg[name] = option_value(opt);
  }
  return cfg;
}

json artifact_hashes(const std::vector<Artifact>& list) {
  json out;
  for (const auto& a : list) out[a.name] = hex64(a.hash);
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifests(const RunState& st, const json& extra) {
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - st.start).count();
  for (const auto& out : st.outputs) {
    json m;
    m["command"] = st.command;
    m["tool_version"] = SYMDIFF_VERSION;
    m["timestamp"] = utc_timestamp();
    m["config"] = resolved_config(st, true);
    if (st.common.seed_opt) m["seed"] = st.common.seed;
    m["inputs"] = artifact_hashes(st.inputs);
    json outs;
    for (const auto& o : st.outputs) outs[o.path.filename().string()] = hex64(o.hash);
    m["outputs"] = std::move(outs);
    m["wall_seconds"] = wall;
    if (!extra.is_null()) m["run"] = extra;
    fs::path mp = out.path;
    mp += ".manifest.json";
    atomic_write(mp, m.dump(2) + "\n");
  }
}

/// Sidecar for data outputs: config echo and artifact hashes, no timing.
json data_header(const RunState& st) {
  json h;
  h["command"] = st.command;
  h["config"] = resolved_config(st, false);
  h["inputs"] = artifact_hashes(st.inputs);
  return h;
}

void check_seed(const RunState& st) {
  if (st.common.seed_opt && st.common.seed_opt->count() == 0) {
    throw ValidationError("--seed is required for '" + st.command + "'");
  }
}

// ---------------------------------------------------------------------------
// Subcommands.

struct ScheduleCmd {
  void run(RunState& st) {
    const NoiseSchedule s = make_schedule(st);
    write_output(st, output_path(st, st.common.out), s.to_csv());
    std::printf("wrote %d steps to %s\n", s.steps(),
                output_path(st, st.common.out).string().c_str());
    write_manifests(st, nullptr);
  }
};

struct TruthCmd {
  std::string fit_steps = "2,4,9,20,40,65,84,94,98,100";
  std::string method = "analytic";
  long long samples = 100000;

  void add(CLI::App* sub) {
    sub->add_option("--fit-steps", fit_steps, "Comma-separated steps k");
    sub->add_option("--method", method, "analytic or monte-carlo")
        ->check(CLI::IsMember({"analytic", "monte-carlo"}));
    sub->add_option("--samples-per-symbol", samples, "Monte-Carlo samples per start symbol");
  }

  void run(RunState& st) {
    const Constellation c = make_constellation(st);
    const NoiseSchedule s = make_schedule(st);
    const std::vector<int> steps = parse_int_list("fit-steps", fit_steps);
    TruthTransitionSet set;
    if (method == "analytic") {
      set = analytic_truth_set(c, s, steps);
    } else {
      if (st.common.seed_opt->count() == 0) {
        throw ValidationError("--seed is required for '--method monte-carlo'");
      }
      set.order = c.order();
      set.constellation_hash = c.hash();
      const Vector prior = uniform_prior(c.order());
      for (int k : steps) {
        TransitionMatrix t = region_to_region_matrix(c, s, 0, k, prior, samples,
                                                     derive_seed(st.common.seed, k));
        set.matrices.push_back(std::move(t));
      }
    }
    const fs::path out = output_path(st, st.common.out);
    write_output(st, out, truth_set_to_json(set));
    std::printf("wrote %zu %s matrices to %s\n", set.matrices.size(), method.c_str(),
                out.string().c_str());
    write_manifests(st, nullptr);
  }
};

struct VerifyMarkovCmd {
  int k1 = 9;
  int k2 = 20;
  long long samples = 1000000;

  void add(CLI::App* sub) {
    sub->add_option("--k1", k1, "Intermediate step");
    sub->add_option("--k2", k2, "Final step");
    sub->add_option("--samples-per-symbol", samples, "Monte-Carlo samples per start symbol");
  }

  void run(RunState& st) {
    check_seed(st);
    const Constellation c = make_constellation(st);
    const NoiseSchedule s = make_schedule(st);
    const MarkovViolation mv =
        markov_violation(c, s, k1, k2, uniform_prior(c.order()), samples, st.common.seed);
    json j = data_header(st);
    j["k1"] = k1;
    j["k2"] = k2;
    j["error"] = mv.error;
    j["error_rerun"] = mv.error_rerun;
    j["fluctuation"] = mv.fluctuation;
    const fs::path out = output_path(st, st.common.out);
    write_output(st, out, j.dump(2) + "\n");
    std::printf("e = %.4f  (rerun %.4f, fluctuation %.2g)\n", mv.error, mv.error_rerun,
                mv.fluctuation);
    write_manifests(st, nullptr);
  }
};

TruthTransitionSet load_or_compute_targets(RunState& st, const std::string& path,
                                           const std::string& fit_steps, const Constellation& c,
                                           const NoiseSchedule& s) {
  if (path.empty()) return analytic_truth_set(c, s, parse_int_list("fit-steps", fit_steps));
  TruthTransitionSet set = truth_set_from_json(load_input(st, "targets", path));
  if (set.order != c.order()) {
    throw ValidationError("targets: artifact has M=" + std::to_string(set.order) +
                          ", constellation has M=" + std::to_string(c.order()));
  }
  if (set.constellation_hash != c.hash()) {
    throw ValidationError("targets: constellation hash does not match");
  }
  for (const auto& t : set.matrices) {
    if (t.k_to > s.steps()) {
      throw ValidationError("targets: step " + std::to_string(t.k_to) + " exceeds T=" +
                            std::to_string(s.steps()));
    }
  }
  return set;
}

struct FitCmd {
  std::string targets;
  std::string fit_steps = "2,4,9,20,40,65,84,94,98,100";
  FitConfig cfg;

  void add(CLI::App* sub) {
    sub->add_option("--targets", targets, "Truth-set JSON (default: analytic at --fit-steps)");
    sub->add_option("--fit-steps", fit_steps, "Steps used when --targets is not given");
    sub->add_option("--lambda1", cfg.lambda1, "Penalty on negative matrix entries");
    sub->add_option("--lambda2", cfg.lambda2, "Penalty on negative eigenvalues");
    sub->add_option("--learning-rate", cfg.learning_rate, "Adam learning rate");
    sub->add_option("--max-iterations", cfg.max_iterations, "Iteration cap");
    sub->add_option("--plateau-window", cfg.plateau_window, "Plateau window (iterations)");
    sub->add_option("--plateau-tol", cfg.plateau_tol, "Relative improvement threshold");
    sub->add_option("--init-noise", cfg.init_noise, "Std of the eigenvector perturbation");
  }

  void run(RunState& st) {
    check_seed(st);
    const Constellation c = make_constellation(st);
    const NoiseSchedule s = make_schedule(st);
    const TruthTransitionSet set = load_or_compute_targets(st, targets, fit_steps, c, s);
    cfg.seed = st.common.seed;
    const MarkovFit fit = fit_p2(set, s.steps(), cfg);
    const fs::path out = output_path(st, st.common.out);
    write_output(st, out, fit_to_json(fit));
    std::printf("fit: %d iterations, loss %.6g, %s\n", fit.iterations,
                fit.loss_trace.empty() ? 0.0 : fit.loss_trace.back(),
                fit.converged ? "converged" : "iteration cap reached");
    for (std::size_t i = 0; i < fit.steps.size(); ++i) {
      std::printf("  k=%3d  nmse %.3e\n", fit.steps[i], fit.nmse[i]);
    }
    write_manifests(st, nullptr);
  }
};

MarkovFit load_fit(RunState& st, const std::string& path, const Constellation& c,
                   const NoiseSchedule& s) {
  MarkovFit fit = fit_from_json(load_input(st, "fit", path));
  if (fit.order != c.order()) {
    throw ValidationError("fit: artifact has M=" + std::to_string(fit.order) +
                          ", constellation has M=" + std::to_string(c.order()));
  }
  if (fit.constellation_hash != c.hash()) {
    throw ValidationError("fit: constellation hash does not match");
  }
  if (fit.total_steps != s.steps()) {
    throw ValidationError("fit: artifact has T=" + std::to_string(fit.total_steps) +
                          ", schedule has T=" + std::to_string(s.steps()));
  }
  return fit;
}

struct CheckFitCmd {
  std::string fit_path;
  std::string targets;

  void add(CLI::App* sub) {
    sub->add_option("--fit", fit_path, "Fit JSON from 'fit'");
    sub->add_option("--targets", targets, "Truth-set JSON (default: analytic at the fit steps)");
  }

  void run(RunState& st) {
    const Constellation c = make_constellation(st);
    const NoiseSchedule s = make_schedule(st);
    const MarkovFit fit = load_fit(st, fit_path, c, s);
    const MarkovFit full = fit.is_full() ? fit : interpolate_full(fit);
    std::vector<int> steps = fit.is_full() ? std::vector<int>{} : fit.steps;
    if (steps.empty()) steps = default_fit_steps();
    std::string list;
    for (int k : steps) list += (list.empty() ? "" : ",") + std::to_string(k);
    const TruthTransitionSet set = load_or_compute_targets(st, targets, list, c, s);
    const NoiseSchedule lin = NoiseSchedule::linear(s.steps(), s.power(), s.cum_var(s.steps()));

    std::string csv = "k,nmse_sscdm,nmse_dcddm\n";
    json rows = json::array();
    for (const auto& t : set.matrices) {
      const int k = t.k_to;
      const double a = nmse(t.matrix, fitted_cumulative(full, k));
      const double b = nmse(t.matrix, dcddm_matched_matrix(c, lin, s.cum_var(k)));
      csv += std::to_string(k) + ',' + format_double(a) + ',' + format_double(b) + '\n';
      rows.push_back({{"k", k}, {"nmse_sscdm", a}, {"nmse_dcddm", b}});
    }
    const MaterializedProcess mp = materialize(full);
    double cum_clip = 0.0, step_clip = 0.0;
    for (double v : mp.cumulative_clip_mass) cum_clip = std::max(cum_clip, v);
    for (double v : mp.step_clip_mass) step_clip = std::max(step_clip, v);
    bool monotone = true;
    for (int k = 1; k < full.diag.rows(); ++k) {
      if ((full.diag.row(k).array() > full.diag.row(k - 1).array()).any()) monotone = false;
    }
    const double ck = chapman_kolmogorov_residual(full);

    const fs::path out = output_path(st, st.common.out);
    write_output(st, out, csv);
    json side = data_header(st);
    side["steps"] = std::move(rows);
    side["chapman_kolmogorov_residual"] = ck;
    side["diagonals_non_increasing"] = monotone;
    side["max_cumulative_clip_mass"] = cum_clip;
    side["max_step_clip_mass"] = step_clip;
    side["floored_diagonals"] = mp.floored_diagonals;
    fs::path sp = out;
    sp.replace_extension(".json");
    write_output(st, sp, side.dump(2) + "\n");
    std::printf("%s", csv.c_str());
    std::printf("CK residual %.3g, non-increasing %s, clip mass cum %.3g step %.3g\n", ck,
                monotone ? "yes" : "no", cum_clip, step_clip);
    write_manifests(st, nullptr);
  }
};

struct SourceOpts {
  std::string kind = "mixture";
  int components = 8;
  double zipf = 1.0;
  std::uint64_t source_seed = 2024;
  double spread = 0.05;
  int dim = 4;

  void add(CLI::App* sub, bool allow_uniform) {
    auto* k = sub->add_option("--source", kind,
                              allow_uniform ? "mixture, or uniform (one blob per codeword)"
                                            : "Feature source (mixture)");
    k->check(allow_uniform ? CLI::IsMember({"mixture", "uniform"}) : CLI::IsMember({"mixture"}));
    sub->add_option("--source-components", components, "Mixture components");
    sub->add_option("--source-zipf", zipf, "Zipf exponent of the component weights");
    sub->add_option("--source-seed", source_seed, "Seed of the mixture parameters");
    sub->add_option("--source-dim", dim, "Feature dimension d");
    if (allow_uniform) sub->add_option("--source-spread", spread, "Blob std for --source uniform");
  }

  FeatureSource make(const Codebook* cb) const {
    if (kind == "uniform") {
      if (!cb) throw ValidationError("source: uniform source needs a codebook");
      return FeatureSource::uniform_over(*cb, spread);
    }
    return FeatureSource::default_mixture(components, dim, zipf, source_seed);
  }
};

struct TrainCodebookCmd {
  SourceOpts source;
  SomTrainingConfig cfg;
  bool cr = false;
  int cr_anchor = -1;

  void add(CLI::App* sub) {
    source.add(sub, false);
    sub->add_option("--gamma", cfg.gamma, "SOM weight (0 = plain VQ)");
    sub->add_option("--alpha", cfg.alpha, "VQ weight");
    sub->add_option("--beta", cfg.beta, "Commitment weight (recorded only)");
    sub->add_option("--eta-train-db", cfg.eta_train_db, "Training channel SNR (dB)");
    sub->add_option("--epochs", cfg.epochs, "Epochs");
    sub->add_option("--batches-per-epoch", cfg.batches_per_epoch, "Batches per epoch");
    sub->add_option("--batch-size", cfg.batch_size, "Batch size");
    sub->add_option("--learning-rate", cfg.learning_rate, "Adam learning rate");
    sub->add_option("--lr-decay-period", cfg.lr_decay_period, "Epochs between decays");
    sub->add_option("--lr-decay", cfg.lr_decay, "Learning-rate decay factor");
    sub->add_flag("--inverse-distance-weights", cfg.inverse_distance_weights,
                  "Weight neighbours by 1/|s_i - s_j| instead of 1");
    sub->add_flag("--cr-reorder", cr, "Rebind symbols by greedy chain reordering");
    sub->add_option("--cr-anchor", cr_anchor, "Chain start codeword, -1 = most used");
  }

  void run(RunState& st) {
    check_seed(st);
    const Constellation c = make_constellation(st);
    const FeatureSource src = source.make(nullptr);
    cfg.seed = st.common.seed;
    Codebook cb = train_som_vq(src, c, cfg);
    if (cr) cb = cr_reorder(cb, cr_anchor);
    const fs::path out = output_path(st, st.common.out);
    write_output(st, out, cb.to_json());
    const TopologyReport rep = topology_metrics(cb, c);
    std::printf("codebook (%s): final loss %.5g, spearman %.4f, neighbour ratio %.4f\n",
                cb.method.c_str(), cb.loss_trace.empty() ? 0.0 : cb.loss_trace.back(),
                rep.spearman, rep.neighbor_ratio);
    write_manifests(st, nullptr);
  }
};

struct CodebookMetricsCmd {
  std::string codebook;

  void add(CLI::App* sub) { sub->add_option("--codebook", codebook, "Codebook JSON"); }

  void run(RunState& st) {
    const Constellation c = make_constellation(st);
    const Codebook cb = Codebook::from_json(load_input(st, "codebook", codebook));
    if (cb.size() != c.order()) {
      throw ValidationError("codebook: size " + std::to_string(cb.size()) +
                            " does not match M=" + std::to_string(c.order()));
    }
    const TopologyReport rep = topology_metrics(cb, c);
    json j = data_header(st);
    j["spearman"] = rep.spearman;
    j["neighbor_ratio"] = rep.neighbor_ratio;
    j["spearman_per_reference"] =
        std::vector<double>(rep.spearman_per_reference.data(),
                            rep.spearman_per_reference.data() + rep.spearman_per_reference.size());
    const fs::path out = output_path(st, st.common.out);
    write_output(st, out, j.dump(2) + "\n");
    fs::path heat = out;
    heat.replace_extension(".distance.csv");
    write_output(st, heat, matrix_to_csv(rep.distance));
    std::printf("spearman %.4f, neighbour ratio %.4f\n", rep.spearman, rep.neighbor_ratio);
    write_manifests(st, nullptr);
  }
};

struct SimulateCmd {
  bool is_sweep = false;
  SourceOpts source;
  std::string fit_path;
  std::string codebook;
  std::string denoiser = "exact-bayes";
  std::string mode = "marginal";
  std::string snr_list = "-3,0,3,6,9,12,15";
  double snr_db = 0.0;
  long long symbols = 100000;
  long long prior_samples = 100000;

  void add(CLI::App* sub) {
    source.add(sub, true);
    sub->add_option("--fit", fit_path, "Fit JSON from 'fit'");
    sub->add_option("--codebook", codebook, "Codebook JSON from 'train-codebook'");
    sub->add_option("--denoiser", denoiser, "exact-bayes, uniform or observed")
        ->check(CLI::IsMember({"exact-bayes", "uniform", "observed"}));
    sub->add_option("--reverse-mode", mode,
                    "marginal (propagate distributions) or sample (draw each step)")
        ->check(CLI::IsMember({"marginal", "sample"}));
    if (is_sweep) {
      sub->add_option("--snr-list", snr_list, "Comma-separated SNR grid (dB)");
    } else {
      sub->add_option("--snr-db", snr_db, "Channel SNR (dB)");
    }
    sub->add_option("--symbols", symbols, "Symbols per SNR point")->check(CLI::PositiveNumber);
    sub->add_option("--prior-samples", prior_samples, "Source draws for the prior estimate");
  }

  void run(RunState& st) {
    check_seed(st);
    const Constellation c = make_constellation(st);
    const NoiseSchedule s = make_schedule(st);
    if (codebook.empty()) throw ValidationError("codebook: path is required");
    if (!fs::exists(codebook)) throw ValidationError("codebook: file not found: " + codebook);
    if (fit_path.empty()) throw ValidationError("fit: path is required");
    if (!fs::exists(fit_path)) throw ValidationError("fit: file not found: " + fit_path);
    const Codebook cb = Codebook::from_json(load_input(st, "codebook", codebook));
    if (cb.size() != c.order()) {
      throw ValidationError("codebook: size " + std::to_string(cb.size()) +
                            " does not match M=" + std::to_string(c.order()));
    }
    const MarkovFit fit = load_fit(st, fit_path, c, s);
    const FeatureSource src = source.make(&cb);
    const SimContext ctx =
        make_context(c, s, fit, cb, src, parse_denoiser_kind(denoiser), prior_samples,
                     derive_seed(st.common.seed, 0x9e1));
    SimConfig cfg;
    cfg.snr_db = is_sweep ? parse_double_list("snr-list", snr_list) : std::vector<double>{snr_db};
    cfg.n_symbols = symbols;
    cfg.seed = st.common.seed;
    cfg.mode = mode == "sample" ? ReverseMode::kSample : ReverseMode::kMarginal;
    const SimReport rep = sweep(ctx, cfg);

    const fs::path out = output_path(st, st.common.out);
    write_output(st, out, report_to_csv(rep));
    json side = data_header(st);
    side["prior"] = std::vector<double>(ctx.prior.data(), ctx.prior.data() + ctx.prior.size());
    json rows = json::array();
    json timing = json::array();
    for (const auto& r : rep.rows) {
      rows.push_back({{"snr_db", r.snr_db},
                      {"k_star", r.k_star},
                      {"seed", r.seed},
                      {"ser_detected", r.ser_detected},
                      {"ser_corrected", r.ser_corrected},
                      {"ser_map_oracle", r.ser_map_oracle},
                      {"mse_plain", r.mse_plain},
                      {"mse_corrected", r.mse_corrected},
                      {"n_symbols", r.n_symbols},
                      {"ci_halfwidth", r.ci_halfwidth}});
      timing.push_back({{"snr_db", r.snr_db}, {"wall_seconds", r.wall_seconds}});
    }
    side["rows"] = std::move(rows);
    fs::path sp = out;
    sp.replace_extension(".json");
    write_output(st, sp, side.dump(2) + "\n");
    std::printf("%s", report_to_csv(rep).c_str());
    write_manifests(st, json{{"timing", timing}});
  }
};

/// Splices "--key=value" pairs from the config file in front of the user's
/// arguments, so the command line wins under the take-last policy.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty() || args.empty() || args[0].rfind("-", 0) == 0) return args;
  if (!fs::exists(config)) throw ValidationError("config: file not found: " + config);
  const auto kv = parse_flat_config(read_file(config));
  std::vector<std::string> out{args[0]};
  for (const auto& [key, value] : kv) {
    if (key == "config") throw ValidationError("config: nested 'config' key is not allowed");
    out.push_back("--" + key + "=" + value);
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SNR-matched discrete diffusion for QAM symbol correction", "symdiff"};
  app.set_version_flag("--version", SYMDIFF_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);

  RunState st;
  std::map<std::string, std::function<void(RunState&)>> runners;

  auto make_sub = [&](const std::string& name, const std::string& help,
                      const std::string& default_out, bool stochastic, bool qam, bool sched) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, st, default_out, stochastic);
    if (qam) add_qam(sub, st);
    if (sched) add_schedule(sub, st);
    return sub;
  };

  ScheduleCmd schedule_cmd;
  TruthCmd truth_cmd;
  VerifyMarkovCmd verify_cmd;
  FitCmd fit_cmd;
  CheckFitCmd check_cmd;
  TrainCodebookCmd train_cmd;
  CodebookMetricsCmd metrics_cmd;
  SimulateCmd simulate_cmd;
  SimulateCmd sweep_cmd;
  sweep_cmd.is_sweep = true;

  // Subcommands bind their shared options to the same RunState; only one runs
  // per invocation.
  {
    auto* sub = make_sub("schedule", "Write the SNR/variance schedule as CSV", "schedule.csv",
                         false, false, true);
    sub->add_option("--power", st.qam.power, "Average symbol power P");
    runners["schedule"] = [&](RunState& s) { schedule_cmd.run(s); };
  }
  {
    auto* sub = make_sub("truth-matrices", "Ground-truth cumulative transition matrices",
                         "truth.json", true, true, true);
    truth_cmd.add(sub);
    runners["truth-matrices"] = [&](RunState& s) { truth_cmd.run(s); };
  }
  {
    auto* sub = make_sub("verify-markov", "Monte-Carlo Markov-violation check", "verify_markov.json",
                         true, true, true);
    verify_cmd.add(sub);
    runners["verify-markov"] = [&](RunState& s) { verify_cmd.run(s); };
  }
  {
    auto* sub = make_sub("fit", "Fit the eigen-structured Markov model", "fit.json", true, true,
                         true);
    fit_cmd.add(sub);
    runners["fit"] = [&](RunState& s) { fit_cmd.run(s); };
  }
  {
    auto* sub = make_sub("check-fit", "NMSE of a fit and the heuristic baseline, Markov checks",
                         "check_fit.csv", false, true, true);
    check_cmd.add(sub);
    runners["check-fit"] = [&](RunState& s) { check_cmd.run(s); };
  }
  {
    auto* sub = make_sub("train-codebook", "Train a VQ / SOM-VQ codebook on synthetic features",
                         "codebook.json", true, true, false);
    train_cmd.add(sub);
    runners["train-codebook"] = [&](RunState& s) { train_cmd.run(s); };
  }
  {
    auto* sub = make_sub("codebook-metrics", "Topology metrics of a codebook",
                         "codebook_metrics.json", false, true, false);
    metrics_cmd.add(sub);
    runners["codebook-metrics"] = [&](RunState& s) { metrics_cmd.run(s); };
  }
  {
    auto* sub = make_sub("simulate", "End-to-end pipeline at one SNR", "simulate.csv", true, true,
                         true);
    simulate_cmd.add(sub);
    runners["simulate"] = [&](RunState& s) { simulate_cmd.run(s); };
  }
  {
    auto* sub = make_sub("sweep", "End-to-end pipeline over an SNR grid", "sweep.csv", true, true,
                         true);
    sweep_cmd.add(sub);
    runners["sweep"] = [&](RunState& s) { sweep_cmd.run(s); };
  }

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) {
      st.command = sub->get_name();
      st.sub = sub;
    }
    // Option targets are shared between subcommands; re-bind the per-command bits.
    st.common.seed_opt = st.sub->get_option_no_throw("--seed");
    st.common.out = option_value(st.sub->get_option("--out"));
    st.start = std::chrono::steady_clock::now();
    set_max_threads(st.common.threads);
    runners.at(st.command)(st);
    return 0;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
