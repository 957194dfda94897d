#include "symdiff/truth_transitions.hpp"

#include "symdiff/error.hpp"
#include "symdiff/parallel.hpp"
#include "symdiff/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace symdiff {
namespace {

constexpr long long kChunk = 1 << 16;

// P(lo < X < hi) for X ~ N(mu, sd^2), computed with erfc to keep tails accurate.
double gaussian_interval(double lo, double hi, double mu, double sd) {
  const double a = (lo - mu) / (sd * std::sqrt(2.0));
  const double b = (hi - mu) / (sd * std::sqrt(2.0));
  if (a >= 0.0) return 0.5 * (std::erfc(a) - std::erfc(b));
  if (b <= 0.0) return 0.5 * (std::erfc(-b) - std::erfc(-a));
  return 1.0 - 0.5 * std::erfc(-a) - 0.5 * std::erfc(b);
}

void check_prior(const Vector& prior, int order) {
  if (prior.size() != order) throw ValidationError("prior length does not match the order");
  if (prior.minCoeff() < 0.0 || std::abs(prior.sum() - 1.0) > 1e-9) {
    throw ValidationError("prior must be a probability vector");
  }
}

}  // namespace

std::string to_string(TransitionMethod m) {
  switch (m) {
    case TransitionMethod::kAnalytic: return "analytic";
    case TransitionMethod::kMonteCarlo: return "monte-carlo";
    case TransitionMethod::kHeuristic: return "heuristic";
  }
  return "unknown";
}

const TransitionMatrix& TruthTransitionSet::at_step(int k) const {
  for (const auto& m : matrices) {
    if (m.k_to == k && m.k_from == 0) return m;
  }
  throw ValidationError("truth set has no matrix for step " + std::to_string(k));
}

Vector uniform_prior(int order) { return Vector::Constant(order, 1.0 / order); }

Matrix point_to_region_matrix(const Constellation& c, double v) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("noise variance must be >= 0");
  const int m = c.order();
  const int side = c.side();
  if (v == 0.0) return Matrix::Identity(m, m);

  const double sd = std::sqrt(v / 2.0);
  Matrix axis(side, side);  // axis(a, b): level a lands in level b's interval
  for (int a = 0; a < side; ++a) {
    for (int b = 0; b < side; ++b) {
      const auto r = c.axis_region(b);
      axis(a, b) = gaussian_interval(r[0], r[1], c.levels()[a], sd);
    }
  }
  Matrix q(m, m);
  for (Index i = 0; i < m; ++i) {
    const GridCell ci = c.cell(i);
    for (Index j = 0; j < m; ++j) {
      const GridCell cj = c.cell(j);
      q(i, j) = axis(ci.col, cj.col) * axis(ci.row, cj.row);
    }
  }
  return q;
}

TruthTransitionSet analytic_truth_set(const Constellation& c, const NoiseSchedule& s,
                                      const std::vector<int>& steps) {
  TruthTransitionSet set;
  set.order = c.order();
  set.constellation_hash = c.hash();
  for (int k : steps) {
    TransitionMatrix tm;
    tm.k_from = 0;
    tm.k_to = k;
    tm.variance = s.cum_var(k);
    tm.method = TransitionMethod::kAnalytic;
    tm.matrix = point_to_region_matrix(c, tm.variance);
    set.matrices.push_back(std::move(tm));
  }
  return set;
}

TransitionMatrix region_to_region_matrix(const Constellation& c, const NoiseSchedule& s,
                                         int k_from, int k_to, const Vector& prior,
                                         long long samples_per_symbol, std::uint64_t seed) {
  if (!(0 <= k_from && k_from < k_to && k_to <= s.steps())) {
    throw ValidationError("region_to_region: need 0 <= k_from < k_to <= T");
  }
  if (samples_per_symbol < 1) throw ValidationError("region_to_region: samples must be >= 1");
  const int m = c.order();
  check_prior(prior, m);

  const double sd1 = std::sqrt(s.cum_var(k_from) / 2.0);
  const double sd2 = std::sqrt((s.cum_var(k_to) - s.cum_var(k_from)) / 2.0);
  const long long chunks = (samples_per_symbol + kChunk - 1) / kChunk;
  const std::size_t items = static_cast<std::size_t>(m) * static_cast<std::size_t>(chunks);

  using Counts = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<Counts> partial(items);
  parallel_for(items, [&](std::size_t item) {
    const Index u0 = static_cast<Index>(item / chunks);
    const long long chunk = static_cast<long long>(item % chunks);
    const long long n = std::min(kChunk, samples_per_symbol - chunk * kChunk);
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(u0)),
                       static_cast<std::uint64_t>(chunk));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Counts counts = Counts::Zero(m, m);
    const Point2 s0 = c.point(u0);
    for (long long t = 0; t < n; ++t) {
      Point2 x{s0.i + sd1 * gauss(rng), s0.q + sd1 * gauss(rng)};
      const Index i = c.detect(x);
      x.i += sd2 * gauss(rng);
      x.q += sd2 * gauss(rng);
      const Index j = c.detect(x);
      ++counts(i, j);
    }
    partial[item] = std::move(counts);
  });

  Matrix joint = Matrix::Zero(m, m);
  for (Index u0 = 0; u0 < m; ++u0) {
    Counts per_symbol = Counts::Zero(m, m);
    for (long long ch = 0; ch < chunks; ++ch) per_symbol += partial[u0 * chunks + ch];
    joint += prior(u0) * per_symbol.cast<double>() / static_cast<double>(samples_per_symbol);
  }

  TransitionMatrix tm;
  tm.k_from = k_from;
  tm.k_to = k_to;
  tm.variance = s.cum_var(k_to) - s.cum_var(k_from);
  tm.method = TransitionMethod::kMonteCarlo;
  tm.seed = seed;
  tm.samples_per_symbol = samples_per_symbol;
  tm.matrix = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    const double row = joint.row(i).sum();
    if (row > 0.0) {
      tm.matrix.row(i) = joint.row(i) / row;
    } else {
      tm.matrix(i, i) = 1.0;
      tm.unvisited_rows.push_back(i);
    }
  }
  return tm;
}

MarkovViolation markov_violation(const Constellation& c, const NoiseSchedule& s, int k1, int k2,
                                 const Vector& prior, long long samples_per_symbol,
                                 std::uint64_t seed) {
  if (!(0 < k1 && k1 < k2 && k2 <= s.steps())) {
    throw ValidationError("markov_violation: need 0 < k1 < k2 <= T");
  }
  const Matrix q1 = point_to_region_matrix(c, s.cum_var(k1));
  const Matrix q2 = point_to_region_matrix(c, s.cum_var(k2));
  MarkovViolation out;
  const auto run = [&](std::uint64_t stream) {
    const TransitionMatrix mid =
        region_to_region_matrix(c, s, k1, k2, prior, samples_per_symbol, derive_seed(seed, stream));
    return (q2 - q1 * mid.matrix).norm();
  };
  out.error = run(1);
  out.error_rerun = run(2);
  out.fluctuation = std::abs(out.error - out.error_rerun);
  return out;
}

double pairwise_error_probability(const Constellation& c, Index i, Index j, double variance) {
  if (i == j) return 0.0;
  if (variance <= 0.0) return 0.0;
  const Point2 a = c.point(i);
  const Point2 b = c.point(j);
  const double d = std::hypot(a.i - b.i, a.q - b.q);
  // Projection of CN(0, v) noise on the unit vector a->b has variance v/2;
  // error when it exceeds d/2.
  const double sd = std::sqrt(variance / 2.0);
  return 0.5 * std::erfc(d / (2.0 * sd * std::sqrt(2.0)));
}

Matrix dcddm_step_matrix(const Constellation& c, double step_variance) {
  const int m = c.order();
  if (step_variance <= 0.0) return Matrix::Identity(m, m);
  const Matrix exact = point_to_region_matrix(c, step_variance);
  Matrix q = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    const double correct = exact(i, i);
    double total = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (j != i) total += pairwise_error_probability(c, i, j, step_variance);
    }
    q(i, i) = correct;
    if (total <= 0.0) {
      q(i, i) = 1.0;
      continue;
    }
    for (Index j = 0; j < m; ++j) {
      if (j != i) q(i, j) = (1.0 - correct) * pairwise_error_probability(c, i, j, step_variance) / total;
    }
    q.row(i) /= q.row(i).sum();
  }
  return q;
}

Matrix dcddm_cumulative_matrix(const Constellation& c, const NoiseSchedule& linear_schedule,
                               int k) {
  if (k < 0 || k > linear_schedule.steps()) throw ValidationError("dcddm: step out of range");
  Matrix acc = Matrix::Identity(c.order(), c.order());
  for (int j = 1; j <= k; ++j) acc = acc * dcddm_step_matrix(c, linear_schedule.step_var(j));
  return acc;
}

Matrix dcddm_matched_matrix(const Constellation& c, const NoiseSchedule& linear_schedule,
                            double target_cum_variance) {
  int best = 0;
  double gap = std::abs(target_cum_variance);
  for (int k = 1; k <= linear_schedule.steps(); ++k) {
    const double g = std::abs(linear_schedule.cum_var(k) - target_cum_variance);
    if (g < gap) {
      gap = g;
      best = k;
    }
  }
  return dcddm_cumulative_matrix(c, linear_schedule, best);
}

std::string truth_set_to_json(const TruthTransitionSet& set) {
  nlohmann::ordered_json j;
  j["format"] = "symdiff-truth-set";
  j["version"] = 1;
  j["order"] = set.order;
  j["constellation_hash"] = set.constellation_hash;
  auto mats = nlohmann::ordered_json::array();
  for (const auto& t : set.matrices) {
    nlohmann::ordered_json m;
    m["k_from"] = t.k_from;
    m["k_to"] = t.k_to;
    m["variance"] = t.variance;
    m["method"] = to_string(t.method);
    m["seed"] = t.seed;
    m["samples_per_symbol"] = t.samples_per_symbol;
    m["unvisited_rows"] = t.unvisited_rows;
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < t.matrix.rows(); ++r) {
      std::vector<double> row(t.matrix.cols());
      for (Eigen::Index c = 0; c < t.matrix.cols(); ++c) row[c] = t.matrix(r, c);
      rows.push_back(row);
    }
    m["matrix"] = std::move(rows);
    mats.push_back(std::move(m));
  }
  j["matrices"] = std::move(mats);
  return j.dump(1);
}

TruthTransitionSet truth_set_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string{}) != "symdiff-truth-set") {
      throw ValidationError("truth artifact: unexpected format tag");
    }
    TruthTransitionSet set;
    set.order = j.at("order").get<int>();
    set.constellation_hash = j.at("constellation_hash").get<std::uint64_t>();
    for (const auto& m : j.at("matrices")) {
      TransitionMatrix t;
      t.k_from = m.at("k_from").get<int>();
      t.k_to = m.at("k_to").get<int>();
      t.variance = m.at("variance").get<double>();
      const auto method = m.at("method").get<std::string>();
      if (method == "analytic") {
        t.method = TransitionMethod::kAnalytic;
      } else if (method == "monte-carlo") {
        t.method = TransitionMethod::kMonteCarlo;
      } else if (method == "heuristic") {
        t.method = TransitionMethod::kHeuristic;
      } else {
        throw ValidationError("truth artifact: unknown method '" + method + "'");
      }
      t.seed = m.value("seed", std::uint64_t{0});
      t.samples_per_symbol = m.value("samples_per_symbol", 0LL);
      t.unvisited_rows = m.value("unvisited_rows", std::vector<int>{});
      const auto& rows = m.at("matrix");
      t.matrix.resize(static_cast<Eigen::Index>(rows.size()), set.order);
      if (static_cast<int>(rows.size()) != set.order) {
        throw ValidationError("truth artifact: matrix at step " + std::to_string(t.k_to) +
                              " has the wrong number of rows");
      }
      for (Eigen::Index r = 0; r < set.order; ++r) {
        if (static_cast<int>(rows[r].size()) != set.order) {
          throw ValidationError("truth artifact: matrix at step " + std::to_string(t.k_to) +
                                " has a ragged row");
        }
        for (Eigen::Index c = 0; c < set.order; ++c) t.matrix(r, c) = rows[r][c].get<double>();
      }
      if (!is_row_stochastic(t.matrix, 1e-9)) {
        throw ValidationError("truth artifact: matrix at step " + std::to_string(t.k_to) +
                              " is not row-stochastic");
      }
      set.matrices.push_back(std::move(t));
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("truth artifact: ") + e.what());
  }
}

}  // namespace symdiff
