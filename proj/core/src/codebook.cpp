#include "symdiff/codebook.hpp"

#include "symdiff/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace symdiff {

namespace {

Matrix matrix_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw ValidationError(std::string(what) + ": expected a non-empty array of rows");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) {
      throw ValidationError(std::string(what) + ": ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::ordered_json matrix_to_json(const Matrix& m) {
  auto out = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

nlohmann::json parse(const std::string& text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

Codebook::Codebook(Matrix codewords, std::vector<Index> symbol_of)
    : codewords_(std::move(codewords)), symbol_of_(std::move(symbol_of)) {
  const int m = size();
  if (m < 1 || dim() < 1) throw ValidationError("codebook must be non-empty");
  if (!codewords_.allFinite()) throw ValidationError("codebook has non-finite entries");
  if (symbol_of_.empty()) {
    symbol_of_.resize(m);
    std::iota(symbol_of_.begin(), symbol_of_.end(), 0);
  }
  if (static_cast<int>(symbol_of_.size()) != m) {
    throw ValidationError("codebook binding size does not match codebook size");
  }
  codeword_of_.assign(m, -1);
  for (Index j = 0; j < m; ++j) {
    const Index s = symbol_of_[j];
    if (s < 0 || s >= m || codeword_of_[s] != -1) {
      throw ValidationError("codebook binding is not a permutation");
    }
    codeword_of_[s] = j;
  }
}

Codebook Codebook::one_hot(int order) {
  Codebook cb(Matrix::Identity(order, order));
  cb.method = "one-hot";
  return cb;
}

Index Codebook::quantize_one(const Eigen::Ref<const RowVector>& y) const {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < size(); ++j) {
    const double d = (codewords_.row(j) - y).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

IndexSequence Codebook::quantize(const Matrix& features) const {
  if (features.cols() != dim()) {
    throw ValidationError("feature dimension " + std::to_string(features.cols()) +
                          " does not match codebook dimension " + std::to_string(dim()));
  }
  IndexSequence out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index r = 0; r < features.rows(); ++r) out[r] = quantize_one(features.row(r));
  return out;
}

std::string Codebook::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "symdiff-codebook";
  j["version"] = 1;
  j["order"] = size();
  j["dim"] = dim();
  j["codewords"] = matrix_to_json(codewords_);
  j["symbol_of"] = symbol_of_;
  j["method"] = method;
  j["gamma"] = gamma;
  j["seed"] = seed;
  j["loss_trace"] = loss_trace;
  j["usage"] = usage;
  return j.dump(1);
}

Codebook Codebook::from_json(const std::string& text) {
  const auto j = parse(text, "codebook JSON");
  if (j.value("format", "") != "symdiff-codebook") {
    throw ValidationError("codebook JSON: wrong or missing format tag");
  }
  if (!j.contains("codewords")) throw ValidationError("codebook JSON: missing 'codewords'");
  Codebook cb(matrix_from_json(j["codewords"], "codebook JSON codewords"),
              j.value("symbol_of", std::vector<Index>{}));
  if (j.contains("order") && j["order"].get<int>() != cb.size()) {
    throw ValidationError("codebook JSON: 'order' does not match codeword count");
  }
  cb.method = j.value("method", "none");
  cb.gamma = j.value("gamma", 0.0);
  cb.seed = j.value("seed", std::uint64_t{0});
  cb.loss_trace = j.value("loss_trace", std::vector<double>{});
  cb.usage = j.value("usage", std::vector<double>{});
  return cb;
}

// ---------------------------------------------------------------------------

FeatureSource::FeatureSource(std::vector<double> weights, Matrix means,
                             std::vector<Matrix> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  const auto k = weights_.size();
  if (k == 0) throw ValidationError("feature source needs at least one component");
  if (static_cast<std::size_t>(means_.rows()) != k || covariances_.size() != k) {
    throw ValidationError("feature source: weights, means and covariances disagree in count");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("feature source: bad weight");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("feature source: weights sum to zero");
  cdf_.resize(k);
  double acc = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    weights_[c] /= total;
    acc += weights_[c];
    cdf_[c] = acc;
  }
  cdf_.back() = 1.0;
  for (const auto& cov : covariances_) {
    if (cov.rows() != means_.cols() || cov.cols() != means_.cols()) {
      throw ValidationError("feature source: covariance has the wrong shape");
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw ValidationError("feature source: covariance is not positive definite");
    }
    chol_.push_back(llt.matrixL());
  }
}

FeatureSource FeatureSource::default_mixture(int components, int dim, double zipf_s,
                                             std::uint64_t seed) {
  if (components < 1 || dim < 1) throw ValidationError("mixture needs components, dim >= 1");
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> scale(0.08, 0.35);
  std::vector<double> w(components);
  Matrix means(components, dim);
  std::vector<Matrix> covs;
  for (int c = 0; c < components; ++c) {
    w[c] = 1.0 / std::pow(c + 1.0, zipf_s);
    for (int d = 0; d < dim; ++d) means(c, d) = normal(rng);
    Matrix g(dim, dim);
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) g(a, b) = normal(rng);
    const Matrix rot = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector sd(dim);
    for (int d = 0; d < dim; ++d) sd(d) = scale(rng);
    covs.push_back(rot * sd.cwiseAbs2().asDiagonal() * rot.transpose());
  }
  return FeatureSource(std::move(w), std::move(means), std::move(covs));
}

FeatureSource FeatureSource::uniform_over(const Codebook& cb, double spread) {
  if (!(spread > 0.0)) throw ValidationError("spread must be positive");
  std::vector<Matrix> covs(cb.size(),
                           Matrix::Identity(cb.dim(), cb.dim()) * (spread * spread));
  return FeatureSource(std::vector<double>(cb.size(), 1.0), cb.codewords(), std::move(covs));
}

Matrix FeatureSource::sample(long long n, std::uint64_t seed, std::uint64_t stream) const {
  if (n < 0) throw ValidationError("sample count must be non-negative");
  const std::uint64_t s = derive_seed(seed, stream);
  const int d = dim();
  Matrix out(n, d);
  Vector z(d);
  for (long long r = 0; r < n; ++r) {
    const double u = counter_uniform(s, static_cast<std::uint64_t>(r), 0xc0ffee);
    const auto comp = static_cast<std::size_t>(
        std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    const std::size_t c = std::min(comp, cdf_.size() - 1);
    for (int i = 0; i < d; ++i) z(i) = counter_normal(s, static_cast<std::uint64_t>(r), i);
    out.row(r) = means_.row(c) + (chol_[c] * z).transpose();
  }
  return out;
}

std::string FeatureSource::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "symdiff-feature-source";
  j["weights"] = weights_;
  j["means"] = matrix_to_json(means_);
  auto covs = nlohmann::ordered_json::array();
  for (const auto& c : covariances_) covs.push_back(matrix_to_json(c));
  j["covariances"] = std::move(covs);
  return j.dump(1);
}

FeatureSource FeatureSource::from_json(const std::string& text) {
  const auto j = parse(text, "feature source JSON");
  if (!j.contains("weights") || !j.contains("means") || !j.contains("covariances")) {
    throw ValidationError("feature source JSON: missing weights, means or covariances");
  }
  std::vector<Matrix> covs;
  for (const auto& c : j["covariances"]) covs.push_back(matrix_from_json(c, "covariance"));
  return FeatureSource(j["weights"].get<std::vector<double>>(),
                       matrix_from_json(j["means"], "means"), std::move(covs));
}

// ---------------------------------------------------------------------------

SomBatchLoss som_batch_loss(const Codebook& cb, const Constellation& c, const Matrix& features,
                            const IndexSequence& received_symbols, double alpha, double gamma,
                            bool inverse_distance) {
  if (cb.size() != c.order()) {
    throw ValidationError("codebook size does not match the constellation order");
  }
  if (static_cast<std::size_t>(features.rows()) != received_symbols.size()) {
    throw ValidationError("feature and symbol counts differ");
  }
  SomBatchLoss out;
  out.grad = Matrix::Zero(cb.size(), cb.dim());
  const double n = static_cast<double>(features.rows());
  if (n == 0) return out;
  const double d = cb.dim();
  const Matrix& cw = cb.codewords();
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Index sym = received_symbols[i];
    const Index j0 = cb.codeword_of(sym);
    const RowVector diff = cw.row(j0) - features.row(i);
    out.vq += diff.squaredNorm() / d;
    out.grad.row(j0) += (2.0 * alpha / (d * n)) * diff;
    for (Index nb : c.grid_neighbors(sym)) {
      const Index j = cb.codeword_of(nb);
      const double w =
          inverse_distance
              ? 1.0 / std::hypot(c.point(sym).i - c.point(nb).i, c.point(sym).q - c.point(nb).q)
              : 1.0;
      const RowVector dn = cw.row(j) - features.row(i);
      out.som += w * dn.squaredNorm() / d;
      out.grad.row(j) += (2.0 * gamma * w / (d * n)) * dn;
    }
  }
  out.vq /= n;
  out.som /= n;
  return out;
}

Matrix farthest_point_init(const FeatureSource& src, int count, std::uint64_t seed,
                           long long pool) {
  if (count < 1 || pool < count) throw ValidationError("farthest-point init: bad sizes");
  const Matrix x = src.sample(pool, seed, 0);
  Matrix out(count, x.cols());
  out.row(0) = x.row(0);
  Vector mind = (x.rowwise() - x.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < count; ++k) {
    Eigen::Index arg = 0;
    mind.maxCoeff(&arg);
    out.row(k) = x.row(arg);
    mind = mind.cwiseMin((x.rowwise() - x.row(arg)).rowwise().squaredNorm());
  }
  return out;
}

Codebook train_som_vq(const FeatureSource& src, const Constellation& c,
                      const SomTrainingConfig& cfg) {
  if (src.dim() < 1) throw ValidationError("feature source has no dimensions");
  if (cfg.epochs < 1 || cfg.batches_per_epoch < 1 || cfg.batch_size < 1) {
    throw ValidationError("epochs, batches per epoch and batch size must be >= 1");
  }
  if (cfg.alpha < 0.0 || cfg.gamma < 0.0 || !(cfg.learning_rate > 0.0)) {
    throw ValidationError("alpha and gamma must be >= 0 and the learning rate positive");
  }
  const int m = c.order();
  Codebook cb(farthest_point_init(src, m, derive_seed(cfg.seed, 1)));
  Matrix w = cb.codewords();
  Matrix adam_m = Matrix::Zero(w.rows(), w.cols());
  Matrix adam_v = adam_m;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double sigma = std::sqrt(c.avg_power() * std::pow(10.0, -cfg.eta_train_db / 10.0) / 2.0);
  const std::uint64_t data_seed = derive_seed(cfg.seed, 2);
  const std::uint64_t noise_seed = derive_seed(cfg.seed, 3);

  std::vector<double> trace;
  std::vector<double> usage(m, 0.0);
  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate *
                      std::pow(cfg.lr_decay, cfg.lr_decay_period > 0 ? epoch / cfg.lr_decay_period : 0);
    double epoch_loss = 0.0;
    std::fill(usage.begin(), usage.end(), 0.0);
    for (int b = 0; b < cfg.batches_per_epoch; ++b, ++step) {
      const Codebook cur(w);
      const Matrix y = src.sample(cfg.batch_size, data_seed, static_cast<std::uint64_t>(step));
      const IndexSequence z = cur.quantize(y);
      IndexSequence received(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        usage[z[i]] += 1.0;
        const Point2& p = c.point(cur.symbol_of(z[i]));
        const auto a = static_cast<std::uint64_t>(step);
        received[i] = c.detect({p.i + sigma * counter_normal(noise_seed, a, 2 * i),
                                p.q + sigma * counter_normal(noise_seed, a, 2 * i + 1)});
      }
      const SomBatchLoss l = som_batch_loss(cur, c, y, received, cfg.alpha, cfg.gamma,
                                            cfg.inverse_distance_weights);
      epoch_loss += cfg.alpha * l.vq + cfg.gamma * l.som;
      const double t = static_cast<double>(step + 1);
      adam_m = b1 * adam_m + (1.0 - b1) * l.grad;
      adam_v = b2 * adam_v + (1.0 - b2) * l.grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
      w -= (lr * (adam_m / c1).array() / ((adam_v / c2).array().sqrt() + eps)).matrix();
      if (!w.allFinite()) throw NumericalError("codebook training diverged");
    }
    trace.push_back(epoch_loss / cfg.batches_per_epoch);
  }
  Codebook out(w);
  out.method = cfg.gamma > 0.0 ? "som-vq" : "vq";
  out.gamma = cfg.gamma;
  out.seed = cfg.seed;
  out.loss_trace = std::move(trace);
  out.usage = std::move(usage);
  return out;
}

Codebook cr_reorder(const Codebook& cb, Index anchor) {
  const int m = cb.size();
  if (anchor >= m) throw ValidationError("CR anchor " + std::to_string(anchor) + " out of range");
  if (anchor < 0) {
    anchor = 0;
    if (static_cast<int>(cb.usage.size()) == m) {
      for (Index j = 1; j < m; ++j)
        if (cb.usage[j] > cb.usage[anchor]) anchor = j;
    }
  }
  std::vector<Index> chain{anchor};
  std::vector<bool> used(m, false);
  used[anchor] = true;
  const Matrix& cw = cb.codewords();
  while (static_cast<int>(chain.size()) < m) {
    const Index last = chain.back();
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < m; ++j) {
      if (used[j]) continue;
      const double d = (cw.row(j) - cw.row(last)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    used[best] = true;
    chain.push_back(best);
  }
  std::vector<Index> symbol_of(m);
  for (Index p = 0; p < m; ++p) symbol_of[chain[p]] = p;
  Codebook out(cw, std::move(symbol_of));
  out.method = cb.method + "+cr";
  out.gamma = cb.gamma;
  out.seed = cb.seed;
  out.loss_trace = cb.loss_trace;
  out.usage = cb.usage;
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ValidationError("spearman needs two equal-length inputs of size >= 2");
  }
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

TopologyReport topology_metrics(const Codebook& cb, const Constellation& c) {
  const int m = c.order();
  if (cb.size() != m) throw ValidationError("codebook size does not match the constellation");
  TopologyReport rep;
  rep.distance.resize(m, m);
  for (Index r = 0; r < m; ++r)
    for (Index s = 0; s < m; ++s)
      rep.distance(r, s) = (cb.codeword_for_symbol(r) - cb.codeword_for_symbol(s)).norm();

  rep.spearman_per_reference.resize(m);
  for (Index r = 0; r < m; ++r) {
    std::vector<double> grid, code;
    for (Index s = 0; s < m; ++s) {
      if (s == r) continue;
      // Integer cell offsets keep equal lattice distances exactly tied.
      const GridCell a = c.cell(r), b = c.cell(s);
      const int dr = a.row - b.row, dc = a.col - b.col;
      grid.push_back(std::sqrt(static_cast<double>(dr * dr + dc * dc)));
      code.push_back(rep.distance(r, s));
    }
    rep.spearman_per_reference(r) = spearman(grid, code);
  }
  rep.spearman = rep.spearman_per_reference.mean();

  double nb_sum = 0.0, far_sum = 0.0;
  long nb_count = 0, far_count = 0;
  for (Index r = 0; r < m; ++r) {
    const auto nbs = c.grid_neighbors(r);
    for (Index s = r + 1; s < m; ++s) {
      if (std::find(nbs.begin(), nbs.end(), s) != nbs.end()) {
        nb_sum += rep.distance(r, s);
        ++nb_count;
      } else {
        far_sum += rep.distance(r, s);
        ++far_count;
      }
    }
  }
  const double far_mean = far_count ? far_sum / far_count : 0.0;
  rep.neighbor_ratio = (nb_count && far_mean > 0.0) ? (nb_sum / nb_count) / far_mean : 0.0;
  return rep;
}

Vector estimate_prior(const Codebook& cb, const FeatureSource& src, long long n,
                      std::uint64_t seed) {
  if (n < 0) throw ValidationError("sample count must be non-negative");
  const IndexSequence z = cb.quantize(src.sample(n, seed, 0));
  Vector p = Vector::Ones(cb.size());
  for (Index j : z) p(cb.symbol_of(j)) += 1.0;
  return p / p.sum();
}

}  // namespace symdiff
