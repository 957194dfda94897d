#include "symdiff/markov_fit.hpp"

#include "symdiff/error.hpp"
#include "symdiff/rng.hpp"

#include <cmath>
// Some Boost releases call isnan unqualified inside pchip.
using std::isnan;
#include <boost/math/interpolators/pchip.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace symdiff {
namespace {

struct Adam {
  Matrix m;
  Matrix s;
  long long t = 0;

  void step(Matrix& param, const Matrix& grad, const FitConfig& cfg) {
    if (m.size() == 0) {
      m = Matrix::Zero(param.rows(), param.cols());
      s = Matrix::Zero(param.rows(), param.cols());
    }
    ++t;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    s = cfg.beta2 * s + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    param.array() -= cfg.learning_rate * (m.array() / c1) /
                     ((s.array() / c2).sqrt() + cfg.adam_eps);
  }
};

Matrix checked_inverse(const Matrix& v) {
  Eigen::PartialPivLU<Matrix> lu(v);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    std::ostringstream os;
    os << "eigenvector matrix is singular (rcond=" << rcond << ")";
    throw NumericalError(os.str());
  }
  Matrix w = lu.inverse();
  if (!w.allFinite()) throw NumericalError("eigenvector matrix inverse is not finite");
  return w;
}

double condition_number(const Matrix& v) {
  Eigen::JacobiSVD<Matrix> svd(v);
  const auto& sv = svd.singularValues();
  return sv(0) / sv(sv.size() - 1);
}

Matrix reconstruct(const Matrix& v, const Matrix& w, const Eigen::Ref<const RowVector>& d) {
  return v * d.transpose().asDiagonal() * w;
}

void check_targets(const std::vector<Matrix>& targets, const Matrix& v, const Matrix& diag) {
  if (targets.empty()) throw ValidationError("fit: no target matrices");
  if (diag.rows() != static_cast<Eigen::Index>(targets.size())) {
    throw ValidationError("fit: one diagonal row per target is required");
  }
  const auto m = v.rows();
  if (v.cols() != m || diag.cols() != m) throw ValidationError("fit: dimension mismatch");
  for (const auto& q : targets) {
    if (q.rows() != m || q.cols() != m) throw ValidationError("fit: target dimension mismatch");
  }
}

// Projects each coordinate onto [0, 1] and a non-increasing sequence that
// starts below D(t_0) = 1. Returns the largest change.
double project_monotone(Matrix& diag) {
  double moved = 0.0;
  for (Eigen::Index i = 0; i < diag.cols(); ++i) {
    double running = 1.0;
    for (Eigen::Index l = 0; l < diag.rows(); ++l) {
      const double before = diag(l, i);
      const double after = std::min(running, std::clamp(before, 0.0, 1.0));
      moved = std::max(moved, std::abs(after - before));
      diag(l, i) = after;
      running = after;
    }
  }
  return moved;
}

}  // namespace

std::vector<int> default_fit_steps() { return {2, 4, 9, 20, 40, 65, 84, 94, 98, 100}; }

bool MarkovFit::is_full() const {
  if (static_cast<int>(steps.size()) != total_steps + 1) return false;
  for (int k = 0; k <= total_steps; ++k) {
    if (steps[k] != k) return false;
  }
  return true;
}

double p2_loss(const Matrix& v, const Matrix& diag, const std::vector<Matrix>& targets,
               double lambda1, double lambda2) {
  check_targets(targets, v, diag);
  const Matrix w = checked_inverse(v);
  double loss = 0.0;
  for (std::size_t l = 0; l < targets.size(); ++l) {
    const Matrix q = reconstruct(v, w, diag.row(l));
    loss += (targets[l] - q).squaredNorm();
    loss += lambda1 * (-q.array()).max(0.0).square().sum();
    loss += lambda2 * (-diag.row(l).array()).max(0.0).square().sum();
  }
  return loss;
}

P2Objective p2_objective(const Matrix& v, const Matrix& diag, const std::vector<Matrix>& targets,
                         double lambda1, double lambda2) {
  check_targets(targets, v, diag);
  const Matrix w = checked_inverse(v);
  const Matrix wt = w.transpose();
  const auto m = v.rows();

  P2Objective out;
  out.grad_v = Matrix::Zero(m, m);
  out.grad_diag = Matrix::Zero(diag.rows(), m);
  for (std::size_t l = 0; l < targets.size(); ++l) {
    const RowVector d = diag.row(l);
    const Matrix q = reconstruct(v, w, d);
    const Matrix resid = q - targets[l];
    const Matrix neg = (-q.array()).max(0.0).matrix();
    const RowVector neg_d = (-d.array()).max(0.0).matrix();
    out.loss += resid.squaredNorm() + lambda1 * neg.squaredNorm() + lambda2 * neg_d.squaredNorm();

    // dL/dQbar
    const Matrix g = 2.0 * resid - 2.0 * lambda1 * neg;
    const Matrix g_wt = g * wt;
    out.grad_v += g_wt * d.transpose().asDiagonal();
    out.grad_v -= q.transpose() * g_wt;
    out.grad_diag.row(l) = (v.transpose() * g_wt).diagonal().transpose() - 2.0 * lambda2 * neg_d;
  }
  out.grad_v.col(0).setZero();
  out.grad_diag.col(0).setZero();
  return out;
}

MarkovFit fit_p2(const TruthTransitionSet& targets, int total_steps, const FitConfig& cfg) {
  if (targets.matrices.empty()) throw ValidationError("fit: empty target set");
  std::vector<Matrix> qs;
  std::vector<int> steps;
  for (const auto& tm : targets.matrices) {
    if (tm.k_from != 0) throw ValidationError("fit: targets must be cumulative (k_from = 0)");
    if (!is_row_stochastic(tm.matrix, 1e-6)) {
      throw ValidationError("fit: target for step " + std::to_string(tm.k_to) +
                            " is not row-stochastic");
    }
    if (!steps.empty() && tm.k_to <= steps.back()) {
      throw ValidationError("fit: target steps must be strictly increasing");
    }
    steps.push_back(tm.k_to);
    qs.push_back(tm.matrix);
  }
  if (steps.front() < 1 || steps.back() != total_steps) {
    throw ValidationError("fit: target steps must lie in [1, T] and end at T");
  }
  if (cfg.max_iterations < 1 || cfg.plateau_window < 1 || !(cfg.learning_rate > 0.0)) {
    throw ValidationError("fit: invalid optimizer configuration");
  }

  const int m = static_cast<int>(qs.front().rows());
  const int n = static_cast<int>(qs.size());

  MarkovFit fit;
  fit.order = m;
  fit.total_steps = total_steps;
  fit.constellation_hash = targets.constellation_hash;
  fit.steps = steps;

  // V = [1 | identity block + noise]; resample until comfortably invertible.
  Rng rng = make_rng(cfg.seed, 0x5eed);
  std::normal_distribution<double> gauss(0.0, cfg.init_noise);
  for (int attempt = 0;; ++attempt) {
    fit.v = Matrix::Identity(m, m);
    for (int c = 1; c < m; ++c) {
      for (int r = 0; r < m; ++r) fit.v(r, c) += gauss(rng);
    }
    fit.v.col(0).setOnes();
    if (condition_number(fit.v) < 1e6) break;
    if (attempt > 100) throw NumericalError("fit: could not draw an invertible initial V");
  }

  // Diagonals decay as exp(-c t) with the last knot at the last target's mean diagonal.
  const double last_mean = std::clamp(qs.back().diagonal().mean(), 1e-6, 1.0 - 1e-12);
  const double t_last = static_cast<double>(steps.back()) / total_steps;
  const double rate = -std::log(last_mean) / t_last;
  fit.diag = Matrix::Ones(n, m);
  for (int l = 0; l < n; ++l) {
    const double t = static_cast<double>(steps[l]) / total_steps;
    fit.diag.row(l).setConstant(std::exp(-rate * t));
    fit.diag(l, 0) = 1.0;
  }

  Adam adam_v;
  Adam adam_d;
  std::vector<double> history;
  history.reserve(cfg.max_iterations);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    P2Objective obj = p2_objective(fit.v, fit.diag, qs, cfg.lambda1, cfg.lambda2);
    adam_v.step(fit.v, obj.grad_v, cfg);
    fit.v.col(0).setOnes();

    obj = p2_objective(fit.v, fit.diag, qs, cfg.lambda1, cfg.lambda2);
    adam_d.step(fit.diag, obj.grad_diag, cfg);
    fit.diag.col(0).setOnes();
    fit.diag = fit.diag.cwiseMax(0.0);

    const double loss = p2_loss(fit.v, fit.diag, qs, cfg.lambda1, cfg.lambda2);
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "fit diverged at iteration " << it << "; loss trace tail:";
      for (std::size_t i = history.size() > 5 ? history.size() - 5 : 0; i < history.size(); ++i) {
        os << ' ' << history[i];
      }
      throw NumericalError(os.str());
    }
    history.push_back(loss);
    if (it % 10 == 0) fit.loss_trace.push_back(loss);
    fit.iterations = it + 1;

    if (it >= cfg.plateau_window) {
      const double before = history[it - cfg.plateau_window];
      if ((before - loss) < cfg.plateau_tol * std::abs(before)) {
        fit.converged = true;
        break;
      }
    }
  }
  fit.loss_trace.push_back(history.back());

  fit.monotone_adjustment = project_monotone(fit.diag);
  fit.diag.col(0).setOnes();
  fit.v_condition = condition_number(fit.v);
  const Matrix w = checked_inverse(fit.v);
  for (int l = 0; l < n; ++l) fit.nmse.push_back(nmse(qs[l], reconstruct(fit.v, w, fit.diag.row(l))));
  return fit;
}

MarkovFit interpolate_full(const MarkovFit& coarse) {
  const int m = coarse.order;
  const int total = coarse.total_steps;
  if (coarse.diag.rows() != static_cast<Eigen::Index>(coarse.steps.size()) ||
      coarse.diag.cols() != m || coarse.v.rows() != m) {
    throw ValidationError("interpolate: malformed fit");
  }
  if (coarse.steps.empty() || coarse.steps.back() != total) {
    throw ValidationError("interpolate: the last knot must be T");
  }

  std::vector<double> knots{0.0};
  for (int k : coarse.steps) {
    if (k <= 0 || static_cast<double>(k) / total <= knots.back()) {
      throw ValidationError("interpolate: knots must be strictly increasing and positive");
    }
    knots.push_back(static_cast<double>(k) / total);
  }

  MarkovFit full = coarse;
  full.steps.resize(total + 1);
  for (int k = 0; k <= total; ++k) full.steps[k] = k;
  full.diag = Matrix::Ones(total + 1, m);
  full.nmse.clear();

  for (int i = 0; i < m; ++i) {
    std::vector<double> values{1.0};
    for (Eigen::Index l = 0; l < coarse.diag.rows(); ++l) {
      const double y = coarse.diag(l, i);
      if (!(y >= 0.0 && y <= 1.0) || y > values.back()) {
        throw ValidationError("interpolate: diagonal coordinate " + std::to_string(i) +
                              " is not non-increasing within [0, 1] at knot " +
                              std::to_string(coarse.steps[l]));
      }
      values.push_back(y);
    }
    if (knots.size() >= 4) {
      auto xs = knots;
      auto ys = values;
      boost::math::interpolators::pchip<std::vector<double>> spline(std::move(xs), std::move(ys));
      for (int k = 0; k <= total; ++k) {
        full.diag(k, i) = std::clamp(spline(static_cast<double>(k) / total), 0.0, 1.0);
      }
    } else {
      for (int k = 0; k <= total; ++k) {
        const double t = static_cast<double>(k) / total;
        std::size_t seg = 0;
        while (seg + 2 < knots.size() && t > knots[seg + 1]) ++seg;
        const double a = (t - knots[seg]) / (knots[seg + 1] - knots[seg]);
        full.diag(k, i) = std::clamp((1.0 - a) * values[seg] + a * values[seg + 1], 0.0, 1.0);
      }
    }
    // Knot values are reproduced exactly; cubic evaluation may differ in the last ulp.
    for (std::size_t l = 0; l < coarse.steps.size(); ++l) full.diag(coarse.steps[l], i) = values[l + 1];
    full.diag(0, i) = 1.0;
  }
  full.diag.col(0).setOnes();
  return full;
}

Matrix fitted_cumulative(const MarkovFit& fit, int k) {
  const auto it = std::find(fit.steps.begin(), fit.steps.end(), k);
  if (it == fit.steps.end()) throw ValidationError("fit has no diagonal for step " + std::to_string(k));
  const Matrix w = checked_inverse(fit.v);
  return reconstruct(fit.v, w, fit.diag.row(it - fit.steps.begin()));
}

Matrix fitted_transition(const MarkovFit& fit, int k_from, int k_to) {
  if (!fit.is_full()) throw ValidationError("fitted_transition needs a full (interpolated) fit");
  if (!(0 <= k_from && k_from < k_to && k_to <= fit.total_steps)) {
    throw ValidationError("fitted_transition: need 0 <= k_from < k_to <= T");
  }
  const Matrix w = checked_inverse(fit.v);
  const RowVector from = fit.diag.row(k_from).cwiseMax(kDiagonalFloor);
  const RowVector to = fit.diag.row(k_to).cwiseMax(kDiagonalFloor);
  return reconstruct(fit.v, w, to.cwiseQuotient(from));
}

MaterializedProcess materialize(const MarkovFit& full) {
  if (!full.is_full()) throw ValidationError("materialize needs a full (interpolated) fit");
  const int total = full.total_steps;
  const int m = full.order;
  const Matrix w = checked_inverse(full.v);

  MaterializedProcess out;
  out.order = m;
  out.total_steps = total;
  out.cumulative.resize(total + 1);
  out.single_step.resize(total + 1);
  out.cumulative_clip_mass.assign(total + 1, 0.0);
  out.step_clip_mass.assign(total + 1, 0.0);
  out.cumulative[0] = Matrix::Identity(m, m);
  out.single_step[0] = Matrix::Identity(m, m);

  for (int k = 1; k <= total; ++k) {
    out.floored_diagonals += static_cast<int>((full.diag.row(k - 1).array() < kDiagonalFloor).count());

    Matrix cum = reconstruct(full.v, w, full.diag.row(k));
    Matrix step = fitted_transition(full, k - 1, k);
    if (!cum.allFinite() || !step.allFinite()) {
      throw NumericalError("materialize: non-finite matrix at step " + std::to_string(k));
    }
    out.cumulative_clip_mass[k] = clip_and_renormalize(cum).maxCoeff();
    out.step_clip_mass[k] = clip_and_renormalize(step).maxCoeff();
    out.cumulative[k] = std::move(cum);
    out.single_step[k] = std::move(step);
  }
  return out;
}

double chapman_kolmogorov_residual(const MarkovFit& full) {
  if (!full.is_full()) throw ValidationError("chapman_kolmogorov_residual needs a full fit");
  const int total = full.total_steps;
  const Matrix w = checked_inverse(full.v);
  std::vector<Matrix> cum(total + 1);
  for (int k = 0; k <= total; ++k) cum[k] = reconstruct(full.v, w, full.diag.row(k));
  double worst = 0.0;
  for (int k = 0; k < total; ++k) {
    for (int l = k + 1; l <= total; ++l) {
      const Matrix bridge = fitted_transition(full, k, l);
      worst = std::max(worst, (cum[l] - cum[k] * bridge).norm());
    }
  }
  return worst;
}

std::string fit_to_json(const MarkovFit& fit) {
  nlohmann::ordered_json j;
  j["format"] = "symdiff-markov-fit";
  j["version"] = 1;
  j["order"] = fit.order;
  j["total_steps"] = fit.total_steps;
  j["constellation_hash"] = fit.constellation_hash;
  j["steps"] = fit.steps;
  auto rows = [](const Matrix& a) {
    auto out = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      std::vector<double> row(a.cols());
      for (Eigen::Index c = 0; c < a.cols(); ++c) row[c] = a(r, c);
      out.push_back(row);
    }
    return out;
  };
  j["v"] = rows(fit.v);
  j["diag"] = rows(fit.diag);
  nlohmann::ordered_json diag;
  diag["iterations"] = fit.iterations;
  diag["converged"] = fit.converged;
  diag["v_condition"] = fit.v_condition;
  diag["monotone_adjustment"] = fit.monotone_adjustment;
  diag["nmse"] = fit.nmse;
  diag["loss_trace"] = fit.loss_trace;
  j["diagnostics"] = std::move(diag);
  return j.dump(1);
}

MarkovFit fit_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string{}) != "symdiff-markov-fit") {
      throw ValidationError("fit artifact: unexpected format tag");
    }
    MarkovFit fit;
    fit.order = j.at("order").get<int>();
    fit.total_steps = j.at("total_steps").get<int>();
    fit.constellation_hash = j.at("constellation_hash").get<std::uint64_t>();
    fit.steps = j.at("steps").get<std::vector<int>>();
    auto read = [](const nlohmann::json& a, Eigen::Index rows, Eigen::Index cols) {
      if (a.size() != static_cast<std::size_t>(rows)) throw ValidationError("fit artifact: bad matrix shape");
      Matrix out(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (a[r].size() != static_cast<std::size_t>(cols)) {
          throw ValidationError("fit artifact: bad matrix shape");
        }
        for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = a[r][c].get<double>();
      }
      return out;
    };
    fit.v = read(j.at("v"), fit.order, fit.order);
    fit.diag = read(j.at("diag"), static_cast<Eigen::Index>(fit.steps.size()), fit.order);
    if (j.contains("diagnostics")) {
      const auto& d = j["diagnostics"];
      fit.iterations = d.value("iterations", 0);
      fit.converged = d.value("converged", false);
      fit.v_condition = d.value("v_condition", 0.0);
      fit.monotone_adjustment = d.value("monotone_adjustment", 0.0);
      fit.nmse = d.value("nmse", std::vector<double>{});
      fit.loss_trace = d.value("loss_trace", std::vector<double>{});
    }
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fit artifact: ") + e.what());
  }
}

}  // namespace symdiff
