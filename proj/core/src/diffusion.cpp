#include "symdiff/diffusion.hpp"

#include "symdiff/error.hpp"
#include "symdiff/rng.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace symdiff {

DiffusionProcess DiffusionProcess::from_matrices(std::vector<Matrix> cumulative,
                                                 std::vector<Matrix> single_step,
                                                 double consistency_tol) {
  if (cumulative.size() < 2 || cumulative.size() != single_step.size()) {
    throw ValidationError("process needs matching cumulative and step lists with T >= 1");
  }
  const auto m = cumulative[0].rows();
  for (std::size_t k = 0; k < cumulative.size(); ++k) {
    for (const Matrix* q : {&cumulative[k], &single_step[k]}) {
      if (q->rows() != m || q->cols() != m) {
        throw ValidationError("process matrix at step " + std::to_string(k) + " is not " +
                              std::to_string(m) + "x" + std::to_string(m));
      }
      if (!is_row_stochastic(*q, 1e-9)) {
        throw ValidationError("process matrix at step " + std::to_string(k) +
                              " is not row-stochastic");
      }
    }
  }
  if (!cumulative[0].isIdentity(1e-12)) throw ValidationError("Qbar_0 must be the identity");
  DiffusionProcess p;
  p.order_ = static_cast<int>(m);
  p.cumulative_ = std::move(cumulative);
  p.step_ = std::move(single_step);
  p.step_[0] = Matrix::Identity(m, m);
  for (int k = 1; k <= p.steps(); ++k) {
    const double r = (p.cumulative_[k] - p.cumulative_[k - 1] * p.step_[k]).norm();
    if (r > consistency_tol) {
      throw ValidationError("cumulative and step matrices disagree at step " + std::to_string(k) +
                            " (Frobenius deviation " + std::to_string(r) + ")");
    }
  }
  return p;
}

DiffusionProcess DiffusionProcess::from_steps(std::vector<Matrix> single_step) {
  if (single_step.size() < 2) throw ValidationError("process needs T >= 1");
  const auto m = single_step[1].rows();
  std::vector<Matrix> cum(single_step.size());
  cum[0] = Matrix::Identity(m, m);
  single_step[0] = cum[0];
  for (std::size_t k = 1; k < single_step.size(); ++k) {
    if (single_step[k].rows() != m || single_step[k].cols() != m) {
      throw ValidationError("step matrix " + std::to_string(k) + " has the wrong shape");
    }
    cum[k] = cum[k - 1] * single_step[k];
  }
  return from_matrices(std::move(cum), std::move(single_step), 1e-12);
}

const Matrix& DiffusionProcess::cumulative(int k) const {
  if (k < 0 || k > steps()) throw ValidationError("step " + std::to_string(k) + " out of range");
  return cumulative_[k];
}

const Matrix& DiffusionProcess::step(int k) const {
  if (k < 0 || k > steps()) throw ValidationError("step " + std::to_string(k) + " out of range");
  return step_[k];
}

double DiffusionProcess::consistency_residual() const {
  double r = 0.0;
  for (int k = 1; k <= steps(); ++k) {
    r = std::max(r, (cumulative_[k] - cumulative_[k - 1] * step_[k]).norm());
  }
  return r;
}

// ---------------------------------------------------------------------------

Index argmax_lowest(const Eigen::Ref<const RowVector>& row) {
  Index best = 0;
  for (Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

namespace {

Index sample_row(const Eigen::Ref<const RowVector>& row, double u) {
  double acc = 0.0;
  const double total = row.sum();
  Index last = 0;
  for (Index j = 0; j < row.size(); ++j) {
    if (row(j) <= 0.0) continue;
    last = j;
    acc += row(j);
    if (u * total < acc) return j;
  }
  return last;
}

void check_symbols(const IndexSequence& u, int m, const char* what) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] < 0 || u[i] >= m) {
      throw ValidationError(std::string(what) + ": symbol " + std::to_string(u[i]) +
                            " out of range at position " + std::to_string(i));
    }
  }
}

void check_step(const DiffusionProcess& p, int k, int lo) {
  if (k < lo || k > p.steps()) {
    throw ValidationError("step " + std::to_string(k) + " outside [" + std::to_string(lo) + ", " +
                          std::to_string(p.steps()) + "]");
  }
}

Matrix checked_predict(const Denoiser& d, const Codebook& cb, const IndexSequence& u, int k,
                       int m) {
  const Matrix p0 = d.predict(embed(cb, u), k);
  if (p0.rows() != static_cast<Eigen::Index>(u.size()) || p0.cols() != m) {
    throw ValidationError("denoiser contract violation: output is " + std::to_string(p0.rows()) +
                          "x" + std::to_string(p0.cols()));
  }
  for (Eigen::Index i = 0; i < p0.rows(); ++i) {
    if (!p0.row(i).allFinite() || (p0.row(i).array() < -1e-12).any() ||
        std::abs(p0.row(i).sum() - 1.0) > 1e-9) {
      throw ValidationError("denoiser contract violation: row " + std::to_string(i) +
                            " is not a distribution");
    }
  }
  return p0;
}

// Kernel rows for every position. Positions whose denoiser output puts mass on
// a clean symbol that cannot reach u_k are reported through `bad` (or thrown).
Matrix kernel_rows(const PosteriorTable& post, const Matrix& p0, const IndexSequence& uk, int k,
                   std::vector<char>* bad) {
  Matrix out(p0.rows(), p0.cols());
  for (Eigen::Index i = 0; i < p0.rows(); ++i) {
    const Index b = uk[static_cast<std::size_t>(i)];
    if (bad && (*bad)[static_cast<std::size_t>(i)]) {
      out.row(i).setZero();
      continue;
    }
    bool ok = true;
    for (Eigen::Index u0 = 0; u0 < p0.cols(); ++u0) {
      if (p0(i, u0) > 0.0 && post.reachable(u0, b) == 0.0) ok = false;
    }
    if (!ok) {
      if (!bad) {
        throw NumericalError("impossible observation: state " + std::to_string(b) +
                             " at step " + std::to_string(k) + " (position " + std::to_string(i) +
                             ") is unreachable from a clean symbol the denoiser supports");
      }
      (*bad)[static_cast<std::size_t>(i)] = 1;
      out.row(i).setZero();
      continue;
    }
    out.row(i) = p0.row(i) * post.by_uk[b];
  }
  return out;
}

}  // namespace

IndexSequence forward_sample(const DiffusionProcess& p, const IndexSequence& u0, int k,
                             std::uint64_t seed) {
  check_step(p, k, 0);
  check_symbols(u0, p.order(), "forward_sample");
  const Matrix& q = p.cumulative(k);
  IndexSequence out(u0.size());
  for (std::size_t i = 0; i < u0.size(); ++i) {
    out[i] = sample_row(q.row(u0[i]), counter_uniform(seed, static_cast<std::uint64_t>(k), i));
  }
  return out;
}

PosteriorTable posterior_table(const DiffusionProcess& p, int k) {
  check_step(p, k, 1);
  const int m = p.order();
  const Matrix& step = p.step(k);
  const Matrix& prev = p.cumulative(k - 1);
  PosteriorTable t;
  t.by_uk.assign(m, Matrix::Zero(m, m));
  t.reachable = Matrix::Zero(m, m);
  for (int uk = 0; uk < m; ++uk) {
    Matrix& post = t.by_uk[uk];
    for (int u0 = 0; u0 < m; ++u0) {
      post.row(u0) = prev.row(u0).cwiseProduct(step.col(uk).transpose());
      const double s = post.row(u0).sum();
      if (s > 0.0) {
        post.row(u0) /= s;
        t.reachable(u0, uk) = 1.0;
      }
    }
  }
  return t;
}

Vector posterior(const DiffusionProcess& p, Index uk, Index u0, int k) {
  check_symbols({uk, u0}, p.order(), "posterior");
  const PosteriorTable t = posterior_table(p, k);
  if (t.reachable(u0, uk) == 0.0) {
    throw NumericalError("impossible observation: state " + std::to_string(uk) + " at step " +
                         std::to_string(k) + " is unreachable from " + std::to_string(u0));
  }
  return t.by_uk[uk].row(u0).transpose();
}

Matrix reverse_kernel(const DiffusionProcess& p, const Denoiser& d, const Codebook& cb,
                      const IndexSequence& uk, int k) {
  check_step(p, k, 1);
  check_symbols(uk, p.order(), "reverse_kernel");
  const PosteriorTable t = posterior_table(p, k);
  return kernel_rows(t, checked_predict(d, cb, uk, k, p.order()), uk, k, nullptr);
}

Matrix reverse_marginals(const DiffusionProcess& p, const Denoiser& d, const Codebook& cb,
                         int k_start) {
  check_step(p, k_start, 0);
  if (!d.position_independent()) {
    throw ValidationError("marginal reverse inference needs a position-independent denoiser");
  }
  const int m = p.order();
  IndexSequence states(m);
  for (int s = 0; s < m; ++s) states[s] = s;
  Matrix dist = Matrix::Identity(m, m);
  for (int k = k_start; k >= 1; --k) {
    const PosteriorTable t = posterior_table(p, k);
    std::vector<char> bad(m, 0);
    Matrix p0 = Matrix::Zero(m, m);
    for (int s = 0; s < m; ++s) {
      try {
        p0.row(s) = checked_predict(d, cb, {s}, k, m).row(0);
      } catch (const NumericalError&) {
        bad[s] = 1;  // the denoiser rejects this state outright
      }
    }
    const Matrix kern = kernel_rows(t, p0, states, k, &bad);
    for (int s = 0; s < m; ++s) {
      if (!bad[s]) continue;
      for (int r = 0; r < m; ++r) {
        if (dist(r, s) > 0.0) {
          throw NumericalError("impossible observation: state " + std::to_string(s) +
                               " at step " + std::to_string(k) + " reached from observed state " +
                               std::to_string(r) + " is unsupported by the denoiser");
        }
      }
    }
    dist = dist * kern;
  }
  return dist;
}

IndexSequence reverse_infer(const DiffusionProcess& p, const Denoiser& d, const Codebook& cb,
                            const IndexSequence& observed, int k_start, std::uint64_t seed,
                            ReverseMode mode) {
  check_step(p, k_start, 0);
  check_symbols(observed, p.order(), "reverse_infer");
  if (k_start == 0 || observed.empty()) return observed;

  if (mode == ReverseMode::kMarginal) {
    const Matrix marg = reverse_marginals(p, d, cb, k_start);
    IndexSequence out(observed.size());
    for (std::size_t i = 0; i < observed.size(); ++i) out[i] = argmax_lowest(marg.row(observed[i]));
    return out;
  }

  IndexSequence u = observed;
  for (int k = k_start; k >= 1; --k) {
    const Matrix kern = reverse_kernel(p, d, cb, u, k);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const auto row = kern.row(static_cast<Eigen::Index>(i));
      u[i] = k == 1 ? argmax_lowest(row)
                    : sample_row(row, counter_uniform(seed, static_cast<std::uint64_t>(k), i));
    }
  }
  return u;
}

DiffusionLosses diffusion_losses(const DiffusionProcess& p, const Denoiser& d, const Codebook& cb,
                                 const std::vector<IndexSequence>& dataset, double lambda,
                                 std::uint64_t seed) {
  const int t_max = p.steps();
  const int m = p.order();
  const double inf = std::numeric_limits<double>::infinity();
  double dt_sum = 0.0, g_sum = 0.0;
  long long count = 0;
  auto neg_log = [&](double v) { return v > 0.0 ? -std::log(v) : inf; };

  for (std::size_t n = 0; n < dataset.size(); ++n) {
    const IndexSequence& u0 = dataset[n];
    check_symbols(u0, m, "diffusion_losses");
    if (u0.empty()) continue;
    const std::uint64_t s = derive_seed(seed, n);
    count += static_cast<long long>(u0.size());

    // Reconstruction term at k = 1.
    const IndexSequence u1 = forward_sample(p, u0, 1, derive_seed(s, 0));
    const Matrix p1 = checked_predict(d, cb, u1, 1, m);
    for (std::size_t i = 0; i < u0.size(); ++i) {
      dt_sum += neg_log(p1(static_cast<Eigen::Index>(i), u0[i]));
    }

    // One KL term, scaled by the number of terms it stands for.
    if (t_max >= 2) {
      const int k = 2 + static_cast<int>(counter_uniform(s, 1, 0) * (t_max - 1));
      const IndexSequence uk = forward_sample(p, u0, k, derive_seed(s, 1));
      const PosteriorTable t = posterior_table(p, k);
      const Matrix p0 = checked_predict(d, cb, uk, k, m);
      std::vector<char> bad(u0.size(), 0);
      const Matrix kern = kernel_rows(t, p0, uk, k, &bad);
      for (std::size_t i = 0; i < u0.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto q = t.by_uk[uk[i]].row(u0[i]);
        double kl = 0.0;
        for (int a = 0; a < m; ++a) {
          if (q(a) <= 0.0) continue;
          const double pa = bad[i] ? 0.0 : kern(ii, a);
          kl += pa > 0.0 ? q(a) * std::log(q(a) / pa) : inf;
        }
        dt_sum += (t_max - 1) * kl;
      }
    }

    // Direct term at an independent k in 1..T.
    const int kg = 1 + static_cast<int>(counter_uniform(s, 2, 0) * t_max);
    const IndexSequence ug = forward_sample(p, u0, kg, derive_seed(s, 2));
    const Matrix pg = checked_predict(d, cb, ug, kg, m);
    for (std::size_t i = 0; i < u0.size(); ++i) {
      g_sum += neg_log(pg(static_cast<Eigen::Index>(i), u0[i]));
    }
  }
  DiffusionLosses out;
  if (count == 0) return out;
  out.l_dt = dt_sum / static_cast<double>(count);
  out.l_g = g_sum / static_cast<double>(count);
  out.l_lambda = out.l_dt + lambda * out.l_g;
  return out;
}

}  // namespace symdiff
