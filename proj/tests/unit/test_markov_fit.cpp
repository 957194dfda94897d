#include "symdiff/error.hpp"
#include "symdiff/markov_fit.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace symdiff;

namespace {

Matrix random_stochastic(int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix q(m, m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) q(r, c) = u(rng);
    q.row(r) /= q.row(r).sum();
  }
  return q;
}

struct Instance {
  Matrix v, diag;
  std::vector<Matrix> targets;
};

Instance random_instance(int m, int n_targets, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-0.3, 1.0);
  Instance in;
  in.v = Matrix::Identity(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 1; c < m; ++c) in.v(r, c) += 0.3 * g(rng);
  in.v.col(0).setOnes();
  in.diag.resize(n_targets, m);
  for (int l = 0; l < n_targets; ++l) {
    for (int c = 0; c < m; ++c) in.diag(l, c) = u(rng);
    in.diag(l, 0) = 1.0;
    in.targets.push_back(random_stochastic(m, rng));
  }
  return in;
}

double rel_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.norm(), 1e-12);
  return (a - b).norm() / scale;
}

// Central finite differences of p2_loss over the free coordinates.
void finite_difference(const Instance& in, double l1, double l2, Matrix& gv, Matrix& gd) {
  const double h = 1e-6;
  gv = Matrix::Zero(in.v.rows(), in.v.cols());
  gd = Matrix::Zero(in.diag.rows(), in.diag.cols());
  for (Eigen::Index r = 0; r < in.v.rows(); ++r) {
    for (Eigen::Index c = 1; c < in.v.cols(); ++c) {
      Matrix vp = in.v, vm = in.v;
      vp(r, c) += h;
      vm(r, c) -= h;
      gv(r, c) = (p2_loss(vp, in.diag, in.targets, l1, l2) - p2_loss(vm, in.diag, in.targets, l1, l2)) /
                 (2 * h);
    }
  }
  for (Eigen::Index r = 0; r < in.diag.rows(); ++r) {
    for (Eigen::Index c = 1; c < in.diag.cols(); ++c) {
      Matrix dp = in.diag, dm = in.diag;
      dp(r, c) += h;
      dm(r, c) -= h;
      gd(r, c) = (p2_loss(in.v, dp, in.targets, l1, l2) - p2_loss(in.v, dm, in.targets, l1, l2)) /
                 (2 * h);
    }
  }
}

// Symmetric lazy walk on a cycle: eigenvectors are real and the ones vector
// is among them.
Matrix cycle_walk(int m) {
  Matrix p = Matrix::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    p(i, i) = 0.5;
    p(i, (i + 1) % m) += 0.25;
    p(i, (i + m - 1) % m) += 0.25;
  }
  return p;
}

TruthTransitionSet powers_of(const Matrix& p, const std::vector<int>& steps) {
  TruthTransitionSet set;
  set.order = static_cast<int>(p.rows());
  Matrix acc = Matrix::Identity(p.rows(), p.cols());
  int k = 0;
  for (int s : steps) {
    while (k < s) {
      acc = acc * p;
      ++k;
    }
    TransitionMatrix t;
    t.k_to = s;
    t.matrix = acc;
    set.matrices.push_back(t);
  }
  return set;
}

}  // namespace

TEST_SUITE("markov_fit") {
  TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(2024);
    for (int m : {4, 16}) {
      for (int rep = 0; rep < 5; ++rep) {
        const Instance in = random_instance(m, 3, rng);
        const P2Objective obj = p2_objective(in.v, in.diag, in.targets, 10.0, 10.0);
        Matrix gv, gd;
        finite_difference(in, 10.0, 10.0, gv, gd);
        CHECK(rel_error(obj.grad_v, gv) <= 1e-5);
        CHECK(rel_error(obj.grad_diag, gd) <= 1e-5);
        CHECK(obj.loss == doctest::Approx(p2_loss(in.v, in.diag, in.targets, 10.0, 10.0)));
      }
    }
  }

  TEST_CASE("frozen coordinates have zero gradient") {
    std::mt19937_64 rng(3);
    const Instance in = random_instance(4, 2, rng);
    const P2Objective obj = p2_objective(in.v, in.diag, in.targets, 10.0, 10.0);
    CHECK(obj.grad_v.col(0).isZero(0.0));
    CHECK(obj.grad_diag.col(0).isZero(0.0));
  }

  TEST_CASE("zero-residual point is stationary") {
    const Matrix p = cycle_walk(4);
    Eigen::SelfAdjointEigenSolver<Matrix> es(p);
    // Eigenvalues ascend, so the unit eigenvalue (ones vector) is last.
    Matrix v(4, 4);
    Vector lam(4);
    v.col(0) = es.eigenvectors().col(3) / es.eigenvectors()(0, 3);
    lam(0) = 1.0;
    for (int i = 0; i < 3; ++i) {
      v.col(i + 1) = es.eigenvectors().col(i);
      lam(i + 1) = es.eigenvalues()(i);
    }
    Matrix diag(2, 4);
    diag.row(0) = lam.transpose();
    diag.row(1) = lam.cwiseAbs2().transpose();
    const std::vector<Matrix> targets = {p, p * p};
    const P2Objective obj = p2_objective(v, diag, targets, 10.0, 10.0);
    CHECK(obj.loss <= 1e-20);
    CHECK(obj.grad_v.norm() <= 1e-8);
    CHECK(obj.grad_diag.norm() <= 1e-8);
  }

  TEST_CASE("singular V is a numerical error") {
    Matrix v = Matrix::Ones(3, 3);
    Matrix d = Matrix::Ones(1, 3);
    CHECK_THROWS_AS(p2_objective(v, d, {Matrix::Identity(3, 3)}, 1, 1), NumericalError);
  }

  TEST_CASE("identity target is fitted exactly") {
    TruthTransitionSet set;
    set.order = 4;
    TransitionMatrix t;
    t.k_to = 5;
    t.matrix = Matrix::Identity(4, 4);
    set.matrices.push_back(t);
    const MarkovFit fit = fit_p2(set, 5, FitConfig{});
    CHECK(fit.loss_trace.back() <= 1e-12);
    CHECK(fitted_cumulative(fit, 5).isIdentity(1e-6));
  }

  TEST_CASE("targets with exact eigen-structure are recovered") {
    const Matrix p = cycle_walk(4);
    const auto set = powers_of(p, {1, 2, 4});
    const MarkovFit fit = fit_p2(set, 4, FitConfig{});
    CHECK(fit.loss_trace.back() <= 1e-10);
    for (double e : fit.nmse) CHECK(e <= 1e-9);
  }

  TEST_CASE("invalid target sets") {
    const Matrix p = cycle_walk(4);
    auto set = powers_of(p, {1, 2});
    CHECK_THROWS_AS(fit_p2(set, 4, FitConfig{}), ValidationError);  // last step != T
    TruthTransitionSet empty;
    CHECK_THROWS_AS(fit_p2(empty, 4, FitConfig{}), ValidationError);
  }

  TEST_CASE("fits are deterministic per seed") {
    const Matrix p = cycle_walk(4);
    const auto set = powers_of(p, {1, 3});
    FitConfig cfg;
    cfg.max_iterations = 300;
    const MarkovFit a = fit_p2(set, 3, cfg);
    const MarkovFit b = fit_p2(set, 3, cfg);
    CHECK(a.v == b.v);
    CHECK(a.diag == b.diag);
    cfg.seed = 2;
    const MarkovFit c = fit_p2(set, 3, cfg);
    CHECK(c.v != a.v);
  }

  TEST_CASE("interpolation of constant diagonals") {
    MarkovFit coarse;
    coarse.order = 3;
    coarse.total_steps = 10;
    coarse.v = Matrix::Identity(3, 3);
    coarse.v.col(0).setOnes();
    coarse.steps = {2, 5, 10};
    coarse.diag = Matrix::Ones(3, 3);
    const MarkovFit full = interpolate_full(coarse);
    CHECK(full.is_full());
    CHECK(full.diag.rows() == 11);
    CHECK(full.diag.isOnes(0.0));
  }

  TEST_CASE("two-knot interpolation stays between knot values") {
    MarkovFit coarse;
    coarse.order = 2;
    coarse.total_steps = 10;
    coarse.v = Matrix::Identity(2, 2);
    coarse.v.col(0).setOnes();
    coarse.steps = {10};
    coarse.diag.resize(1, 2);
    coarse.diag << 1.0, 0.3;
    const MarkovFit full = interpolate_full(coarse);
    for (int k = 1; k <= 10; ++k) {
      CHECK(full.diag(k, 1) <= full.diag(k - 1, 1));
      CHECK(full.diag(k, 1) >= 0.3);
    }
    CHECK(full.diag(10, 1) == 0.3);
  }

  TEST_CASE("non-monotone coarse diagonals are rejected by coordinate") {
    MarkovFit coarse;
    coarse.order = 3;
    coarse.total_steps = 10;
    coarse.v = Matrix::Identity(3, 3);
    coarse.v.col(0).setOnes();
    coarse.steps = {5, 10};
    coarse.diag.resize(2, 3);
    coarse.diag << 1.0, 0.5, 0.4, 1.0, 0.6, 0.3;
    try {
      interpolate_full(coarse);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("coordinate 1") != std::string::npos);
    }
  }

  TEST_CASE("flat diagonals give identity single steps") {
    MarkovFit full;
    full.order = 3;
    full.total_steps = 3;
    full.v = Matrix::Identity(3, 3);
    full.v.col(0).setOnes();
    full.v(1, 2) = 0.2;
    full.steps = {0, 1, 2, 3};
    full.diag.resize(4, 3);
    full.diag << 1, 1, 1, 1, 0.8, 0.6, 1, 0.8, 0.6, 1, 0.5, 0.2;
    const MaterializedProcess mp = materialize(full);
    CHECK(mp.single_step[2].isIdentity(1e-12));
    CHECK(!mp.single_step[3].isIdentity(1e-3));
    for (int k = 1; k <= 3; ++k) CHECK(is_row_stochastic(mp.single_step[k], 1e-12));
  }

  TEST_CASE("Chapman-Kolmogorov holds by construction") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MarkovFit full;
    full.order = 4;
    full.total_steps = 6;
    full.v = Matrix::Identity(4, 4);
    full.v.col(0).setOnes();
    for (int r = 0; r < 4; ++r)
      for (int c = 1; c < 4; ++c) full.v(r, c) += 0.1 * u(rng);
    for (int k = 0; k <= 6; ++k) full.steps.push_back(k);
    full.diag = Matrix::Ones(7, 4);
    for (int k = 1; k <= 6; ++k)
      for (int c = 1; c < 4; ++c) full.diag(k, c) = full.diag(k - 1, c) * (0.5 + 0.5 * u(rng));
    CHECK(chapman_kolmogorov_residual(full) <= 1e-12);
  }

  TEST_CASE("row-stochastic matrices have spectral radius one") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 1000; ++rep) {
      const int m = 2 + rep % 6;
      const Matrix p = random_stochastic(m, rng);
      // The ones vector is a fixed point.
      CHECK((p * Vector::Ones(m) - Vector::Ones(m)).cwiseAbs().maxCoeff() <= 1e-12);
      // Infinity-norm contraction in general.
      Vector x(m);
      for (int i = 0; i < m; ++i) x(i) = u(rng);
      CHECK((p * x).cwiseAbs().maxCoeff() <= x.cwiseAbs().maxCoeff() + 1e-12);
      // Symmetric (doubly stochastic) case: real eigenvalues bounded by 1.
      Matrix a(m, m);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c <= r; ++c) a(r, c) = a(c, r) = 0.05 + std::abs(u(rng));
      Vector scale = Vector::Ones(m);
      for (int it = 0; it < 2000; ++it) scale = (scale.array() / (a * scale).array()).sqrt();
      const Matrix ds = scale.asDiagonal() * a * scale.asDiagonal();
      REQUIRE((ds.rowwise().sum() - Vector::Ones(m)).cwiseAbs().maxCoeff() < 1e-9);
      Eigen::SelfAdjointEigenSolver<Matrix> es(ds);
      CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-9);
    }
  }

  TEST_CASE("fit json round trip") {
    const Matrix p = cycle_walk(4);
    const auto set = powers_of(p, {1, 3});
    FitConfig cfg;
    cfg.max_iterations = 50;
    const MarkovFit fit = fit_p2(set, 3, cfg);
    const MarkovFit back = fit_from_json(fit_to_json(fit));
    CHECK(back.v == fit.v);
    CHECK(back.diag == fit.diag);
    CHECK(back.steps == fit.steps);
    CHECK(back.nmse == fit.nmse);
    CHECK_THROWS_AS(fit_from_json("{}"), ValidationError);
  }
}
