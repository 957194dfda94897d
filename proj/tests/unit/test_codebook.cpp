#include "symdiff/codebook.hpp"
#include "symdiff/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

using namespace symdiff;

namespace {

Matrix random_codewords(int m, int d, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix c(m, d);
  for (int r = 0; r < m; ++r)
    for (int k = 0; k < d; ++k) c(r, k) = g(rng);
  return c;
}

// Exhaustive greedy chain oracle (no shortcuts, explicit distance table).
std::vector<Index> greedy_chain(const Matrix& cw, Index anchor) {
  const int m = static_cast<int>(cw.rows());
  std::vector<Index> chain{anchor};
  std::vector<bool> used(m, false);
  used[anchor] = true;
  for (int step = 1; step < m; ++step) {
    std::vector<std::pair<double, Index>> cand;
    for (Index j = 0; j < m; ++j)
      if (!used[j]) cand.push_back({(cw.row(j) - cw.row(chain.back())).norm(), j});
    std::sort(cand.begin(), cand.end());
    chain.push_back(cand.front().second);
    used[cand.front().second] = true;
  }
  return chain;
}

}  // namespace

TEST_SUITE("codebook") {
  TEST_CASE("quantize exact codewords and ties") {
    const Codebook cb(random_codewords(16, 4, 1));
    Matrix y = cb.codewords();
    IndexSequence z = cb.quantize(y);
    for (Index j = 0; j < 16; ++j) CHECK(z[j] == j);
    CHECK(cb.quantize_one(cb.codewords().row(7)) == 7);

    Matrix c = Matrix::Zero(6, 1);
    c(2, 0) = 1.0;
    c(5, 0) = -1.0;
    for (int j : {0, 1, 3, 4}) c(j, 0) = 10.0 + j;
    const Codebook tie(c);
    Matrix mid(1, 1);
    mid(0, 0) = 0.0;
    CHECK(tie.quantize(mid)[0] == 2);
  }

  TEST_CASE("quantize agrees with a brute-force scan") {
    const Codebook cb(random_codewords(16, 4, 2));
    const Matrix y = random_codewords(5000, 4, 3);
    const IndexSequence z = cb.quantize(y);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      Index best = 0;
      for (Index j = 1; j < 16; ++j)
        if ((cb.codewords().row(j) - y.row(i)).squaredNorm() <
            (cb.codewords().row(best) - y.row(i)).squaredNorm())
          best = j;
      CHECK(z[i] == best);
    }
    CHECK_THROWS_AS(cb.quantize(Matrix::Zero(3, 2)), ValidationError);
  }

  TEST_CASE("binding must be a permutation") {
    CHECK_THROWS_AS(Codebook(Matrix::Zero(3, 2), {0, 0, 1}), ValidationError);
    CHECK_THROWS_AS(Codebook(Matrix::Zero(3, 2), {0, 1}), ValidationError);
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(Codebook{bad}, ValidationError);
    const Codebook cb(random_codewords(3, 2, 1), {2, 0, 1});
    CHECK(cb.codeword_of(2) == 0);
    CHECK(cb.symbol_of(0) == 2);
    CHECK(cb.codeword_for_symbol(0) == cb.codewords().row(1));
  }

  TEST_CASE("json round trip") {
    Codebook cb(random_codewords(16, 4, 5));
    cb.loss_trace = {3.0, 2.0};
    cb.seed = 9;
    cb = cr_reorder(cb);
    const Codebook back = Codebook::from_json(cb.to_json());
    CHECK(back.codewords() == cb.codewords());
    CHECK(back.binding() == cb.binding());
    CHECK(back.loss_trace == cb.loss_trace);
    CHECK(back.seed == 9);
    CHECK_THROWS_AS(Codebook::from_json("{}"), ValidationError);
  }

  TEST_CASE("feature source sampling") {
    const FeatureSource src = FeatureSource::default_mixture();
    CHECK(src.components() == 8);
    CHECK(src.dim() == 4);
    double w = 0.0;
    for (double x : src.weights()) w += x;
    CHECK(w == doctest::Approx(1.0));
    CHECK(src.weights()[0] > src.weights()[7]);
    const Matrix a = src.sample(1000, 4);
    const Matrix b = src.sample(1000, 4);
    CHECK(a == b);
    CHECK(src.sample(1000, 5) != a);
    // Prefix stability: row r does not depend on n.
    CHECK(src.sample(10, 4) == a.topRows(10));
    const FeatureSource back = FeatureSource::from_json(src.to_json());
    CHECK(back.sample(50, 1) == src.sample(50, 1));
    CHECK_THROWS_AS(FeatureSource({1.0}, Matrix::Zero(1, 2), {-Matrix::Identity(2, 2)}),
                    ValidationError);
  }

  TEST_CASE("SOM loss vanishes when neighbours equal the feature") {
    const auto c = Constellation::square_qam(4);
    Matrix cw = Matrix::Zero(4, 2);
    const Codebook cb(cw);
    const Matrix y = Matrix::Zero(5, 2);
    const SomBatchLoss l = som_batch_loss(cb, c, y, {0, 1, 2, 3, 0}, 1.0, 0.9);
    CHECK(l.vq == 0.0);
    CHECK(l.som == 0.0);
    CHECK(l.grad.isZero(0.0));
  }

  TEST_CASE("SOM loss gradient matches finite differences") {
    const auto c = Constellation::square_qam(16);
    const Codebook cb(random_codewords(16, 4, 8));
    const Matrix y = random_codewords(40, 4, 9);
    IndexSequence rx(40);
    for (int i = 0; i < 40; ++i) rx[i] = (i * 7) % 16;
    const SomBatchLoss l = som_batch_loss(cb, c, y, rx, 1.0, 0.9);
    CHECK(l.som >= 0.0);
    const double h = 1e-6;
    Matrix fd(16, 4);
    for (int r = 0; r < 16; ++r) {
      for (int k = 0; k < 4; ++k) {
        Matrix p = cb.codewords(), m = cb.codewords();
        p(r, k) += h;
        m(r, k) -= h;
        const auto lp = som_batch_loss(Codebook(p), c, y, rx, 1.0, 0.9);
        const auto lm = som_batch_loss(Codebook(m), c, y, rx, 1.0, 0.9);
        fd(r, k) = ((lp.vq + 0.9 * lp.som) - (lm.vq + 0.9 * lm.som)) / (2 * h);
      }
    }
    CHECK((fd - l.grad).norm() <= 1e-6 * std::max(1.0, l.grad.norm()));
  }

  TEST_CASE("plain VQ pulls visited codewords toward a single component") {
    const auto c = Constellation::square_qam(16);
    Vector mu = Vector::Constant(4, 2.0);
    const FeatureSource src({1.0}, mu.transpose(), {0.01 * Matrix::Identity(4, 4)});
    SomTrainingConfig cfg;
    cfg.gamma = 0.0;
    cfg.epochs = 8;
    cfg.batches_per_epoch = 50;
    const Matrix init = farthest_point_init(src, 16, derive_seed(cfg.seed, 1));
    const Codebook cb = train_som_vq(src, c, cfg);
    double before = 0.0, after = 0.0;
    int visited = 0;
    for (Index j = 0; j < 16; ++j) {
      if (cb.usage[j] == 0.0) continue;
      ++visited;
      before += (init.row(j) - mu.transpose()).norm();
      after += (cb.codewords().row(j) - mu.transpose()).norm();
    }
    CHECK(visited >= 1);
    CHECK(after < before);
  }

  TEST_CASE("training is deterministic per seed") {
    const auto c = Constellation::square_qam(16);
    const FeatureSource src = FeatureSource::default_mixture();
    SomTrainingConfig cfg;
    cfg.epochs = 3;
    const Codebook a = train_som_vq(src, c, cfg);
    const Codebook b = train_som_vq(src, c, cfg);
    CHECK(a.codewords() == b.codewords());
    CHECK(a.loss_trace == b.loss_trace);
    cfg.seed = 2;
    CHECK(train_som_vq(src, c, cfg).codewords() != a.codewords());
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train_som_vq(src, c, cfg), ValidationError);
  }

  TEST_CASE("SOM codebook places grid neighbours closer") {
    const auto c = Constellation::square_qam(16);
    const FeatureSource src = FeatureSource::default_mixture();
    SomTrainingConfig cfg;
    const Codebook cb = train_som_vq(src, c, cfg);
    const TopologyReport rep = topology_metrics(cb, c);
    CHECK(rep.neighbor_ratio < 1.0);
    CHECK(cb.method == "som-vq");
  }

  TEST_CASE("CR reordering matches a greedy oracle") {
    Matrix cw(4, 2);
    cw << 0.0, 0.0, 5.0, 0.0, 1.0, 0.0, 2.5, 0.2;
    Codebook cb(cw);
    cb.usage = {1.0, 9.0, 2.0, 2.0};
    const Codebook out = cr_reorder(cb);
    const auto chain = greedy_chain(cw, 1);
    for (Index p = 0; p < 4; ++p) CHECK(out.symbol_of(chain[p]) == p);
    CHECK(out.codewords() == cw);
    std::set<Index> seen(out.binding().begin(), out.binding().end());
    CHECK(seen.size() == 4);
    CHECK(cr_reorder(cb, 0).symbol_of(0) == 0);
    CHECK_THROWS_AS(cr_reorder(cb, 9), ValidationError);
  }

  TEST_CASE("CR leaves a chain-ordered codebook unchanged") {
    Matrix cw(5, 1);
    cw << 0.0, 1.0, 2.1, 3.3, 4.6;
    const Codebook out = cr_reorder(Codebook(cw), 0);
    for (Index j = 0; j < 5; ++j) CHECK(out.symbol_of(j) == j);
  }

  TEST_CASE("isometric codebook has unit Spearman correlation") {
    const auto c = Constellation::square_qam(16);
    Matrix cw(16, 2);
    for (Index j = 0; j < 16; ++j) cw.row(j) << 3.0 * c.cell(j).col, 3.0 * c.cell(j).row;
    const TopologyReport rep = topology_metrics(Codebook(cw), c);
    CHECK(rep.spearman == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.neighbor_ratio < 1.0);
    CHECK(rep.distance.rows() == 16);
  }

  TEST_CASE("random codebooks have no topology on average") {
    const auto c = Constellation::square_qam(16);
    std::vector<double> rho;
    for (unsigned s = 0; s < 100; ++s) {
      rho.push_back(topology_metrics(Codebook(random_codewords(16, 4, 1000 + s)), c).spearman);
    }
    const double mean = std::accumulate(rho.begin(), rho.end(), 0.0) / rho.size();
    double var = 0.0;
    for (double r : rho) var += (r - mean) * (r - mean);
    const double se = std::sqrt(var / (rho.size() - 1) / rho.size());
    CHECK(std::abs(mean) < 2 * se);
  }

  TEST_CASE("spearman with ties") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 1, 1}, {1, 2, 3}) == 0.0);
    // Average ranks: x ranks {1.5, 1.5, 3}, y ranks {1, 2, 3}.
    CHECK(spearman({1, 1, 2}, {1, 2, 3}) == doctest::Approx(0.8660254037844386));
  }

  TEST_CASE("prior estimate: smoothing formula") {
    Matrix cw = random_codewords(16, 4, 6) * 10.0;
    const Codebook cb(cw);
    const FeatureSource one({1.0}, cw.row(3), {1e-6 * Matrix::Identity(4, 4)});
    const Vector p = estimate_prior(cb, one, 1000, 1);
    CHECK(p(3) == doctest::Approx(1001.0 / 1016.0));
    CHECK(p.sum() == doctest::Approx(1.0));
  }

  TEST_CASE("prior estimate: uniform usage") {
    const Codebook cb(random_codewords(16, 4, 7) * 10.0);
    const FeatureSource src = FeatureSource::uniform_over(cb, 0.01);
    const long n = 200000;
    const Vector p = estimate_prior(cb, src, n, 2);
    for (int j = 0; j < 16; ++j) {
      CHECK(std::abs(p(j) - 1.0 / 16) <= 3 * std::sqrt((1.0 / 16) * (15.0 / 16) / n));
    }
  }

  TEST_CASE("prior estimate matches Voronoi-cell mass") {
    const auto c = Constellation::square_qam(16);
    const FeatureSource src = FeatureSource::default_mixture();
    const Codebook cb(random_codewords(16, 4, 12));
    const long n = 200000;
    const Vector p = estimate_prior(cb, src, n, 3);
    // Oracle: independent sampler from the mixture parameters.
    std::mt19937_64 rng(77);
    std::discrete_distribution<int> comp(src.weights().begin(), src.weights().end());
    std::normal_distribution<double> g;
    std::vector<Eigen::LLT<Matrix>> chol;
    for (const auto& cov : src.covariances()) chol.emplace_back(cov);
    const long n_oracle = 1000000;
    Vector mass = Vector::Zero(16);
    Vector z(4);
    for (long t = 0; t < n_oracle; ++t) {
      const int k = comp(rng);
      for (int i = 0; i < 4; ++i) z(i) = g(rng);
      const RowVector y = src.means().row(k) + (chol[k].matrixL() * z).transpose();
      mass(cb.quantize_one(y)) += 1.0;
    }
    mass /= n_oracle;
    for (int j = 0; j < 16; ++j) {
      const double se = std::sqrt(std::max(mass(j) * (1 - mass(j)), 1e-9) * (1.0 / n + 1.0 / n_oracle));
      CHECK(std::abs(p(j) - mass(j)) <= 3 * se + 16.0 / n);
    }
  }
}
