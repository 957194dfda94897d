#pragma once

#include "symdiff/constellation.hpp"
#include "symdiff/matrix.hpp"
#include "symdiff/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace symdiff {

/// M codewords in R^d, each bound to one constellation symbol.
class Codebook {
 public:
  Codebook() = default;
  /// Identity binding (codeword j <-> symbol j) unless `symbol_of` is given.
  explicit Codebook(Matrix codewords, std::vector<Index> symbol_of = {});

  /// Codewords e_j in R^M; handy for tests that need an embedding.
  static Codebook one_hot(int order);

  int size() const noexcept { return static_cast<int>(codewords_.rows()); }
  int dim() const noexcept { return static_cast<int>(codewords_.cols()); }
  const Matrix& codewords() const noexcept { return codewords_; }

  Index symbol_of(Index codeword) const { return symbol_of_.at(codeword); }
  Index codeword_of(Index symbol) const { return codeword_of_.at(symbol); }
  const std::vector<Index>& binding() const noexcept { return symbol_of_; }
  /// Codeword transmitted as `symbol`.
  auto codeword_for_symbol(Index symbol) const { return codewords_.row(codeword_of(symbol)); }

  /// Nearest codeword per row of `features` (N x d); ties to the lowest index.
  IndexSequence quantize(const Matrix& features) const;
  Index quantize_one(const Eigen::Ref<const RowVector>& y) const;

  // Training metadata.
  std::string method = "none";
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> loss_trace;
  /// Per-codeword usage counts from the last training epoch (may be empty).
  std::vector<double> usage;

  std::string to_json() const;
  static Codebook from_json(const std::string& text);

 private:
  Matrix codewords_;
  std::vector<Index> symbol_of_;
  std::vector<Index> codeword_of_;
};

/// Gaussian-mixture feature generator standing in for an encoder output.
class FeatureSource {
 public:
  FeatureSource(std::vector<double> weights, Matrix means, std::vector<Matrix> covariances);

  /// Seeded K-component mixture in R^d with anisotropic covariances and
  /// Zipf(s) component weights.
  static FeatureSource default_mixture(int components = 8, int dim = 4, double zipf_s = 1.0,
                                       std::uint64_t seed = 2024);

  /// One isotropic component per codeword (equal weights), so quantized
  /// indices are uniform.
  static FeatureSource uniform_over(const Codebook& cb, double spread);

  int dim() const noexcept { return static_cast<int>(means_.cols()); }
  int components() const noexcept { return static_cast<int>(weights_.size()); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const Matrix& means() const noexcept { return means_; }
  const std::vector<Matrix>& covariances() const noexcept { return covariances_; }

  /// n x d samples; row r depends only on (seed, stream, r).
  Matrix sample(long long n, std::uint64_t seed, std::uint64_t stream = 0) const;

  std::string to_json() const;
  static FeatureSource from_json(const std::string& text);

 private:
  std::vector<double> weights_;
  Matrix means_;
  std::vector<Matrix> covariances_;
  std::vector<Matrix> chol_;
  std::vector<double> cdf_;
};


struct SomTrainingConfig {
  double alpha = 1.0;  // codebook pull toward the received features
  double beta = 0.25;  // commitment weight; no codebook gradient with an identity codec
  double gamma = 0.9;  // SOM weight; 0 gives plain VQ
  double eta_train_db = 20.0;
  int epochs = 40;
  int batches_per_epoch = 100;
  int batch_size = 32;
  double learning_rate = 1e-2;
  int lr_decay_period = 10;  // epochs
  double lr_decay = 0.5;
  bool inverse_distance_weights = false;
  std::uint64_t seed = 1;
};

/// Per-batch loss terms (features N x d, received symbol per row). Neighbours
/// are the immediate lattice neighbours of the received symbol, weighted 1, or
/// 1 / |s_i - s_j| with `inverse_distance`.
struct SomBatchLoss {
  double vq = 0.0;   // mean over rows of MSE(c_{received}, y)
  double som = 0.0;  // mean over rows of sum_{j in N(received)} w_ij MSE(c_j, y)
  Matrix grad;       // d(alpha * vq + gamma * som) / d codewords
};

SomBatchLoss som_batch_loss(const Codebook& cb, const Constellation& c, const Matrix& features,
                            const IndexSequence& received_symbols, double alpha, double gamma,
                            bool inverse_distance = false);

/// Codebook training with the channel in the loop at eta_train.
Codebook train_som_vq(const FeatureSource& src, const Constellation& c,
                      const SomTrainingConfig& cfg);

/// Farthest-point seeding from `pool` samples of the source.
Matrix farthest_point_init(const FeatureSource& src, int count, std::uint64_t seed,
                           long long pool = 2048);

/// Greedy nearest-neighbour chain laid along the boustrophedon traversal of
/// the grid (symbol index order). The chain starts at `anchor`, or at the
/// most-used codeword when anchor < 0 (codeword 0 without usage counts).
Codebook cr_reorder(const Codebook& cb, Index anchor = -1);

struct TopologyReport {
  Matrix distance;           // codeword distances, rows/cols in symbol order
  Vector spearman_per_reference;
  double spearman = 0.0;     // mean over references
  double neighbor_ratio = 0.0;  // mean neighbour distance / mean non-neighbour distance
};

TopologyReport topology_metrics(const Codebook& cb, const Constellation& c);

/// Spearman rank correlation with average ranks for ties; 0 if either input
/// is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Laplace-smoothed distribution of transmitted symbols (quantized codewords
/// mapped through the binding) over n draws, indexed by symbol.
Vector estimate_prior(const Codebook& cb, const FeatureSource& src, long long n,
                      std::uint64_t seed);

}  // namespace symdiff
