#pragma once

#include "symdiff/codebook.hpp"
#include "symdiff/diffusion_process.hpp"
#include "symdiff/matrix.hpp"

#include <memory>

namespace symdiff {

/// Maps an embedded noisy sequence (N x d codeword rows) at step k to
/// per-position distributions over the clean symbol (N x M, rows sum to 1).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Matrix predict(const Matrix& embedded, int k) const = 0;
  /// True when output row i depends only on input row i (and k).
  virtual bool position_independent() const { return false; }
  virtual int order() const = 0;
};

/// Row i = codeword bound to symbol u[i].
Matrix embed(const Codebook& cb, const IndexSequence& u);

/// Symbol whose codeword is nearest to each row; exact inverse of embed().
IndexSequence unembed(const Codebook& cb, const Matrix& embedded);

/// Exact posterior p(u_0 | u_k) propto prior(u_0) Qbar_{k|0}(u_0, u_k).
class ExactBayesDenoiser final : public Denoiser {
 public:
  ExactBayesDenoiser(Vector prior, std::shared_ptr<const DiffusionProcess> process,
                     std::shared_ptr<const Codebook> codebook);
  Matrix predict(const Matrix& embedded, int k) const override;
  bool position_independent() const override { return true; }
  int order() const override { return static_cast<int>(prior_.size()); }
  /// M x M table, row u_k = p(. | u_k) at step k; rows of impossible
  /// observations are zero (predict() throws NumericalError on them).
  Matrix table(int k) const;

 private:
  Vector prior_;
  std::shared_ptr<const DiffusionProcess> process_;
  std::shared_ptr<const Codebook> codebook_;
};

/// Uniform distribution regardless of input.
class UniformDenoiser final : public Denoiser {
 public:
  explicit UniformDenoiser(int order) : order_(order) {}
  Matrix predict(const Matrix& embedded, int k) const override;
  bool position_independent() const override { return true; }
  int order() const override { return order_; }

 private:
  int order_;
};

/// Point mass on the observed symbol.
class ObservedDeltaDenoiser final : public Denoiser {
 public:
  explicit ObservedDeltaDenoiser(std::shared_ptr<const Codebook> codebook);
  Matrix predict(const Matrix& embedded, int k) const override;
  bool position_independent() const override { return true; }
  int order() const override { return codebook_->size(); }

 private:
  std::shared_ptr<const Codebook> codebook_;
};

/// Point mass on a fixed clean sequence; for tests of the loss terms.
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(int order, IndexSequence clean) : order_(order), clean_(std::move(clean)) {}
  Matrix predict(const Matrix& embedded, int k) const override;
  int order() const override { return order_; }

 private:
  int order_;
  IndexSequence clean_;
};

}  // namespace symdiff
