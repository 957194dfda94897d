#include "symdiff/denoiser.hpp"

#include "symdiff/error.hpp"

namespace symdiff {

Matrix embed(const Codebook& cb, const IndexSequence& u) {
  Matrix out(static_cast<Eigen::Index>(u.size()), cb.dim());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] < 0 || u[i] >= cb.size()) {
      throw ValidationError("symbol " + std::to_string(u[i]) + " out of range at position " +
                            std::to_string(i));
    }
    out.row(static_cast<Eigen::Index>(i)) = cb.codeword_for_symbol(u[i]);
  }
  return out;
}

IndexSequence unembed(const Codebook& cb, const Matrix& embedded) {
  IndexSequence z = cb.quantize(embedded);
  for (auto& v : z) v = cb.symbol_of(v);
  return z;
}

ExactBayesDenoiser::ExactBayesDenoiser(Vector prior,
                                       std::shared_ptr<const DiffusionProcess> process,
                                       std::shared_ptr<const Codebook> codebook)
    : prior_(std::move(prior)), process_(std::move(process)), codebook_(std::move(codebook)) {
  if (!process_ || !codebook_) throw ValidationError("denoiser needs a process and a codebook");
  const auto m = prior_.size();
  if (m != process_->order() || m != codebook_->size()) {
    throw ValidationError("prior, process and codebook sizes disagree");
  }
  if ((prior_.array() < 0.0).any() || !(prior_.sum() > 0.0)) {
    throw ValidationError("prior must be non-negative with positive mass");
  }
  prior_ /= prior_.sum();
}

Matrix ExactBayesDenoiser::table(int k) const {
  const Matrix& q = process_->cumulative(k);
  const int m = order();
  Matrix t = Matrix::Zero(m, m);
  for (int uk = 0; uk < m; ++uk) {
    const Vector w = prior_.cwiseProduct(q.col(uk));
    const double s = w.sum();
    if (s > 0.0) t.row(uk) = (w / s).transpose();
  }
  return t;
}

Matrix ExactBayesDenoiser::predict(const Matrix& embedded, int k) const {
  const Matrix t = table(k);
  const IndexSequence u = unembed(*codebook_, embedded);
  Matrix out(embedded.rows(), order());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (t.row(u[i]).sum() == 0.0) {
      throw NumericalError("impossible observation: symbol " + std::to_string(u[i]) +
                           " at step " + std::to_string(k) + " (position " + std::to_string(i) +
                           ") has zero probability under the prior");
    }
    out.row(static_cast<Eigen::Index>(i)) = t.row(u[i]);
  }
  return out;
}

Matrix UniformDenoiser::predict(const Matrix& embedded, int) const {
  return Matrix::Constant(embedded.rows(), order_, 1.0 / order_);
}

ObservedDeltaDenoiser::ObservedDeltaDenoiser(std::shared_ptr<const Codebook> codebook)
    : codebook_(std::move(codebook)) {
  if (!codebook_) throw ValidationError("denoiser needs a codebook");
}

Matrix ObservedDeltaDenoiser::predict(const Matrix& embedded, int) const {
  const IndexSequence u = unembed(*codebook_, embedded);
  Matrix out = Matrix::Zero(embedded.rows(), order());
  for (std::size_t i = 0; i < u.size(); ++i) out(static_cast<Eigen::Index>(i), u[i]) = 1.0;
  return out;
}

Matrix OracleDenoiser::predict(const Matrix& embedded, int) const {
  if (static_cast<std::size_t>(embedded.rows()) != clean_.size()) {
    throw ValidationError("oracle denoiser: sequence length mismatch");
  }
  Matrix out = Matrix::Zero(embedded.rows(), order_);
  for (std::size_t i = 0; i < clean_.size(); ++i) out(static_cast<Eigen::Index>(i), clean_[i]) = 1.0;
  return out;
}

}  // namespace symdiff
