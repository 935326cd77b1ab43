#include "consor/head.hpp"

#include <cmath>
#include <stdexcept>

namespace consor {
namespace {

void require_nonzero_rows(const Mat& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (m.row(r).norm() == 0.0) throw std::invalid_argument(std::string(what) + " has a zero-norm row");
  }
}

}  // namespace

Eigen::RowVectorXd classify_logits(const Eigen::RowVectorXd& u, const Mat& prompts, double logit_scale) {
  if (u.size() != prompts.cols()) throw std::invalid_argument("pair feature and prompt widths differ");
  const double un = u.norm();
  if (un == 0.0) throw std::invalid_argument("pair feature has zero norm");
  require_nonzero_rows(prompts, "prompt embeddings");
  Eigen::RowVectorXd z(prompts.rows());
  for (Eigen::Index c = 0; c < prompts.rows(); ++c) {
    z(c) = logit_scale * prompts.row(c).dot(u) / (un * prompts.row(c).norm());
  }
  return z;
}

Var classify_logits(Var u, Var prompts, double logit_scale) {
  if (u.rows() != 1 || u.cols() != prompts.cols()) throw std::invalid_argument("pair feature and prompt widths differ");
  require_nonzero_rows(u.value(), "pair feature");
  require_nonzero_rows(prompts.value(), "prompt embeddings");
  Var z = ad::matmul_nt(ad::l2_normalize_rows(u), ad::l2_normalize_rows(prompts));
  return ad::scale(z, logit_scale);
}

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& z) {
  Eigen::RowVectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

double cross_entropy_loss(const Eigen::RowVectorXd& z, int label) {
  if (label < 0 || label >= z.size()) throw std::invalid_argument("label out of range");
  const double m = z.maxCoeff();
  return std::log((z.array() - m).exp().sum()) + m - z(label);
}

Var cross_entropy_loss(Var z, int label) {
  if (label < 0 || label >= z.cols()) throw std::invalid_argument("label out of range");
  return ad::cross_entropy(z, label);
}

}  // namespace consor
