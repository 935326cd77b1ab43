#pragma once

// Contrastive classification: scaled cosine between a pair feature and each
// candidate prompt embedding, trained with softmax cross-entropy.

#include "consor/autograd.hpp"

namespace consor {

/// z_c = logit_scale * cos(u, prompts.row(c)). Throws std::invalid_argument
/// on a zero-norm input.
Eigen::RowVectorXd classify_logits(const Eigen::RowVectorXd& u, const Mat& prompts, double logit_scale);
/// Tape version; u is [1, d], prompts is [C, d].
Var classify_logits(Var u, Var prompts, double logit_scale);

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& z);
double cross_entropy_loss(const Eigen::RowVectorXd& z, int label);
Var cross_entropy_loss(Var z, int label);

}  // namespace consor
