#include "consor/autograd.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace consor {

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  nodes_.push_back(Node{p.value, Mat(), nullptr, &p, recording_});
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Mat(), needs ? std::move(fn) : nullptr, nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Mat value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Mat(), needs ? std::move(fn) : nullptr, nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw std::invalid_argument("backward: variable from another tape");
  Node& r = nodes_[root.id()];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  }
  if (!r.requires_grad) return;
  r.grad = Mat::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace ad {
namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shape mismatch [" << a.rows() << "," << a.cols() << "] vs [" << b.rows() << ","
       << b.cols() << "]";
    throw std::invalid_argument(os.str());
  }
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_slope(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.cols() != B.rows()) {
    std::ostringstream os;
    os << "matmul: inner dimensions differ (" << A.cols() << " vs " << B.rows() << ")";
    throw std::invalid_argument(os.str());
  }
  Tape& t = a.tape();
  int ia = a.id();
  int ib = b.id();
  return t.record(A * B, {a, b}, [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.cols() != B.cols()) throw std::invalid_argument("matmul_nt: column counts differ");
  Tape& t = a.tape();
  int ia = a.id();
  int ib = b.id();
  return t.record(A * B.transpose(), {a, b}, [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.transpose() * tp.value(ia));
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  int ia = a.id();
  int ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  int ia = a.id();
  int ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, -tp.grad(self));
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  int ia = a.id();
  int ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var add_row(Var a, Var row) {
  const Mat& A = a.value();
  const Mat& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) throw std::invalid_argument("add_row: bad row shape");
  Mat out = A.rowwise() + R.row(0);
  int ia = a.id();
  int ir = row.id();
  return a.tape().record(std::move(out), {a, row}, [ia, ir](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  const Mat& A = a.value();
  const Mat& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) throw std::invalid_argument("mul_row: bad row shape");
  Mat out = A.array().rowwise() * R.row(0).array();
  int ia = a.id();
  int ir = row.id();
  return a.tape().record(std::move(out), {a, row}, [ia, ir](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Mat ga = g.array().rowwise() * tp.value(ir).row(0).array();
      tp.accumulate(ia, ga);
    }
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.cwiseProduct(tp.value(ia)).colwise().sum());
  });
}

Var scale(Var a, double s) {
  int ia = a.id();
  return a.tape().record(a.value() * s, {a},
                         [ia, s](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self) * s); });
}

Var scale_by(Var a, Var s) {
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scale_by: scalar must be 1x1");
  int ia = a.id();
  int is = s.id();
  return a.tape().record(a.value() * s.value()(0, 0), {a, s}, [ia, is](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(is)(0, 0));
    if (tp.requires_grad(is)) {
      Mat gs(1, 1);
      gs(0, 0) = g.cwiseProduct(tp.value(ia)).sum();
      tp.accumulate(is, gs);
    }
  });
}

Var one_minus(Var a) {
  int ia = a.id();
  Mat out = (1.0 - a.value().array()).matrix();
  return a.tape().record(std::move(out), {a},
                         [ia](Tape& tp, int self) { tp.accumulate(ia, -tp.grad(self)); });
}

Var sigmoid(Var a) {
  Mat out = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& tp, int self) {
    const Mat& y = tp.value(self);
    Mat g = tp.grad(self).array() * y.array() * (1.0 - y.array());
    tp.accumulate(ia, g);
  });
}

Var gelu(Var a) {
  Mat out = a.value().unaryExpr(&gelu_value);
  int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& tp, int self) {
    Mat g = tp.grad(self).array() * tp.value(ia).unaryExpr(&gelu_slope).array();
    tp.accumulate(ia, g);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Mat& X = x.value();
  const Eigen::Index n = X.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw std::invalid_argument("layer_norm: affine parameters must be [1, width]");
  }
  Mat xhat(X.rows(), n);
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    double mu = X.row(r).mean();
    double var = (X.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
            beta.value().row(0).array();
  int ix = x.id();
  int ig = gamma.id();
  int ib = beta.id();
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, int self) {
        const Mat& g = tp.grad(self);
        if (tp.requires_grad(ig)) tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
        if (tp.requires_grad(ix)) {
          const double width = static_cast<double>(xhat.cols());
          Mat gx(g.rows(), g.cols());
          for (Eigen::Index r = 0; r < g.rows(); ++r) {
            Eigen::RowVectorXd gh = g.row(r).cwiseProduct(tp.value(ig).row(0));
            double mean_gh = gh.mean();
            double mean_gh_xhat = gh.cwiseProduct(xhat.row(r)).sum() / width;
            gx.row(r) = inv_std(r) *
                        (gh.array() - mean_gh - xhat.row(r).array() * mean_gh_xhat).matrix();
          }
          tp.accumulate(ix, gx);
        }
      });
}

Var softmax_rows(Var x, const Mat* additive_mask) {
  Mat logits = x.value();
  if (additive_mask != nullptr) {
    require_same_shape(logits, *additive_mask, "softmax_rows(mask)");
    logits += *additive_mask;
  }
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double m = logits.row(r).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  int ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& tp, int self) {
    const Mat& y = tp.value(self);
    const Mat& g = tp.grad(self);
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Mat gx = y.array() * (g.colwise() - dot).array();
    tp.accumulate(ix, gx);
  });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  const Mat& X = x.value();
  if (start < 0 || count < 0 || start + count > X.rows()) {
    throw std::invalid_argument("slice_rows: range out of bounds");
  }
  int ix = x.id();
  Eigen::Index rows = X.rows();
  return x.tape().record(X.middleRows(start, count), {x},
                         [ix, start, count, rows](Tape& tp, int self) {
                           Mat g = Mat::Zero(rows, tp.grad(self).cols());
                           g.middleRows(start, count) = tp.grad(self);
                           tp.accumulate(ix, g);
                         });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  const Mat& X = x.value();
  if (start < 0 || count < 0 || start + count > X.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  int ix = x.id();
  Eigen::Index cols = X.cols();
  return x.tape().record(X.middleCols(start, count), {x},
                         [ix, start, count, cols](Tape& tp, int self) {
                           Mat g = Mat::Zero(tp.grad(self).rows(), cols);
                           g.middleCols(start, count) = tp.grad(self);
                           tp.accumulate(ix, g);
                         });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.rows();
  }
  return parts.front().tape().record(std::move(out), parts, [ids, offsets](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        tp.accumulate(ids[k], g.middleRows(offsets[k], tp.value(ids[k]).rows()));
      }
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [ids, offsets](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        tp.accumulate(ids[k], g.middleCols(offsets[k], tp.value(ids[k]).cols()));
      }
    }
  });
}

Var mean_rows(Var x) {
  const Mat& X = x.value();
  if (X.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
  int ix = x.id();
  Eigen::Index rows = X.rows();
  return x.tape().record(X.colwise().mean(), {x}, [ix, rows](Tape& tp, int self) {
    Mat g = tp.grad(self).replicate(rows, 1) / static_cast<double>(rows);
    tp.accumulate(ix, g);
  });
}

Var sum(Var x) {
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  int ix = x.id();
  Eigen::Index rows = x.rows();
  Eigen::Index cols = x.cols();
  return x.tape().record(std::move(out), {x}, [ix, rows, cols](Tape& tp, int self) {
    tp.accumulate(ix, Mat::Constant(rows, cols, tp.grad(self)(0, 0)));
  });
}

Var mean(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("mean: no inputs");
  for (const Var& s : scalars) {
    if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("mean: inputs must be 1x1");
  }
  return scale(sum(concat_rows(scalars)), 1.0 / static_cast<double>(scalars.size()));
}

Var l2_normalize_rows(Var x) {
  const Mat& X = x.value();
  Eigen::VectorXd norms = X.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (norms(r) == 0.0) throw std::invalid_argument("l2_normalize_rows: zero-norm row");
  }
  Mat out = X.array().colwise() / norms.array();
  int ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, norms](Tape& tp, int self) {
    const Mat& y = tp.value(self);
    const Mat& g = tp.grad(self);
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Mat gx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      gx.row(r) = (g.row(r) - dot(r) * y.row(r)) / norms(r);
    }
    tp.accumulate(ix, gx);
  });
}

Var cross_entropy(Var logits, Eigen::Index label) {
  const Mat& z = logits.value();
  if (z.rows() != 1) throw std::invalid_argument("cross_entropy: logits must be [1, C]");
  if (label < 0 || label >= z.cols()) throw std::invalid_argument("cross_entropy: label out of range");
  double m = z.maxCoeff();
  Eigen::RowVectorXd e = (z.array() - m).exp();
  double lse = m + std::log(e.sum());
  Mat out(1, 1);
  out(0, 0) = lse - z(0, label);
  Eigen::RowVectorXd p = e / e.sum();
  int iz = logits.id();
  return logits.tape().record(std::move(out), {logits}, [iz, label, p](Tape& tp, int self) {
    Mat g = p;
    g(0, label) -= 1.0;
    tp.accumulate(iz, g * tp.grad(self)(0, 0));
  });
}

}  // namespace ad
}  // namespace consor
