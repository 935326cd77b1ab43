#pragma once

// Reverse-mode automatic differentiation over dense row-major float64
// matrices. Every tensor in the trainable pipeline is two-dimensional:
// sequences are [tokens, width] and vectors are [1, width].

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace consor {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;  // receives decoupled weight decay

  void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  /// With record_gradients=false no backward closures are kept, which is
  /// what evaluation and finite-difference probing want.
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// Leaf bound to a parameter. Repeated calls for the same parameter
  /// return the same node, so shared weights accumulate one gradient.
  Var param(Parameter& p);

  Var record(Mat value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Mat value, const std::vector<Var>& inputs, BackwardFn fn);

  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool recording() const { return recording_; }

  /// Adds `delta` into the gradient of node `id` if it participates in
  /// differentiation.
  template <typename Expr>
  void accumulate(int id, const Expr& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Backpropagates from a 1x1 root and adds leaf gradients into the bound
  /// Parameter::grad fields.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  bool recording_;
};

inline const Mat& Var::value() const { return tape_->value(id_); }

// Differentiable operations. Shapes are checked and mismatches throw
// std::invalid_argument.
namespace ad {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Adds a [1, n] row to every row of a.
Var add_row(Var a, Var row);
/// Multiplies every row of a elementwise by a [1, n] row.
Var mul_row(Var a, Var row);
Var scale(Var a, double s);
/// Multiplies a by a 1x1 variable.
Var scale_by(Var a, Var s);
Var one_minus(Var a);
Var sigmoid(Var a);
Var gelu(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Row-wise softmax; an optional additive mask (same shape) is applied to
/// the logits first, entries of -infinity block attention.
Var softmax_rows(Var x, const Mat* additive_mask = nullptr);
Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var mean_rows(Var x);
Var sum(Var x);
Var mean(const std::vector<Var>& scalars);
Var l2_normalize_rows(Var x);
/// Cross-entropy of softmax(logits) at `label`; logits is [1, C].
Var cross_entropy(Var logits, Eigen::Index label);

}  // namespace ad
}  // namespace consor
