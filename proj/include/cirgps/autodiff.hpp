#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cirgps/rng.hpp"

namespace cirgps::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  // Receives gradients and optimizer updates.
  bool trainable = true;
  // Non-learnable state (batch-norm running statistics). Saved and hashed,
  // never differentiated.
  bool buffer = false;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records a computation and replays it backwards. Values are owned by the
// tape; backward closures refer to nodes by id so growth never invalidates
// them.
class Tape {
 public:
  Var constant(Matrix value);
  // Leaf bound to a parameter; differentiated only if the parameter is
  // trainable. backward() adds into Parameter::grad.
  Var parameter(Parameter& p);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(Var v);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);

  // Op plumbing.
  Var push(Matrix value, bool needs_grad, std::function<void()> backward);
  Matrix& grad_ref(int id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool has_grad = false;
    std::function<void()> backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_bias(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var concat_cols(std::span<const Var> parts);
// out[i] = a[idx[i]]
Var gather_rows(Var a, std::vector<int> idx);
// out[idx[i]] += a[i], out has `rows` rows
Var scatter_add_rows(Var a, std::vector<int> idx, Eigen::Index rows);
// Row means of consecutive segments [offsets[s], offsets[s+1]).
Var segment_mean(Var a, std::vector<int> offsets);
// Inverted dropout; identity when p == 0.
Var dropout(Var a, double p, Rng& rng);

struct BatchNormState {
  Matrix* running_mean = nullptr;  // 1 x cols
  Matrix* running_var = nullptr;   // 1 x cols
  double momentum = 0.1;
  double eps = 1e-5;
};

// Normalizes each column over all rows (training) or with running statistics
// (evaluation). Training updates the running statistics with the unbiased
// batch variance.
Var batch_norm(Var x, Var gamma, Var beta, const BatchNormState& state, bool training);

// Per-segment multi-head scaled dot-product attention; q, k, v are N x d with
// d divisible by heads. Optional probe receives the attention matrices,
// ordered by segment then head.
Var segment_attention(Var q, Var k, Var v, std::vector<int> offsets, int heads,
                      std::vector<Matrix>* probe = nullptr);

// Mean binary cross-entropy on logits (column vector).
Var bce_with_logits(Var logits, std::span<const double> targets);
// Mean squared error against targets (column vector).
Var mse(Var pred, std::span<const double> targets);

}  // namespace cirgps::ad
