#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "reslm/common.hpp"

namespace reslm::autograd {

/// A node in the reverse-mode tape. Values and gradients are flat row-major
/// 64-bit buffers; `shape` gives the logical dimensions (scalar = {}).
struct Node {
  std::vector<int> shape;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;  // size 0 = not yet touched this pass
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> parents;
  // Pulls from this node's grad into the parents' grads. Captures parent
  // handles by value; never captures an owning reference to the node itself.
  std::function<void(Node&)> backward;

  int64_t size() const { return value.size(); }
};

/// Value-semantics handle over a shared node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t size() const { return node_->value.size(); }

  /// Logical rows/cols: 2-D as stored, 1-D = one row, scalar = 1x1.
  int rows() const;
  int cols() const;

  Eigen::ArrayXd& value() { return node_->value; }
  const Eigen::ArrayXd& value() const { return node_->value; }
  /// Gradient buffer; zeros if no gradient reached this node.
  Eigen::ArrayXd grad_or_zero() const;
  bool has_grad() const { return node_->grad.size() > 0; }
  bool requires_grad() const { return node_->requires_grad; }

  /// Scalar extraction; throws unless size() == 1.
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

std::string shape_str(const std::vector<int>& shape);

/// A persistent leaf with requires_grad = true; lives outside any tape so it
/// survives across batches. Data length must match the shape product.
Tensor make_parameter(std::vector<int> shape, Eigen::ArrayXd data);

/// A leaf that takes no gradient (inputs, masks, constants).
Tensor make_constant(std::vector<int> shape, Eigen::ArrayXd data);

/// True if any element of value (or grad, when present) is NaN or Inf.
bool has_nonfinite(const Tensor& t);
/// Throws Error naming `label` when has_nonfinite(t).
void check_finite(const Tensor& t, const std::string& label);

/// Records one forward graph; rebuilt per batch. backward() may run once.
class Tape {
 public:
  Tensor track(std::shared_ptr<Node> n);

  /// Reverse pass from a scalar loss; accumulates into parameter grads
  /// additively (call zero_grad between batches).
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

// Elementwise ops; a 1-D operand of length C broadcasts across the rows of a
// 2-D [R x C] operand.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);     // [n,k]x[k,m]
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);  // a * b^T, b is [m,k]

Tensor tanh(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);

/// Concatenates 2-D tensors along axis 0 (rows) or 1 (cols).
Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis);
/// Contiguous [begin, end) slice of a 2-D tensor along axis 0 or 1.
Tensor slice(Tape& tape, const Tensor& x, int axis, int begin, int end);

/// Rows of `table` selected by ids -> [N x E]; backward scatter-adds.
Tensor embedding_gather(Tape& tape, const Tensor& table, const std::vector<int>& ids);

/// Row-wise log softmax over the last axis (max-subtracted).
Tensor log_softmax(Tape& tape, const Tensor& x);

/// Adds a non-differentiated constant to x. The constant is either the same
/// total size as x or a length-cols vector broadcast per row; it receives no
/// gradient by construction (this is the only door through which n-gram
/// log-probabilities enter a training graph).
Tensor add_constant_bias(Tape& tape, const Tensor& x, const Eigen::ArrayXd& bias);

/// Mean over unmasked positions of -log softmax(logits)[target]. Stable
/// (max-subtraction inside); throws on an all-masked batch.
Tensor cross_entropy_from_logits(Tape& tape, const Tensor& logits,
                                 const std::vector<int>& targets,
                                 const std::vector<uint8_t>& mask);

/// Inverted-dropout by elementwise mul with a constant mask drawn from rng.
Tensor dropout(Tape& tape, const Tensor& x, double rate, Rng& rng);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

void zero_grad(const std::vector<Tensor>& params);

/// Global-norm clipping: returns min(1, max_norm/||g||_2) and scales all
/// gradients by it.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(const std::vector<Tensor>& params);
  void step(const std::vector<Tensor>& params, const AdamConfig& config);
  int64_t steps_taken() const { return step_; }

 private:
  std::vector<Eigen::ArrayXd> m_, v_;
  int64_t step_ = 0;
};

}  // namespace reslm::autograd
