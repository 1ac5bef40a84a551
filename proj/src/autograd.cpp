#include "reslm/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace reslm::autograd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

int64_t shape_product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::pair<int, int> rows_cols(const std::vector<int>& shape) {
  if (shape.empty()) return {1, 1};
  if (shape.size() == 1) return {1, shape[0]};
  if (shape.size() == 2) return {shape[0], shape[1]};
  throw ShapeError("tensors of rank > 2 are not supported, got " + shape_str(shape));
}

std::shared_ptr<Node> new_node(std::string op, std::vector<int> shape,
                               std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->op = std::move(op);
  n->shape = std::move(shape);
  n->parents = std::move(parents);
  return n;
}

void accumulate(Node& target, const Eigen::ArrayXd& g) {
  if (target.grad.size() == 0)
    target.grad = g;
  else
    target.grad += g;
}

// Broadcast layout of a binary elementwise op: either identical sizes, or
// one side is a length-cols vector applied to every row of the other.
struct Broadcast {
  int rows, cols;
  bool a_vec, b_vec;  // which operand broadcasts
};

Broadcast broadcast_of(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape())
    return {a.rows(), a.cols(), false, false};
  auto [ar, ac] = rows_cols(a.shape());
  auto [br, bc] = rows_cols(b.shape());
  if (b.shape().size() == 1 && ac == bc) return {ar, ac, false, true};
  if (a.shape().size() == 1 && ac == bc) return {br, bc, true, false};
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()));
}

Eigen::ArrayXd broadcast_rows(const Eigen::ArrayXd& v, int rows, int cols) {
  Eigen::ArrayXd out(static_cast<int64_t>(rows) * cols);
  MatMap(out.data(), rows, cols).rowwise() =
      Eigen::Map<const Eigen::RowVectorXd>(v.data(), cols);
  return out;
}

Eigen::ArrayXd reduce_rows(const Eigen::ArrayXd& g, int rows, int cols) {
  ConstMatMap m(g.data(), rows, cols);
  Eigen::ArrayXd out(cols);
  Eigen::Map<Eigen::RowVectorXd>(out.data(), cols) = m.colwise().sum();
  return out;
}

void require_2d(const char* op, const Tensor& t) {
  if (t.shape().size() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     shape_str(t.shape()));
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

int Tensor::rows() const { return rows_cols(node_->shape).first; }
int Tensor::cols() const { return rows_cols(node_->shape).second; }

Eigen::ArrayXd Tensor::grad_or_zero() const {
  if (node_->grad.size() > 0) return node_->grad;
  return Eigen::ArrayXd::Zero(node_->value.size());
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor make_parameter(std::vector<int> shape, Eigen::ArrayXd data) {
  if (shape_product(shape) != data.size())
    throw ShapeError("make_parameter: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto n = new_node("parameter", std::move(shape), {});
  n->value = std::move(data);
  n->requires_grad = true;
  return Tensor(n);
}

Tensor make_constant(std::vector<int> shape, Eigen::ArrayXd data) {
  if (shape_product(shape) != data.size())
    throw ShapeError("make_constant: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto n = new_node("constant", std::move(shape), {});
  n->value = std::move(data);
  return Tensor(n);
}

bool has_nonfinite(const Tensor& t) {
  if (!t.node()->value.isFinite().all()) return true;
  if (t.node()->grad.size() > 0 && !t.node()->grad.isFinite().all()) return true;
  return false;
}

void check_finite(const Tensor& t, const std::string& label) {
  if (has_nonfinite(t)) throw Error("non-finite values detected in " + label);
}

Tensor Tape::track(std::shared_ptr<Node> n) {
  nodes_.push_back(n);
  return Tensor(std::move(n));
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) throw Error("backward: tape already used for a backward pass");
  if (loss.size() != 1)
    throw Error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  backward_done_ = true;
  loss.node()->grad = Eigen::ArrayXd::Ones(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_elementwise(Tape& tape, const char* op, const Tensor& a,
                          const Tensor& b, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  const Broadcast bc = broadcast_of(op, a, b);
  Eigen::ArrayXd av = bc.a_vec ? broadcast_rows(a.value(), bc.rows, bc.cols) : a.value();
  Eigen::ArrayXd bv = bc.b_vec ? broadcast_rows(b.value(), bc.rows, bc.cols) : b.value();
  auto n = new_node(op, bc.a_vec ? b.shape() : a.shape(), {a.node(), b.node()});
  n->value = fwd(av, bv);
  auto pa = a.node();
  auto pb = b.node();
  n->backward = [bc, pa, pb, av = std::move(av), bv = std::move(bv), bwd_a,
                 bwd_b](Node& self) {
    Eigen::ArrayXd ga = bwd_a(self.grad, av, bv);
    Eigen::ArrayXd gb = bwd_b(self.grad, av, bv);
    accumulate(*pa, bc.a_vec ? reduce_rows(ga, bc.rows, bc.cols) : ga);
    accumulate(*pb, bc.b_vec ? reduce_rows(gb, bc.rows, bc.cols) : gb);
  };
  return tape.track(std::move(n));
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, "add", a, b,
      [](const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) { return (x + y).eval(); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&) { return g; },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&) { return g; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, "sub", a, b,
      [](const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) { return (x - y).eval(); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&) { return g; },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&) {
        return (-g).eval();
      });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, "mul", a, b,
      [](const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) { return (x * y).eval(); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd& y) {
        return (g * y).eval();
      },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&) {
        return (g * x).eval();
      });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const int n = a.rows(), k = a.cols(), k2 = b.rows(), m = b.cols();
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  auto node = new_node("matmul", {n, m}, {a.node(), b.node()});
  node->value.resize(static_cast<int64_t>(n) * m);
  MatMap(node->value.data(), n, m).noalias() =
      ConstMatMap(a.value().data(), n, k) * ConstMatMap(b.value().data(), k, m);
  auto pa = a.node();
  auto pb = b.node();
  node->backward = [pa, pb, n, k, m](Node& self) {
    ConstMatMap g(self.grad.data(), n, m);
    ConstMatMap av(pa->value.data(), n, k);
    ConstMatMap bv(pb->value.data(), k, m);
    Eigen::ArrayXd ga(static_cast<int64_t>(n) * k);
    MatMap(ga.data(), n, k).noalias() = g * bv.transpose();
    accumulate(*pa, ga);
    Eigen::ArrayXd gb(static_cast<int64_t>(k) * m);
    MatMap(gb.data(), k, m).noalias() = av.transpose() * g;
    accumulate(*pb, gb);
  };
  return tape.track(std::move(node));
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d("matmul_nt", a);
  require_2d("matmul_nt", b);
  const int n = a.rows(), k = a.cols(), m = b.rows(), k2 = b.cols();
  if (k != k2)
    throw ShapeError("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()) + "^T");
  auto node = new_node("matmul_nt", {n, m}, {a.node(), b.node()});
  node->value.resize(static_cast<int64_t>(n) * m);
  MatMap(node->value.data(), n, m).noalias() =
      ConstMatMap(a.value().data(), n, k) * ConstMatMap(b.value().data(), m, k).transpose();
  auto pa = a.node();
  auto pb = b.node();
  node->backward = [pa, pb, n, k, m](Node& self) {
    ConstMatMap g(self.grad.data(), n, m);
    ConstMatMap av(pa->value.data(), n, k);
    ConstMatMap bv(pb->value.data(), m, k);
    Eigen::ArrayXd ga(static_cast<int64_t>(n) * k);
    MatMap(ga.data(), n, k).noalias() = g * bv;
    accumulate(*pa, ga);
    Eigen::ArrayXd gb(static_cast<int64_t>(m) * k);
    MatMap(gb.data(), m, k).noalias() = g.transpose() * av;
    accumulate(*pb, gb);
  };
  return tape.track(std::move(node));
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(Tape& tape, const char* op, const Tensor& x, Fwd fwd, Bwd bwd) {
  auto n = new_node(op, x.shape(), {x.node()});
  n->value = fwd(x.value());
  auto px = x.node();
  n->backward = [px, bwd](Node& self) {
    accumulate(*px, bwd(self.grad, px->value, self.value));
  };
  return tape.track(std::move(n));
}

}  // namespace

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary_elementwise(
      tape, "tanh", x,
      [](const Eigen::ArrayXd& v) { return v.tanh().eval(); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd& y) {
        return (g * (1.0 - y.square())).eval();
      });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_elementwise(
      tape, "sigmoid", x,
      [](const Eigen::ArrayXd& v) {
        return (0.5 * (0.5 * v).tanh() + 0.5).eval();  // stable logistic
      },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd& y) {
        return (g * y * (1.0 - y)).eval();
      });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary_elementwise(
      tape, "relu", x,
      [](const Eigen::ArrayXd& v) { return v.max(0.0).eval(); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& v, const Eigen::ArrayXd&) {
        return (g * (v > 0.0).cast<double>()).eval();
      });
}

// ---------------------------------------------------------------------------
// Structure
// ---------------------------------------------------------------------------

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const Tensor& p : parts) require_2d("concat", p);
  const int fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  int total = 0;
  std::vector<std::shared_ptr<Node>> parent_nodes;
  for (const Tensor& p : parts) {
    const int pf = axis == 0 ? p.cols() : p.rows();
    if (pf != fixed)
      throw ShapeError("concat: mismatched shapes " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    total += axis == 0 ? p.rows() : p.cols();
    parent_nodes.push_back(p.node());
  }
  const int rows = axis == 0 ? total : fixed;
  const int cols = axis == 0 ? fixed : total;
  auto n = new_node("concat", {rows, cols}, parent_nodes);
  n->value.resize(static_cast<int64_t>(rows) * cols);
  MatMap out(n->value.data(), rows, cols);
  int offset = 0;
  for (const Tensor& p : parts) {
    ConstMatMap pv(p.value().data(), p.rows(), p.cols());
    if (axis == 0) {
      out.middleRows(offset, p.rows()) = pv;
      offset += p.rows();
    } else {
      out.middleCols(offset, p.cols()) = pv;
      offset += p.cols();
    }
  }
  n->backward = [parent_nodes, axis, rows, cols](Node& self) {
    ConstMatMap g(self.grad.data(), rows, cols);
    int off = 0;
    for (const auto& p : parent_nodes) {
      auto [pr, pc] = rows_cols(p->shape);
      Eigen::ArrayXd gp(static_cast<int64_t>(pr) * pc);
      if (axis == 0) {
        MatMap(gp.data(), pr, pc) = g.middleRows(off, pr);
        off += pr;
      } else {
        MatMap(gp.data(), pr, pc) = g.middleCols(off, pc);
        off += pc;
      }
      accumulate(*p, gp);
    }
  };
  return tape.track(std::move(n));
}

Tensor slice(Tape& tape, const Tensor& x, int axis, int begin, int end) {
  require_2d("slice", x);
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  const int extent = axis == 0 ? x.rows() : x.cols();
  if (begin < 0 || end > extent || begin >= end)
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of bounds for axis extent " +
                     std::to_string(extent));
  const int rows = axis == 0 ? end - begin : x.rows();
  const int cols = axis == 0 ? x.cols() : end - begin;
  auto n = new_node("slice", {rows, cols}, {x.node()});
  n->value.resize(static_cast<int64_t>(rows) * cols);
  ConstMatMap xv(x.value().data(), x.rows(), x.cols());
  if (axis == 0)
    MatMap(n->value.data(), rows, cols) = xv.middleRows(begin, rows);
  else
    MatMap(n->value.data(), rows, cols) = xv.middleCols(begin, cols);
  auto px = x.node();
  n->backward = [px, axis, begin, rows, cols](Node& self) {
    auto [xr, xc] = rows_cols(px->shape);
    Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(static_cast<int64_t>(xr) * xc);
    if (axis == 0)
      MatMap(gx.data(), xr, xc).middleRows(begin, rows) =
          ConstMatMap(self.grad.data(), rows, cols);
    else
      MatMap(gx.data(), xr, xc).middleCols(begin, cols) =
          ConstMatMap(self.grad.data(), rows, cols);
    accumulate(*px, gx);
  };
  return tape.track(std::move(n));
}

Tensor embedding_gather(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
  require_2d("embedding_gather", table);
  const int V = table.rows(), E = table.cols();
  const int N = static_cast<int>(ids.size());
  for (int id : ids)
    if (id < 0 || id >= V)
      throw ShapeError("embedding_gather: id " + std::to_string(id) +
                       " out of range for table " + shape_str(table.shape()));
  auto n = new_node("embedding_gather", {N, E}, {table.node()});
  n->value.resize(static_cast<int64_t>(N) * E);
  ConstMatMap tv(table.value().data(), V, E);
  MatMap out(n->value.data(), N, E);
  for (int i = 0; i < N; ++i) out.row(i) = tv.row(ids[i]);
  auto pt = table.node();
  n->backward = [pt, ids, V, E, N](Node& self) {
    if (pt->grad.size() == 0) pt->grad = Eigen::ArrayXd::Zero(pt->value.size());
    MatMap gt(pt->grad.data(), V, E);
    ConstMatMap g(self.grad.data(), N, E);
    for (int i = 0; i < N; ++i) gt.row(ids[i]) += g.row(i);
  };
  return tape.track(std::move(n));
}

Tensor log_softmax(Tape& tape, const Tensor& x) {
  auto [rows, cols] = rows_cols(x.shape());
  auto n = new_node("log_softmax", x.shape(), {x.node()});
  n->value.resize(x.value().size());
  ConstMatMap xv(x.value().data(), rows, cols);
  MatMap out(n->value.data(), rows, cols);
  for (int r = 0; r < rows; ++r) {
    const double m = xv.row(r).maxCoeff();
    const double lse = m + std::log((xv.row(r).array() - m).exp().sum());
    out.row(r) = xv.row(r).array() - lse;
  }
  auto px = x.node();
  n->backward = [px, rows, cols](Node& self) {
    ConstMatMap g(self.grad.data(), rows, cols);
    ConstMatMap y(self.value.data(), rows, cols);
    Eigen::ArrayXd gx(self.grad.size());
    MatMap gxm(gx.data(), rows, cols);
    for (int r = 0; r < rows; ++r) {
      const double gsum = g.row(r).sum();
      gxm.row(r) = g.row(r).array() - y.row(r).array().exp() * gsum;
    }
    accumulate(*px, gx);
  };
  return tape.track(std::move(n));
}

Tensor add_constant_bias(Tape& tape, const Tensor& x, const Eigen::ArrayXd& bias) {
  auto [rows, cols] = rows_cols(x.shape());
  auto n = new_node("add_constant_bias", x.shape(), {x.node()});
  if (bias.size() == x.value().size()) {
    n->value = x.value() + bias;
  } else if (bias.size() == cols) {
    n->value = x.value();
    MatMap(n->value.data(), rows, cols).rowwise() +=
        Eigen::Map<const Eigen::RowVectorXd>(bias.data(), cols);
  } else {
    throw ShapeError("add_constant_bias: bias length " + std::to_string(bias.size()) +
                     " does not match tensor " + shape_str(x.shape()));
  }
  auto px = x.node();
  n->backward = [px](Node& self) { accumulate(*px, self.grad); };
  return tape.track(std::move(n));
}

Tensor cross_entropy_from_logits(Tape& tape, const Tensor& logits,
                                 const std::vector<int>& targets,
                                 const std::vector<uint8_t>& mask) {
  require_2d("cross_entropy_from_logits", logits);
  const int P = logits.rows(), V = logits.cols();
  if (static_cast<int>(targets.size()) != P || static_cast<int>(mask.size()) != P)
    throw ShapeError("cross_entropy_from_logits: " + std::to_string(P) +
                     " positions but " + std::to_string(targets.size()) +
                     " targets / " + std::to_string(mask.size()) + " mask entries");
  int64_t unmasked = 0;
  for (uint8_t m : mask) unmasked += m;
  if (unmasked == 0) throw Error("cross_entropy_from_logits: all positions masked");

  ConstMatMap x(logits.value().data(), P, V);
  double total = 0;
  for (int p = 0; p < P; ++p) {
    if (!mask[p]) continue;
    const int t = targets[p];
    if (t < 0 || t >= V)
      throw ShapeError("cross_entropy_from_logits: target id " + std::to_string(t) +
                       " out of range for " + std::to_string(V) + " classes");
    const double m = x.row(p).maxCoeff();
    const double lse = m + std::log((x.row(p).array() - m).exp().sum());
    total += lse - x(p, t);
  }
  auto n = new_node("cross_entropy_from_logits", {}, {logits.node()});
  n->value.resize(1);
  n->value[0] = total / static_cast<double>(unmasked);
  auto px = logits.node();
  n->backward = [px, targets, mask, unmasked, P, V](Node& self) {
    const double gscale = self.grad[0] / static_cast<double>(unmasked);
    ConstMatMap x(px->value.data(), P, V);
    Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(px->value.size());
    MatMap gxm(gx.data(), P, V);
    for (int p = 0; p < P; ++p) {
      if (!mask[p]) continue;
      const double m = x.row(p).maxCoeff();
      Eigen::ArrayXd e = (x.row(p).array() - m).exp();
      gxm.row(p) = (e / e.sum()) * gscale;
      gxm(p, targets[p]) -= gscale;
    }
    accumulate(*px, gx);
  };
  return tape.track(std::move(n));
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, Rng& rng) {
  if (rate < 0 || rate >= 1) throw Error("dropout: rate must be in [0, 1)");
  if (rate == 0) return x;
  Eigen::ArrayXd mask(x.value().size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int64_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(tape, x, make_constant(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

void zero_grad(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) p.node()->grad.resize(0);
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0;
  for (const Tensor& p : params)
    if (p.has_grad()) sq += p.node()->grad.square().sum();
  const double norm = std::sqrt(sq);
  const double scale = norm > max_norm && norm > 0 ? max_norm / norm : 1.0;
  if (scale != 1.0)
    for (const Tensor& p : params)
      if (p.has_grad()) p.node()->grad *= scale;
  return scale;
}

AdamState::AdamState(const std::vector<Tensor>& params) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.push_back(Eigen::ArrayXd::Zero(p.value().size()));
    v_.push_back(Eigen::ArrayXd::Zero(p.value().size()));
  }
}

void AdamState::step(const std::vector<Tensor>& params, const AdamConfig& config) {
  if (params.size() != m_.size())
    throw Error("adam_step: parameter count changed since state creation");
  ++step_;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params.size(); ++i) {
    const Eigen::ArrayXd g = params[i].grad_or_zero();
    m_[i] = config.beta1 * m_[i] + (1.0 - config.beta1) * g;
    v_[i] = config.beta2 * v_[i] + (1.0 - config.beta2) * g.square();
    params[i].node()->value -=
        config.lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + config.eps);
  }
}

}  // namespace reslm::autograd
