#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "epifnp/errors.hpp"

namespace epifnp {

class Tape;
enum class OpKind;

// Dense row-major array of doubles, rank 0..2 (scalars are shape {1}).
// A Tensor is either a free constant that owns its data, or a handle to a
// node on a Tape. Ops on constants evaluate eagerly; as soon as one input
// lives on a tape the result is recorded there as well.
class Tensor {
public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& value() const;
  std::vector<double>& mutable_value();  // constants only; tape values are immutable
  double item() const;                   // requires numel() == 1

  bool defined() const { return tape_ != nullptr || !data_.empty(); }
  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

private:
  friend class Tape;
  friend Tensor detail_record(Tape* tape, OpKind op, std::span<const Tensor> inputs,
                              std::vector<std::size_t> shape, std::vector<double> value,
                              std::vector<int> aux);
  Tape* tape_ = nullptr;
  int node_ = -1;
  std::vector<std::size_t> shape_;
  std::vector<double> data_;  // owned storage for constants only
};

enum class OpKind {
  Add,
  Sub,
  Mul,
  MatMul,
  Sigmoid,
  Tanh,
  Relu,
  Exp,
  Log,
  SoftmaxLastDim,
  ConcatLastDim,
  Sum,
  Mean,
  SqEuclidDist,
  // Engine extensions beyond the basic calculus above; same contract, same
  // gradient checks.
  Transpose,
  StackRows,
  SliceBlock,
};

const char* op_name(OpKind k);

// Gradient of one scalar root with respect to every tape node. Unreached
// nodes read as zeros.
class Gradients {
public:
  const std::vector<double>& at(const Tensor& t) const;
  bool nonzero(const Tensor& t) const;

private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  mutable std::vector<std::vector<double>> grads_;
};

// Records ops in execution order; backward replays them once, in reverse.
// A tape and its tensors belong to a single thread and the tape must outlive
// every tensor handle pointing into it.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(const Tensor& constant);
  Tensor leaf(std::vector<std::size_t> shape, std::vector<double> data);

  Gradients backward(const Tensor& root) const;

  std::size_t size() const { return nodes_.size(); }
  const std::vector<double>& node_value(int id) const { return nodes_[id].value; }
  const std::vector<std::size_t>& node_shape(int id) const { return nodes_[id].shape; }

private:
  friend Tensor detail_record(Tape* tape, OpKind op, std::span<const Tensor> inputs,
                              std::vector<std::size_t> shape, std::vector<double> value,
                              std::vector<int> aux);

  struct Node {
    OpKind op;
    bool is_leaf = false;
    std::vector<int> inputs;
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<int> aux;  // op-specific: broadcast mode, slice bounds, split widths
  };
  std::vector<Node> nodes_;
};

// ---- Operations -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);
Tensor concat_lastdim(std::span<const Tensor> parts);
Tensor stack_rows(std::span<const Tensor> rows);
// Contiguous sub-matrix; result is always rank 2, even for a single row.
Tensor slice_block(const Tensor& x, std::size_t r0, std::size_t nrows, std::size_t c0,
                   std::size_t ncols);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sq_euclid_dist(const Tensor& a, const Tensor& b);

// Composites built from the primitives above (no extra gradient rules).
Tensor reciprocal_positive(const Tensor& x);           // exp(-log(x)), x > 0
Tensor clamp_lower(const Tensor& x, double lo);        // lo + relu(x - lo)
Tensor clamp_upper(const Tensor& x, double hi);        // hi - relu(hi - x)

// Generic dispatch over the variadic-input op kinds; used by the gradient
// test harness. Parameterized kinds (SliceBlock) go through their functions.
Tensor forward_op(OpKind op, std::span<const Tensor> inputs);

}  // namespace epifnp
