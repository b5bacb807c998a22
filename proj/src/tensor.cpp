#include "epifnp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace epifnp {
namespace {

std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << '}';
  return os.str();
}

std::size_t numel_of(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}

// Promoted rows/cols view: scalars and vectors behave as 1xN rows.
std::size_t rows_of(const std::vector<std::size_t>& s) { return s.size() == 2 ? s[0] : 1; }
std::size_t cols_of(const std::vector<std::size_t>& s) {
  return s.size() == 2 ? s[1] : (s.empty() ? 1 : s[0]);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Broadcast modes for Add/Sub/Mul, stored in aux[0].
enum BMode : int {
  kSame = 0,
  kScalarRhs = 1,
  kScalarLhs = 2,
  kRowVecRhs = 3,  // b broadcasts across the rows of a
  kColVecRhs = 4,  // b is {R,1}, broadcasts across the columns of a
};

int resolve_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return kSame;
  if (b.numel() == 1) return kScalarRhs;
  if (a.numel() == 1) return kScalarLhs;
  if (sa.size() == 2) {
    if (cols_of(sb) == sa[1] && rows_of(sb) == 1) return kRowVecRhs;
    if (sb.size() == 2 && sb[0] == sa[0] && sb[1] == 1) return kColVecRhs;
  }
  throw ContractError(std::string(op) + ": incompatible shapes " + shape_str(sa) + " and " +
                      shape_str(sb));
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2 ||
      std::any_of(shape_.begin(), shape_.end(), [](std::size_t d) { return d == 0; }))
    throw ContractError("tensor rank must be 1 or 2 with positive dims, got shape " +
                        shape_str(shape_));
  if (numel_of(shape_) != data_.size())
    throw ContractError("tensor shape " + shape_str(shape_) + " does not match data size " +
                        std::to_string(data_.size()));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

std::size_t Tensor::numel() const { return numel_of(shape_); }
std::size_t Tensor::rows() const { return rows_of(shape_); }
std::size_t Tensor::cols() const { return cols_of(shape_); }

const std::vector<double>& Tensor::value() const {
  if (tape_ != nullptr) return tape_->node_value(node_);
  if (data_.empty() && shape_.empty()) throw ContractError("value() on undefined tensor");
  return data_;
}

std::vector<double>& Tensor::mutable_value() {
  if (tape_ != nullptr) throw ContractError("mutable_value() on a tape-backed tensor");
  if (data_.empty() && shape_.empty()) throw ContractError("mutable_value() on undefined tensor");
  return data_;
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() requires a scalar, got shape " + shape_str(shape_));
  return value()[0];
}

// ---- Tape -----------------------------------------------------------------

Tensor Tape::leaf(const Tensor& constant) {
  if (constant.on_tape()) {
    if (constant.tape() != this) throw ContractError("leaf(): tensor belongs to another tape");
    return constant;
  }
  return leaf(constant.shape(), constant.value());
}

Tensor Tape::leaf(std::vector<std::size_t> shape, std::vector<double> data) {
  if (shape.empty() || shape.size() > 2 ||
      std::any_of(shape.begin(), shape.end(), [](std::size_t d) { return d == 0; }))
    throw ContractError("leaf rank must be 1 or 2 with positive dims, got shape " +
                        shape_str(shape));
  if (numel_of(shape) != data.size())
    throw ContractError("leaf shape " + shape_str(shape) + " does not match data size " +
                        std::to_string(data.size()));
  check_finite(data, "leaf");
  Node n;
  n.op = OpKind::Add;  // unused for leaves
  n.is_leaf = true;
  n.shape = shape;
  n.value = std::move(data);
  nodes_.push_back(std::move(n));
  Tensor t;
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size()) - 1;
  t.shape_ = std::move(shape);
  return t;
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::MatMul: return "matmul";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::SoftmaxLastDim: return "softmax_lastdim";
    case OpKind::ConcatLastDim: return "concat_lastdim";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::SqEuclidDist: return "sq_euclid_dist";
    case OpKind::Transpose: return "transpose";
    case OpKind::StackRows: return "stack_rows";
    case OpKind::SliceBlock: return "slice_block";
  }
  return "?";
}

// ---- Recording ------------------------------------------------------------

namespace {

struct ForwardResult {
  std::vector<std::size_t> shape;
  std::vector<double> value;
};

ForwardResult forward_eval(OpKind op, std::span<const Tensor> in, const std::vector<int>& aux);

}  // namespace

// Records an op whose forward value has already been evaluated, lifting any
// constant inputs onto the tape.
Tensor detail_record(Tape* tape, OpKind op, std::span<const Tensor> inputs,
                     std::vector<std::size_t> shape, std::vector<double> value,
                     std::vector<int> aux) {
  Tape::Node n;
  n.op = op;
  n.shape = shape;
  n.value = std::move(value);
  n.aux = std::move(aux);
  n.inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    Tensor lifted = tape->leaf(t);
    n.inputs.push_back(lifted.node());
  }
  tape->nodes_.push_back(std::move(n));
  Tensor t;
  t.tape_ = tape;
  t.node_ = static_cast<int>(tape->nodes_.size()) - 1;
  t.shape_ = std::move(shape);
  return t;
}

namespace {

Tensor apply(OpKind op, std::span<const Tensor> inputs, std::vector<int> aux = {}) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    if (!t.defined()) throw ContractError(std::string(op_name(op)) + ": undefined input tensor");
    if (t.on_tape()) {
      if (tape != nullptr && tape != t.tape())
        throw ContractError(std::string(op_name(op)) + ": inputs belong to different tapes");
      tape = t.tape();
    }
  }
  ForwardResult r = forward_eval(op, inputs, aux);
  check_finite(r.value, op_name(op));
  if (tape == nullptr) return Tensor(std::move(r.shape), std::move(r.value));
  return detail_record(tape, op, inputs, std::move(r.shape), std::move(r.value), std::move(aux));
}

ForwardResult forward_eval(OpKind op, std::span<const Tensor> in, const std::vector<int>& aux) {
  switch (op) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      int mode = aux[0];
      const auto& av = a.value();
      const auto& bv = b.value();
      std::vector<std::size_t> shape = (mode == kScalarLhs) ? b.shape() : a.shape();
      std::vector<double> out(numel_of(shape));
      auto combine = [op](double x, double y) {
        switch (op) {
          case OpKind::Add: return x + y;
          case OpKind::Sub: return x - y;
          default: return x * y;
        }
      };
      switch (mode) {
        case kSame:
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = combine(av[i], bv[i]);
          break;
        case kScalarRhs:
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = combine(av[i], bv[0]);
          break;
        case kScalarLhs:
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = combine(av[0], bv[i]);
          break;
        case kRowVecRhs: {
          std::size_t R = shape[0], C = shape[1];
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
              out[r * C + c] = combine(av[r * C + c], bv[c]);
          break;
        }
        case kColVecRhs: {
          std::size_t R = shape[0], C = shape[1];
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
              out[r * C + c] = combine(av[r * C + c], bv[r]);
          break;
        }
      }
      return {std::move(shape), std::move(out)};
    }
    case OpKind::MatMul: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      if (a.rank() > 2 || b.rank() > 2) throw ContractError("matmul: rank must be <= 2");
      // Vector promotion: rank-1 lhs acts as a row, rank-1 rhs as a column.
      std::size_t m = a.rank() == 2 ? a.shape()[0] : 1;
      std::size_t ka = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
      std::size_t kb = b.rank() == 2 ? b.shape()[0] : b.shape()[0];
      std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;
      if (ka != kb)
        throw ContractError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                            " x " + shape_str(b.shape()));
      const auto& av = a.value();
      const auto& bv = b.value();
      std::vector<double> out(m * n, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < ka; ++k) {
          double aik = av[i * ka + k];
          if (aik == 0.0) continue;
          const double* brow = bv.data() + k * n;
          double* orow = out.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
      std::vector<std::size_t> shape;
      if (a.rank() == 2 && b.rank() == 2) shape = {m, n};
      else if (a.rank() == 2) shape = {m};            // matrix * column -> vector
      else if (b.rank() == 2) shape = {n};            // row * matrix -> vector
      else shape = {1};                               // dot product
      return {std::move(shape), std::move(out)};
    }
    case OpKind::Sigmoid:
    case OpKind::Tanh:
    case OpKind::Relu:
    case OpKind::Exp:
    case OpKind::Log: {
      const auto& xv = in[0].value();
      std::vector<double> out(xv.size());
      for (std::size_t i = 0; i < xv.size(); ++i) {
        double x = xv[i];
        switch (op) {
          case OpKind::Sigmoid: out[i] = stable_sigmoid(x); break;
          case OpKind::Tanh: out[i] = std::tanh(x); break;
          case OpKind::Relu: out[i] = x > 0.0 ? x : 0.0; break;
          case OpKind::Exp: out[i] = std::exp(x); break;
          default: out[i] = std::log(x); break;
        }
      }
      return {in[0].shape(), std::move(out)};
    }
    case OpKind::SoftmaxLastDim: {
      const Tensor& x = in[0];
      std::size_t R = x.rows(), C = x.cols();
      if (C == 0) throw ContractError("softmax_lastdim: empty rows");
      const auto& xv = x.value();
      std::vector<double> out(xv.size());
      for (std::size_t r = 0; r < R; ++r) {
        const double* row = xv.data() + r * C;
        double mx = *std::max_element(row, row + C);
        double denom = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          out[r * C + c] = std::exp(row[c] - mx);
          denom += out[r * C + c];
        }
        for (std::size_t c = 0; c < C; ++c) out[r * C + c] /= denom;
      }
      return {x.shape(), std::move(out)};
    }
    case OpKind::ConcatLastDim: {
      if (in.empty()) throw ContractError("concat_lastdim: no inputs");
      std::size_t R = in[0].rows();
      std::size_t rank = in[0].rank();
      std::size_t total = 0;
      for (const Tensor& t : in) {
        if (t.rank() != rank || t.rows() != R)
          throw ContractError("concat_lastdim: inputs disagree on rows/rank");
        total += t.cols();
      }
      std::vector<std::size_t> shape =
          rank == 2 ? std::vector<std::size_t>{R, total} : std::vector<std::size_t>{total};
      std::vector<double> out(R * total);
      std::size_t off = 0;
      for (const Tensor& t : in) {
        std::size_t C = t.cols();
        const auto& v = t.value();
        for (std::size_t r = 0; r < R; ++r)
          std::copy(v.begin() + r * C, v.begin() + (r + 1) * C, out.begin() + r * total + off);
        off += C;
      }
      return {std::move(shape), std::move(out)};
    }
    case OpKind::Sum:
    case OpKind::Mean: {
      const auto& xv = in[0].value();
      double s = 0.0;
      for (double v : xv) s += v;
      if (op == OpKind::Mean) s /= static_cast<double>(xv.size());
      return {{1}, {s}};
    }
    case OpKind::SqEuclidDist: {
      if (in[0].shape() != in[1].shape())
        throw ContractError("sq_euclid_dist: shapes disagree, " + shape_str(in[0].shape()) +
                            " vs " + shape_str(in[1].shape()));
      const auto& av = in[0].value();
      const auto& bv = in[1].value();
      double s = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        s += d * d;
      }
      return {{1}, {s}};
    }
    case OpKind::Transpose: {
      const Tensor& x = in[0];
      std::size_t R = x.rows(), C = x.cols();
      const auto& xv = x.value();
      std::vector<double> out(R * C);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[c * R + r] = xv[r * C + c];
      return {{C, R}, std::move(out)};
    }
    case OpKind::StackRows: {
      if (in.empty()) throw ContractError("stack_rows: no inputs");
      std::size_t C = in[0].numel();
      for (const Tensor& t : in) {
        if (t.rows() != 1 || t.numel() != C)
          throw ContractError("stack_rows: inputs must be equal-length rows");
      }
      std::vector<double> out;
      out.reserve(in.size() * C);
      for (const Tensor& t : in) {
        const auto& v = t.value();
        out.insert(out.end(), v.begin(), v.end());
      }
      return {{in.size(), C}, std::move(out)};
    }
    case OpKind::SliceBlock: {
      const Tensor& x = in[0];
      if (x.rank() != 2) throw ContractError("slice_block: input must be rank 2");
      std::size_t R = x.shape()[0], C = x.shape()[1];
      std::size_t r0 = static_cast<std::size_t>(aux[0]), nr = static_cast<std::size_t>(aux[1]);
      std::size_t c0 = static_cast<std::size_t>(aux[2]), nc = static_cast<std::size_t>(aux[3]);
      if (nr == 0 || nc == 0 || r0 + nr > R || c0 + nc > C)
        throw ContractError("slice_block: block out of range for shape " + shape_str(x.shape()));
      const auto& xv = x.value();
      std::vector<double> out(nr * nc);
      for (std::size_t r = 0; r < nr; ++r)
        std::copy(xv.begin() + (r0 + r) * C + c0, xv.begin() + (r0 + r) * C + c0 + nc,
                  out.begin() + r * nc);
      return {{nr, nc}, std::move(out)};
    }
  }
  throw ContractError("forward_eval: unknown op");
}

}  // namespace

// ---- Backward -------------------------------------------------------------

namespace {

void ensure_grad(std::vector<double>& g, std::size_t n) {
  if (g.empty()) g.assign(n, 0.0);
}

}  // namespace

Gradients Tape::backward(const Tensor& root) const {
  if (!root.on_tape() || root.tape() != this)
    throw ContractError("backward: root is not on this tape");
  if (root.numel() != 1) throw ContractError("backward: root must be a scalar");

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[root.node()] = {1.0};

  for (int id = root.node(); id >= 0; --id) {
    const Node& n = nodes_[id];
    if (n.is_leaf || grads[id].empty()) continue;
    const std::vector<double>& g = grads[id];
    auto in_val = [&](std::size_t i) -> const std::vector<double>& {
      return nodes_[n.inputs[i]].value;
    };
    auto in_shape = [&](std::size_t i) -> const std::vector<std::size_t>& {
      return nodes_[n.inputs[i]].shape;
    };
    auto in_grad = [&](std::size_t i) -> std::vector<double>& {
      std::vector<double>& gr = grads[n.inputs[i]];
      ensure_grad(gr, nodes_[n.inputs[i]].value.size());
      return gr;
    };

    switch (n.op) {
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul: {
        int mode = n.aux[0];
        const auto& av = in_val(0);
        const auto& bv = in_val(1);
        auto& da = in_grad(0);
        auto& db = in_grad(1);
        double bsign = n.op == OpKind::Sub ? -1.0 : 1.0;
        bool is_mul = n.op == OpKind::Mul;
        switch (mode) {
          case kSame:
            for (std::size_t i = 0; i < g.size(); ++i) {
              da[i] += is_mul ? g[i] * bv[i] : g[i];
              db[i] += is_mul ? g[i] * av[i] : bsign * g[i];
            }
            break;
          case kScalarRhs:
            for (std::size_t i = 0; i < g.size(); ++i) {
              da[i] += is_mul ? g[i] * bv[0] : g[i];
              db[0] += is_mul ? g[i] * av[i] : bsign * g[i];
            }
            break;
          case kScalarLhs:
            for (std::size_t i = 0; i < g.size(); ++i) {
              da[0] += is_mul ? g[i] * bv[i] : g[i];
              db[i] += is_mul ? g[i] * av[0] : bsign * g[i];
            }
            break;
          case kRowVecRhs: {
            std::size_t R = n.shape[0], C = n.shape[1];
            for (std::size_t r = 0; r < R; ++r)
              for (std::size_t c = 0; c < C; ++c) {
                double gi = g[r * C + c];
                da[r * C + c] += is_mul ? gi * bv[c] : gi;
                db[c] += is_mul ? gi * av[r * C + c] : bsign * gi;
              }
            break;
          }
          case kColVecRhs: {
            std::size_t R = n.shape[0], C = n.shape[1];
            for (std::size_t r = 0; r < R; ++r)
              for (std::size_t c = 0; c < C; ++c) {
                double gi = g[r * C + c];
                da[r * C + c] += is_mul ? gi * bv[r] : gi;
                db[r] += is_mul ? gi * av[r * C + c] : bsign * gi;
              }
            break;
          }
        }
        break;
      }
      case OpKind::MatMul: {
        const auto& sa = in_shape(0);
        const auto& sb = in_shape(1);
        std::size_t m = sa.size() == 2 ? sa[0] : 1;
        std::size_t k = sa.size() == 2 ? sa[1] : sa[0];
        std::size_t nn = sb.size() == 2 ? sb[1] : 1;
        const auto& av = in_val(0);
        const auto& bv = in_val(1);
        auto& da = in_grad(0);
        auto& db = in_grad(1);
        // dA = g B^T, dB = A^T g (promoted layouts are contiguous already)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < nn; ++j) {
            double gij = g[i * nn + j];
            if (gij == 0.0) continue;
            for (std::size_t kk = 0; kk < k; ++kk) {
              da[i * k + kk] += gij * bv[kk * nn + j];
              db[kk * nn + j] += av[i * k + kk] * gij;
            }
          }
        break;
      }
      case OpKind::Sigmoid: {
        auto& dx = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i)
          dx[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
        break;
      }
      case OpKind::Tanh: {
        auto& dx = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i)
          dx[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case OpKind::Relu: {
        const auto& xv = in_val(0);
        auto& dx = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (xv[i] > 0.0) dx[i] += g[i];
        break;
      }
      case OpKind::Exp: {
        auto& dx = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * n.value[i];
        break;
      }
      case OpKind::Log: {
        const auto& xv = in_val(0);
        auto& dx = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / xv[i];
        break;
      }
      case OpKind::SoftmaxLastDim: {
        std::size_t R = rows_of(n.shape), C = cols_of(n.shape);
        auto& dx = in_grad(0);
        for (std::size_t r = 0; r < R; ++r) {
          const double* y = n.value.data() + r * C;
          const double* gr = g.data() + r * C;
          double dot = 0.0;
          for (std::size_t c = 0; c < C; ++c) dot += gr[c] * y[c];
          for (std::size_t c = 0; c < C; ++c) dx[r * C + c] += y[c] * (gr[c] - dot);
        }
        break;
      }
      case OpKind::ConcatLastDim: {
        std::size_t R = rows_of(n.shape);
        std::size_t total = cols_of(n.shape);
        std::size_t off = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          std::size_t C = cols_of(in_shape(i));
          auto& dx = in_grad(i);
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) dx[r * C + c] += g[r * total + off + c];
          off += C;
        }
        break;
      }
      case OpKind::Sum: {
        auto& dx = in_grad(0);
        for (double& v : dx) v += g[0];
        break;
      }
      case OpKind::Mean: {
        auto& dx = in_grad(0);
        double s = g[0] / static_cast<double>(dx.size());
        for (double& v : dx) v += s;
        break;
      }
      case OpKind::SqEuclidDist: {
        const auto& av = in_val(0);
        const auto& bv = in_val(1);
        auto& da = in_grad(0);
        auto& db = in_grad(1);
        for (std::size_t i = 0; i < av.size(); ++i) {
          double d = 2.0 * (av[i] - bv[i]) * g[0];
          da[i] += d;
          db[i] -= d;
        }
        break;
      }
      case OpKind::Transpose: {
        std::size_t R = rows_of(in_shape(0)), C = cols_of(in_shape(0));
        auto& dx = in_grad(0);
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) dx[r * C + c] += g[c * R + r];
        break;
      }
      case OpKind::StackRows: {
        std::size_t C = cols_of(n.shape);
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          auto& dx = in_grad(i);
          for (std::size_t c = 0; c < C; ++c) dx[c] += g[i * C + c];
        }
        break;
      }
      case OpKind::SliceBlock: {
        std::size_t C = in_shape(0)[1];
        std::size_t r0 = static_cast<std::size_t>(n.aux[0]);
        std::size_t nr = static_cast<std::size_t>(n.aux[1]);
        std::size_t c0 = static_cast<std::size_t>(n.aux[2]);
        std::size_t nc = static_cast<std::size_t>(n.aux[3]);
        auto& dx = in_grad(0);
        for (std::size_t r = 0; r < nr; ++r)
          for (std::size_t c = 0; c < nc; ++c) dx[(r0 + r) * C + c0 + c] += g[r * nc + c];
        break;
      }
    }
  }

  Gradients out;
  out.tape_ = this;
  out.grads_ = std::move(grads);
  return out;
}

const std::vector<double>& Gradients::at(const Tensor& t) const {
  if (!t.on_tape() || t.tape() != tape_)
    throw ContractError("Gradients::at: tensor is not on the differentiated tape");
  std::vector<double>& g = grads_[t.node()];
  ensure_grad(g, t.numel());
  return g;
}

bool Gradients::nonzero(const Tensor& t) const {
  const auto& g = at(t);
  return std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; });
}

// ---- Public op wrappers ---------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(OpKind::Add, in, {resolve_broadcast(a, b, "add")});
}
Tensor sub(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(OpKind::Sub, in, {resolve_broadcast(a, b, "sub")});
}
Tensor mul(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(OpKind::Mul, in, {resolve_broadcast(a, b, "mul")});
}
Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(OpKind::MatMul, in);
}
Tensor transpose(const Tensor& a) {
  const Tensor in[] = {a};
  return apply(OpKind::Transpose, in);
}

Tensor sigmoid(const Tensor& x) {
  const Tensor in[] = {x};
  return apply(OpKind::Sigmoid, in);
}
Tensor tanh(const Tensor& x) {
  const Tensor in[] = {x};
  return apply(OpKind::Tanh, in);
}
Tensor relu(const Tensor& x) {
  const Tensor in[] = {x};
  return apply(OpKind::Relu, in);
}
Tensor exp(const Tensor& x) {
  const Tensor in[] = {x};
  return apply(OpKind::Exp, in);
}
Tensor log(const Tensor& x) {
  const Tensor in[] = {x};
  return apply(OpKind::Log, in);
}

Tensor softmax_lastdim(const Tensor& x) {
  const Tensor in[] = {x};
  return apply(OpKind::SoftmaxLastDim, in);
}
Tensor concat_lastdim(std::span<const Tensor> parts) {
  return apply(OpKind::ConcatLastDim, parts);
}
Tensor stack_rows(std::span<const Tensor> rows) { return apply(OpKind::StackRows, rows); }
Tensor slice_block(const Tensor& x, std::size_t r0, std::size_t nrows, std::size_t c0,
                   std::size_t ncols) {
  const Tensor in[] = {x};
  return apply(OpKind::SliceBlock, in,
               {static_cast<int>(r0), static_cast<int>(nrows), static_cast<int>(c0),
                static_cast<int>(ncols)});
}

Tensor sum(const Tensor& x) {
  const Tensor in[] = {x};
  return apply(OpKind::Sum, in);
}
Tensor mean(const Tensor& x) {
  const Tensor in[] = {x};
  return apply(OpKind::Mean, in);
}
Tensor sq_euclid_dist(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(OpKind::SqEuclidDist, in);
}

Tensor reciprocal_positive(const Tensor& x) { return exp(neg(log(x))); }
Tensor clamp_lower(const Tensor& x, double lo) { return add(relu(add(x, -lo)), lo); }
Tensor clamp_upper(const Tensor& x, double hi) { return sub(hi, relu(sub(hi, x))); }

Tensor forward_op(OpKind op, std::span<const Tensor> inputs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      throw ContractError(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                          " inputs, got " + std::to_string(inputs.size()));
  };
  switch (op) {
    case OpKind::Add: need(2); return add(inputs[0], inputs[1]);
    case OpKind::Sub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::Mul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::MatMul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::Sigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::Tanh: need(1); return tanh(inputs[0]);
    case OpKind::Relu: need(1); return relu(inputs[0]);
    case OpKind::Exp: need(1); return exp(inputs[0]);
    case OpKind::Log: need(1); return log(inputs[0]);
    case OpKind::SoftmaxLastDim: need(1); return softmax_lastdim(inputs[0]);
    case OpKind::ConcatLastDim: return concat_lastdim(inputs);
    case OpKind::Sum: need(1); return sum(inputs[0]);
    case OpKind::Mean: need(1); return mean(inputs[0]);
    case OpKind::SqEuclidDist: need(2); return sq_euclid_dist(inputs[0], inputs[1]);
    case OpKind::Transpose: need(1); return transpose(inputs[0]);
    case OpKind::StackRows: return stack_rows(inputs);
    case OpKind::SliceBlock:
      throw ContractError("slice_block requires block parameters; call slice_block() directly");
  }
  throw ContractError("forward_op: unknown op");
}

}  // namespace epifnp
