#pragma once

// Reverse-mode automatic differentiation over dense row-major fp64 matrices.
//
// A Tape records every operation applied to its Vars in creation order.
// Tape::backward() replays the records in reverse, accumulating gradients
// into leaf Vars and into the Parameters that were bound with Tape::param().
// A tape may be backpropagated once.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "morphnet/errors.hpp"

namespace morphnet::ad {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row(std::initializer_list<double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  std::string shape_string() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  // Aligned storage keeps Eigen's vectorized reductions independent of where
  // the buffer lands on the heap, so results are bitwise reproducible.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

/// Max absolute elementwise difference; throws on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Owns parameters in insertion order; that order is the enumeration order
// used by optimizers and checkpoints. Handles are indices so copies of a set
// stay self-consistent.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix init);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::vector<Parameter*> all();
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  /// Gradient after backward(); zero-filled if nothing flowed into this Var.
  Matrix grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

class Tape {
 public:
  /// With record=false no backward rules are stored (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m);
  /// A differentiable input whose gradient is read back through Var::grad().
  Var leaf(Matrix m);
  /// Binds a parameter; backward() accumulates into p.grad.
  Var param(Parameter& p);
  /// Binds a parameter read-only; no gradient is accumulated.
  Var frozen(const Parameter& p);

  void backward(Var loss);
  bool consumed() const { return consumed_; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by operation implementations.
  using BackwardFn = std::function<void(Tape&, std::int32_t self)>;
  Var push(Matrix value, bool requires_grad, BackwardFn fn);
  const Matrix& value(std::int32_t id) const;
  Matrix& grad_ref(std::int32_t id);
  const Matrix* grad_if_any(std::int32_t id) const;
  bool requires_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool record_;
  bool consumed_ = false;
  // A deque keeps value references stable while later operations are recorded.
  std::deque<Node> nodes_;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
/// Elementwise sum; b may also be a 1×n row broadcast over a's rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product; b may also be a 1×n row broadcast over a's rows.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var softmax_rows(Var a);
inline constexpr double kLayerNormEps = 1e-5;
/// Per-row normalization followed by an affine map; gain and bias are 1×n.
Var layer_norm(Var a, Var gain, Var bias);
Var concat_cols(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
Var minimum(Var a, Var b);
/// Clamp; the gradient is zero where the bound is active.
Var clamp(Var a, double lo, double hi);
/// Stacks `times` copies of a vertically.
Var repeat_rows(Var a, std::size_t times);
/// Means over consecutive blocks of `group` rows: (n·group)×c → n×c.
Var segment_mean(Var a, std::size_t group);
/// Per-head attention bias gathered from an embedding table.
/// table: (rows × heads), index: k×k row indices into table.
/// Output: (heads·k)×k with out[h·k+i][j] = table[index[i·k+j]][h].
Var lookup_bias(Var table, std::span<const int> index, std::size_t k);

/// Scaled dot-product multi-head attention applied independently to blocks of
/// `group` consecutive rows. q, k, v: (n·group)×model; bias, when given, is
/// (heads·group)×group and is added to every block's scores before softmax.
/// When `weights_out` is non-null it receives the softmax weights laid out as
/// (n·heads·group)×group.
Var attention(Var q, Var k, Var v, std::optional<Var> bias, std::size_t heads, std::size_t group,
              Matrix* weights_out = nullptr);

// ---- optimization ---------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global l2 clipping threshold; <= 0 disables clipping.
  double grad_clip = 0.0;
};

/// Global l2 norm of all gradients.
double grad_norm(std::span<Parameter* const> params);

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Clips, applies one bias-corrected update, and zeros the gradients.
  /// Returns the pre-clip gradient norm.
  double step(std::span<Parameter* const> params);
  double step(std::span<Parameter* const> params, double lr);

  const AdamOptions& options() const { return options_; }
  std::int64_t steps() const { return t_; }

 private:
  AdamOptions options_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace morphnet::ad
