#include "morphnet/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace morphnet::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

CMap cmap(const Matrix& m) { return CMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())); }
MMap mmap(Matrix& m) { return MMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())); }

[[noreturn]] void dim_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ContractError("operands belong to different tapes");
  return *a.tape();
}

bool is_row_broadcast(const Matrix& a, const Matrix& b) {
  return b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
}

// Adds src into the gradient slot of `id` when that node wants one.
void accumulate(Tape& t, std::int32_t id, const Matrix& src) {
  if (!t.requires_grad(id)) return;
  Matrix& g = t.grad_ref(id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

}  // namespace

// ---- Matrix ---------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) + " does not match shape (" +
                         std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged row in Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::row(std::initializer_list<double> values) { return Matrix(1, values.size(), std::vector<double>(values)); }

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_error("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---- ParameterSet ---------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Matrix init) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name: " + name);
  Matrix grad(init.rows(), init.cols());
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.size() - 1;
}

Parameter* ParameterSet::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

// ---- Var / Tape -----------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const {
  if (const Matrix* g = tape_->grad_if_any(id_)) return *g;
  const Matrix& v = value();
  return Matrix(v.rows(), v.cols());
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Matrix value, bool requires_grad, BackwardFn fn) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::constant(Matrix m) { return push(std::move(m), false, nullptr); }

Var Tape::leaf(Matrix m) { return push(std::move(m), true, nullptr); }

Var Tape::param(Parameter& p) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  Node n;
  n.external = &p.value;
  n.requires_grad = record_;
  n.param = record_ ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::frozen(const Parameter& p) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  Node n;
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

const Matrix& Tape::value(std::int32_t id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external != nullptr ? *n.external : n.value;
}

Matrix& Tape::grad_ref(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) {
    const Matrix& v = n.external != nullptr ? *n.external : n.value;
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

const Matrix* Tape::grad_if_any(std::int32_t id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(Var loss) {
  if (consumed_) throw ContractError("backward() called twice on one tape");
  if (loss.tape() != this) throw ContractError("loss does not belong to this tape");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + lv.shape_string());
  }
  consumed_ = true;
  if (!requires_grad(loss.id())) return;
  grad_ref(loss.id())[0] += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, static_cast<std::int32_t>(i));
    if (n.param != nullptr) {
      Matrix& pg = n.param->grad;
      if (pg.size() != n.grad.size()) pg = Matrix(n.grad.rows(), n.grad.cols());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

// ---- operations -----------------------------------------------------------


Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) dim_error("matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  mmap(out).noalias() = cmap(av) * cmap(bv);
  const std::int32_t ia = a.id();
  const std::int32_t ib = b.id();
  return t.push(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, std::int32_t self) {
    const Matrix& g = *tp.grad_if_any(self);
    if (tp.requires_grad(ia)) mmap(tp.grad_ref(ia)).noalias() += cmap(g) * cmap(tp.value(ib)).transpose();
    if (tp.requires_grad(ib)) mmap(tp.grad_ref(ib)).noalias() += cmap(tp.value(ia)).transpose() * cmap(g);
  });
}

namespace {

// Shared implementation of add/sub: out = a + sign·b with optional row broadcast.
Var add_signed(Var a, Var b, double sign, const char* name) {
  Tape& t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  const bool bcast = !same && is_row_broadcast(av, bv);
  if (!same && !bcast) dim_error(name, av, bv);
  Matrix out = av;
  const std::size_t n = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * bv[bcast ? i % n : i];
  const std::int32_t ia = a.id();
  const std::int32_t ib = b.id();
  return t.push(std::move(out), a.requires_grad() || b.requires_grad(),
                [ia, ib, bcast, sign, n](Tape& tp, std::int32_t self) {
                  const Matrix& g = *tp.grad_if_any(self);
                  accumulate(tp, ia, g);
                  if (!tp.requires_grad(ib)) return;
                  Matrix& gb = tp.grad_ref(ib);
                  for (std::size_t i = 0; i < g.size(); ++i) gb[bcast ? i % n : i] += sign * g[i];
                });
}

// Elementwise map y = f(x) with dy/dx expressed through (x, y).
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const std::int32_t ia = a.id();
  return t.push(std::move(out), a.requires_grad(), [ia, dfdx](Tape& tp, std::int32_t self) {
    const Matrix& g = *tp.grad_if_any(self);
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    Matrix& ga = tp.grad_ref(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) { return add_signed(a, b, 1.0, "add"); }

Var sub(Var a, Var b) { return add_signed(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  const bool bcast = !same && is_row_broadcast(av, bv);
  if (!same && !bcast) dim_error("mul", av, bv);
  const std::size_t n = av.cols();
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[bcast ? i % n : i];
  const std::int32_t ia = a.id();
  const std::int32_t ib = b.id();
  return t.push(std::move(out), a.requires_grad() || b.requires_grad(),
                [ia, ib, bcast, n](Tape& tp, std::int32_t self) {
                  const Matrix& g = *tp.grad_if_any(self);
                  const Matrix& x = tp.value(ia);
                  const Matrix& y = tp.value(ib);
                  if (tp.requires_grad(ia)) {
                    Matrix& ga = tp.grad_ref(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[bcast ? i % n : i];
                  }
                  if (tp.requires_grad(ib)) {
                    Matrix& gb = tp.grad_ref(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[bcast ? i % n : i] += g[i] * x[i];
                  }
                });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  // Subgradient at exactly zero is zero.
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  const std::size_t m = av.rows();
  const std::size_t n = av.cols();
  Matrix out(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, av(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      out(r, c) = std::exp(av(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < n; ++c) out(r, c) /= z;
  }
  const std::int32_t ia = a.id();
  return t.push(std::move(out), a.requires_grad(), [ia, m, n](Tape& tp, std::int32_t self) {
    const Matrix& g = *tp.grad_if_any(self);
    const Matrix& y = tp.value(self);
    Matrix& ga = tp.grad_ref(ia);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < n; ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var layer_norm(Var a, Var gain, Var bias) {
  Tape& t = same_tape(a, gain);
  same_tape(a, bias);
  const Matrix& x = a.value();
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (n == 0) throw DimensionError("layer_norm: zero-width input");
  if (gv.rows() != 1 || gv.cols() != n) dim_error("layer_norm(gain)", x, gv);
  if (bv.rows() != 1 || bv.cols() != n) dim_error("layer_norm(bias)", x, bv);
  Matrix xhat(m, n);
  std::vector<double> rstd(m);
  Matrix out(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += x(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (x(r, c) - mu) * rstd[r];
      out(r, c) = xhat(r, c) * gv[c] + bv[c];
    }
  }
  const std::int32_t ia = a.id();
  const std::int32_t ig = gain.id();
  const std::int32_t ib = bias.id();
  const bool rg = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return t.push(std::move(out), rg,
                [ia, ig, ib, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& tp, std::int32_t self) {
                  const Matrix& g = *tp.grad_if_any(self);
                  const Matrix& gv = tp.value(ig);
                  if (tp.requires_grad(ig)) {
                    Matrix& gg = tp.grad_ref(ig);
                    for (std::size_t r = 0; r < m; ++r)
                      for (std::size_t c = 0; c < n; ++c) gg[c] += g(r, c) * xhat(r, c);
                  }
                  if (tp.requires_grad(ib)) {
                    Matrix& gb = tp.grad_ref(ib);
                    for (std::size_t r = 0; r < m; ++r)
                      for (std::size_t c = 0; c < n; ++c) gb[c] += g(r, c);
                  }
                  if (!tp.requires_grad(ia)) return;
                  Matrix& ga = tp.grad_ref(ia);
                  const double inv_n = 1.0 / static_cast<double>(n);
                  for (std::size_t r = 0; r < m; ++r) {
                    double mean_d = 0.0;
                    double mean_dx = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                      const double d = g(r, c) * gv[c];
                      mean_d += d;
                      mean_dx += d * xhat(r, c);
                    }
                    mean_d *= inv_n;
                    mean_dx *= inv_n;
                    for (std::size_t c = 0; c < n; ++c) {
                      const double d = g(r, c) * gv[c];
                      ga(r, c) += rstd[r] * (d - mean_d - xhat(r, c) * mean_dx);
                    }
                  }
                });
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) dim_error("concat_cols", av, bv);
  const std::size_t m = av.rows();
  const std::size_t p = av.cols();
  const std::size_t q = bv.cols();
  Matrix out(m, p + q);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < p; ++c) out(r, c) = av(r, c);
    for (std::size_t c = 0; c < q; ++c) out(r, p + c) = bv(r, c);
  }
  const std::int32_t ia = a.id();
  const std::int32_t ib = b.id();
  return t.push(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib, m, p, q](Tape& tp, std::int32_t self) {
    const Matrix& g = *tp.grad_if_any(self);
    if (tp.requires_grad(ia)) {
      Matrix& ga = tp.grad_ref(ia);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < p; ++c) ga(r, c) += g(r, c);
    }
    if (tp.requires_grad(ib)) {
      Matrix& gb = tp.grad_ref(ib);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < q; ++c) gb(r, c) += g(r, p + c);
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::int32_t ia = a.id();
  return t.push(Matrix(1, 1, s), a.requires_grad(), [ia](Tape& tp, std::int32_t self) {
    const double g = (*tp.grad_if_any(self))[0];
    Matrix& ga = tp.grad_ref(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var minimum(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) dim_error("minimum", av, bv);
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::min(av[i], bv[i]);
  const std::int32_t ia = a.id();
  const std::int32_t ib = b.id();
  return t.push(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, std::int32_t self) {
    const Matrix& g = *tp.grad_if_any(self);
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(ib);
    const bool ga_on = tp.requires_grad(ia);
    const bool gb_on = tp.requires_grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      // Ties route to the first operand.
      if (x[i] <= y[i]) {
        if (ga_on) tp.grad_ref(ia)[i] += g[i];
      } else if (gb_on) {
        tp.grad_ref(ib)[i] += g[i];
      }
    }
  });
}

Var repeat_rows(Var a, std::size_t times) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  const std::size_t blk = av.size();
  Matrix out(av.rows() * times, av.cols());
  for (std::size_t k = 0; k < times; ++k) std::copy(av.data(), av.data() + blk, out.data() + k * blk);
  const std::int32_t ia = a.id();
  return t.push(std::move(out), a.requires_grad(), [ia, times, blk](Tape& tp, std::int32_t self) {
    const Matrix& g = *tp.grad_if_any(self);
    Matrix& ga = tp.grad_ref(ia);
    for (std::size_t k = 0; k < times; ++k)
      for (std::size_t i = 0; i < blk; ++i) ga[i] += g[k * blk + i];
  });
}

Var segment_mean(Var a, std::size_t group) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  if (group == 0 || av.rows() % group != 0) {
    throw DimensionError("segment_mean: " + std::to_string(av.rows()) + " rows not divisible into groups of " +
                         std::to_string(group));
  }
  const std::size_t n = av.rows() / group;
  const std::size_t c = av.cols();
  const double inv = 1.0 / static_cast<double>(group);
  Matrix out(n, c);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t r = 0; r < group; ++r)
      for (std::size_t j = 0; j < c; ++j) out(s, j) += av(s * group + r, j) * inv;
  const std::int32_t ia = a.id();
  return t.push(std::move(out), a.requires_grad(), [ia, n, c, group, inv](Tape& tp, std::int32_t self) {
    const Matrix& g = *tp.grad_if_any(self);
    Matrix& ga = tp.grad_ref(ia);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t r = 0; r < group; ++r)
        for (std::size_t j = 0; j < c; ++j) ga(s * group + r, j) += g(s, j) * inv;
  });
}

Var lookup_bias(Var table, std::span<const int> index, std::size_t k) {
  Tape& t = *table.tape();
  const Matrix& tv = table.value();
  const std::size_t heads = tv.cols();
  if (index.size() != k * k) throw DimensionError("lookup_bias: index size does not match k*k");
  for (int idx : index) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= tv.rows()) {
      throw DimensionError("lookup_bias: index " + std::to_string(idx) + " outside table " + tv.shape_string());
    }
  }
  Matrix out(heads * k, k);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) out(h * k + i, j) = tv(static_cast<std::size_t>(index[i * k + j]), h);
  std::vector<int> idx(index.begin(), index.end());
  const std::int32_t it = table.id();
  return t.push(std::move(out), table.requires_grad(), [it, heads, k, idx = std::move(idx)](Tape& tp, std::int32_t self) {
    const Matrix& g = *tp.grad_if_any(self);
    Matrix& gt = tp.grad_ref(it);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) gt(static_cast<std::size_t>(idx[i * k + j]), h) += g(h * k + i, j);
  });
}

Var attention(Var q, Var k, Var v, std::optional<Var> bias, std::size_t heads, std::size_t group,
              Matrix* weights_out) {
  Tape& t = same_tape(q, k);
  same_tape(q, v);
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  if (kv.rows() != qv.rows() || kv.cols() != qv.cols()) dim_error("attention(q,k)", qv, kv);
  if (vv.rows() != qv.rows() || vv.cols() != qv.cols()) dim_error("attention(q,v)", qv, vv);
  const std::size_t model = qv.cols();
  if (heads == 0 || model % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(model) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (group == 0 || qv.rows() % group != 0) throw DimensionError("attention: rows not divisible by group size");
  const Matrix* bv = nullptr;
  if (bias) {
    same_tape(q, *bias);
    bv = &bias->value();
    if (bv->rows() != heads * group || bv->cols() != group) {
      throw DimensionError("attention: bias " + bv->shape_string() + " does not match heads*group x group");
    }
  }
  const std::size_t blocks = qv.rows() / group;
  const std::size_t dh = model / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix weights(blocks * heads * group, group);
  Matrix out(qv.rows(), model);
  std::vector<double> row(group);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t r0 = b * group;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < group; ++i) {
        const double* qi = qv.data() + (r0 + i) * model + c0;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < group; ++j) {
          const double* kj = kv.data() + (r0 + j) * model + c0;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
          s *= sc;
          if (bv != nullptr) s += (*bv)(h * group + i, j);
          row[j] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < group; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        double* w = &weights((b * heads + h) * group + i, 0);
        double* o = out.data() + (r0 + i) * model + c0;
        for (std::size_t j = 0; j < group; ++j) {
          w[j] = row[j] / z;
          const double* vj = vv.data() + (r0 + j) * model + c0;
          for (std::size_t d = 0; d < dh; ++d) o[d] += w[j] * vj[d];
        }
      }
    }
  }
  if (weights_out != nullptr) *weights_out = weights;

  const std::int32_t iq = q.id();
  const std::int32_t ik = k.id();
  const std::int32_t iv = v.id();
  const std::int32_t ibias = bias ? bias->id() : -1;
  const bool rg = q.requires_grad() || k.requires_grad() || v.requires_grad() || (bias && bias->requires_grad());
  return t.push(std::move(out), rg,
                [iq, ik, iv, ibias, heads, group, blocks, dh, model, sc, weights = std::move(weights)](
                    Tape& tp, std::int32_t self) {
                  const Matrix& g = *tp.grad_if_any(self);
                  const Matrix& qv = tp.value(iq);
                  const Matrix& kv = tp.value(ik);
                  const Matrix& vv = tp.value(iv);
                  const bool need_q = tp.requires_grad(iq);
                  const bool need_k = tp.requires_grad(ik);
                  const bool need_v = tp.requires_grad(iv);
                  const bool need_b = ibias >= 0 && tp.requires_grad(ibias);
                  double* gq = need_q ? tp.grad_ref(iq).data() : nullptr;
                  double* gk = need_k ? tp.grad_ref(ik).data() : nullptr;
                  double* gv = need_v ? tp.grad_ref(iv).data() : nullptr;
                  Matrix* gb = need_b ? &tp.grad_ref(ibias) : nullptr;
                  std::vector<double> dp(group);
                  std::vector<double> ds(group * group);
                  for (std::size_t b = 0; b < blocks; ++b) {
                    const std::size_t r0 = b * group;
                    for (std::size_t h = 0; h < heads; ++h) {
                      const std::size_t c0 = h * dh;
                      for (std::size_t i = 0; i < group; ++i) {
                        const double* w = weights.data() + ((b * heads + h) * group + i) * group;
                        const double* gi = g.data() + (r0 + i) * model + c0;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < group; ++j) {
                          const double* vj = vv.data() + (r0 + j) * model + c0;
                          double s = 0.0;
                          for (std::size_t d = 0; d < dh; ++d) s += gi[d] * vj[d];
                          dp[j] = s;
                          dot += s * w[j];
                          if (gv != nullptr) {
                            double* gvj = gv + (r0 + j) * model + c0;
                            for (std::size_t d = 0; d < dh; ++d) gvj[d] += w[j] * gi[d];
                          }
                        }
                        for (std::size_t j = 0; j < group; ++j) ds[i * group + j] = w[j] * (dp[j] - dot);
                      }
                      for (std::size_t i = 0; i < group; ++i) {
                        for (std::size_t j = 0; j < group; ++j) {
                          const double s = ds[i * group + j];
                          if (gb != nullptr) (*gb)(h * group + i, j) += s;
                          if (gq != nullptr) {
                            const double* kj = kv.data() + (r0 + j) * model + c0;
                            double* gqi = gq + (r0 + i) * model + c0;
                            for (std::size_t d = 0; d < dh; ++d) gqi[d] += sc * s * kj[d];
                          }
                          if (gk != nullptr) {
                            const double* qi = qv.data() + (r0 + i) * model + c0;
                            double* gkj = gk + (r0 + j) * model + c0;
                            for (std::size_t d = 0; d < dh; ++d) gkj[d] += sc * s * qi[d];
                          }
                        }
                      }
                    }
                  }
                });
}

// ---- optimization ---------------------------------------------------------

double grad_norm(std::span<Parameter* const> params) {
  double s = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.values()) s += g * g;
  return std::sqrt(s);
}

double Adam::step(std::span<Parameter* const> params) { return step(params, options_.lr); }

double Adam::step(std::span<Parameter* const> params, double lr) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m_.size() != params.size()) throw ContractError("Adam: parameter list changed between steps");
  const double norm = grad_norm(params);
  double factor = 1.0;
  if (options_.grad_clip > 0.0 && norm > options_.grad_clip) factor = options_.grad_clip / norm;
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (p.value.size() != m_[k].size()) throw ContractError("Adam: parameter shape changed: " + p.name);
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.size() == p.value.size() ? p.grad[i] * factor : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
    p.grad.fill(0.0);
  }
  return norm;
}

}  // namespace morphnet::ad
