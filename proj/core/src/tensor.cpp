#include "imblab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "imblab/errors.hpp"

namespace imblab {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

using detail::Node;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> data, const char* op) {
  auto n = std::make_shared<Node>();
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError(std::string(op) + ": data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  return n;
}

bool any_requires_grad(const std::vector<Value>& parents) {
  for (const auto& p : parents)
    if (p.requires_grad()) return true;
  return false;
}

Node& check(const Value& v, const char* op) {
  if (!v.defined()) throw Error(std::string(op) + ": undefined Value");
  return *v.node();
}

}  // namespace

namespace detail {

Value make_node(Shape shape, std::vector<double> data, std::vector<Value> parents,
                std::function<void(Node&)> backprop, const char* op) {
  auto n = new_node(std::move(shape), std::move(data), op);
  n->requires_grad = any_requires_grad(parents);
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Value(std::move(n));
}

}  // namespace detail

Value Value::constant(Shape shape, std::vector<double> data) {
  return Value(new_node(std::move(shape), std::move(data), "constant"));
}

Value Value::scalar(double v) { return constant({1}, {v}); }

Value Value::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Value Value::ones(Shape shape) {
  auto n = shape_numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 1.0));
}

Value Value::param(Shape shape, std::vector<double> data) {
  auto n = new_node(std::move(shape), std::move(data), "param");
  n->requires_grad = true;
  return Value(std::move(n));
}

const Shape& Value::shape() const { return check(*this, "shape").shape; }
int64_t Value::numel() const { return check(*this, "numel").numel(); }
const std::vector<double>& Value::data() const { return check(*this, "data").data; }
bool Value::requires_grad() const { return check(*this, "requires_grad").requires_grad; }
bool Value::has_grad() const { return !check(*this, "has_grad").grad.empty(); }

const std::vector<double>& Value::grad() const {
  auto& n = check(*this, "grad");
  if (n.grad.empty())
    throw Error("grad not populated (op '" + std::string(n.op) + "'); run backward first");
  return n.grad;
}

const char* Value::op() const { return check(*this, "op").op; }

double Value::item() const {
  auto& n = check(*this, "item");
  if (n.numel() != 1)
    throw ShapeError("item() requires a 1-element tensor, got " + shape_str(n.shape));
  return n.data[0];
}

std::vector<double>& Value::mutable_data() { return check(*this, "mutable_data").data; }

// ---------------------------------------------------------------------------
// Elementwise binary ops with 1-element broadcast.

namespace {

enum class Bcast { same, a_scalar, b_scalar };

Bcast binary_mode(const Node& a, const Node& b, const char* op) {
  if (a.shape == b.shape) return Bcast::same;
  if (b.numel() == 1) return Bcast::b_scalar;
  if (a.numel() == 1) return Bcast::a_scalar;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape) + " and " +
                   shape_str(b.shape) + " do not conform (equal shapes or a 1-element operand)");
}

template <class Fwd>
std::vector<double> binary_fwd(const Node& a, const Node& b, Bcast mode, Fwd f) {
  std::vector<double> out;
  switch (mode) {
    case Bcast::same: {
      out.resize(a.data.size());
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data[i], b.data[i]);
      break;
    }
    case Bcast::b_scalar: {
      out.resize(a.data.size());
      const double bv = b.data[0];
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data[i], bv);
      break;
    }
    case Bcast::a_scalar: {
      out.resize(b.data.size());
      const double av = a.data[0];
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av, b.data[i]);
      break;
    }
  }
  return out;
}

}  // namespace

Value add(const Value& a, const Value& b) {
  auto& na = check(a, "add");
  auto& nb = check(b, "add");
  const Bcast mode = binary_mode(na, nb, "add");
  auto out = binary_fwd(na, nb, mode, [](double x, double y) { return x + y; });
  Shape shape = mode == Bcast::a_scalar ? nb.shape : na.shape;
  return detail::make_node(
      std::move(shape), std::move(out), {a, b},
      [mode](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
          if (mode == Bcast::a_scalar) {
            double s = 0.0;
            for (double gi : g) s += gi;
            pa.grad[0] += s;
          } else {
            for (size_t i = 0; i < g.size(); ++i) pa.grad[i] += g[i];
          }
        }
        if (pb.requires_grad) {
          if (mode == Bcast::b_scalar) {
            double s = 0.0;
            for (double gi : g) s += gi;
            pb.grad[0] += s;
          } else {
            for (size_t i = 0; i < g.size(); ++i) pb.grad[i] += g[i];
          }
        }
      },
      "add");
}

Value sub(const Value& a, const Value& b) {
  auto& na = check(a, "sub");
  auto& nb = check(b, "sub");
  const Bcast mode = binary_mode(na, nb, "sub");
  auto out = binary_fwd(na, nb, mode, [](double x, double y) { return x - y; });
  Shape shape = mode == Bcast::a_scalar ? nb.shape : na.shape;
  return detail::make_node(
      std::move(shape), std::move(out), {a, b},
      [mode](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
          if (mode == Bcast::a_scalar) {
            double s = 0.0;
            for (double gi : g) s += gi;
            pa.grad[0] += s;
          } else {
            for (size_t i = 0; i < g.size(); ++i) pa.grad[i] += g[i];
          }
        }
        if (pb.requires_grad) {
          if (mode == Bcast::b_scalar) {
            double s = 0.0;
            for (double gi : g) s += gi;
            pb.grad[0] -= s;
          } else {
            for (size_t i = 0; i < g.size(); ++i) pb.grad[i] -= g[i];
          }
        }
      },
      "sub");
}

Value mul(const Value& a, const Value& b) {
  auto& na = check(a, "mul");
  auto& nb = check(b, "mul");
  const Bcast mode = binary_mode(na, nb, "mul");
  auto out = binary_fwd(na, nb, mode, [](double x, double y) { return x * y; });
  Shape shape = mode == Bcast::a_scalar ? nb.shape : na.shape;
  return detail::make_node(
      std::move(shape), std::move(out), {a, b},
      [mode](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
          if (mode == Bcast::a_scalar) {
            double s = 0.0;
            for (size_t i = 0; i < g.size(); ++i) s += g[i] * pb.data[i];
            pa.grad[0] += s;
          } else if (mode == Bcast::b_scalar) {
            const double bv = pb.data[0];
            for (size_t i = 0; i < g.size(); ++i) pa.grad[i] += g[i] * bv;
          } else {
            for (size_t i = 0; i < g.size(); ++i) pa.grad[i] += g[i] * pb.data[i];
          }
        }
        if (pb.requires_grad) {
          if (mode == Bcast::b_scalar) {
            double s = 0.0;
            for (size_t i = 0; i < g.size(); ++i) s += g[i] * pa.data[i];
            pb.grad[0] += s;
          } else if (mode == Bcast::a_scalar) {
            const double av = pa.data[0];
            for (size_t i = 0; i < g.size(); ++i) pb.grad[i] += g[i] * av;
          } else {
            for (size_t i = 0; i < g.size(); ++i) pb.grad[i] += g[i] * pa.data[i];
          }
        }
      },
      "mul");
}

// ---------------------------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
  auto& na = check(a, "matmul");
  auto& nb = check(b, "matmul");
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
    throw ShapeError("matmul: need [m,k]x[k,n], got " + shape_str(na.shape) + " x " +
                     shape_str(nb.shape));
  const int64_t m = na.shape[0], k = na.shape[1], n = nb.shape[1];
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const double av = na.data[i * k + p];
      for (int64_t j = 0; j < n; ++j) out[i * n + j] += av * nb.data[p * n + j];
    }
  return detail::make_node(
      {m, n}, std::move(out), {a, b},
      [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
          // gA = G * B^T
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
              const double gv = g[i * n + j];
              for (int64_t p = 0; p < k; ++p) pa.grad[i * k + p] += gv * pb.data[p * n + j];
            }
        }
        if (pb.requires_grad) {
          // gB = A^T * G
          for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < k; ++p) {
              const double av = pa.data[i * k + p];
              for (int64_t j = 0; j < n; ++j) pb.grad[p * n + j] += av * g[i * n + j];
            }
        }
      },
      "matmul");
}

Value conv2d(const Value& input, const Value& weight, const Value& bias, int stride,
             int padding) {
  auto& ni = check(input, "conv2d");
  auto& nw = check(weight, "conv2d");
  if (stride != 1 && stride != 2)
    throw Error("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  if (padding < 0) throw Error("conv2d: padding must be >= 0");
  if (ni.shape.size() != 3 || nw.shape.size() != 4)
    throw ShapeError("conv2d: need input [Cin,H,W] and weight [Cout,Cin,kh,kw], got " +
                     shape_str(ni.shape) + " and " + shape_str(nw.shape));
  const int64_t ci = ni.shape[0], h = ni.shape[1], w = ni.shape[2];
  const int64_t co = nw.shape[0], kh = nw.shape[2], kw = nw.shape[3];
  if (nw.shape[1] != ci)
    throw ShapeError("conv2d: weight expects " + std::to_string(nw.shape[1]) +
                     " input channels, input has " + std::to_string(ci));
  const bool has_bias = bias.defined();
  if (has_bias) {
    auto& nb = check(bias, "conv2d");
    if (nb.shape.size() != 1 || nb.shape[0] != co)
      throw ShapeError("conv2d: bias must be [Cout]=" + std::to_string(co) + ", got " +
                       shape_str(nb.shape));
  }
  const int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const int64_t wo = (w + 2 * padding - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");

  // Valid output range along one axis for a kernel offset: indices where
  // o*stride - padding + k stays inside [0, limit).
  const auto valid_range = [](int64_t k, int64_t stride_, int64_t padding_, int64_t limit,
                              int64_t out_limit) {
    const int64_t lo = padding_ - k > 0 ? (padding_ - k + stride_ - 1) / stride_ : 0;
    const int64_t hi = std::min<int64_t>(out_limit - 1, (limit - 1 + padding_ - k) / stride_);
    return std::pair<int64_t, int64_t>{lo, hi};
  };

  std::vector<double> out(static_cast<size_t>(co * ho * wo), 0.0);
  for (int64_t oc = 0; oc < co; ++oc) {
    double* out_c = out.data() + oc * ho * wo;
    if (has_bias) {
      const double bv = bias.data()[oc];
      for (int64_t i = 0; i < ho * wo; ++i) out_c[i] = bv;
    }
    for (int64_t ic = 0; ic < ci; ++ic) {
      const double* in_c = ni.data.data() + ic * h * w;
      const double* w_cc = nw.data.data() + (oc * ci + ic) * kh * kw;
      for (int64_t ky = 0; ky < kh; ++ky) {
        const auto [oy_lo, oy_hi] = valid_range(ky, stride, padding, h, ho);
        for (int64_t kx = 0; kx < kw; ++kx) {
          const double wv = w_cc[ky * kw + kx];
          if (wv == 0.0) continue;
          const auto [ox_lo, ox_hi] = valid_range(kx, stride, padding, w, wo);
          for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
            const double* in_row = in_c + (oy * stride - padding + ky) * w - padding + kx;
            double* out_row = out_c + oy * wo;
            if (stride == 1) {
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) out_row[ox] += wv * in_row[ox];
            } else {
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                out_row[ox] += wv * in_row[ox * stride];
            }
          }
        }
      }
    }
  }

  std::vector<Value> parents = {input, weight};
  if (has_bias) parents.push_back(bias);
  return detail::make_node(
      {co, ho, wo}, std::move(out), std::move(parents),
      [ci, h, w, co, kh, kw, ho, wo, stride, padding, has_bias, valid_range](Node& self) {
        Node& pin = *self.parents[0];
        Node& pw = *self.parents[1];
        const auto& g = self.grad;
        if (has_bias) {
          Node& pb = *self.parents[2];
          if (pb.requires_grad) {
            for (int64_t oc = 0; oc < co; ++oc) {
              const double* g_c = g.data() + oc * ho * wo;
              double s = 0.0;
              for (int64_t i = 0; i < ho * wo; ++i) s += g_c[i];
              pb.grad[oc] += s;
            }
          }
        }
        for (int64_t oc = 0; oc < co; ++oc) {
          const double* g_c = g.data() + oc * ho * wo;
          for (int64_t ic = 0; ic < ci; ++ic) {
            const double* in_c = pin.data.data() + ic * h * w;
            const double* w_cc = pw.data.data() + (oc * ci + ic) * kh * kw;
            double* gw_cc = pw.requires_grad ? pw.grad.data() + (oc * ci + ic) * kh * kw : nullptr;
            double* gin_c = pin.requires_grad ? pin.grad.data() + ic * h * w : nullptr;
            for (int64_t ky = 0; ky < kh; ++ky) {
              const auto [oy_lo, oy_hi] = valid_range(ky, stride, padding, h, ho);
              for (int64_t kx = 0; kx < kw; ++kx) {
                const double wv = w_cc[ky * kw + kx];
                const auto [ox_lo, ox_hi] = valid_range(kx, stride, padding, w, wo);
                double gw_acc = 0.0;
                for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                  const int64_t row_offset = (oy * stride - padding + ky) * w - padding + kx;
                  const double* in_row = in_c + row_offset;
                  double* gin_row = gin_c ? gin_c + row_offset : nullptr;
                  const double* g_row = g_c + oy * wo;
                  if (stride == 1) {
                    if (gin_row) {
                      for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) {
                        const double gv = g_row[ox];
                        gw_acc += gv * in_row[ox];
                        gin_row[ox] += gv * wv;
                      }
                    } else {
                      for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                        gw_acc += g_row[ox] * in_row[ox];
                    }
                  } else {
                    for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) {
                      const double gv = g_row[ox];
                      gw_acc += gv * in_row[ox * stride];
                      if (gin_row) gin_row[ox * stride] += gv * wv;
                    }
                  }
                }
                if (gw_cc) gw_cc[ky * kw + kx] += gw_acc;
              }
            }
          }
        }
      },
      "conv2d");
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.

namespace {

template <class Fwd, class Bwd>
Value unary_op(const Value& x, const char* op, Fwd f, Bwd df) {
  auto& nx = check(x, op);
  std::vector<double> out(nx.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(nx.data[i]);
  return detail::make_node(
      nx.shape, std::move(out), {x},
      [df](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i)
          p.grad[i] += self.grad[i] * df(p.data[i], self.data[i]);
      },
      op);
}

}  // namespace

Value relu(const Value& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double xv, double) { return xv > 0.0 ? 1.0 : 0.0; });
}

Value sigmoid(const Value& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Value log(const Value& x) {
  return unary_op(
      x, "log", [](double v) { return std::log(v); },
      [](double xv, double) { return 1.0 / xv; });
}

Value log_guarded(const Value& x) {
  return unary_op(
      x, "log_guarded",
      [](double v) { return std::log(v > kLogGuardEps ? v : kLogGuardEps); },
      [](double xv, double) { return xv > kLogGuardEps ? 1.0 / xv : 0.0; });
}

Value abs(const Value& x) {
  return unary_op(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double xv, double) { return xv > 0.0 ? 1.0 : (xv < 0.0 ? -1.0 : 0.0); });
}

Value power(const Value& x, double exponent) {
  if (exponent == 0.0) {
    // x^0 == 1 exactly, gradient 0: keeps the Focal(gamma=0) -> CE reduction exact.
    auto& nx = check(x, "power");
    return Value::ones(nx.shape);
  }
  auto& nx = check(x, "power");
  std::vector<double> out(nx.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::pow(nx.data[i], exponent);
  return detail::make_node(
      nx.shape, std::move(out), {x},
      [exponent](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i)
          p.grad[i] += self.grad[i] * exponent * std::pow(p.data[i], exponent - 1.0);
      },
      "power");
}

Value sum(const Value& x) {
  auto& nx = check(x, "sum");
  double s = 0.0;
  for (double v : nx.data) s += v;
  return detail::make_node(
      {1}, {s}, {x},
      [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad[0];
        for (auto& gv : p.grad) gv += g;
      },
      "sum");
}

Value mean(const Value& x) {
  auto& nx = check(x, "mean");
  if (nx.numel() == 0) throw ShapeError("mean of empty tensor");
  double s = 0.0;
  for (double v : nx.data) s += v;
  const double inv_n = 1.0 / static_cast<double>(nx.numel());
  return detail::make_node(
      {1}, {s * inv_n}, {x},
      [inv_n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad[0] * inv_n;
        for (auto& gv : p.grad) gv += g;
      },
      "mean");
}

Value gather_rows(const Value& x, std::vector<int64_t> rows) {
  auto& nx = check(x, "gather_rows");
  if (nx.shape.size() != 2)
    throw ShapeError("gather_rows: need 2-D tensor, got " + shape_str(nx.shape));
  const int64_t r = nx.shape[0], c = nx.shape[1];
  for (int64_t idx : rows)
    if (idx < 0 || idx >= r)
      throw ShapeError("gather_rows: row " + std::to_string(idx) + " out of range [0," +
                       std::to_string(r) + ")");
  const int64_t k = static_cast<int64_t>(rows.size());
  std::vector<double> out(static_cast<size_t>(k * c));
  for (int64_t i = 0; i < k; ++i)
    std::copy_n(nx.data.begin() + rows[i] * c, c, out.begin() + i * c);
  return detail::make_node(
      {k, c}, std::move(out), {x},
      [rows = std::move(rows), c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < rows.size(); ++i)
          for (int64_t j = 0; j < c; ++j)
            p.grad[rows[i] * c + j] += self.grad[i * c + j];
      },
      "gather_rows");
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const auto& first = check(parts[0], "concat_rows");
  if (first.shape.size() != 2) throw ShapeError("concat_rows: need 2-D tensors");
  const int64_t c = first.shape[1];
  int64_t total = 0;
  for (const auto& p : parts) {
    const auto& np = check(p, "concat_rows");
    if (np.shape.size() != 2 || np.shape[1] != c)
      throw ShapeError("concat_rows: mismatched column counts");
    total += np.shape[0];
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total * c));
  for (const auto& p : parts)
    out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_node(
      {total, c}, std::move(out), parts,
      [](Node& self) {
        size_t offset = 0;
        for (auto& parent : self.parents) {
          const size_t n = parent->data.size();
          if (parent->requires_grad)
            for (size_t i = 0; i < n; ++i) parent->grad[i] += self.grad[offset + i];
          offset += n;
        }
      },
      "concat_rows");
}

Value head_to_anchor_layout(const Value& fmap, int anchors_per_location,
                            int channels_per_anchor) {
  auto& nf = check(fmap, "head_to_anchor_layout");
  const int64_t a = anchors_per_location, k = channels_per_anchor;
  if (nf.shape.size() != 3 || nf.shape[0] != a * k)
    throw ShapeError("head_to_anchor_layout: need [A*K,H,W] with A*K=" +
                     std::to_string(a * k) + ", got " + shape_str(nf.shape));
  const int64_t h = nf.shape[1], w = nf.shape[2];
  const int64_t n = h * w * a;
  std::vector<double> out(static_cast<size_t>(n * k));
  for (int64_t ai = 0; ai < a; ++ai)
    for (int64_t ki = 0; ki < k; ++ki) {
      const double* src = nf.data.data() + (ai * k + ki) * h * w;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          out[((y * w + x) * a + ai) * k + ki] = src[y * w + x];
    }
  return detail::make_node(
      {n, k}, std::move(out), {fmap},
      [a, k, h, w](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (int64_t ai = 0; ai < a; ++ai)
          for (int64_t ki = 0; ki < k; ++ki) {
            double* dst = p.grad.data() + (ai * k + ki) * h * w;
            for (int64_t y = 0; y < h; ++y)
              for (int64_t x = 0; x < w; ++x)
                dst[y * w + x] += self.grad[((y * w + x) * a + ai) * k + ki];
          }
      },
      "head_to_anchor_layout");
}

Value stop_gradient(const Value& x) {
  auto& nx = check(x, "stop_gradient");
  auto n = new_node(nx.shape, nx.data, "stop_gradient");
  n->requires_grad = false;
  return Value(std::move(n));
}

// ---------------------------------------------------------------------------

void backward(const Value& root) {
  auto& r = check(root, "backward");
  if (r.numel() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str(r.shape));

  // Iterative post-order DFS; traversal order is fixed by graph structure.
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({&r, 0});
  seen.insert(&r);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  // Reset-per-call: no accumulation across backward invocations.
  for (Node* n : topo) {
    if (n->requires_grad) n->grad.assign(static_cast<size_t>(n->numel()), 0.0);
  }
  if (!r.requires_grad) return;  // nothing reachable is trainable

  r.grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backprop) n->backprop(*n);
  }
}

}  // namespace imblab
