#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace imblab {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Guard applied by log_guarded(): log(max(x, kLogGuardEps)). Used inside loss
// code paths only, so an exploding optimizer shows up as a huge finite loss
// instead of an immediate NaN from log(0).
inline constexpr double kLogGuardEps = 1e-12;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized by backward() for requires_grad nodes
  bool requires_grad = false;
  const char* op = "leaf";  // op_record: producing operation
  std::vector<std::shared_ptr<Node>> parents;
  // Pulls this->grad and accumulates into parents' grad.
  std::function<void(Node&)> backprop;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

}  // namespace detail

// Dense float64 array with reverse-mode autodiff. Value is a cheap handle to
// a shared graph node; copying a Value aliases the node. Nodes are immutable
// after creation except for grad population (and parameter data, which the
// single-writer optimizer updates between graph builds).
class Value {
 public:
  Value() = default;

  static Value constant(Shape shape, std::vector<double> data);
  static Value scalar(double v);
  static Value zeros(Shape shape);
  static Value ones(Shape shape);
  // Trainable leaf (requires_grad = true).
  static Value param(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  const std::vector<double>& data() const;
  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if not populated
  const char* op() const;
  double item() const;  // value of a 1-element tensor

  // For the optimizer and checkpoint loading only (parameters are leaves).
  std::vector<double>& mutable_data();

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Value(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Escape hatch for domain-specific ops (guided loss scaling, smooth-L1).
// `backprop` sees the produced node; parents' grads are pre-sized by
// backward() for every requires_grad node.
Value make_node(Shape shape, std::vector<double> data, std::vector<Value> parents,
                std::function<void(Node&)> backprop, const char* op);

}  // namespace detail

// Elementwise binary ops; operands must have identical shapes, or either side
// may be a 1-element tensor (scalar broadcast).
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }

// [m,k] x [k,n] -> [m,n].
Value matmul(const Value& a, const Value& b);

// input [Cin,H,W], weight [Cout,Cin,kh,kw], optional bias [Cout].
// stride must be 1 or 2; padding >= 0 zero-pads all four sides.
Value conv2d(const Value& input, const Value& weight, const Value& bias,
             int stride, int padding);

Value relu(const Value& x);
Value sigmoid(const Value& x);
Value log(const Value& x);          // plain natural log
Value log_guarded(const Value& x);  // log(max(x, kLogGuardEps)); grad 0 below the guard
Value abs(const Value& x);
// x^exponent elementwise; exponent 0 gives exactly 1 with zero gradient.
Value power(const Value& x, double exponent);
Value sum(const Value& x);   // -> scalar
Value mean(const Value& x);  // -> scalar

// Row selection/stacking for 2-D tensors.
Value gather_rows(const Value& x, std::vector<int64_t> rows);
Value concat_rows(const std::vector<Value>& parts);

// Detection-head layout: [A*K, H, W] -> [H*W*A, K] with anchor index
// (y*W + x)*A + a, matching AnchorSet ordering.
Value head_to_anchor_layout(const Value& fmap, int anchors_per_location,
                            int channels_per_anchor);

// Identical data, requires_grad = false; the backward pass treats it as a
// constant (absorbing: no path through it contributes to any grad).
Value stop_gradient(const Value& x);

// Reverse-mode pass from a scalar root. Grad storage of every reachable
// requires_grad node is reset at the start of each call (no cross-call
// accumulation), then populated. Deterministic for a fixed graph.
void backward(const Value& root);

}  // namespace imblab
