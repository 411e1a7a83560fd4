#pragma once

// Small reverse-mode automatic differentiation engine over dense double
// tensors. Backward rules are themselves written with differentiable ops, so
// gradients can be differentiated again (needed for the WGAN gradient penalty).

#include <Eigen/Sparse>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace geoinpaint::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> d);

  std::size_t size() const noexcept { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
};

class Var;
using BackwardFn = std::function<std::vector<Var>(const Var& grad_output)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;
};

/// Handle to a node of the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  /// Direct access for optimiser updates; only meaningful on leaves.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  double item() const;
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  Node* node() const noexcept { return node_.get(); }

  /// Internal: wraps an op result, recording `inputs`/`backward` when grad
  /// mode is on and any input requires a gradient.
  static Var make(Tensor value, std::vector<Var> inputs, BackwardFn backward);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// d(sum of output)/d(inputs). With create_graph the returned gradients are
/// themselves differentiable. Inputs the output does not depend on get zeros.
std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, bool create_graph = false);

Var constant(Tensor t);
Var scalar(double v);

// Elementwise (identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var mul_const(const Var& a, const Tensor& c);
Var add_const(const Var& a, const Tensor& c);
Var exp(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var relu(const Var& a);
Var pow(const Var& a, double p);
/// sqrt with derivative 0 at 0.
Var safe_sqrt(const Var& a);
/// 1/a for a > 0, 0 otherwise.
Var safe_recip(const Var& a);

// Reductions and their adjoint broadcasts.
Var sum(const Var& a);                              // -> [1]
Var mean(const Var& a);                             // -> [1]
Var expand_scalar(const Var& s, const Shape& shape);
Var channel_sum(const Var& a);                      // [N, C, ...] -> [C]
Var channel_expand(const Var& v, const Shape& shape);
Var sample_sum(const Var& a);                       // [N, ...] -> [N]
Var sample_expand(const Var& v, const Shape& shape);

Var reshape(const Var& a, const Shape& shape);
Var transpose(const Var& a);                        // 2-D only
Var matmul(const Var& a, const Var& b);             // [N, K] x [K, M]

/// Cross-correlation of x [N, Ci, H, W] with w [Co, Ci, k, k].
Var conv2d(const Var& x, const Var& w, int stride, int pad);
/// Adjoint of conv2d in its input: g [N, Co, OH, OW] -> [N, Ci, out_h, out_w].
Var conv_transpose2d(const Var& g, const Var& w, int stride, int pad, int out_h, int out_w);
/// Adjoint of conv2d in its weight: returns [Co, Ci, k, k].
Var conv2d_weight_grad(const Var& x, const Var& g, int stride, int pad, int k);

Var select_channel(const Var& x, int c);            // [N, C, H, W] -> [N, 1, H, W]
Var embed_channel(const Var& y, int channels, int c);

/// Fixed sparse linear operator applied independently to every sample.
struct LinearMap {
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;  // out x in
  Shape in_shape;   // per-sample shape of inputs
  Shape out_shape;  // per-sample shape of outputs
};
using LinearMapPtr = std::shared_ptr<const LinearMap>;

LinearMapPtr make_linear_map(std::size_t out_size, std::size_t in_size,
                             const std::vector<Eigen::Triplet<double>>& entries, Shape out_shape,
                             Shape in_shape);
Var apply_map(const Var& x, const LinearMapPtr& map);
Var apply_map_adjoint(const Var& y, const LinearMapPtr& map);

}  // namespace geoinpaint::ad
