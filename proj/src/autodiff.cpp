#include "geoinpaint/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "geoinpaint/error.hpp"

namespace geoinpaint::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          std::string(op) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
  return out;
}

// Number of elements after the leading axis.
std::size_t inner_size(const Shape& s) {
  return s.empty() ? 1 : numel(s) / static_cast<std::size_t>(s[0]);
}

struct ConvGeometry {
  int n, ci, h, w, co, k, stride, pad, oh, ow;
  std::size_t rows() const { return static_cast<std::size_t>(ci) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(n) * oh * ow; }
};

// cols is (ci*k*k) x (n*oh*ow), column-major.
Eigen::MatrixXd im2col(const double* x, const ConvGeometry& g) {
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
  double* out = cols.data();
  for (int b = 0; b < g.n; ++b)
    for (int oy = 0; oy < g.oh; ++oy)
      for (int ox = 0; ox < g.ow; ++ox) {
        for (int c = 0; c < g.ci; ++c) {
          const double* plane = x + (static_cast<std::size_t>(b) * g.ci + c) * g.h * g.w;
          for (int ky = 0; ky < g.k; ++ky) {
            const int iy = oy * g.stride + ky - g.pad;
            for (int kx = 0; kx < g.k; ++kx) {
              const int ix = ox * g.stride + kx - g.pad;
              *out++ = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : 0.0;
            }
          }
        }
      }
  return cols;
}

void col2im(const Eigen::MatrixXd& cols, const ConvGeometry& g, double* x) {
  std::fill(x, x + static_cast<std::size_t>(g.n) * g.ci * g.h * g.w, 0.0);
  const double* in = cols.data();
  for (int b = 0; b < g.n; ++b)
    for (int oy = 0; oy < g.oh; ++oy)
      for (int ox = 0; ox < g.ow; ++ox) {
        for (int c = 0; c < g.ci; ++c) {
          double* plane = x + (static_cast<std::size_t>(b) * g.ci + c) * g.h * g.w;
          for (int ky = 0; ky < g.k; ++ky) {
            const int iy = oy * g.stride + ky - g.pad;
            for (int kx = 0; kx < g.k; ++kx) {
              const int ix = ox * g.stride + kx - g.pad;
              const double v = *in++;
              if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) plane[iy * g.w + ix] += v;
            }
          }
        }
      }
}

// Output maps [n, co, oh, ow] <-> co x (n*oh*ow) column-major matrices.
Eigen::MatrixXd maps_to_matrix(const double* y, const ConvGeometry& g) {
  Eigen::MatrixXd m(g.co, static_cast<Eigen::Index>(g.cols()));
  const std::size_t plane = static_cast<std::size_t>(g.oh) * g.ow;
  for (int b = 0; b < g.n; ++b)
    for (int c = 0; c < g.co; ++c) {
      const double* src = y + (static_cast<std::size_t>(b) * g.co + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) m(c, static_cast<Eigen::Index>(b * plane + p)) = src[p];
    }
  return m;
}

void matrix_to_maps(const Eigen::MatrixXd& m, const ConvGeometry& g, double* y) {
  const std::size_t plane = static_cast<std::size_t>(g.oh) * g.ow;
  for (int b = 0; b < g.n; ++b)
    for (int c = 0; c < g.co; ++c) {
      double* dst = y + (static_cast<std::size_t>(b) * g.co + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = m(c, static_cast<Eigen::Index>(b * plane + p));
    }
}

Eigen::Map<const RowMat> weight_matrix(const Tensor& w, const ConvGeometry& g) {
  return {w.data.data(), g.co, static_cast<Eigen::Index>(g.rows())};
}

}  // namespace

std::size_t numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  require(data.size() == numel(shape), ErrorCode::ShapeMismatch,
          "tensor data size " + std::to_string(data.size()) + " does not match " + to_string(shape));
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  require(size() == 1, ErrorCode::ShapeMismatch, "item() on a tensor with " + std::to_string(size()) + " entries");
  return node_->value.data[0];
}

Var Var::make(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->inputs = std::move(inputs);
  out.node_->backward = std::move(backward);
  return out;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {
class GradModeScope {
 public:
  explicit GradModeScope(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }
  ~GradModeScope() { g_grad_enabled = previous_; }

 private:
  bool previous_;
};
}  // namespace

std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, bool create_graph) {
  std::vector<Var> result;
  result.reserve(inputs.size());
  if (!output.requires_grad()) {
    for (const Var& in : inputs) result.push_back(constant(Tensor(in.shape())));
    return result;
  }

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Var, std::size_t>> stack{{output, 0}};
  visited.insert(output.node());
  while (!stack.empty()) {
    auto& [var, next] = stack.back();
    Node* node = var.node();
    if (next < node->inputs.size()) {
      const Var& child = node->inputs[next++];
      if (child.requires_grad() && visited.insert(child.node()).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Without create_graph, branches that cannot reach any input are switched
  // off for the duration of the sweep so backward rules skip them (e.g. weight
  // gradients when only an input gradient is wanted). With create_graph the
  // flags must stay intact: the new graph has to track every parameter.
  std::vector<Node*> pruned;
  if (!create_graph) {
    std::unordered_set<Node*> targets;
    for (const Var& in : inputs)
      if (in.defined()) targets.insert(in.node());
    std::unordered_set<Node*> reaches;
    for (Node* node : order) {
      bool r = targets.count(node) > 0;
      for (const Var& child : node->inputs) r = r || (child.requires_grad() && reaches.count(child.node()) > 0);
      if (r) reaches.insert(node);
    }
    for (Node* node : order)
      if (!reaches.count(node)) {
        node->requires_grad = false;
        pruned.push_back(node);
      }
  }
  struct Restore {
    std::vector<Node*>& nodes;
    ~Restore() {
      for (Node* n : nodes) n->requires_grad = true;
    }
  } restore{pruned};

  GradModeScope mode(create_graph);
  std::unordered_map<Node*, Var> acc;
  acc.emplace(output.node(), constant(Tensor(output.shape(), 1.0)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = acc.find(node);
    if (found == acc.end() || !node->backward) continue;
    const Var g = found->second;
    std::vector<Var> parts = node->backward(g);
    for (std::size_t k = 0; k < parts.size() && k < node->inputs.size(); ++k) {
      const Var& in = node->inputs[k];
      if (!parts[k].defined() || !in.requires_grad()) continue;
      auto slot = acc.find(in.node());
      if (slot == acc.end())
        acc.emplace(in.node(), parts[k]);
      else
        slot->second = add(slot->second, parts[k]);
    }
    // Free intermediate gradients that are no longer needed.
    if (std::none_of(inputs.begin(), inputs.end(), [&](const Var& v) { return v.node() == node; }))
      acc.erase(node);
  }

  for (const Var& in : inputs) {
    auto found = in.defined() ? acc.find(in.node()) : acc.end();
    result.push_back(found != acc.end() ? found->second : constant(Tensor(in.shape())));
  }
  return result;
}

Var constant(Tensor t) { return Var(std::move(t), false); }
Var scalar(double v) { return Var(Tensor({1}, v), false); }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return Var::make(map_binary(a.value(), b.value(), std::plus<>()), {a, b},
                   [](const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return Var::make(map_binary(a.value(), b.value(), std::minus<>()), {a, b},
                   [](const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return Var::make(map_binary(a.value(), b.value(), std::multiplies<>()), {a, b}, [a, b](const Var& g) {
    return std::vector<Var>{a.requires_grad() ? mul(g, b) : Var(), b.requires_grad() ? mul(g, a) : Var()};
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  return Var::make(map_unary(a.value(), [c](double v) { return c * v; }), {a},
                   [c](const Var& g) { return std::vector<Var>{scale(g, c)}; });
}

Var add_scalar(const Var& a, double c) {
  return Var::make(map_unary(a.value(), [c](double v) { return v + c; }), {a},
                   [](const Var& g) { return std::vector<Var>{g}; });
}

Var mul_const(const Var& a, const Tensor& c) {
  require(a.shape() == c.shape, ErrorCode::ShapeMismatch, "mul_const shape");
  return Var::make(map_binary(a.value(), c, std::multiplies<>()), {a},
                   [c](const Var& g) { return std::vector<Var>{mul_const(g, c)}; });
}

Var add_const(const Var& a, const Tensor& c) {
  require(a.shape() == c.shape, ErrorCode::ShapeMismatch, "add_const shape");
  return Var::make(map_binary(a.value(), c, std::plus<>()), {a},
                   [](const Var& g) { return std::vector<Var>{g}; });
}

Var exp(const Var& a) {
  return Var::make(map_unary(a.value(), [](double v) { return std::exp(v); }), {a},
                   [a](const Var& g) { return std::vector<Var>{mul(g, exp(a))}; });
}

Var square(const Var& a) { return mul(a, a); }

Var abs(const Var& a) {
  Tensor sign = map_unary(a.value(), [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  return Var::make(map_unary(a.value(), [](double v) { return std::abs(v); }), {a},
                   [sign](const Var& g) { return std::vector<Var>{mul_const(g, sign)}; });
}

Var leaky_relu(const Var& a, double slope) {
  Tensor slope_mask = map_unary(a.value(), [slope](double v) { return v > 0.0 ? 1.0 : slope; });
  return Var::make(map_binary(a.value(), slope_mask, std::multiplies<>()), {a},
                   [slope_mask](const Var& g) { return std::vector<Var>{mul_const(g, slope_mask)}; });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var pow(const Var& a, double p) {
  return Var::make(map_unary(a.value(), [p](double v) { return std::pow(v, p); }), {a},
                   [a, p](const Var& g) { return std::vector<Var>{mul(g, scale(pow(a, p - 1.0), p))}; });
}

Var safe_sqrt(const Var& a) {
  return Var::make(map_unary(a.value(), [](double v) { return v > 0.0 ? std::sqrt(v) : 0.0; }), {a},
                   [a](const Var& g) { return std::vector<Var>{mul(g, scale(safe_recip(safe_sqrt(a)), 0.5))}; });
}

Var safe_recip(const Var& a) {
  return Var::make(map_unary(a.value(), [](double v) { return v > 0.0 ? 1.0 / v : 0.0; }), {a},
                   [a](const Var& g) {
                     const Var r = safe_recip(a);
                     return std::vector<Var>{neg(mul(g, mul(r, r)))};
                   });
}

Var sum(const Var& a) {
  const double s = std::accumulate(a.value().data.begin(), a.value().data.end(), 0.0);
  Shape shape = a.shape();
  return Var::make(Tensor({1}, s), {a}, [shape](const Var& g) { return std::vector<Var>{expand_scalar(g, shape)}; });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var expand_scalar(const Var& s, const Shape& shape) {
  require(s.size() == 1, ErrorCode::ShapeMismatch, "expand_scalar needs a single value");
  return Var::make(Tensor(shape, s.value().data[0]), {s}, [](const Var& g) { return std::vector<Var>{sum(g)}; });
}

Var channel_sum(const Var& a) {
  const Shape& s = a.shape();
  require(s.size() >= 2, ErrorCode::ShapeMismatch, "channel_sum needs [N, C, ...]");
  const int n = s[0];
  const int c = s[1];
  const std::size_t inner = numel(s) / (static_cast<std::size_t>(n) * c);
  Tensor out({c});
  const double* x = a.value().data.data();
  for (int b = 0; b < n; ++b)
    for (int k = 0; k < c; ++k) {
      double acc = 0.0;
      const double* p = x + (static_cast<std::size_t>(b) * c + k) * inner;
      for (std::size_t i = 0; i < inner; ++i) acc += p[i];
      out.data[k] += acc;
    }
  Shape shape = s;
  return Var::make(std::move(out), {a}, [shape](const Var& g) { return std::vector<Var>{channel_expand(g, shape)}; });
}

Var channel_expand(const Var& v, const Shape& shape) {
  require(shape.size() >= 2 && v.shape() == Shape{shape[1]}, ErrorCode::ShapeMismatch,
          "channel_expand of " + to_string(v.shape()) + " to " + to_string(shape));
  const int n = shape[0];
  const int c = shape[1];
  const std::size_t inner = numel(shape) / (static_cast<std::size_t>(n) * c);
  Tensor out(shape);
  for (int b = 0; b < n; ++b)
    for (int k = 0; k < c; ++k)
      std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(b) * c + k) * inner),
                  inner, v.value().data[k]);
  return Var::make(std::move(out), {v}, [](const Var& g) { return std::vector<Var>{channel_sum(g)}; });
}

Var sample_sum(const Var& a) {
  const Shape& s = a.shape();
  require(!s.empty(), ErrorCode::ShapeMismatch, "sample_sum needs a leading axis");
  const int n = s[0];
  const std::size_t inner = inner_size(s);
  Tensor out({n});
  for (int b = 0; b < n; ++b) {
    const double* p = a.value().data.data() + static_cast<std::size_t>(b) * inner;
    out.data[b] = std::accumulate(p, p + inner, 0.0);
  }
  Shape shape = s;
  return Var::make(std::move(out), {a}, [shape](const Var& g) { return std::vector<Var>{sample_expand(g, shape)}; });
}

Var sample_expand(const Var& v, const Shape& shape) {
  require(!shape.empty() && v.shape() == Shape{shape[0]}, ErrorCode::ShapeMismatch,
          "sample_expand of " + to_string(v.shape()) + " to " + to_string(shape));
  const std::size_t inner = inner_size(shape);
  Tensor out(shape);
  for (int b = 0; b < shape[0]; ++b)
    std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(b * inner), inner, v.value().data[b]);
  return Var::make(std::move(out), {v}, [](const Var& g) { return std::vector<Var>{sample_sum(g)}; });
}

Var reshape(const Var& a, const Shape& shape) {
  require(numel(shape) == a.size(), ErrorCode::ShapeMismatch,
          "reshape " + to_string(a.shape()) + " to " + to_string(shape));
  Shape original = a.shape();
  return Var::make(Tensor(shape, a.value().data), {a},
                   [original](const Var& g) { return std::vector<Var>{reshape(g, original)}; });
}

Var transpose(const Var& a) {
  require(a.shape().size() == 2, ErrorCode::ShapeMismatch, "transpose needs a matrix");
  const int r = a.shape()[0];
  const int c = a.shape()[1];
  Tensor out({c, r});
  Eigen::Map<RowMat>(out.data.data(), c, r) = Eigen::Map<const RowMat>(a.value().data.data(), r, c).transpose();
  return Var::make(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var matmul(const Var& a, const Var& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[1] == b.shape()[0], ErrorCode::ShapeMismatch,
          "matmul " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const int n = a.shape()[0];
  const int k = a.shape()[1];
  const int m = b.shape()[1];
  Tensor out({n, m});
  Eigen::Map<RowMat>(out.data.data(), n, m).noalias() =
      Eigen::Map<const RowMat>(a.value().data.data(), n, k) * Eigen::Map<const RowMat>(b.value().data.data(), k, m);
  return Var::make(std::move(out), {a, b}, [a, b](const Var& g) {
    return std::vector<Var>{a.requires_grad() ? matmul(g, transpose(b)) : Var(),
                            b.requires_grad() ? matmul(transpose(a), g) : Var()};
  });
}

Var conv2d(const Var& x, const Var& w, int stride, int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4 && xs[1] == ws[1] && ws[2] == ws[3], ErrorCode::ShapeMismatch,
          "conv2d " + to_string(xs) + " with weight " + to_string(ws));
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad, 0, 0};
  g.oh = (g.h + 2 * pad - g.k) / stride + 1;
  g.ow = (g.w + 2 * pad - g.k) / stride + 1;
  require(g.oh > 0 && g.ow > 0, ErrorCode::ShapeMismatch, "conv2d output would be empty");

  const Eigen::MatrixXd cols = im2col(x.value().data.data(), g);
  const Eigen::MatrixXd y = weight_matrix(w.value(), g) * cols;
  Tensor out({g.n, g.co, g.oh, g.ow});
  matrix_to_maps(y, g, out.data.data());

  return Var::make(std::move(out), {x, w}, [x, w, g](const Var& gy) {
    return std::vector<Var>{x.requires_grad() ? conv_transpose2d(gy, w, g.stride, g.pad, g.h, g.w) : Var(),
                            w.requires_grad() ? conv2d_weight_grad(x, gy, g.stride, g.pad, g.k) : Var()};
  });
}

Var conv_transpose2d(const Var& gy, const Var& w, int stride, int pad, int out_h, int out_w) {
  const Shape& gs = gy.shape();
  const Shape& ws = w.shape();
  require(gs.size() == 4 && ws.size() == 4 && gs[1] == ws[0] && ws[2] == ws[3], ErrorCode::ShapeMismatch,
          "conv_transpose2d " + to_string(gs) + " with weight " + to_string(ws));
  ConvGeometry g{gs[0], ws[1], out_h, out_w, ws[0], ws[2], stride, pad, gs[2], gs[3]};
  require((out_h + 2 * pad - g.k) / stride + 1 == g.oh && (out_w + 2 * pad - g.k) / stride + 1 == g.ow,
          ErrorCode::ShapeMismatch, "conv_transpose2d output size inconsistent with stride/padding");

  const Eigen::MatrixXd gm = maps_to_matrix(gy.value().data.data(), g);
  const Eigen::MatrixXd cols = weight_matrix(w.value(), g).transpose() * gm;
  Tensor out({g.n, g.ci, out_h, out_w});
  col2im(cols, g, out.data.data());

  return Var::make(std::move(out), {gy, w}, [gy, w, g](const Var& u) {
    return std::vector<Var>{gy.requires_grad() ? conv2d(u, w, g.stride, g.pad) : Var(),
                            w.requires_grad() ? conv2d_weight_grad(u, gy, g.stride, g.pad, g.k) : Var()};
  });
}

Var conv2d_weight_grad(const Var& x, const Var& gy, int stride, int pad, int k) {
  const Shape& xs = x.shape();
  const Shape& gs = gy.shape();
  require(xs.size() == 4 && gs.size() == 4 && xs[0] == gs[0], ErrorCode::ShapeMismatch,
          "conv2d_weight_grad " + to_string(xs) + " and " + to_string(gs));
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], gs[1], k, stride, pad, gs[2], gs[3]};
  require((g.h + 2 * pad - k) / stride + 1 == g.oh && (g.w + 2 * pad - k) / stride + 1 == g.ow,
          ErrorCode::ShapeMismatch, "conv2d_weight_grad geometry");

  const Eigen::MatrixXd cols = im2col(x.value().data.data(), g);
  const Eigen::MatrixXd gm = maps_to_matrix(gy.value().data.data(), g);
  Tensor out({g.co, g.ci, k, k});
  Eigen::Map<RowMat>(out.data.data(), g.co, static_cast<Eigen::Index>(g.rows())).noalias() = gm * cols.transpose();

  return Var::make(std::move(out), {x, gy}, [x, gy, g](const Var& v) {
    return std::vector<Var>{x.requires_grad() ? conv_transpose2d(gy, v, g.stride, g.pad, g.h, g.w) : Var(),
                            gy.requires_grad() ? conv2d(x, v, g.stride, g.pad) : Var()};
  });
}

Var select_channel(const Var& x, int c) {
  const Shape& s = x.shape();
  require(s.size() == 4 && c >= 0 && c < s[1], ErrorCode::ShapeMismatch, "select_channel");
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  Tensor out({s[0], 1, s[2], s[3]});
  for (int b = 0; b < s[0]; ++b) {
    const auto src = x.value().data.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(b) * s[1] + c) * plane);
    std::copy(src, src + static_cast<std::ptrdiff_t>(plane), out.data.begin() + static_cast<std::ptrdiff_t>(b * plane));
  }
  const int channels = s[1];
  return Var::make(std::move(out), {x},
                   [channels, c](const Var& g) { return std::vector<Var>{embed_channel(g, channels, c)}; });
}

Var embed_channel(const Var& y, int channels, int c) {
  const Shape& s = y.shape();
  require(s.size() == 4 && s[1] == 1 && c >= 0 && c < channels, ErrorCode::ShapeMismatch, "embed_channel");
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  Tensor out({s[0], channels, s[2], s[3]});
  for (int b = 0; b < s[0]; ++b) {
    const auto src = y.value().data.begin() + static_cast<std::ptrdiff_t>(b * plane);
    std::copy(src, src + static_cast<std::ptrdiff_t>(plane),
              out.data.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(b) * channels + c) * plane));
  }
  return Var::make(std::move(out), {y}, [c](const Var& g) { return std::vector<Var>{select_channel(g, c)}; });
}

LinearMapPtr make_linear_map(std::size_t out_size, std::size_t in_size,
                             const std::vector<Eigen::Triplet<double>>& entries, Shape out_shape,
                             Shape in_shape) {
  require(numel(out_shape) == out_size && numel(in_shape) == in_size, ErrorCode::ShapeMismatch,
          "linear map shapes do not match its sizes");
  auto map = std::make_shared<LinearMap>();
  map->matrix.resize(static_cast<Eigen::Index>(out_size), static_cast<Eigen::Index>(in_size));
  map->matrix.setFromTriplets(entries.begin(), entries.end());
  map->matrix.makeCompressed();
  map->out_shape = std::move(out_shape);
  map->in_shape = std::move(in_shape);
  return map;
}

Var apply_map(const Var& x, const LinearMapPtr& map) {
  const Shape& s = x.shape();
  require(!s.empty() && inner_size(s) == static_cast<std::size_t>(map->matrix.cols()), ErrorCode::ShapeMismatch,
          "apply_map input " + to_string(s));
  const int n = s[0];
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), map->out_shape.begin(), map->out_shape.end());
  Tensor out(out_shape);
  Eigen::Map<const RowMat> xm(x.value().data.data(), n, map->matrix.cols());
  Eigen::Map<RowMat> ym(out.data.data(), n, map->matrix.rows());
  ym.noalias() = xm * map->matrix.transpose();
  return Var::make(std::move(out), {x}, [map](const Var& g) { return std::vector<Var>{apply_map_adjoint(g, map)}; });
}

Var apply_map_adjoint(const Var& y, const LinearMapPtr& map) {
  const Shape& s = y.shape();
  require(!s.empty() && inner_size(s) == static_cast<std::size_t>(map->matrix.rows()), ErrorCode::ShapeMismatch,
          "apply_map_adjoint input " + to_string(s));
  const int n = s[0];
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), map->in_shape.begin(), map->in_shape.end());
  Tensor out(out_shape);
  Eigen::Map<const RowMat> ym(y.value().data.data(), n, map->matrix.rows());
  Eigen::Map<RowMat> xm(out.data.data(), n, map->matrix.cols());
  xm.noalias() = ym * map->matrix;
  return Var::make(std::move(out), {y}, [map](const Var& g) { return std::vector<Var>{apply_map(g, map)}; });
}

}  // namespace geoinpaint::ad
