#include "strcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "strcn/errors.hpp"

namespace strcn {

namespace detail {

struct TensorNode {
  TensorShape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

using detail::TensorNode;

namespace {

std::int64_t shape_size(const TensorShape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor: non-positive dimension");
    n *= d;
  }
  return n;
}

void check_finite(const std::vector<double>& values, const char* op) {
  for (double v : values)
    if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": produced non-finite value");
}

std::shared_ptr<TensorNode> make_node(TensorShape shape, std::vector<double> values,
                                      bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(const TensorShape& shape, bool requires_grad) {
  return wrap(make_node(shape, std::vector<double>(shape_size(shape), 0.0), requires_grad));
}

Tensor Tensor::full(const TensorShape& shape, double value, bool requires_grad) {
  return wrap(make_node(shape, std::vector<double>(shape_size(shape), value), requires_grad));
}

Tensor Tensor::from_vector(const TensorShape& shape, std::vector<double> values,
                           bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != shape_size(shape))
    throw ShapeError("tensor: value count does not match shape");
  check_finite(values, "from_vector");
  return wrap(make_node(shape, std::move(values), requires_grad));
}

Tensor Tensor::uniform(Rng& rng, const TensorShape& shape, double lo, double hi,
                       bool requires_grad) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = rng.uniform(lo, hi);
  return wrap(make_node(shape, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_vector({1}, {value}, requires_grad);
}

const TensorShape& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::size() const { return node_->size(); }
const std::vector<double>& Tensor::values() const { return node_->values; }
const std::vector<double>& Tensor::grad() const { return node_->grad; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
std::vector<double>& Tensor::raw_values() { return node_->values; }
std::vector<double>& Tensor::raw_grad() {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor is not scalar");
  return node_->values[0];
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (!node_) throw StrcnError("backward: undefined tensor");
  if (node_->size() != 1) throw ShapeError("backward: root must be scalar");

  // Topological order by iterative DFS.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      TensorNode* p = n->parents[idx++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
  }
}

// --- conv2d -----------------------------------------------------------------

namespace {

struct Conv2dDims {
  int n, h, w, ci, kh, kw, co, ho, wo;
  bool batched;
};

Conv2dDims conv_dims(const Tensor& x, const Tensor& kernel, int sh, int sw, int ph, int pw) {
  const auto& xs = x.shape();
  if (xs.size() != 3 && xs.size() != 4) throw ShapeError("conv2d: input must be 3-d or 4-d");
  const auto& ks = kernel.shape();
  if (ks.size() != 4) throw ShapeError("conv2d: kernel must be [kh,kw,ci,co]");
  if (sh < 1 || sw < 1) throw ShapeError("conv2d: strides must be >= 1");
  if (ph < 0 || pw < 0) throw ShapeError("conv2d: padding must be >= 0");

  Conv2dDims d;
  d.batched = xs.size() == 4;
  d.n = d.batched ? xs[0] : 1;
  d.h = xs[d.batched ? 1 : 0];
  d.w = xs[d.batched ? 2 : 1];
  d.ci = xs[d.batched ? 3 : 2];
  d.kh = ks[0];
  d.kw = ks[1];
  d.co = ks[3];
  if (ks[2] != d.ci) throw ShapeError("conv2d: kernel input channels mismatch");
  const int eff_h = d.h + 2 * ph - d.kh;
  const int eff_w = d.w + 2 * pw - d.kw;
  if (eff_h < 0 || eff_w < 0) throw ShapeError("conv2d: kernel larger than padded input");
  if (eff_h % sh != 0 || eff_w % sw != 0)
    throw ShapeError("conv2d: output size is not integral for the given stride");
  d.ho = eff_h / sh + 1;
  d.wo = eff_w / sw + 1;
  return d;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride_h,
              int stride_w, int pad_h, int pad_w) {
  const Conv2dDims d = conv_dims(x, kernel, stride_h, stride_w, pad_h, pad_w);
  if (bias.defined() &&
      (bias.shape().size() != 1 || bias.shape()[0] != d.co))
    throw ShapeError("conv2d: bias must be [co]");

  const auto& xv = x.values();
  const auto& kv = kernel.values();
  std::vector<double> out(static_cast<std::size_t>(d.n) * d.ho * d.wo * d.co, 0.0);

  for (int n = 0; n < d.n; ++n)
    for (int oy = 0; oy < d.ho; ++oy)
      for (int ox = 0; ox < d.wo; ++ox) {
        double* o = &out[((static_cast<std::size_t>(n) * d.ho + oy) * d.wo + ox) * d.co];
        if (bias.defined())
          for (int c = 0; c < d.co; ++c) o[c] = bias.values()[c];
        for (int ky = 0; ky < d.kh; ++ky) {
          const int iy = oy * stride_h - pad_h + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (int kx = 0; kx < d.kw; ++kx) {
            const int ix = ox * stride_w - pad_w + kx;
            if (ix < 0 || ix >= d.w) continue;
            const double* xr = &xv[((static_cast<std::size_t>(n) * d.h + iy) * d.w + ix) * d.ci];
            const double* kr = &kv[(static_cast<std::size_t>(ky) * d.kw + kx) * d.ci * d.co];
            for (int ci = 0; ci < d.ci; ++ci) {
              const double xvv = xr[ci];
              const double* krr = kr + static_cast<std::size_t>(ci) * d.co;
              for (int c = 0; c < d.co; ++c) o[c] += xvv * krr[c];
            }
          }
        }
      }
  check_finite(out, "conv2d");

  TensorShape out_shape =
      d.batched ? TensorShape{d.n, d.ho, d.wo, d.co} : TensorShape{d.ho, d.wo, d.co};
  const bool rg = x.requires_grad() || kernel.requires_grad() ||
                  (bias.defined() && bias.requires_grad());
  auto node = make_node(std::move(out_shape), std::move(out), rg);
  if (rg) {
    node->parents = {x.shared_node(), kernel.shared_node()};
    if (bias.defined()) node->parents.push_back(bias.shared_node());
    auto xn = x.shared_node();
    auto kn = kernel.shared_node();
    auto bn = bias.defined() ? bias.shared_node() : nullptr;
    const int sh = stride_h, sw = stride_w, ph = pad_h, pw = pad_w;
    node->backward_fn = [xn, kn, bn, d, sh, sw, ph, pw](TensorNode& out_node) {
      const auto& g = out_node.grad;
      const bool need_dx = xn->requires_grad;
      const bool need_dk = kn->requires_grad;
      if (need_dx) xn->ensure_grad();
      if (need_dk) kn->ensure_grad();
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        for (int n = 0; n < d.n; ++n)
          for (int oy = 0; oy < d.ho; ++oy)
            for (int ox = 0; ox < d.wo; ++ox) {
              const double* gr =
                  &g[((static_cast<std::size_t>(n) * d.ho + oy) * d.wo + ox) * d.co];
              for (int c = 0; c < d.co; ++c) bn->grad[c] += gr[c];
            }
      }
      if (!need_dx && !need_dk) return;
      for (int n = 0; n < d.n; ++n)
        for (int oy = 0; oy < d.ho; ++oy)
          for (int ox = 0; ox < d.wo; ++ox) {
            const double* gr = &g[((static_cast<std::size_t>(n) * d.ho + oy) * d.wo + ox) * d.co];
            for (int ky = 0; ky < d.kh; ++ky) {
              const int iy = oy * sh - ph + ky;
              if (iy < 0 || iy >= d.h) continue;
              for (int kx = 0; kx < d.kw; ++kx) {
                const int ix = ox * sw - pw + kx;
                if (ix < 0 || ix >= d.w) continue;
                const std::size_t x_off =
                    ((static_cast<std::size_t>(n) * d.h + iy) * d.w + ix) * d.ci;
                const std::size_t k_off = (static_cast<std::size_t>(ky) * d.kw + kx) * d.ci * d.co;
                for (int ci = 0; ci < d.ci; ++ci) {
                  const double xvv = xn->values[x_off + ci];
                  const std::size_t kc = k_off + static_cast<std::size_t>(ci) * d.co;
                  double acc = 0.0;
                  for (int c = 0; c < d.co; ++c) {
                    const double gv = gr[c];
                    if (need_dk) kn->grad[kc + c] += xvv * gv;
                    acc += kn->values[kc + c] * gv;
                  }
                  if (need_dx) xn->grad[x_off + ci] += acc;
                }
              }
            }
          }
    };
  }
  return Tensor::wrap(node);
}

// --- pooling ------------------------------------------------------------------

Tensor max_pool(const Tensor& x, int k_h, int k_w, int s_h, int s_w) {
  const auto& xs = x.shape();
  if (xs.size() != 3 && xs.size() != 4) throw ShapeError("max_pool: input must be 3-d or 4-d");
  if (k_h < 1 || k_w < 1 || s_h < 1 || s_w < 1) throw ShapeError("max_pool: bad window/stride");
  const bool batched = xs.size() == 4;
  const int n = batched ? xs[0] : 1;
  const int h = xs[batched ? 1 : 0];
  const int w = xs[batched ? 2 : 1];
  const int c = xs[batched ? 3 : 2];
  if (k_h > h || k_w > w) throw ShapeError("max_pool: window larger than input");
  const int ho = (h - k_h) / s_h + 1;
  const int wo = (w - k_w) / s_w + 1;

  const auto& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(n) * ho * wo * c);
  std::vector<std::int64_t> argmax(out.size());
  for (int b = 0; b < n; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        for (int ch = 0; ch < c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_idx = -1;
          for (int ky = 0; ky < k_h; ++ky)
            for (int kx = 0; kx < k_w; ++kx) {
              const int iy = oy * s_h + ky;
              const int ix = ox * s_w + kx;
              const std::size_t idx =
                  ((static_cast<std::size_t>(b) * h + iy) * w + ix) * c + ch;
              if (xv[idx] > best) {  // strict '>' keeps the first occurrence
                best = xv[idx];
                best_idx = static_cast<std::int64_t>(idx);
              }
            }
          const std::size_t o = ((static_cast<std::size_t>(b) * ho + oy) * wo + ox) * c + ch;
          out[o] = best;
          argmax[o] = best_idx;
        }
  check_finite(out, "max_pool");

  TensorShape out_shape = batched ? TensorShape{n, ho, wo, c} : TensorShape{ho, wo, c};
  auto node = make_node(std::move(out_shape), std::move(out), x.requires_grad());
  if (node->requires_grad) {
    node->parents = {x.shared_node()};
    auto xn = x.shared_node();
    node->backward_fn = [xn, argmax = std::move(argmax)](TensorNode& out_node) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < out_node.grad.size(); ++i)
        xn->grad[static_cast<std::size_t>(argmax[i])] += out_node.grad[i];
    };
  }
  return Tensor::wrap(node);
}

Tensor global_avg_pool(const Tensor& x) {
  const auto& xs = x.shape();
  if (xs.size() != 3 && xs.size() != 4)
    throw ShapeError("global_avg_pool: input must be 3-d or 4-d");
  const bool batched = xs.size() == 4;
  const int n = batched ? xs[0] : 1;
  const int h = xs[batched ? 1 : 0];
  const int w = xs[batched ? 2 : 1];
  const int c = xs[batched ? 3 : 2];
  const double inv = 1.0 / (static_cast<double>(h) * w);

  const auto& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < h * w; ++i)
      for (int ch = 0; ch < c; ++ch)
        out[static_cast<std::size_t>(b) * c + ch] +=
            xv[(static_cast<std::size_t>(b) * h * w + i) * c + ch];
  for (double& v : out) v *= inv;
  check_finite(out, "global_avg_pool");

  TensorShape out_shape = batched ? TensorShape{n, c} : TensorShape{c};
  auto node = make_node(std::move(out_shape), std::move(out), x.requires_grad());
  if (node->requires_grad) {
    node->parents = {x.shared_node()};
    auto xn = x.shared_node();
    node->backward_fn = [xn, n, h, w, c, inv](TensorNode& out_node) {
      xn->ensure_grad();
      for (int b = 0; b < n; ++b)
        for (int i = 0; i < h * w; ++i)
          for (int ch = 0; ch < c; ++ch)
            xn->grad[(static_cast<std::size_t>(b) * h * w + i) * c + ch] +=
                inv * out_node.grad[static_cast<std::size_t>(b) * c + ch];
    };
  }
  return Tensor::wrap(node);
}

// --- batch norm ----------------------------------------------------------------

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training, bool update_stats) {
  constexpr double kEps = 1e-5;
  const auto& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("batch_norm: input must be [N,H,W,C]");
  const int n = xs[0], h = xs[1], w = xs[2], c = xs[3];
  if (gamma.size() != c || beta.size() != c)
    throw ShapeError("batch_norm: gamma/beta must have one entry per channel");
  if (training && n < 2) throw ShapeError("batch_norm: training mode needs batch size >= 2");

  if (!stats.initialized) {
    stats.running_mean.assign(c, 0.0);
    stats.running_var.assign(c, 1.0);
    stats.initialized = true;
  }
  if (static_cast<int>(stats.running_mean.size()) != c)
    throw ShapeError("batch_norm: running stats channel mismatch");

  const auto& xv = x.values();
  const std::size_t per_channel = static_cast<std::size_t>(n) * h * w;

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (std::size_t i = 0; i < xv.size(); ++i) mean[i % c] += xv[i];
    for (int ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(per_channel);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double d = xv[i] - mean[i % c];
      var[i % c] += d * d;
    }
    for (int ch = 0; ch < c; ++ch) var[ch] /= static_cast<double>(per_channel);
    if (update_stats) {
      for (int ch = 0; ch < c; ++ch) {
        stats.running_mean[ch] =
            (1.0 - stats.momentum) * stats.running_mean[ch] + stats.momentum * mean[ch];
        stats.running_var[ch] =
            (1.0 - stats.momentum) * stats.running_var[ch] + stats.momentum * var[ch];
      }
    }
  } else {
    mean = stats.running_mean;
    var = stats.running_var;
  }

  std::vector<double> inv_std(c);
  for (int ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + kEps);

  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<double> xhat(xv.size()), out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    xhat[i] = (xv[i] - mean[ch]) * inv_std[ch];
    out[i] = gv[ch] * xhat[i] + bv[ch];
  }
  check_finite(out, "batch_norm");

  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  auto node = make_node(xs, std::move(out), rg);
  if (rg) {
    node->parents = {x.shared_node(), gamma.shared_node(), beta.shared_node()};
    auto xn = x.shared_node();
    auto gn = gamma.shared_node();
    auto bn = beta.shared_node();
    node->backward_fn = [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), c,
                         per_channel, training](TensorNode& out_node) {
      const auto& g = out_node.grad;
      std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const int ch = static_cast<int>(i % c);
        sum_g[ch] += g[i];
        sum_gx[ch] += g[i] * xhat[i];
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int ch = 0; ch < c; ++ch) gn->grad[ch] += sum_gx[ch];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int ch = 0; ch < c; ++ch) bn->grad[ch] += sum_g[ch];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        const double inv_m = 1.0 / static_cast<double>(per_channel);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const int ch = static_cast<int>(i % c);
          const double scale = gn->values[ch] * inv_std[ch];
          if (training) {
            xn->grad[i] +=
                scale * (g[i] - inv_m * sum_g[ch] - xhat[i] * inv_m * sum_gx[ch]);
          } else {
            xn->grad[i] += scale * g[i];
          }
        }
      }
    };
  }
  return Tensor::wrap(node);
}

// --- pointwise / classifier ops -----------------------------------------------

Tensor relu(const Tensor& x) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto node = make_node(x.shape(), std::move(out), x.requires_grad());
  if (node->requires_grad) {
    node->parents = {x.shared_node()};
    auto xn = x.shared_node();
    node->backward_fn = [xn](TensorNode& out_node) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < out_node.grad.size(); ++i)
        if (xn->values[i] > 0.0) xn->grad[i] += out_node.grad[i];
    };
  }
  return Tensor::wrap(node);
}

Tensor softmax(const Tensor& logits) {
  const auto& shape = logits.shape();
  if (shape.empty()) throw ShapeError("softmax: rank must be >= 1");
  const int c = shape.back();
  const std::size_t rows = static_cast<std::size_t>(logits.size() / c);

  const auto& xv = logits.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &xv[r * c];
    double m = row[0];
    for (int i = 1; i < c; ++i) m = std::max(m, row[i]);
    double sum = 0.0;
    for (int i = 0; i < c; ++i) {
      out[r * c + i] = std::exp(row[i] - m);
      sum += out[r * c + i];
    }
    for (int i = 0; i < c; ++i) out[r * c + i] /= sum;
  }
  check_finite(out, "softmax");

  auto node = make_node(shape, std::move(out), logits.requires_grad());
  if (node->requires_grad) {
    node->parents = {logits.shared_node()};
    auto xn = logits.shared_node();
    node->backward_fn = [xn, c, rows](TensorNode& out_node) {
      xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = &out_node.values[r * c];
        const double* gy = &out_node.grad[r * c];
        double dot = 0.0;
        for (int i = 0; i < c; ++i) dot += gy[i] * y[i];
        for (int i = 0; i < c; ++i) xn->grad[r * c + i] += y[i] * (gy[i] - dot);
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw ShapeError("matmul: both operands must be rank 2");
  const int n = a.shape()[0], m = a.shape()[1];
  if (b.shape()[0] != m) throw ShapeError("matmul: inner dimensions differ");
  const int c = b.shape()[1];

  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < m; ++k) {
      const double aik = av[static_cast<std::size_t>(i) * m + k];
      const double* br = &bv[static_cast<std::size_t>(k) * c];
      double* orow = &out[static_cast<std::size_t>(i) * c];
      for (int j = 0; j < c; ++j) orow[j] += aik * br[j];
    }
  check_finite(out, "matmul");

  const bool rg = a.requires_grad() || b.requires_grad();
  auto node = make_node({n, c}, std::move(out), rg);
  if (rg) {
    node->parents = {a.shared_node(), b.shared_node()};
    auto an = a.shared_node();
    auto bnn = b.shared_node();
    node->backward_fn = [an, bnn, n, m, c](TensorNode& out_node) {
      const auto& g = out_node.grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < m; ++k) {
            double acc = 0.0;
            for (int j = 0; j < c; ++j)
              acc += g[static_cast<std::size_t>(i) * c + j] *
                     bnn->values[static_cast<std::size_t>(k) * c + j];
            an->grad[static_cast<std::size_t>(i) * m + k] += acc;
          }
      }
      if (bnn->requires_grad) {
        bnn->ensure_grad();
        for (int k = 0; k < m; ++k)
          for (int i = 0; i < n; ++i) {
            const double aik = an->values[static_cast<std::size_t>(i) * m + k];
            for (int j = 0; j < c; ++j)
              bnn->grad[static_cast<std::size_t>(k) * c + j] +=
                  aik * g[static_cast<std::size_t>(i) * c + j];
          }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  check_finite(out, "add");

  const bool rg = a.requires_grad() || b.requires_grad();
  auto node = make_node(a.shape(), std::move(out), rg);
  if (rg) {
    node->parents = {a.shared_node(), b.shared_node()};
    auto an = a.shared_node();
    auto bn = b.shared_node();
    node->backward_fn = [an, bn](TensorNode& out_node) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < out_node.grad.size(); ++i) an->grad[i] += out_node.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < out_node.grad.size(); ++i) bn->grad[i] += out_node.grad[i];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor balanced_cross_entropy(const Tensor& probs, const std::vector<int>& labels,
                              const std::vector<double>& sample_weights) {
  constexpr double kClamp = 1e-12;
  if (probs.shape().size() != 2) throw ShapeError("balanced_cross_entropy: probs must be [N,C]");
  const int n = probs.shape()[0], c = probs.shape()[1];
  if (static_cast<int>(labels.size()) != n || static_cast<int>(sample_weights.size()) != n)
    throw ShapeError("balanced_cross_entropy: labels/weights size mismatch");
  for (int label : labels)
    if (label < 0 || label >= c) throw ShapeError("balanced_cross_entropy: label out of range");

  const auto& pv = probs.values();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double sample = 0.0;
    for (int j = 0; j < c; ++j) {
      const double p = pv[static_cast<std::size_t>(i) * c + j];
      if (labels[i] == j)
        sample -= std::log(std::max(p, kClamp));
      else
        sample -= std::log(std::max(1.0 - p, kClamp));
    }
    loss += sample_weights[i] * sample;
  }
  if (!std::isfinite(loss)) throw NonFiniteError("balanced_cross_entropy: non-finite loss");

  auto node = make_node({1}, {loss}, probs.requires_grad());
  if (node->requires_grad) {
    node->parents = {probs.shared_node()};
    auto pn = probs.shared_node();
    node->backward_fn = [pn, labels, sample_weights, n, c](TensorNode& out_node) {
      pn->ensure_grad();
      const double g = out_node.grad[0];
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * c + j;
          const double p = pn->values[idx];
          double d = 0.0;
          if (labels[i] == j) {
            if (p > kClamp) d = -1.0 / p;  // zero inside the clamp zone
          } else {
            if (1.0 - p > kClamp) d = 1.0 / (1.0 - p);
          }
          pn->grad[idx] += g * sample_weights[i] * d;
        }
    };
  }
  return Tensor::wrap(node);
}

// --- optimizer ------------------------------------------------------------------

void sgd_step(std::vector<double>& param, const std::vector<double>& grad,
              std::vector<double>& velocity, const SgdHyper& hyper) {
  if (param.size() != grad.size()) throw ShapeError("sgd_step: param/grad size mismatch");
  if (velocity.size() != param.size()) velocity.assign(param.size(), 0.0);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = hyper.momentum * velocity[i] + grad[i] + hyper.weight_decay * param[i];
    param[i] -= hyper.lr * velocity[i];
  }
}

void SgdOptimizer::step(const SgdHyper& hyper) {
  if (velocity_.size() != params_.size()) velocity_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (p.grad().empty()) continue;  // parameter unused in this graph
    sgd_step(p.raw_values(), p.grad(), velocity_[i], hyper);
  }
}

void SgdOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

// --- gradient checking ------------------------------------------------------------

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                  std::vector<Tensor> inputs, double epsilon, int max_coords_per_tensor) {
  Tensor loss = fn(inputs);
  for (Tensor& t : inputs) t.zero_grad();
  loss.zero_grad();
  loss.backward();

  std::vector<std::vector<double>> analytic;
  for (Tensor& t : inputs)
    analytic.push_back(t.requires_grad() ? t.raw_grad() : std::vector<double>());

  double max_rel = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    if (!inputs[ti].requires_grad()) continue;
    auto& vals = inputs[ti].raw_values();
    const std::int64_t total = static_cast<std::int64_t>(vals.size());
    std::int64_t stride = 1;
    if (max_coords_per_tensor > 0 && total > max_coords_per_tensor)
      stride = (total + max_coords_per_tensor - 1) / max_coords_per_tensor;
    for (std::int64_t i = 0; i < total; i += stride) {
      const double saved = vals[i];
      vals[i] = saved + epsilon;
      const double f_plus = fn(inputs).item();
      vals[i] = saved - epsilon;
      const double f_minus = fn(inputs).item();
      vals[i] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * epsilon);
      const double a = analytic[ti][static_cast<std::size_t>(i)];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace strcn
