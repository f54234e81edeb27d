#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "strcn/rng.hpp"

namespace strcn {

using TensorShape = std::vector<int>;

namespace detail {
struct TensorNode;
}

/// Dense n-d array of doubles with an attached reverse-mode tape. Value
/// semantics on the handle; the node (values + grad + backward closure) is
/// shared. Every op validates shapes and raises NonFiniteError if it would
/// produce NaN/Inf.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const TensorShape& shape, bool requires_grad = false);
  static Tensor full(const TensorShape& shape, double value, bool requires_grad = false);
  static Tensor from_vector(const TensorShape& shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor uniform(Rng& rng, const TensorShape& shape, double lo, double hi,
                        bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const TensorShape& shape() const;
  std::int64_t size() const;
  int dim(int i) const { return shape()[static_cast<std::size_t>(i)]; }
  const std::vector<double>& values() const;
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  double item() const;

  /// Mutable access for leaf initialization and optimizer updates. Editing a
  /// tensor that already feeds a graph invalidates that graph; callers only
  /// touch leaves between forward passes.
  std::vector<double>& raw_values();
  std::vector<double>& raw_grad();

  void zero_grad();

  /// Reverse pass from a scalar. Gradients accumulate into every reachable
  /// tensor with requires_grad.
  void backward() const;

  detail::TensorNode* node() const { return node_.get(); }
  static Tensor wrap(std::shared_ptr<detail::TensorNode> node);
  std::shared_ptr<detail::TensorNode> shared_node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// --- ops -------------------------------------------------------------------

/// Cross-correlation with bias. x: [N,H,W,Ci] or [H,W,Ci]; kernel:
/// [kh,kw,Ci,Co]; bias: [Co] or undefined. Output size must divide exactly.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride_h,
              int stride_w, int pad_h, int pad_w);

/// Max pooling, ceil mode off (trailing remainder dropped). Gradient routes
/// to the first maximum in scan order.
Tensor max_pool(const Tensor& x, int k_h, int k_w, int s_h, int s_w);

/// Per-map spatial mean: [N,H,W,C] -> [N,C].
Tensor global_avg_pool(const Tensor& x);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  bool initialized = false;
};

/// Per-channel standardization (eps 1e-5). Training mode uses batch stats
/// (batch size >= 2) and, when update_stats, folds them into the running
/// stats; eval mode normalizes with the running stats.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training, bool update_stats = true);

Tensor relu(const Tensor& x);

/// Row-wise softmax over the last dimension, max-subtracted for stability.
Tensor softmax(const Tensor& logits);

/// [N,M] x [M,C] -> [N,C].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum of same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

/// Weighted multi-label cross entropy over probabilities:
/// sum_i w_i * sum_c -[y log p + (1-y) log(1-p)], probabilities clamped to
/// [1e-12, 1-1e-12] before the logs. Returns a scalar.
Tensor balanced_cross_entropy(const Tensor& probs, const std::vector<int>& labels,
                              const std::vector<double>& sample_weights);

// --- optimizer ---------------------------------------------------------------

struct SgdHyper {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
void sgd_step(std::vector<double>& param, const std::vector<double>& grad,
              std::vector<double>& velocity, const SgdHyper& hyper);

class SgdOptimizer {
 public:
  explicit SgdOptimizer(std::vector<Tensor> params) : params_(std::move(params)) {}
  void step(const SgdHyper& hyper);
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
};

// --- gradient checking -------------------------------------------------------

/// Compares reverse-mode gradients of fn (a pure scalar-valued function of
/// the inputs) against central differences. Checks every coordinate unless
/// max_coords_per_tensor limits the deterministic sample. Returns the max
/// relative error, |a-f| / max(|a|,|f|,1e-4).
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                  std::vector<Tensor> inputs, double epsilon = 1e-5,
                  int max_coords_per_tensor = -1);

}  // namespace strcn
