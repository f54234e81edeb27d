#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "strcn/tensor.hpp"

namespace strcn {

enum class Variant { kAppearance, kGeometric };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct PoolSpec {
  int k_h, k_w, s_h, s_w;
};

struct ConvLayer {
  Tensor kernel;  // [kh,kw,ci,co]
  Tensor bias;    // [co], undefined for bias-free convolutions
  int stride = 1;
  int pad = 0;
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
};

/// Recurrent convolutional layer: a 1x1 feed-forward conv (with the layer
/// bias) plus a shared 3x3 recurrent kernel iterated R times, each iteration
/// batch-normalized (own statistics) and rectified. The initial state comes
/// from the feed-forward path alone.
struct RclLayer {
  ConvLayer feed_forward;      // 1x1
  Tensor recurrent_kernel;     // [3,3,M,M], shared across iterations
  int iterations = 3;
  std::vector<BatchNormLayer> norms;  // iterations + 1

  /// preactivations, when given, receives z(0..R) for inspection.
  Tensor forward(const Tensor& x, bool training, bool update_stats = true,
                 std::vector<Tensor>* preactivations = nullptr);
};

struct StrcnConfig {
  Variant variant = Variant::kAppearance;
  int input_h = 0;  // d2 for the appearance variant, H for the geometric one
  int input_w = 0;  // time steps (A) or W (G)
  int input_c = 0;
  int feature_maps = 32;
  int rcl_layers = 4;       // retained RCL blocks (0..4)
  int rcl_iterations = 3;   // R; 0 degenerates each block to its 1x1 conv
  int num_classes = 0;
  std::uint64_t init_seed = 1;

  void validate() const;
};

/// Layer schedule for the variant: conv 5x5 p0 s1, then pooling specs
/// (pool1..pool4); the appearance column pools only the pixel axis early.
std::vector<PoolSpec> pooling_schedule(Variant variant);

/// Spatial sizes after each stage: after conv1, then after each pool and
/// each retained RCL block (pools run before their RCL). Throws ConfigError
/// when the input cannot feed the stack.
std::vector<std::pair<int, int>> trace_shapes(const StrcnConfig& cfg);

class StrcnNetwork {
 public:
  explicit StrcnNetwork(const StrcnConfig& cfg);

  /// x: [N,H,W,C]; returns [N,num_classes] logits.
  Tensor forward_logits(const Tensor& x, bool training, bool update_stats = true);

  /// Eval-mode class probabilities for one [H,W,C] input.
  std::vector<double> predict(const Tensor& input);

  std::vector<Tensor> parameters();
  const StrcnConfig& config() const { return cfg_; }

  RclLayer& rcl(int i) { return rcls_[static_cast<std::size_t>(i)]; }
  int rcl_count() const { return static_cast<int>(rcls_.size()); }

  void save(const std::filesystem::path& path) const;
  static StrcnNetwork load(const std::filesystem::path& path);

 private:
  StrcnConfig cfg_;
  ConvLayer conv1_;
  BatchNormLayer norm1_;
  std::vector<PoolSpec> pools_;
  std::vector<RclLayer> rcls_;
  Tensor head_;  // [M, num_classes]
};

}  // namespace strcn
