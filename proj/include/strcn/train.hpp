#pragma once

#include <cstdint>
#include <vector>

#include "strcn/dataset.hpp"
#include "strcn/magnify.hpp"
#include "strcn/model.hpp"
#include "strcn/tensor.hpp"

namespace strcn {

/// Per-sample weights beta_i = B / (C * n_class(i)) from in-batch class
/// counts; a class-balanced batch yields beta = 1 everywhere.
std::vector<double> balanced_weights(const std::vector<int>& labels, int num_classes);

/// Balanced multi-class loss over class probabilities. Returns the scalar
/// loss and, via grad_wrt_logits, the exact gradient of the softmax+loss
/// composite at the given logits.
double balanced_loss_from_logits(const std::vector<double>& logits_flat, int num_classes,
                                 const std::vector<int>& labels,
                                 std::vector<double>* grad_wrt_logits = nullptr);

struct AugmentationSpec {
  std::vector<int> amplification_factors = {5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  std::vector<int> keep_percentages = {100, 90, 80, 70, 60};
  std::uint64_t seed = 1;
};

/// 10 amplification factors x 5 random frame subsets = 50 variants per
/// sequence. Subsets are sorted, always contain frame 0, and are sized
/// round(q*T/100). Deterministic in (spec.seed, source_id).
std::vector<FrameSequence> augment(const FrameSequence& seq, const AugmentationSpec& spec,
                                   const MagnificationConfig& magnify_base);

/// Frame indices kept for one (q, draw) pair; exposed for tests.
std::vector<int> select_frame_subset(int total_frames, int keep_percent, Rng& rng);

struct TrainHyper {
  double lr0 = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_damping = 0.8;        // per epoch
  int batch_size = 20;
  double stop_tolerance = 1e-3;   // on the epoch-mean loss delta
  int max_epochs = 200;
  std::uint64_t seed = 1;
};

struct TrainSample {
  Tensor input;  // [H,W,C], pre-encoded
  int label = 0;
};

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStat> curve;
  int epochs = 0;
  bool stopped_by_tolerance = false;
};

/// SGD with momentum over shuffled mini-batches; the learning rate is damped
/// after each epoch and training stops when the epoch-mean loss moves less
/// than the tolerance. Throws DivergenceError when the loss goes non-finite.
TrainResult train(StrcnNetwork& net, const std::vector<TrainSample>& samples,
                  const TrainHyper& hyper);

}  // namespace strcn
