#include "strcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "strcn/errors.hpp"

namespace strcn {

std::vector<double> balanced_weights(const std::vector<int>& labels, int num_classes) {
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int label : labels) {
    if (label < 0 || label >= num_classes)
      throw StrcnError("balanced_weights: label out of range");
    ++counts[static_cast<std::size_t>(label)];
  }
  const double batch = static_cast<double>(labels.size());
  std::vector<double> weights(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    weights[i] = batch / (num_classes * counts[static_cast<std::size_t>(labels[i])]);
  return weights;
}

double balanced_loss_from_logits(const std::vector<double>& logits_flat, int num_classes,
                                 const std::vector<int>& labels,
                                 std::vector<double>* grad_wrt_logits) {
  const int n = static_cast<int>(labels.size());
  if (static_cast<int>(logits_flat.size()) != n * num_classes)
    throw ShapeError("balanced_loss: logits size mismatch");

  Tensor logits = Tensor::from_vector({n, num_classes}, logits_flat, true);
  Tensor probs = softmax(logits);
  Tensor loss = balanced_cross_entropy(probs, labels, balanced_weights(labels, num_classes));
  if (grad_wrt_logits) {
    loss.backward();
    *grad_wrt_logits = logits.grad();
  }
  return loss.item();
}

std::vector<int> select_frame_subset(int total_frames, int keep_percent, Rng& rng) {
  const int keep = static_cast<int>(std::lround(keep_percent * total_frames / 100.0));
  if (keep < 1) throw StrcnError("augment: keep percentage leaves no frames");
  if (keep >= total_frames) {
    std::vector<int> all(static_cast<std::size_t>(total_frames));
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  // Frame 0 is always retained; the rest are drawn without replacement.
  std::vector<int> pool(static_cast<std::size_t>(total_frames - 1));
  std::iota(pool.begin(), pool.end(), 1);
  rng.shuffle(pool);
  std::vector<int> chosen{0};
  chosen.insert(chosen.end(), pool.begin(), pool.begin() + (keep - 1));
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<FrameSequence> augment(const FrameSequence& seq, const AugmentationSpec& spec,
                                   const MagnificationConfig& magnify_base) {
  if (seq.length() < 5) throw StrcnError("augment: need at least 5 frames");

  std::vector<FrameSequence> variants;
  variants.reserve(spec.amplification_factors.size() * spec.keep_percentages.size());
  for (int alpha : spec.amplification_factors) {
    MagnificationConfig cfg = magnify_base;
    cfg.alpha = static_cast<double>(alpha);
    const FrameSequence magnified = magnify(seq, cfg);
    for (int q : spec.keep_percentages) {
      Rng rng(derive_seed(spec.seed, seq.source_id + "/a" + std::to_string(alpha) + "/q" +
                                         std::to_string(q)));
      const std::vector<int> kept = select_frame_subset(seq.length(), q, rng);
      FrameSequence variant;
      variant.fps = seq.fps;
      variant.subject_id = seq.subject_id;
      variant.label = seq.label;
      variant.source_id = seq.source_id;
      for (int idx : kept) variant.frames.push_back(magnified.frames[static_cast<std::size_t>(idx)]);
      variants.push_back(std::move(variant));
    }
  }
  return variants;
}

TrainResult train(StrcnNetwork& net, const std::vector<TrainSample>& samples,
                  const TrainHyper& hyper) {
  if (samples.empty()) throw StrcnError("train: empty training split");
  const int num_classes = net.config().num_classes;
  const int c = net.config().input_c;
  const int h = net.config().input_h;
  const int w = net.config().input_w;
  const std::size_t sample_size = static_cast<std::size_t>(h) * w * c;

  SgdOptimizer optimizer(net.parameters());
  Rng rng(hyper.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double lr = hyper.lr0;
  double prev_mean = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;

    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      const int b = static_cast<int>(end - start);

      std::vector<double> batch_values(static_cast<std::size_t>(b) * sample_size);
      std::vector<int> labels(static_cast<std::size_t>(b));
      for (int i = 0; i < b; ++i) {
        const TrainSample& s = samples[order[start + i]];
        if (s.input.size() != static_cast<std::int64_t>(sample_size))
          throw ShapeError("train: sample does not match the network input shape");
        std::copy(s.input.values().begin(), s.input.values().end(),
                  batch_values.begin() + static_cast<std::size_t>(i) * sample_size);
        labels[static_cast<std::size_t>(i)] = s.label;
      }
      Tensor batch = Tensor::from_vector({b, h, w, c}, std::move(batch_values));

      optimizer.zero_grad();
      Tensor logits = net.forward_logits(batch, /*training=*/b >= 2);
      Tensor probs = softmax(logits);
      Tensor loss = balanced_cross_entropy(probs, labels, balanced_weights(labels, num_classes));
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw DivergenceError("train: loss became non-finite at epoch " + std::to_string(epoch));
      loss.backward();
      SgdHyper step_hyper{lr, hyper.momentum, hyper.weight_decay};
      optimizer.step(step_hyper);

      loss_sum += loss_value / b;
      ++batches;
    }

    const double mean_loss = loss_sum / batches;
    result.curve.push_back({epoch, mean_loss, lr});
    result.epochs = epoch + 1;

    if (std::abs(prev_mean - mean_loss) < hyper.stop_tolerance) {
      result.stopped_by_tolerance = true;
      break;
    }
    prev_mean = mean_loss;
    lr *= hyper.lr_damping;  // damped once every full traversal
  }
  return result;
}

}  // namespace strcn
