#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "strcn/connectivity.hpp"
#include "strcn/dataset.hpp"
#include "strcn/magnify.hpp"
#include "strcn/model.hpp"
#include "strcn/report.hpp"
#include "strcn/spatial.hpp"
#include "strcn/train.hpp"

namespace strcn {

struct FoldPlan {
  struct Fold {
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    std::string held_subject;  // LOSO only
  };
  std::string protocol;  // "loso" or "lovo"
  std::vector<Fold> folds;
  std::uint64_t seed = 0;
};

/// One fold per distinct subject; needs at least two subjects.
FoldPlan split_loso(const DatasetManifest& manifest);

/// Covering random partition into ceil(1/test_fraction) groups (the 5%
/// holdout protocol); literal = true makes one fold per sequence instead.
FoldPlan split_lovo(const DatasetManifest& manifest, double test_fraction = 0.05,
                    std::uint64_t seed = 1, bool literal = false);

/// Everything the evaluation needs, resolved ahead of time.
struct PipelineConfig {
  Variant variant = Variant::kAppearance;
  CropConstants crop;
  int align_h = 64;   // 64x48 (A) and 300x245 (G) are the stock sizes
  int align_w = 48;
  int lwm_neighborhood = 12;
  MagnificationConfig magnify;      // test-time amplification (alpha 8)
  double mask_percentile = 30.0;    // appearance variant
  int target_frames = 30;
  FlowParams flow;                  // geometric variant
  int feature_maps = 32;
  int rcl_layers = 4;
  int rcl_iterations = 3;
  TrainHyper hyper;
  bool augment_enabled = false;
  AugmentationSpec aug;
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// Fold-independent precomputation: alignment, test-time magnification and,
/// for the geometric variant, onset->apex flow.
struct PreparedSequence {
  FrameSequence aligned;
  FrameSequence magnified;
  int apex = 0;
  FlowField flow;  // geometric variant only
};

struct PreparedDataset {
  std::vector<PreparedSequence> items;  // parallel to the manifest entries
  int num_classes = 0;
};

PreparedDataset prepare_dataset(const std::vector<FrameSequence>& sequences,
                                const std::vector<LandmarkTrack>& tracks, int num_classes,
                                const PipelineConfig& cfg);

/// Per-fold fitted state, handed to the observer for leakage auditing.
struct FoldContext {
  int fold_index = 0;
  const std::vector<int>* train_indices = nullptr;
  const std::vector<int>* test_indices = nullptr;
  const BinaryMask* mask = nullptr;        // appearance variant
  const FlowScale* flow_scale = nullptr;   // geometric variant
  const StrcnNetwork* network = nullptr;
  const std::vector<std::string>* train_sources = nullptr;
};

/// May be invoked from worker threads when cfg.jobs > 1.
using FoldObserver = std::function<void(const FoldContext&)>;

/// Runs the protocol: per fold, fits mask / flow scale on the train side
/// only, trains a fresh network, scores the test side. A diverging fold is
/// recorded as failed without aborting the others.
MetricsReport evaluate(const PreparedDataset& data, const FoldPlan& plan,
                       const PipelineConfig& cfg, const FoldObserver& observer = nullptr);

struct SweepRow {
  double value = 0.0;
  MetricsReport report;
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepRow> rows;
};

/// parameter in {"p", "feature_maps", "rcl_depth"}.
SweepResult sweep(const PreparedDataset& data, const FoldPlan& plan, const PipelineConfig& base,
                  const std::string& parameter, const std::vector<double>& values);

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);

}  // namespace strcn
