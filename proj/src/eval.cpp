#include "strcn/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <set>

#include "strcn/errors.hpp"
#include "strcn/rng.hpp"

namespace strcn {

FoldPlan split_loso(const DatasetManifest& manifest) {
  std::map<std::string, std::vector<int>> by_subject;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    by_subject[manifest.entries[i].subject_id].push_back(static_cast<int>(i));
  if (by_subject.size() < 2) throw StrcnError("split_loso: need at least 2 distinct subjects");

  FoldPlan plan;
  plan.protocol = "loso";
  for (const auto& [subject, test] : by_subject) {
    FoldPlan::Fold fold;
    fold.held_subject = subject;
    fold.test_indices = test;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
      if (manifest.entries[i].subject_id != subject) fold.train_indices.push_back(static_cast<int>(i));
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

FoldPlan split_lovo(const DatasetManifest& manifest, double test_fraction, std::uint64_t seed,
                    bool literal) {
  const int n = static_cast<int>(manifest.entries.size());
  if (n == 0) throw StrcnError("split_lovo: empty dataset");
  if (!(test_fraction > 0.0 && test_fraction <= 1.0))
    throw StrcnError("split_lovo: test fraction must be in (0,1]");

  const int groups = literal ? n : static_cast<int>(std::ceil(1.0 / test_fraction));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "lovo"));
  rng.shuffle(order);

  FoldPlan plan;
  plan.protocol = "lovo";
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(std::min(groups, n)));
  for (int i = 0; i < n; ++i)
    plan.folds[static_cast<std::size_t>(i % static_cast<int>(plan.folds.size()))]
        .test_indices.push_back(order[static_cast<std::size_t>(i)]);
  for (FoldPlan::Fold& fold : plan.folds) {
    std::sort(fold.test_indices.begin(), fold.test_indices.end());
    std::set<int> test_set(fold.test_indices.begin(), fold.test_indices.end());
    for (int i = 0; i < n; ++i)
      if (!test_set.count(i)) fold.train_indices.push_back(i);
  }
  return plan;
}

PreparedDataset prepare_dataset(const std::vector<FrameSequence>& sequences,
                                const std::vector<LandmarkTrack>& tracks, int num_classes,
                                const PipelineConfig& cfg) {
  if (sequences.size() != tracks.size())
    throw StrcnError("prepare_dataset: sequence/track count mismatch");
  PreparedDataset out;
  out.num_classes = num_classes;
  out.items.resize(sequences.size());

  auto prepare_one = [&](std::size_t i) {
    PreparedSequence item;
    item.aligned = align_sequence(sequences[i], tracks[i], cfg.crop, cfg.align_h, cfg.align_w,
                                  cfg.lwm_neighborhood);
    item.magnified = magnify(item.aligned, cfg.magnify);
    if (cfg.variant == Variant::kGeometric) {
      item.apex = locate_apex(item.magnified);
      const FlowResult fr =
          estimate_flow(item.magnified.frames[0],
                        item.magnified.frames[static_cast<std::size_t>(item.apex)], cfg.flow);
      item.flow = fr.flow;
    }
    out.items[i] = std::move(item);
  };

  if (cfg.jobs > 1) {
    std::vector<std::future<void>> futures;
    std::atomic<std::size_t> next{0};
    for (int j = 0; j < cfg.jobs; ++j)
      futures.push_back(std::async(std::launch::async, [&]() {
        for (std::size_t i = next.fetch_add(1); i < sequences.size(); i = next.fetch_add(1))
          prepare_one(i);
      }));
    for (auto& f : futures) f.get();
  } else {
    for (std::size_t i = 0; i < sequences.size(); ++i) prepare_one(i);
  }
  return out;
}

namespace {

Tensor appearance_input(const FrameSequence& seq, const BinaryMask& mask, int target_frames) {
  AppearanceTensor t = build_strcn_a_input(seq, mask, target_frames);
  return Tensor::from_vector({t.active_pixels, t.frames, t.channels}, std::move(t.data));
}

Tensor geometric_input(const FlowField& flow, const FlowScale& scale) {
  std::vector<double> data = build_strcn_g_input(flow, scale);
  return Tensor::from_vector({flow.h, flow.w, 2}, std::move(data));
}

struct FoldOutcome {
  FoldResult result;
  std::vector<std::vector<int>> confusion;
};

FoldOutcome run_fold(const PreparedDataset& data, const FoldPlan::Fold& fold, int fold_index,
                     const PipelineConfig& cfg, const FoldObserver& observer) {
  FoldOutcome outcome;
  outcome.result.index = fold_index;
  outcome.result.n_test = static_cast<int>(fold.test_indices.size());
  const int classes = data.num_classes;
  outcome.confusion.assign(static_cast<std::size_t>(classes),
                           std::vector<int>(static_cast<std::size_t>(classes), 0));

  // Train-side statistics.
  BinaryMask mask;
  FlowScale scale;
  StrcnConfig model_cfg;
  model_cfg.variant = cfg.variant;
  model_cfg.feature_maps = cfg.feature_maps;
  model_cfg.rcl_layers = cfg.rcl_layers;
  model_cfg.rcl_iterations = cfg.rcl_iterations;
  model_cfg.num_classes = classes;
  model_cfg.init_seed = derive_seed(cfg.seed, "fold" + std::to_string(fold_index) + "/init");

  if (cfg.variant == Variant::kAppearance) {
    DifferenceHeatMap heat;
    for (int idx : fold.train_indices)
      heat.accumulate(data.items[static_cast<std::size_t>(idx)].magnified);
    mask = mask_from_heatmap(heat, cfg.mask_percentile);
    model_cfg.input_h = mask.active_count;
    model_cfg.input_w = cfg.target_frames;
    model_cfg.input_c = data.items[0].magnified.channels();
  } else {
    std::vector<FlowField> train_flows;
    for (int idx : fold.train_indices)
      train_flows.push_back(data.items[static_cast<std::size_t>(idx)].flow);
    scale = fit_flow_scale(train_flows);
    model_cfg.input_h = data.items[0].magnified.height();
    model_cfg.input_w = data.items[0].magnified.width();
    model_cfg.input_c = 2;
  }

  // Assemble training samples; augmented variants inherit their source's
  // split side by construction.
  std::vector<TrainSample> samples;
  std::vector<std::string> train_sources;
  for (int idx : fold.train_indices) {
    const PreparedSequence& item = data.items[static_cast<std::size_t>(idx)];
    train_sources.push_back(item.aligned.source_id);
    if (cfg.augment_enabled) {
      const std::vector<FrameSequence> variants =
          augment(item.aligned, cfg.aug, cfg.magnify);
      for (const FrameSequence& variant : variants) {
        TrainSample s;
        if (cfg.variant == Variant::kAppearance) {
          s.input = appearance_input(variant, mask, cfg.target_frames);
        } else {
          const int apex = locate_apex(variant);
          const FlowResult fr = estimate_flow(
              variant.frames[0], variant.frames[static_cast<std::size_t>(apex)], cfg.flow);
          s.input = geometric_input(fr.flow, scale);
        }
        s.label = variant.label;
        samples.push_back(std::move(s));
      }
    } else {
      TrainSample s;
      s.input = cfg.variant == Variant::kAppearance
                    ? appearance_input(item.magnified, mask, cfg.target_frames)
                    : geometric_input(item.flow, scale);
      s.label = item.magnified.label;
      samples.push_back(std::move(s));
    }
  }

  StrcnNetwork net(model_cfg);
  TrainHyper hyper = cfg.hyper;
  hyper.seed = derive_seed(cfg.seed, "fold" + std::to_string(fold_index) + "/train");
  train(net, samples, hyper);

  for (int idx : fold.test_indices) {
    const PreparedSequence& item = data.items[static_cast<std::size_t>(idx)];
    const Tensor input = cfg.variant == Variant::kAppearance
                             ? appearance_input(item.magnified, mask, cfg.target_frames)
                             : geometric_input(item.flow, scale);
    const std::vector<double> probs = net.predict(input);
    const int predicted = static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    outcome.confusion[static_cast<std::size_t>(item.magnified.label)]
                     [static_cast<std::size_t>(predicted)] += 1;
  }

  const MetricsReport fold_metrics = metrics_from_confusion(outcome.confusion);
  outcome.result.accuracy = fold_metrics.accuracy;
  outcome.result.f1 = fold_metrics.f1;

  if (observer) {
    FoldContext ctx;
    ctx.fold_index = fold_index;
    ctx.train_indices = &fold.train_indices;
    ctx.test_indices = &fold.test_indices;
    ctx.mask = cfg.variant == Variant::kAppearance ? &mask : nullptr;
    ctx.flow_scale = cfg.variant == Variant::kGeometric ? &scale : nullptr;
    ctx.network = &net;
    ctx.train_sources = &train_sources;
    observer(ctx);
  }
  return outcome;
}

}  // namespace

MetricsReport evaluate(const PreparedDataset& data, const FoldPlan& plan,
                       const PipelineConfig& cfg, const FoldObserver& observer) {
  if (data.items.empty()) throw StrcnError("evaluate: empty dataset");
  const int classes = data.num_classes;

  std::vector<FoldOutcome> outcomes(plan.folds.size());
  auto run_one = [&](std::size_t i) {
    try {
      outcomes[i] = run_fold(data, plan.folds[i], static_cast<int>(i), cfg, observer);
    } catch (const std::exception& e) {
      outcomes[i].result.index = static_cast<int>(i);
      outcomes[i].result.n_test = static_cast<int>(plan.folds[i].test_indices.size());
      outcomes[i].result.failed = true;
      outcomes[i].result.error = e.what();
      outcomes[i].confusion.assign(static_cast<std::size_t>(classes),
                                   std::vector<int>(static_cast<std::size_t>(classes), 0));
    }
  };

  if (cfg.jobs > 1) {
    std::vector<std::future<void>> futures;
    std::atomic<std::size_t> next{0};
    const int workers = std::min<int>(cfg.jobs, static_cast<int>(plan.folds.size()));
    for (int j = 0; j < workers; ++j)
      futures.push_back(std::async(std::launch::async, [&]() {
        for (std::size_t i = next.fetch_add(1); i < plan.folds.size(); i = next.fetch_add(1))
          run_one(i);
      }));
    for (auto& f : futures) f.get();
  } else {
    for (std::size_t i = 0; i < plan.folds.size(); ++i) run_one(i);
  }

  // Commutative merge of confusion counts, ordered by fold index.
  std::vector<std::vector<int>> pooled(static_cast<std::size_t>(classes),
                                       std::vector<int>(static_cast<std::size_t>(classes), 0));
  for (const FoldOutcome& o : outcomes)
    for (int i = 0; i < classes; ++i)
      for (int j = 0; j < classes; ++j)
        pooled[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            o.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  MetricsReport report = metrics_from_confusion(pooled);
  report.protocol = plan.protocol;
  for (const FoldOutcome& o : outcomes) report.folds.push_back(o.result);
  return report;
}

SweepResult sweep(const PreparedDataset& data, const FoldPlan& plan, const PipelineConfig& base,
                  const std::string& parameter, const std::vector<double>& values) {
  if (values.empty()) throw StrcnError("sweep: no values");
  SweepResult result;
  result.parameter = parameter;
  for (double value : values) {
    PipelineConfig cfg = base;
    if (parameter == "p") {
      cfg.mask_percentile = value;
    } else if (parameter == "feature_maps" || parameter == "M") {
      cfg.feature_maps = static_cast<int>(value);
    } else if (parameter == "rcl_depth") {
      cfg.rcl_iterations = static_cast<int>(value);
    } else {
      throw ConfigError("sweep: unknown parameter '" + parameter +
                        "' (expected p, feature_maps or rcl_depth)");
    }
    SweepRow row;
    row.value = value;
    row.report = evaluate(data, plan, cfg);
    result.rows.push_back(std::move(row));
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write sweep csv: " + path.string());
  out << "parameter,value,accuracy,f1\n";
  out.precision(17);
  for (const SweepRow& row : result.rows)
    out << result.parameter << ',' << row.value << ',' << row.report.accuracy << ','
        << row.report.f1 << '\n';
}

}  // namespace strcn
