#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace strcn {

struct FoldResult {
  int index = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  int n_test = 0;
  bool failed = false;
  std::string error;
};

/// Pooled confusion counts and the micro-averaged metrics derived from them.
/// confusion[true_class][predicted_class].
struct MetricsReport {
  std::string protocol;
  std::vector<FoldResult> folds;
  std::vector<std::vector<int>> confusion;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::string config_hash;
};

/// Fills accuracy / micro precision / recall / F1 from a confusion matrix.
MetricsReport metrics_from_confusion(const std::vector<std::vector<int>>& confusion);

void write_report(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_report(const std::filesystem::path& path);

/// Per-fold CSV: fold,acc,f1,n_test.
void write_fold_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace strcn
