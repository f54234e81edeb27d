#include "strcn/report.hpp"

#include <fstream>

#include <json.hpp>

#include "strcn/errors.hpp"

namespace strcn {

MetricsReport metrics_from_confusion(const std::vector<std::vector<int>>& confusion) {
  MetricsReport r;
  r.confusion = confusion;
  const int c = static_cast<int>(confusion.size());
  long total = 0, tp = 0, tp_fp = 0, tp_fn = 0;
  for (int i = 0; i < c; ++i) {
    if (static_cast<int>(confusion[i].size()) != c)
      throw ShapeError("metrics: confusion matrix must be square");
    tp += confusion[i][i];
    long row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += confusion[i][j];
      col += confusion[j][i];
      total += confusion[i][j];
    }
    tp_fn += row;  // TP_i + FN_i
    tp_fp += col;  // TP_i + FP_i
  }

  r.accuracy = total > 0 ? static_cast<double>(tp) / total : 0.0;
  r.precision = tp_fp > 0 ? static_cast<double>(tp) / tp_fp : 0.0;
  r.recall = tp_fn > 0 ? static_cast<double>(tp) / tp_fn : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  j["protocol"] = report.protocol;
  j["accuracy"] = report.accuracy;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  j["confusion_matrix"] = report.confusion;
  j["config_hash"] = report.config_hash;
  j["folds"] = nlohmann::json::array();
  for (const FoldResult& f : report.folds) {
    nlohmann::json jf;
    jf["fold"] = f.index;
    jf["accuracy"] = f.accuracy;
    jf["f1"] = f.f1;
    jf["n_test"] = f.n_test;
    jf["failed"] = f.failed;
    if (f.failed) jf["error"] = f.error;
    j["folds"].push_back(jf);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("report write failed: " + path.string());
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path.string());
  nlohmann::json j;
  in >> j;

  MetricsReport r;
  r.protocol = j.at("protocol").get<std::string>();
  r.accuracy = j.at("accuracy").get<double>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.confusion = j.at("confusion_matrix").get<std::vector<std::vector<int>>>();
  r.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& jf : j.at("folds")) {
    FoldResult f;
    f.index = jf.at("fold").get<int>();
    f.accuracy = jf.at("accuracy").get<double>();
    f.f1 = jf.at("f1").get<double>();
    f.n_test = jf.at("n_test").get<int>();
    f.failed = jf.value("failed", false);
    f.error = jf.value("error", std::string());
    r.folds.push_back(f);
  }
  return r;
}

void write_fold_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write fold csv: " + path.string());
  out << "fold,acc,f1,n_test\n";
  out.precision(17);
  for (const FoldResult& f : report.folds)
    out << f.index << ',' << f.accuracy << ',' << f.f1 << ',' << f.n_test << '\n';
}

}  // namespace strcn
