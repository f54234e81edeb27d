#pragma once

#include <filesystem>
#include <string>

#include "strcn/config.hpp"

namespace strcn {

/// Staged pipeline used by the CLI. Every stage writes its artifacts under a
/// content-addressed directory inside out.dir keyed by the configuration
/// that can affect it (chained with its upstream stage hash), so a re-run
/// with the same resolved config reuses the cached artifact and sweeps share
/// common upstream stages.

std::filesystem::path stage_dir(const KeyValueConfig& resolved, const std::string& stage);
bool stage_done(const std::filesystem::path& dir);

/// Generates the synthetic dataset (manifest + frames + landmarks).
std::filesystem::path run_synth(const KeyValueConfig& resolved);

/// Loads the input dataset, aligns and crops every sequence.
std::filesystem::path run_preprocess(const KeyValueConfig& resolved);

/// Applies the test-time magnification to the aligned sequences.
std::filesystem::path run_magnify(const KeyValueConfig& resolved);

/// Geometric variant: apex + onset->apex flow per sequence. Both variants:
/// a whole-dataset heat map / mask artifact for inspection (the evaluation
/// recomputes masks per fold from its train side only).
std::filesystem::path run_encode(const KeyValueConfig& resolved);

/// Trains one network on the full dataset; writes checkpoint + loss curve.
std::filesystem::path run_train(const KeyValueConfig& resolved);

/// Runs the configured protocol and writes report.json + folds.csv.
std::filesystem::path run_eval(const KeyValueConfig& resolved);

/// Repeats eval across parameter values; writes sweep.csv.
std::filesystem::path run_sweep(const KeyValueConfig& resolved, const std::string& parameter,
                                const std::vector<double>& values);

/// Prints a stored report to stdout.
void run_report(const std::filesystem::path& report_path);

}  // namespace strcn
