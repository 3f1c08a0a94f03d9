#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "expltv/cohort.hpp"
#include "expltv/metrics.hpp"
#include "expltv/model.hpp"

namespace expltv {

struct TrainConfig {
  ModelDims dims;
  std::size_t layers = 2;  // every estimator is a 2-layer network; kept for the record
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  double lambda = 15.0;
  /// R. Required: NaN until set, and validate() rejects it.
  double whale_threshold = std::numeric_limits<double>::quiet_NaN();
  std::size_t epochs = 20;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  int seq_max_len = 8;

  static TrainConfig from_text(const std::string& text);
  static TrainConfig from_file(const std::string& path);
  std::string to_text() const;
  void validate() const;

  friend bool operator==(const TrainConfig& a, const TrainConfig& b);
};

struct EpochLog {
  std::size_t epoch = 0;  // 0 = before any update
  double gwd = 0.0;
  double ziln = 0.0;
  double joint = 0.0;
  MetricValue valid_gini;
  MetricValue valid_recall_500;
  std::size_t steps = 0;  // optimizer steps so far
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::size_t selected_epoch = 0;
  double lambda = 0.0;

  /// CSV with a header row; rows can be appended to an existing log.
  std::string to_csv(bool header = true) const;
};

struct TrainResult {
  ExpLtvModel model;  // parameters from the selected epoch
  TrainConfig config;
  TrainLog log;
  std::uint64_t optimizer_steps = 0;
};

std::vector<ScoredUser> score_users(const ExpLtvModel& model, const Dataset& data);

EvalReport evaluate_model(const ExpLtvModel& model, const Dataset& data, double whale_threshold,
                          const EvalOptions& opts = {}, const std::string& label = {});

/// Mini-batch joint training with validation-GINI model selection (ties go to
/// the earlier epoch) and early stopping after `patience` epochs without a
/// new best. Throws NumericError with epoch/batch on divergence.
TrainResult train(const DataSplits& splits, const TrainConfig& config);

struct AblationResult {
  Variant variant = Variant::full;
  EvalReport test_report;
  TrainLog log;
  std::size_t parameter_count = 0;
};

AblationResult run_ablation(Variant variant, const DataSplits& splits, TrainConfig config,
                            const EvalOptions& opts = {});

struct SweepRow {
  std::string param;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::size_t parameter_count = 0;
  EvalReport test_report;
};

/// One train/evaluate per value of `param` ("lambda" or "d"), all else fixed.
std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                            const DataSplits& splits, const TrainConfig& config,
                            const EvalOptions& opts = {});

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  TrainConfig config;
  ExpLtvModel model;
};

std::string checkpoint_to_string(const ExpLtvModel& model, const TrainConfig& config);
Checkpoint checkpoint_from_string(const std::string& text);
void save_checkpoint(const ExpLtvModel& model, const TrainConfig& config, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace expltv
