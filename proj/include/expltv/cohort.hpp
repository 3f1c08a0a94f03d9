#pragma once

// User records, the CSV interchange format, chronological splits, and the
// synthetic cohort generator that stands in for production logs.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace expltv {

/// Ground-truth latent segment. Recorded for auditing, never used as a feature.
enum class Segment : int { unknown = -1, non_spender = 0, low_spender = 1, whale = 2 };

struct UserRecord {
  std::int64_t user_id = 0;
  int day = 0;
  std::vector<double> dense;
  std::vector<int> categorical;
  std::vector<std::vector<int>> sequences;
  double ltv = 0.0;     // T-day spend
  int purchased = 0;    // s: 1 iff ltv > 0
  int whale = 0;        // g: 1 iff ltv >= R
  double gwptr = 0.0;   // 1 - exp(-ltv / R)
  Segment segment = Segment::unknown;

  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

/// Column counts of the CSV layout.
struct DataLayout {
  std::size_t dense = 0;
  std::size_t categorical = 0;
  std::size_t sequences = 0;

  friend bool operator==(const DataLayout&, const DataLayout&) = default;
};

struct Dataset {
  DataLayout layout;
  std::vector<UserRecord> users;

  std::size_t size() const noexcept { return users.size(); }
  bool empty() const noexcept { return users.empty(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// p^gwptr = 1 - exp(-ltv / R). Throws DataError on ltv < 0 or R <= 0.
double gwptr_target(double ltv, double whale_threshold);

/// g = 1 iff ltv >= R.
int whale_label(double ltv, double whale_threshold);

/// Throws DataError naming the first row whose s/g/gwptr labels disagree
/// with its LTV under threshold R.
void check_label_consistency(const Dataset& data, double whale_threshold);

// ---------------------------------------------------------------------------
// CSV

std::vector<std::string> csv_header(const DataLayout& layout);

void write_csv(const Dataset& data, const std::string& path);
std::string to_csv(const Dataset& data);

/// Reads a dataset, inferring the layout from the header.
Dataset read_csv(const std::string& path);
/// Reads a dataset and rejects headers that do not match `layout`.
Dataset read_csv(const std::string& path, const DataLayout& layout);
Dataset parse_csv(const std::string& text, const std::optional<DataLayout>& layout = std::nullopt);

// ---------------------------------------------------------------------------
// Splits

struct SplitFractions {
  double train = 40.0 / 46.0;
  double valid = 3.0 / 46.0;
  double test = 3.0 / 46.0;
};

struct DataSplits {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// Time-ordered: day cut points at round(cumulative fraction * n_days), where
/// n_days = max day + 1; otherwise cut by record position. Record order inside
/// each part follows the input. Throws DataError when a part with a nonzero
/// fraction ends up empty.
DataSplits split(const Dataset& data, const SplitFractions& fractions, bool time_ordered = true);

// ---------------------------------------------------------------------------
// Synthetic generator

struct SegmentSpend {
  double mu = 0.0;     // mean of log-spend
  double sigma = 1.0;  // sd of log-spend
};

struct CohortSpec {
  std::size_t n_users = 100000;
  double purchase_rate = 0.118;
  double whale_rate = 0.00459;
  double whale_threshold = 20.0;  // R
  std::uint64_t seed = 1;
  int n_days = 46;

  std::size_t n_dense = 4;
  std::vector<int> cat_cardinalities{6, 10};
  int seq_vocab = 30;
  int seq_max_len = 8;

  SegmentSpend low{0.7, 0.9};
  SegmentSpend whale{4.0, 1.0};

  /// Scales every feature shift; 0 makes features pure noise.
  double signal = 0.7;
  /// Mean shift of each dense feature for low spenders and whales
  /// (non-spenders are centred at 0). Length n_dense.
  std::vector<double> dense_shift_low{0.8, 0.3, 0.4, 0.0};
  std::vector<double> dense_shift_whale{1.1, 1.4, 0.9, 0.0};
  /// Loading of the spend residual on dense_1 for spenders.
  double value_loading = 0.5;
  double cat_affinity = 0.3;
  double seq_affinity = 0.3;

  /// Loads `key = value` overrides on top of the defaults.
  static CohortSpec from_file(const std::string& path);
  static CohortSpec from_text(const std::string& text);
  std::string to_text() const;

  /// Throws ConfigError when the spec is invalid or its rates are infeasible.
  void validate() const;
};

/// Latent segment probabilities that realize the spec's purchase and whale
/// rates in expectation.
struct SegmentMix {
  double whale = 0.0;
  double low = 0.0;
  double non = 1.0;
};

SegmentMix solve_segment_mix(const CohortSpec& spec);

Dataset generate(const CohortSpec& spec);

struct CohortStats {
  std::size_t n_users = 0;
  double purchase_rate = 0.0;
  double whale_rate = 0.0;
  double top1pct_spend_share = 0.0;  // share of spend held by the top 1% of spenders
  std::array<std::size_t, 3> segment_counts{};
  std::array<double, 3> segment_log_mean{};
  std::array<double, 3> segment_log_sd{};
};

CohortStats cohort_stats(const Dataset& data, double whale_threshold);

/// Stats sidecar text comparing realized rates to the spec targets.
std::string stats_report(const CohortStats& stats, const CohortSpec& spec);

}  // namespace expltv
