#pragma once

// Ranking metrics for LTV prediction and whale detection.
//
// Undefined metrics (one class only, zero whales, all-zero spend) come back
// as std::nullopt rather than a sentinel number.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace expltv {

using MetricValue = std::optional<double>;

/// P(score of a random positive > score of a random negative), ties count 1/2.
MetricValue auc(std::span<const double> scores, std::span<const int> labels);

/// Lorenz-area normalized GINI: the gain curve of `truth` ordered by
/// `predicted` (descending) divided by the same curve ordered by `truth`.
/// Users tied on `predicted` share the mean of their true values, i.e. the
/// expectation over every ordering of the tie group.
MetricValue gini_normalized(std::span<const double> predicted, std::span<const double> truth);

/// Indices of the K highest scores; ties go to the smaller user id.
std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::int64_t> ids,
                               std::size_t k);

/// |top-K by score  and  whales| / |whales|. K is capped at n.
MetricValue recall_at_k(std::span<const double> scores, std::span<const int> whales,
                        std::span<const std::int64_t> ids, std::size_t k);

inline constexpr std::size_t kLevels = 10;

struct LevelCurve {
  /// counts[j]: detected whales whose LTV level is j or higher, where level 0
  /// is the top tenth of whales by LTV.
  std::array<std::size_t, kLevels> counts{};
  std::array<std::size_t, kLevels> level_sizes{};
  std::size_t whales = 0;
  bool coarse = false;  // fewer than ten whales: some levels are empty
};

/// Whales are ranked by true LTV (ties by user id) and cut into ten
/// contiguous levels; returns nullopt when there are no whales.
std::optional<LevelCurve> level_curve(std::span<const double> scores, std::span<const int> whales,
                                      std::span<const double> ltv, std::span<const std::int64_t> ids,
                                      std::size_t k);

struct ScoredUser {
  std::int64_t user_id = 0;
  double ltv_pred = 0.0;
  double p_gw = 0.0;
  double p_ptr = 0.0;
  double ltv = 0.0;
  int whale = 0;
  int purchased = 0;
};

struct EvalOptions {
  std::vector<std::size_t> recall_ks{500, 1000, 2000, 5000};
  std::vector<std::size_t> curve_ks{500, 1000};
};

struct EvalReport {
  std::string label;
  std::size_t users = 0;
  std::size_t spenders = 0;
  std::size_t whales = 0;
  MetricValue auc;
  MetricValue gini;
  MetricValue gini_spenders;  // users with LTV > 0
  MetricValue gini_whales;    // users with LTV >= R
  std::map<std::size_t, MetricValue> recall_at;
  std::map<std::size_t, LevelCurve> level_curves;
};

EvalReport evaluate(std::span<const ScoredUser> users, double whale_threshold,
                    const EvalOptions& opts = {});

/// `key = value` lines; undefined metrics print as "undefined".
std::string report_to_kv(const EvalReport& r);
/// One header plus one row per report.
std::string reports_to_csv(std::span<const EvalReport> reports);
/// Long-format CSV: label,k,level,count.
std::string level_curves_to_csv(std::span<const EvalReport> reports);

}  // namespace expltv
