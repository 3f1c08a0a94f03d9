#include "expltv/oracles.hpp"

#include <algorithm>
#include <numeric>

namespace expltv::oracle {

std::optional<double> auc_pairs(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  if (pairs == 0.0) return std::nullopt;
  return wins / pairs;
}

namespace {

double raw_gini(std::span<const double> key, std::span<const double> truth) {
  const std::size_t n = key.size();
  double total = 0.0;
  for (double t : truth) total += t;
  // Cumulative-gain area = sum_i truth_i * (n + 1 - position_i).
  double area = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double above = 0.0;
    double tied = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (key[j] > key[i]) above += 1.0;
      else if (key[j] == key[i]) tied += 1.0;
    }
    const double position = 1.0 + above + 0.5 * tied;
    area += truth[i] * (static_cast<double>(n) + 1.0 - position);
  }
  const double nn = static_cast<double>(n);
  return (area / total - (nn + 1.0) / 2.0) / nn;
}

}  // namespace

std::optional<double> gini_pairwise(std::span<const double> predicted, std::span<const double> truth) {
  double total = 0.0;
  for (double t : truth) total += t;
  if (predicted.empty() || !(total > 0.0)) return std::nullopt;
  const double best = raw_gini(truth, truth);
  if (!(best > 0.0)) return std::nullopt;
  return raw_gini(predicted, truth) / best;
}

std::optional<double> recall_full_sort(std::span<const double> scores, std::span<const int> whales,
                                       std::span<const std::int64_t> ids, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : ids[a] < ids[b];
  });
  std::size_t total = 0, hit = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (whales[order[r]] == 0) continue;
    ++total;
    if (r < k) ++hit;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(total);
}

std::optional<std::array<std::size_t, 10>> level_curve_enumerate(std::span<const double> scores,
                                                                 std::span<const int> whales,
                                                                 std::span<const double> ltv,
                                                                 std::span<const std::int64_t> ids,
                                                                 std::size_t k) {
  const std::size_t n = scores.size();
  std::size_t m = 0;
  for (int g : whales) m += g != 0 ? 1 : 0;
  if (m == 0) return std::nullopt;
  std::array<std::size_t, 10> curve{};
  for (std::size_t i = 0; i < n; ++i) {
    if (whales[i] == 0) continue;
    std::size_t whale_rank = 0;  // whales strictly ahead by (ltv desc, id asc)
    std::size_t score_rank = 0;  // users strictly ahead by (score desc, id asc)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (whales[j] != 0 && (ltv[j] > ltv[i] || (ltv[j] == ltv[i] && ids[j] < ids[i]))) ++whale_rank;
      if (scores[j] > scores[i] || (scores[j] == scores[i] && ids[j] < ids[i])) ++score_rank;
    }
    if (score_rank >= k) continue;
    const std::size_t level = whale_rank * 10 / m;
    for (std::size_t l = level; l < 10; ++l) ++curve[l];
  }
  return curve;
}

}  // namespace expltv::oracle
