#pragma once

// Brute-force reference implementations used to cross-check the fast metric
// code. Quadratic or worse; meant for instances of a few dozen users.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace expltv::oracle {

/// Pair counting over every (positive, negative) pair.
std::optional<double> auc_pairs(std::span<const double> scores, std::span<const int> labels);

/// Lorenz area from expected positions: a user's position is 1 + #(strictly
/// higher) + #(tied others)/2, counted pairwise.
std::optional<double> gini_pairwise(std::span<const double> predicted, std::span<const double> truth);

/// Full sort by (score desc, id asc), then count whales among the first K.
std::optional<double> recall_full_sort(std::span<const double> scores, std::span<const int> whales,
                                       std::span<const std::int64_t> ids, std::size_t k);

/// Levels and detection decided pairwise for every whale.
std::optional<std::array<std::size_t, 10>> level_curve_enumerate(std::span<const double> scores,
                                                                 std::span<const int> whales,
                                                                 std::span<const double> ltv,
                                                                 std::span<const std::int64_t> ids,
                                                                 std::size_t k);

}  // namespace expltv::oracle
