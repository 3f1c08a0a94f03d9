#include "expltv/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "expltv/error.hpp"
#include "expltv/kvfile.hpp"

namespace expltv {

MetricValue auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ConfigError("auc: score and label lengths differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // 1-based average rank of the tie group [i, j).
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        pos += 1.0;
        rank_sum += avg_rank;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

namespace {

// Sum over positions of the cumulative share of `truth`, minus the diagonal,
// scaled by n; ties on `key` share their mean value.
double lorenz_gini(std::span<const double> key, std::span<const double> truth, double total) {
  const std::size_t n = key.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return key[a] > key[b]; });
  double cum = 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    double group = 0.0;
    while (j < n && key[order[j]] == key[order[i]]) group += truth[order[j++]];
    const double mean = group / static_cast<double>(j - i);
    for (std::size_t k = i; k < j; ++k) {
      cum += mean;
      area += cum;
    }
    i = j;
  }
  const double nn = static_cast<double>(n);
  return (area / total - (nn + 1.0) / 2.0) / nn;
}

}  // namespace

MetricValue gini_normalized(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw ConfigError("gini: prediction and truth lengths differ");
  if (predicted.empty()) return std::nullopt;
  double total = 0.0;
  for (double t : truth) {
    if (t < 0.0) throw ConfigError("gini: true values must be nonnegative");
    total += t;
  }
  if (!(total > 0.0)) return std::nullopt;
  const double best = lorenz_gini(truth, truth, total);
  if (!(best > 0.0)) return std::nullopt;
  return lorenz_gini(predicted, truth, total) / best;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::int64_t> ids,
                               std::size_t k) {
  if (scores.size() != ids.size()) throw ConfigError("top_k: score and id lengths differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

MetricValue recall_at_k(std::span<const double> scores, std::span<const int> whales,
                        std::span<const std::int64_t> ids, std::size_t k) {
  if (scores.size() != whales.size()) throw ConfigError("recall: score and label lengths differ");
  const auto total = static_cast<std::size_t>(std::count_if(whales.begin(), whales.end(), [](int g) { return g != 0; }));
  if (total == 0) return std::nullopt;
  std::size_t hit = 0;
  for (std::size_t i : top_k(scores, ids, k))
    if (whales[i] != 0) ++hit;
  return static_cast<double>(hit) / static_cast<double>(total);
}

std::optional<LevelCurve> level_curve(std::span<const double> scores, std::span<const int> whales,
                                      std::span<const double> ltv, std::span<const std::int64_t> ids,
                                      std::size_t k) {
  const std::size_t n = scores.size();
  if (whales.size() != n || ltv.size() != n || ids.size() != n)
    throw ConfigError("level_curve: input lengths differ");
  std::vector<std::size_t> whale_idx;
  for (std::size_t i = 0; i < n; ++i)
    if (whales[i] != 0) whale_idx.push_back(i);
  if (whale_idx.empty()) return std::nullopt;
  std::sort(whale_idx.begin(), whale_idx.end(), [&](auto a, auto b) {
    if (ltv[a] != ltv[b]) return ltv[a] > ltv[b];
    return ids[a] < ids[b];
  });

  LevelCurve curve;
  const std::size_t m = whale_idx.size();
  curve.whales = m;
  curve.coarse = m < kLevels;
  std::vector<std::size_t> level_of(n, kLevels);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t level = r * kLevels / m;
    level_of[whale_idx[r]] = level;
    ++curve.level_sizes[level];
  }
  std::array<std::size_t, kLevels> detected{};
  for (std::size_t i : top_k(scores, ids, k))
    if (level_of[i] < kLevels) ++detected[level_of[i]];
  std::size_t running = 0;
  for (std::size_t j = 0; j < kLevels; ++j) {
    running += detected[j];
    curve.counts[j] = running;
  }
  return curve;
}

EvalReport evaluate(std::span<const ScoredUser> users, double whale_threshold, const EvalOptions& opts) {
  EvalReport r;
  r.users = users.size();
  std::vector<double> ltv_pred, p_gw, p_ptr, ltv;
  std::vector<int> g, s;
  std::vector<std::int64_t> ids;
  std::vector<double> sp_pred, sp_true, wh_pred, wh_true;
  for (const ScoredUser& u : users) {
    ltv_pred.push_back(u.ltv_pred);
    p_gw.push_back(u.p_gw);
    p_ptr.push_back(u.p_ptr);
    ltv.push_back(u.ltv);
    g.push_back(u.whale);
    s.push_back(u.purchased);
    ids.push_back(u.user_id);
    if (u.ltv > 0.0) {
      ++r.spenders;
      sp_pred.push_back(u.ltv_pred);
      sp_true.push_back(u.ltv);
    }
    if (u.ltv >= whale_threshold) {
      wh_pred.push_back(u.ltv_pred);
      wh_true.push_back(u.ltv);
    }
    if (u.whale != 0) ++r.whales;
  }
  r.auc = auc(p_ptr, s);
  r.gini = gini_normalized(ltv_pred, ltv);
  r.gini_spenders = gini_normalized(sp_pred, sp_true);
  r.gini_whales = gini_normalized(wh_pred, wh_true);
  for (std::size_t k : opts.recall_ks) r.recall_at[k] = recall_at_k(p_gw, g, ids, k);
  for (std::size_t k : opts.curve_ks)
    if (auto c = level_curve(p_gw, g, ltv, ids, k)) r.level_curves[k] = *c;
  return r;
}

namespace {

std::string show(const MetricValue& v) { return v ? format_double(*v) : "undefined"; }

}  // namespace

std::string report_to_kv(const EvalReport& r) {
  std::ostringstream o;
  if (!r.label.empty()) o << "label = " << r.label << '\n';
  o << "users = " << r.users << '\n'
    << "spenders = " << r.spenders << '\n'
    << "whales = " << r.whales << '\n'
    << "auc = " << show(r.auc) << '\n'
    << "gini = " << show(r.gini) << '\n'
    << "gini_spenders = " << show(r.gini_spenders) << '\n'
    << "gini_whales = " << show(r.gini_whales) << '\n';
  for (const auto& [k, v] : r.recall_at) o << "recall_at_" << k << " = " << show(v) << '\n';
  for (const auto& [k, c] : r.level_curves) {
    o << "level_curve_" << k << " = ";
    for (std::size_t j = 0; j < kLevels; ++j) o << (j ? "," : "") << c.counts[j];
    o << '\n';
    if (c.coarse) o << "level_curve_" << k << "_warning = fewer than ten whales\n";
  }
  return o.str();
}

std::string reports_to_csv(std::span<const EvalReport> reports) {
  std::vector<std::size_t> ks;
  for (const auto& r : reports)
    for (const auto& [k, v] : r.recall_at)
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  std::sort(ks.begin(), ks.end());
  std::ostringstream o;
  o << "label,users,spenders,whales,auc,gini,gini_spenders,gini_whales";
  for (std::size_t k : ks) o << ",recall_at_" << k;
  o << '\n';
  for (const auto& r : reports) {
    o << r.label << ',' << r.users << ',' << r.spenders << ',' << r.whales << ',' << show(r.auc) << ','
      << show(r.gini) << ',' << show(r.gini_spenders) << ',' << show(r.gini_whales);
    for (std::size_t k : ks) {
      auto it = r.recall_at.find(k);
      o << ',' << (it == r.recall_at.end() ? std::string("undefined") : show(it->second));
    }
    o << '\n';
  }
  return o.str();
}

std::string level_curves_to_csv(std::span<const EvalReport> reports) {
  std::ostringstream o;
  o << "label,k,level,count\n";
  for (const auto& r : reports)
    for (const auto& [k, c] : r.level_curves)
      for (std::size_t j = 0; j < kLevels; ++j)
        o << r.label << ',' << k << ',' << (j + 1) << ',' << c.counts[j] << '\n';
  return o.str();
}

}  // namespace expltv
