#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "expltv/metrics.hpp"
#include "expltv/oracles.hpp"
#include "expltv/selfcheck.hpp"

using namespace expltv;

namespace {

std::vector<std::int64_t> iota_ids(std::size_t n) {
  std::vector<std::int64_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

TEST_CASE("auc examples") {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(*auc(s, y) == 1.0);
  CHECK(*auc(std::vector<double>(4, 0.3), y) == 0.5);
  CHECK_FALSE(auc(s, std::vector<int>(4, 1)).has_value());

  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> sc(30);
  std::vector<int> lab(30);
  for (int i = 0; i < 30; ++i) {
    sc[i] = std::round(u(rng) * 8.0);
    lab[i] = u(rng) < 0.4;
  }
  CHECK(*auc(sc, lab) == *oracle::auc_pairs(sc, lab));
}

TEST_CASE("gini examples") {
  const std::vector<double> t{0.0, 3.0, 1.0, 10.0, 0.0, 2.5};
  CHECK(*gini_normalized(t, t) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> rev(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) rev[i] = -t[i];
  // Ties among the zeros are shared, so check the tie-free part of the claim
  // on a tie-free instance.
  const std::vector<double> tf{0.5, 3.0, 1.0, 10.0, 0.1, 2.5};
  std::vector<double> tf_rev(tf.size());
  for (std::size_t i = 0; i < tf.size(); ++i) tf_rev[i] = -tf[i];
  CHECK(*gini_normalized(tf_rev, tf) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(*gini_normalized(tf_rev, tf) == doctest::Approx(-*oracle::gini_pairwise(tf, tf)).epsilon(1e-14));
  CHECK(*gini_normalized(rev, t) < 0.0);
  CHECK_FALSE(gini_normalized(t, std::vector<double>(6, 0.0)).has_value());
  CHECK(*gini_normalized(std::vector<double>(6, 1.0), t) == doctest::Approx(0.0).epsilon(1e-14));

  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(20), y(20);
  for (int i = 0; i < 20; ++i) {
    p[i] = u(rng);
    y[i] = u(rng) < 0.5 ? 0.0 : std::exp(3.0 * u(rng));
  }
  CHECK(std::abs(*gini_normalized(p, y) - *oracle::gini_pairwise(p, y)) <= 1e-12);
  std::vector<double> neg(20);
  for (int i = 0; i < 20; ++i) neg[i] = -p[i];
  CHECK(*gini_normalized(neg, y) == doctest::Approx(-*gini_normalized(p, y)).epsilon(1e-12));
}

TEST_CASE("recall at K examples and monotonicity") {
  // 5 whales, top-3 by score holds 2 of them
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2};
  const std::vector<int> g{1, 0, 1, 1, 0, 1, 0, 1};
  const auto ids = iota_ids(8);
  CHECK(*recall_at_k(s, g, ids, 3) == 0.4);
  CHECK(*recall_at_k(s, g, ids, 8) == 1.0);
  CHECK(*recall_at_k(s, g, ids, 100) == 1.0);
  CHECK(*recall_at_k(s, g, ids, 0) == 0.0);
  CHECK_FALSE(recall_at_k(s, std::vector<int>(8, 0), ids, 3).has_value());

  // ties go to the smaller id
  const std::vector<double> tied(4, 1.0);
  CHECK(top_k(tied, std::vector<std::int64_t>{9, 3, 7, 1}, 2) == std::vector<std::size_t>{3, 1});

  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> sc(50);
  std::vector<int> w(50);
  for (int i = 0; i < 50; ++i) {
    sc[i] = std::round(u(rng) * 20.0);
    w[i] = u(rng) < 0.2;
  }
  w[0] = 1;
  const auto id50 = iota_ids(50);
  CHECK(*recall_at_k(sc, w, id50, 10) == *oracle::recall_full_sort(sc, w, id50, 10));
  double prev = 0.0;
  for (std::size_t k = 0; k <= 50; ++k) {
    const double r = *recall_at_k(sc, w, id50, k);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("level curve examples") {
  std::mt19937_64 rng(40);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 120;
  std::vector<double> s(n), ltv(n);
  std::vector<int> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = u(rng);
    g[i] = i < 40;  // 40 whales
    ltv[i] = g[i] ? 20.0 + std::floor(100.0 * u(rng)) : 5.0 * u(rng);
  }
  const auto ids = iota_ids(n);

  const auto all = level_curve(s, g, ltv, ids, n);
  REQUIRE(all.has_value());
  CHECK_FALSE(all->coarse);
  std::size_t cum = 0;
  for (std::size_t j = 0; j < kLevels; ++j) {
    CHECK(all->level_sizes[j] == 4);
    cum += all->level_sizes[j];
    CHECK(all->counts[j] == cum);
  }
  const auto none = level_curve(s, g, ltv, ids, 0);
  for (std::size_t c : none->counts) CHECK(c == 0);

  for (std::size_t k : {10, 30, 60}) {
    const auto lc = level_curve(s, g, ltv, ids, k);
    CHECK(lc->counts == *oracle::level_curve_enumerate(s, g, ltv, ids, k));
  }

  std::vector<int> few(n, 0);
  few[3] = few[7] = few[11] = 1;
  const auto coarse = level_curve(s, few, ltv, ids, n);
  CHECK(coarse->coarse);
  CHECK(coarse->counts[kLevels - 1] == 3);
  CHECK_FALSE(level_curve(s, std::vector<int>(n, 0), ltv, ids, 5).has_value());
}

TEST_CASE("metrics agree with brute force on randomized instances and are rank invariant") {
  SelfcheckOptions opts;
  opts.metric_instances = 1000;
  const SuiteResult r = metric_suite(opts);
  CHECK_MESSAGE(r.passed, r.detail);
  CHECK(r.checks > 10000);
}

TEST_CASE("evaluate on a perfectly scored set") {
  std::vector<ScoredUser> users;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    ScoredUser s;
    s.user_id = i;
    s.ltv = u(rng) < 0.7 ? 0.0 : std::exp(4.0 * u(rng));
    s.purchased = s.ltv > 0.0;
    s.whale = s.ltv >= 20.0;
    s.ltv_pred = s.ltv;
    s.p_gw = s.ltv;
    s.p_ptr = s.purchased;
    users.push_back(s);
  }
  EvalOptions opts;
  opts.recall_ks = {10, 500};
  const EvalReport r = evaluate(users, 20.0, opts);
  CHECK(*r.gini == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(*r.gini_spenders == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(*r.gini_whales == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(*r.auc == 1.0);
  CHECK(*r.recall_at.at(10) == std::min(1.0, 10.0 / static_cast<double>(r.whales)));
  CHECK(*r.recall_at.at(500) == 1.0);

  const std::string kv = report_to_kv(r);
  CHECK(kv.find("recall_at_500 = 1\n") != std::string::npos);
  CHECK(kv.find("level_curve_500") != std::string::npos);
}

TEST_CASE("undefined metrics print as undefined") {
  std::vector<ScoredUser> users(5);
  for (int i = 0; i < 5; ++i) users[i].user_id = i;
  const EvalReport r = evaluate(users, 20.0);
  CHECK_FALSE(r.auc.has_value());
  CHECK_FALSE(r.gini.has_value());
  CHECK(report_to_kv(r).find("auc = undefined") != std::string::npos);
}
