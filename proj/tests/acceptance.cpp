// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "expltv/cohort.hpp"
#include "expltv/model.hpp"
#include "expltv/selfcheck.hpp"
#include "expltv/trainer.hpp"

using namespace expltv;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS " : "FAIL ") << id << ' ' << title << ": " << detail << std::endl;
}

template <typename F>
void guarded(int id, const std::string& title, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, title, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

void gradients() {
  const auto t0 = Clock::now();
  SelfcheckOptions opts;
  opts.gradient_seeds = 10;
  const SuiteResult r = gradient_suite(opts);
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", r.passed && secs < 60.0,
         std::to_string(r.checks - r.failures) + "/" + std::to_string(r.checks) + " loss/variant/seed checks, " +
             r.detail + ", " + fmt(secs, 3) + " s");
}

void probability() {
  SelfcheckOptions opts;
  opts.forward_passes = 10000;
  const SuiteResult r = probability_suite(opts);
  report(2, "probability algebra", r.passed, r.detail);
}

void gwptr_mapping() {
  const double R = 20.0;
  bool ok = gwptr_target(0.0, R) == 0.0;
  ok = ok && std::abs(gwptr_target(R, R) - (1.0 - std::exp(-1.0))) <= 1e-12;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 5.0 * R);
  std::size_t pairs = 0;
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    ok = ok && gwptr_target(a, R) < gwptr_target(b, R);
    ++pairs;
  }
  for (int i = 1; i <= 1000; ++i) ok = ok && gwptr_target(0.1 * (i - 1), R) < gwptr_target(0.1 * i, R);
  ok = ok && whale_label(R, R) == 1 && whale_label(std::nextafter(R, 0.0), R) == 0;
  report(3, "GWPTR mapping", ok,
         "t(R,R) - (1 - 1/e) = " + fmt(gwptr_target(R, R) - (1.0 - std::exp(-1.0)), 3) + ", " +
             std::to_string(pairs + 1000) + " ordered pairs strictly increasing, whale label inclusive at R");
}

// Single-expert model fed one repeated user so the heads emit one (p, mu,
// sigma); only the purchase head and the expert are optimized.
void ziln_recovery() {
  const auto t0 = Clock::now();
  const double p_true = 0.3, mu_true = 1.0, sigma_true = 0.5;
  const std::size_t n = 50000;
  GradFixture f = make_grad_fixture(3, Variant::ne, 1);
  std::vector<EncodedUser> users(n, f.users[0]);
  std::vector<Targets> targets(n);
  std::mt19937_64 rng(2024);
  std::bernoulli_distribution spends(p_true);
  std::normal_distribution<double> normal(mu_true, sigma_true);
  double positives = 0.0, log_sum = 0.0, log_sq = 0.0;
  for (Targets& t : targets) {
    if (spends(rng)) t.ltv = std::exp(normal(rng));
    t.purchased = t.ltv > 0.0 ? 1 : 0;
    t.gwptr = gwptr_target(t.ltv, 20.0);
    if (t.ltv > 0.0) {
      positives += 1.0;
      log_sum += std::log(t.ltv);
      log_sq += std::log(t.ltv) * std::log(t.ltv);
    }
  }
  const double mle_mu = log_sum / positives;
  const double mle_sigma = std::sqrt(log_sq / positives - mle_mu * mle_mu);

  ParamStore all = f.model.params();
  const std::vector<std::string> prefixes{"ptr.", "expert0."};
  ParamStore heads = all.select(prefixes);
  AdamOptions ao;
  ao.learning_rate = 0.02;
  AdamState adam(heads, ao);
  const LossWeights weights{0.0, 1.0};
  const std::size_t steps = 600;
  for (std::size_t s = 0; s < steps; ++s) {
    all.zero_grads();
    f.model.loss_and_backward(users, targets, weights);
    adam.step(heads);
  }
  const Prediction pr = f.model.forward(std::span<const EncodedUser>(users.data(), 1), nullptr)[0];
  const double p = pr.p_ptr, mu = pr.mu, sigma = pr.sigma;
  const double ep = std::abs(p / p_true - 1.0), em = std::abs(mu / mu_true - 1.0),
               es = std::abs(sigma / sigma_true - 1.0);
  const double secs = seconds_since(t0);
  report(4, "ZILN parameter recovery", ep <= 0.05 && em <= 0.05 && es <= 0.05 && secs < 300.0,
         "p " + fmt(p) + " (" + fmt(100 * ep, 2) + "%), mu " + fmt(mu) + " (" + fmt(100 * em, 2) + "%), sigma " +
             fmt(sigma) + " (" + fmt(100 * es, 2) + "%); sample MLE " + fmt(positives / n) + "/" + fmt(mle_mu) +
             "/" + fmt(mle_sigma) + ", " + std::to_string(steps) + " full-batch steps, " + fmt(secs, 3) + " s");
}

void metrics() {
  SelfcheckOptions opts;
  opts.metric_instances = 1000;
  opts.max_instance_size = 50;
  const SuiteResult r = metric_suite(opts);
  report(5, "metric-oracle equivalence", r.passed,
         std::to_string(r.checks - r.failures) + "/" + std::to_string(r.checks) + " checks, " + r.detail);
}

void expert_routing() {
  const auto t0 = Clock::now();
  double gini_full = 0, gini_ne = 0, r_full = 0, r_ne = 0, r_nssb = 0;
  std::ostringstream per_seed;
  EvalOptions eo;
  eo.recall_ks = {500};
  eo.curve_ks = {};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CohortSpec spec;
    spec.seed = seed;
    const DataSplits splits = split(generate(spec), SplitFractions{});
    TrainConfig c;
    c.whale_threshold = spec.whale_threshold;
    c.seed = seed;
    const auto full = run_ablation(Variant::full, splits, c, eo).test_report;
    const auto ne = run_ablation(Variant::ne, splits, c, eo).test_report;
    const auto nssb = run_ablation(Variant::nssb, splits, c, eo).test_report;
    const auto v = [](const MetricValue& m) { return m.value_or(0.0); };
    gini_full += v(full.gini) / 3;
    gini_ne += v(ne.gini) / 3;
    r_full += v(full.recall_at.at(500)) / 3;
    r_ne += v(ne.recall_at.at(500)) / 3;
    r_nssb += v(nssb.recall_at.at(500)) / 3;
    per_seed << " [seed " << seed << ": GINI " << fmt(v(full.gini)) << "/" << fmt(v(ne.gini)) << "/"
             << fmt(v(nssb.gini)) << ", R@500 " << fmt(v(full.recall_at.at(500))) << "/"
             << fmt(v(ne.recall_at.at(500))) << "/" << fmt(v(nssb.recall_at.at(500))) << "]";
  }
  const double secs = seconds_since(t0);
  const bool ok = gini_full >= gini_ne && r_full >= r_ne && r_full >= r_nssb && secs < 1800.0;
  report(6, "expert-routing benefit", ok,
         "mean GINI full " + fmt(gini_full) + " vs ne " + fmt(gini_ne) + "; mean R@500 full " + fmt(r_full) +
             " vs ne " + fmt(r_ne) + " vs nssb " + fmt(r_nssb) + "; full/ne/nssb" + per_seed.str() + ", " +
             fmt(secs, 4) + " s");
}

void gate_linearity() {
  bool ok = true;
  double worst = 0.0;
  std::size_t cases = 0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::uint64_t s = 0; s < 50; ++s) {
    GradFixture f = make_grad_fixture(100 + s, Variant::full, 1);
    Matrix latent(1, f.model.dims().latent_dim);
    for (double& x : latent.values()) x = normal(rng);
    ForwardTrace trace;
    f.model.forward_latent(latent, &trace);
    HeadOutputs h = trace.heads[0];  // experts frozen at this point
    for (std::size_t k = 0; k < 2; ++k) {
      h.gate = {k == 0 ? 1.0 : 0.0, k == 0 ? 0.0 : 1.0};
      const Prediction p = combine(h, Variant::full);
      ok = ok && p.mu == h.mu[k] && p.sigma == h.sigma[k];
    }
    const double slope = h.mu[0] - h.mu[1];
    for (int i = 0; i <= 20; ++i) {
      const double y0 = i / 20.0;
      h.gate = {y0, 1.0 - y0};
      const double mu = combine(h, Variant::full).mu;
      const double err = std::abs(mu - (h.mu[1] + slope * y0));
      worst = std::max(worst, err);
      ok = ok && err <= 1e-12 * std::max(1.0, std::abs(h.mu[0]) + std::abs(h.mu[1]));
      ++cases;
    }
  }
  report(7, "gate saturation and mixing linearity", ok,
         "one-hot gates reproduce each expert exactly on 50 models; " + std::to_string(cases) +
             " gate values on the line through the experts, max deviation " + fmt(worst, 3));
}

void determinism() {
  CohortSpec spec;
  spec.n_users = 8000;
  spec.seed = 9;
  spec.whale_rate = 0.01;
  const Dataset a = generate(spec), b = generate(spec);
  const bool gen_ok = to_csv(a) == to_csv(b);
  CohortSpec other = spec;
  other.seed = 10;
  const bool gen_differs = to_csv(generate(other)) != to_csv(a);

  const DataSplits splits = split(a, SplitFractions{});
  TrainConfig c;
  c.whale_threshold = spec.whale_threshold;
  c.epochs = 3;
  const TrainResult r1 = train(splits, c), r2 = train(splits, c);
  const std::string ck1 = checkpoint_to_string(r1.model, r1.config);
  const bool ckpt_ok = ck1 == checkpoint_to_string(r2.model, r2.config);

  const Checkpoint back = checkpoint_from_string(ck1);
  const auto s1 = r1.model.score(a);
  const auto s2 = back.model.score(a);
  const bool round_trip = s1 == s2 && checkpoint_to_string(back.model, back.config) == ck1;
  report(8, "determinism and persistence", gen_ok && gen_differs && ckpt_ok && round_trip,
         std::string("generation ") + (gen_ok ? "identical" : "differs") + " for equal seeds" +
             (gen_differs ? " and differs across seeds" : " but not across seeds") + "; checkpoints " +
             (ckpt_ok ? "bit-identical" : "differ") + "; round-trip scores " +
             (round_trip ? "bit-exact" : "differ") + " on " + std::to_string(s1.size()) + " users");
}

void calibration() {
  bool ok = true;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CohortSpec spec;
    spec.seed = seed;
    const CohortStats st = cohort_stats(generate(spec), spec.whale_threshold);
    const double ep = st.purchase_rate / spec.purchase_rate - 1.0;
    const double ew = st.whale_rate / spec.whale_rate - 1.0;
    ok = ok && st.n_users >= 50000 && std::abs(ep) <= 0.2 && std::abs(ew) <= 0.2 && st.top1pct_spend_share > 0.25;
    detail << (seed > 1 ? "; " : "") << "seed " << seed << " n " << st.n_users << ": purchase "
           << fmt(st.purchase_rate) << " (" << fmt(100 * ep, 2) << "%), whale " << fmt(st.whale_rate) << " ("
           << fmt(100 * ew, 2) << "%), top-1% share " << fmt(st.top1pct_spend_share);
  }
  report(9, "synthetic calibration", ok, detail.str());
}

}  // namespace

int main() {
  guarded(1, "gradient correctness", gradients);
  guarded(2, "probability algebra", probability);
  guarded(3, "GWPTR mapping", gwptr_mapping);
  guarded(4, "ZILN parameter recovery", ziln_recovery);
  guarded(5, "metric-oracle equivalence", metrics);
  guarded(6, "expert-routing benefit", expert_routing);
  guarded(7, "gate saturation and mixing linearity", gate_linearity);
  guarded(8, "determinism and persistence", determinism);
  guarded(9, "synthetic calibration", calibration);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
