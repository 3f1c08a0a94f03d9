#pragma once

// Built-in verification suites run by `expltv selfcheck` and by the
// acceptance binary: finite-difference gradients, probability algebra of the
// combined heads, and metric/oracle agreement.

#include <cstdint>
#include <string>
#include <vector>

#include "expltv/model.hpp"

namespace expltv {

/// Tiny hand-built schema, random encoded users and targets, and an
/// initialized model with jittered biases; roughly half the users spend,
/// some are whales.
struct GradFixture {
  FeatureSchema schema;
  std::vector<EncodedUser> users;
  std::vector<Targets> targets;
  ExpLtvModel model;
};

GradFixture make_grad_fixture(std::uint64_t seed, Variant variant, std::size_t batch = 16,
                              double whale_threshold = 20.0);

struct SelfcheckOptions {
  std::size_t gradient_seeds = 10;
  std::size_t forward_passes = 10000;
  std::size_t metric_instances = 1000;
  std::size_t max_instance_size = 50;
  std::uint64_t seed = 7;
  /// Debug fault: scales every analytic gradient by 1.01.
  bool corrupt_gradient = false;
};

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::size_t checks = 0;
  std::size_t failures = 0;
  std::string detail;  // first failure, or a short summary
  double seconds = 0.0;
};

/// KL-only, ZILN-only and joint losses for every variant on 16-user batches.
SuiteResult gradient_suite(const SelfcheckOptions& opts);
/// Complementarity of the two joint probabilities and the exact Bayes
/// products on random forward passes.
SuiteResult probability_suite(const SelfcheckOptions& opts);
/// AUC, GINI, R@K and level curves against brute force, plus rank invariance.
SuiteResult metric_suite(const SelfcheckOptions& opts);

std::vector<SuiteResult> run_selfcheck(const SelfcheckOptions& opts);

}  // namespace expltv
