#include <doctest.h>

#include <cmath>
#include <sstream>

#include "expltv/error.hpp"
#include "expltv/kvfile.hpp"
#include "expltv/trainer.hpp"

using namespace expltv;

namespace {

const DataSplits& small_splits() {
  static const DataSplits s = [] {
    CohortSpec spec;
    spec.n_users = 6000;
    spec.seed = 5;
    spec.whale_rate = 0.01;
    return split(generate(spec), SplitFractions{});
  }();
  return s;
}

TrainConfig quick_config(std::size_t epochs = 2) {
  TrainConfig c;
  c.whale_threshold = 20.0;
  c.epochs = epochs;
  c.learning_rate = 1e-3;
  c.seed = 4;
  return c;
}

std::vector<Matrix> values_of(ExpLtvModel& m) {
  std::vector<Matrix> out;
  const ParamStore store = m.params();
  for (const Parameter* p : store.blocks()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("config text round-trips and validates") {
  TrainConfig c = quick_config();
  c.dims.variant = Variant::sp;
  c.lambda = 7.5;
  c.seed = 0;
  const TrainConfig back = TrainConfig::from_text(c.to_text());
  CHECK(back == c);
  CHECK_THROWS_AS(TrainConfig::from_text("lambda = 15\n"), ConfigError);  // R missing
  CHECK_THROWS_AS(TrainConfig::from_text("whale_threshold = 20\nlearning_rat = 1\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("whale_threshold = 20\nlambda = -1\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("whale_threshold = 20\nvariant = huge\n"), ConfigError);
  TrainConfig no_r;
  CHECK_THROWS_AS(no_r.validate(), ConfigError);
}

TEST_CASE("one-batch dataset, one epoch gives exactly one optimizer step") {
  DataSplits s;
  s.train = small_splits().train;
  s.train.users.resize(50);
  s.valid = small_splits().valid;
  s.test = small_splits().test;
  TrainConfig c = quick_config(1);
  c.batch_size = 128;
  const TrainResult r = train(s, c);
  CHECK(r.optimizer_steps == 1);
  CHECK(r.log.epochs.back().steps == 1);
}

TEST_CASE("lambda = 0 moves the detector and the shared purchase head, not the experts") {
  TrainConfig c = quick_config(1);
  c.lambda = 0.0;
  const TrainResult r = train(small_splits(), c);
  ExpLtvModel init(FeatureSchema::fit(small_splits().train, c.seq_max_len), c.dims);
  init.init(c.seed);
  ExpLtvModel trained = r.model;
  const auto before = values_of(init);
  const auto after = values_of(trained);
  const ParamStore store = trained.params();
  const auto blocks = store.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string& name = blocks[b]->name;
    CAPTURE(name);
    if (name.starts_with("expert")) {
      CHECK(after[b] == before[b]);
    } else if (name.starts_with("gwd.") || name.starts_with("ptr.") || name.ends_with(".W")) {
      CHECK_FALSE(after[b] == before[b]);
    }
  }
}

TEST_CASE("training is deterministic and seed-sensitive") {
  const TrainConfig c = quick_config();
  const TrainResult a = train(small_splits(), c);
  const TrainResult b = train(small_splits(), c);
  CHECK(checkpoint_to_string(a.model, a.config) == checkpoint_to_string(b.model, b.config));
  CHECK(a.log.to_csv() == b.log.to_csv());
  TrainConfig other = c;
  other.seed = 5;
  const TrainResult d = train(small_splits(), other);
  CHECK(checkpoint_to_string(a.model, a.config) != checkpoint_to_string(d.model, d.config));
}

TEST_CASE("log decomposes the joint loss and selects the best validation GINI") {
  TrainConfig c = quick_config(4);
  c.lambda = 10.0;
  const TrainResult r = train(small_splits(), c);
  REQUIRE(r.log.epochs.size() >= 2);
  CHECK(r.log.epochs.front().epoch == 0);
  double best = -2.0;
  std::size_t best_epoch = 0;
  for (const EpochLog& e : r.log.epochs) {
    CHECK(std::abs(e.joint - (e.gwd + 10.0 * e.ziln)) <= 1e-9);
    if (e.epoch >= 1 && e.valid_gini && *e.valid_gini > best) {
      best = *e.valid_gini;
      best_epoch = e.epoch;
    }
  }
  CHECK(r.log.selected_epoch == best_epoch);

  // The returned model is the selected epoch's model.
  const EvalReport rep = evaluate_model(r.model, small_splits().valid, c.whale_threshold);
  CHECK(*rep.gini == best);

  const std::string csv = r.log.to_csv();
  CHECK(csv.rfind("epoch,steps,gwd_loss,ziln_loss,joint_loss,lambda,valid_gini,valid_recall_at_500,selected\n", 0) == 0);
  CHECK(r.log.to_csv(false).find("epoch,") == std::string::npos);
}

TEST_CASE("checkpoint round-trip preserves every score bit for bit") {
  const TrainResult r = train(small_splits(), quick_config());
  const std::string text = checkpoint_to_string(r.model, r.config);
  const Checkpoint back = checkpoint_from_string(text);
  CHECK(back.config == r.config);
  CHECK(back.model.schema() == r.model.schema());
  CHECK(checkpoint_to_string(back.model, back.config) == text);
  const auto s1 = r.model.score(small_splits().test);
  const auto s2 = back.model.score(small_splits().test);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);

  CHECK(text.find("\"theta1\"") != std::string::npos);
  CHECK_THROWS_AS(checkpoint_from_string("{not json"), DataError);
  CHECK_THROWS_AS(checkpoint_from_string("{\"format\": \"other\"}"), DataError);
  std::string truncated = text;
  truncated.replace(truncated.find("\"ptr.l1.W\""), 10, "\"ptr.l9.W\"");
  CHECK_THROWS_AS(checkpoint_from_string(truncated), DataError);
}

TEST_CASE("scoring rejects data whose layout differs from the checkpoint schema") {
  const TrainResult r = train(small_splits(), quick_config(1));
  Dataset wrong = small_splits().test;
  wrong.layout.dense += 1;
  for (auto& u : wrong.users) u.dense.push_back(0.0);
  CHECK_THROWS_AS(r.model.score(wrong), DataError);
}

TEST_CASE("ablation wiring") {
  const TrainConfig c = quick_config();
  const AblationResult full = run_ablation(Variant::full, small_splits(), c);
  const TrainResult plain = train(small_splits(), c);
  const EvalReport direct = evaluate_model(plain.model, small_splits().test, 20.0, {}, "full");
  CHECK(report_to_kv(full.test_report) == report_to_kv(direct));

  const AblationResult ne = run_ablation(Variant::ne, small_splits(), c);
  CHECK(ne.test_report.label == "ne");
  CHECK(ne.parameter_count < full.parameter_count);
}

TEST_CASE("sweeps") {
  const TrainConfig c = quick_config(1);
  const auto single = sweep("lambda", {15.0}, small_splits(), c);
  const TrainResult plain = train(small_splits(), c);
  EvalReport direct = evaluate_model(plain.model, small_splits().test, 20.0);
  direct.label = single[0].test_report.label;
  CHECK(report_to_kv(single[0].test_report) == report_to_kv(direct));

  const auto lam = sweep("lambda", {4, 8, 15}, small_splits(), c);
  CHECK(lam.size() == 3);
  for (const auto& row : lam) CHECK(row.seed == c.seed);

  const auto d = sweep("d", {4, 6, 8}, small_splits(), c);
  CHECK(d[0].parameter_count < d[1].parameter_count);
  CHECK(d[1].parameter_count < d[2].parameter_count);
  const std::string csv = sweep_to_csv(d);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK_THROWS_AS(sweep("epochs", {1}, small_splits(), c), ConfigError);
  CHECK_THROWS_AS(sweep("d", {2.5}, small_splits(), c), ConfigError);
}

TEST_CASE("default config on the default cohort beats the untrained model on validation GINI") {
  TrainConfig c;
  c.whale_threshold = 20.0;
  const TrainResult r = train(split(generate(CohortSpec{}), SplitFractions{}), c);
  const EpochLog& untrained = r.log.epochs.front();
  const EpochLog& selected = r.log.epochs.at(r.log.selected_epoch);
  REQUIRE(untrained.valid_gini.has_value());
  CHECK(*selected.valid_gini > *untrained.valid_gini);
}
