// expltv: generate cohorts, train, evaluate, score, ablate, sweep, export
// embeddings, and run the built-in self checks.
//
// Exit codes: 0 success, 1 check or data failure, 2 usage error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "expltv/cohort.hpp"
#include "expltv/error.hpp"
#include "expltv/kvfile.hpp"
#include "expltv/metrics.hpp"
#include "expltv/selfcheck.hpp"
#include "expltv/trainer.hpp"

using namespace expltv;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("write failed for " + path);
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? std::string(1, sep) : "") + parts[i];
  return s;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Shared training flags layered over an optional config file.
struct TrainFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<double> whale_threshold;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> embed_dim;
  std::optional<double> learning_rate;
  std::string variant;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "key = value training config");
    app->add_option("--seed", seed, "overrides config seed");
    app->add_option("--lambda", lambda, "ZILN loss weight");
    app->add_option("--whale-threshold", whale_threshold, "R");
    app->add_option("--epochs", epochs);
    app->add_option("--embed-dim", embed_dim, "d");
    app->add_option("--lr", learning_rate);
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_path.empty()) c = TrainConfig::from_file(config_path);
    if (seed) c.seed = *seed;
    if (lambda) c.lambda = *lambda;
    if (whale_threshold) c.whale_threshold = *whale_threshold;
    if (epochs) c.epochs = *epochs;
    if (embed_dim) c.dims.embed_dim = *embed_dim;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (!variant.empty()) c.dims.variant = variant_from_string(variant);
    if (std::isnan(c.whale_threshold)) c.whale_threshold = CohortSpec{}.whale_threshold;
    c.validate();
    return c;
  }
};

EvalOptions eval_options(const std::vector<std::size_t>& ks) {
  EvalOptions o;
  if (!ks.empty()) o.recall_ks = ks;
  return o;
}

Dataset select_split(const Dataset& data, const std::string& which) {
  if (which == "all") return data;
  DataSplits s = split(data, SplitFractions{});
  if (which == "train") return s.train;
  if (which == "valid") return s.valid;
  if (which == "test") return s.test;
  throw ConfigError("unknown split '" + which + "' (expected all, train, valid or test)");
}

// user_id,ltv_pred,p_gw,p_ptr joined against the labelled data by user id.
std::vector<ScoredUser> read_scores(const std::string& path, const Dataset& truth) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scores " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty scores file " + path);
  const auto header = split_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"user_id", "ltv_pred", "p_gw", "p_ptr"})
    if (!col.count(need)) throw DataError(std::string("scores file lacks column ") + need, 1);

  std::map<std::int64_t, const UserRecord*> by_id;
  for (const auto& u : truth.users) by_id[u.user_id] = &u;
  std::vector<ScoredUser> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) throw DataError("expected " + std::to_string(header.size()) + " columns", lineno);
    ScoredUser s;
    try {
      s.user_id = parse_int(cells[col["user_id"]]);
      s.ltv_pred = parse_double(cells[col["ltv_pred"]]);
      s.p_gw = parse_double(cells[col["p_gw"]]);
      s.p_ptr = parse_double(cells[col["p_ptr"]]);
    } catch (const DataError& e) {
      throw DataError(e.what(), lineno);
    }
    const auto it = by_id.find(s.user_id);
    if (it == by_id.end()) throw DataError("user " + std::to_string(s.user_id) + " not in data", lineno);
    s.ltv = it->second->ltv;
    s.whale = it->second->whale;
    s.purchased = it->second->purchased;
    out.push_back(s);
  }
  if (out.size() != truth.size())
    throw DataError("scores cover " + std::to_string(out.size()) + " of " + std::to_string(truth.size()) + " users");
  return out;
}

std::string scored_to_csv(const std::vector<ScoredUser>& users) {
  std::string s = "user_id,ltv_pred,p_gw,p_ptr\n";
  for (const auto& u : users)
    s += std::to_string(u.user_id) + "," + format_double(u.ltv_pred) + "," + format_double(u.p_gw) + "," +
         format_double(u.p_ptr) + "\n";
  return s;
}

void emit_report(const EvalReport& r, const std::string& out, const std::string& curves) {
  const std::string kv = report_to_kv(r);
  std::cout << kv;
  if (!out.empty()) write_text(out, kv);
  if (!curves.empty()) write_text(curves, level_curves_to_csv(std::span(&r, 1)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert-routed LTV prediction with a game-whale detector"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic cohort CSV and a stats sidecar");
  std::string gen_spec, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--spec", gen_spec, "cohort spec (key = value); defaults if omitted");
  gen->add_option("--out", gen_out, "dataset CSV")->required();
  gen->add_option("--seed", gen_seed, "overrides the spec seed");

  // train
  auto* tr = app.add_subcommand("train", "train on the time-ordered train/valid split");
  TrainFlags tr_flags;
  std::string tr_data, tr_out, tr_log;
  tr_flags.add_to(tr);
  tr->add_option("--variant", tr_flags.variant, "full, ne, nssb or sp");
  tr->add_option("--data", tr_data)->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--log", tr_log, "per-epoch log CSV (default <out>.log.csv)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "metrics for a checkpoint or a scores file");
  std::string ev_ckpt, ev_scores, ev_data, ev_out, ev_curves, ev_split = "all";
  std::optional<double> ev_R;
  std::vector<std::size_t> ev_ks;
  auto* ev_ck_opt = ev->add_option("--checkpoint", ev_ckpt)->check(CLI::ExistingFile);
  ev->add_option("--scores", ev_scores, "user_id,ltv_pred,p_gw,p_ptr CSV")->check(CLI::ExistingFile)->excludes(ev_ck_opt);
  ev->add_option("--data", ev_data, "labelled dataset CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", ev_split, "all, train, valid or test");
  ev->add_option("--whale-threshold", ev_R, "R (defaults to the checkpoint's)");
  ev->add_option("--k", ev_ks, "R@K grid")->delimiter(',');
  ev->add_option("--out", ev_out, "report (key = value)");
  ev->add_option("--curves", ev_curves, "level-curve CSV");

  // score
  auto* sc = app.add_subcommand("score", "per-user LTV, whale probability and purchase probability");
  std::string sc_ckpt, sc_data, sc_out;
  sc->add_option("--checkpoint", sc_ckpt)->required()->check(CLI::ExistingFile);
  sc->add_option("--data", sc_data)->required()->check(CLI::ExistingFile);
  sc->add_option("--out", sc_out)->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and test one architecture variant");
  TrainFlags ab_flags;
  std::string ab_data, ab_out, ab_curves;
  std::vector<std::size_t> ab_ks;
  ab_flags.add_to(ab);
  ab->add_option("--variant", ab_flags.variant, "full, ne, nssb or sp")->required();
  ab->add_option("--data", ab_data)->required()->check(CLI::ExistingFile);
  ab->add_option("--k", ab_ks, "R@K grid")->delimiter(',');
  ab->add_option("--out", ab_out, "report (key = value)");
  ab->add_option("--curves", ab_curves, "level-curve CSV");

  // sweep
  auto* sw = app.add_subcommand("sweep", "vary lambda or d with everything else fixed");
  TrainFlags sw_flags;
  std::string sw_data, sw_out, sw_param;
  std::vector<double> sw_values;
  std::vector<std::size_t> sw_ks;
  sw_flags.add_to(sw);
  sw->add_option("--variant", sw_flags.variant, "full, ne, nssb or sp");
  sw->add_option("--param", sw_param, "lambda or d")->required()->check(CLI::IsMember({"lambda", "d"}));
  sw->add_option("--values", sw_values)->required()->delimiter(',');
  sw->add_option("--data", sw_data)->required()->check(CLI::ExistingFile);
  sw->add_option("--k", sw_ks, "R@K grid")->delimiter(',');
  sw->add_option("--out", sw_out, "CSV, one row per value")->required();

  // export-embeddings
  auto* ex = app.add_subcommand("export-embeddings", "write e*_u rows with segment and whale labels");
  std::string ex_ckpt, ex_data, ex_out;
  ex->add_option("--checkpoint", ex_ckpt)->required()->check(CLI::ExistingFile);
  ex->add_option("--data", ex_data)->required()->check(CLI::ExistingFile);
  ex->add_option("--out", ex_out)->required();

  // selfcheck
  auto* sf = app.add_subcommand("selfcheck", "gradient, probability and metric suites on micro fixtures");
  bool sf_corrupt = false;
  sf->add_flag("--corrupt-gradient", sf_corrupt, "debug: perturb analytic gradients");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      CohortSpec spec = gen_spec.empty() ? CohortSpec{} : CohortSpec::from_file(gen_spec);
      if (gen_seed) spec.seed = *gen_seed;
      spec.validate();
      const Dataset data = generate(spec);
      write_csv(data, gen_out);
      const std::string stats = stats_report(cohort_stats(data, spec.whale_threshold), spec);
      write_text(gen_out + ".stats", stats);
      std::cout << stats;
    } else if (*tr) {
      const TrainConfig config = tr_flags.resolve();
      const DataSplits splits = split(read_csv(tr_data), SplitFractions{});
      TrainResult result = train(splits, config);
      save_checkpoint(result.model, result.config, tr_out);
      write_text(tr_log.empty() ? tr_out + ".log.csv" : tr_log, result.log.to_csv());
      std::cout << "selected_epoch = " << result.log.selected_epoch << "\n"
                << "optimizer_steps = " << result.optimizer_steps << "\n"
                << "parameters = " << result.model.parameter_count() << "\n";
    } else if (*ev) {
      const EvalOptions opts = eval_options(ev_ks);
      if (ev_ckpt.empty() == ev_scores.empty()) throw ConfigError("evaluate needs exactly one of --checkpoint or --scores");
      EvalReport report;
      if (!ev_ckpt.empty()) {
        const Checkpoint ck = load_checkpoint(ev_ckpt);
        const double R = ev_R.value_or(ck.config.whale_threshold);
        const Dataset data = select_split(read_csv(ev_data, ck.model.schema().layout()), ev_split);
        report = evaluate_model(ck.model, data, R, opts, to_string(ck.model.dims().variant));
      } else {
        if (!ev_R) throw ConfigError("--whale-threshold is required with --scores");
        const Dataset data = select_split(read_csv(ev_data), ev_split);
        const auto users = read_scores(ev_scores, data);
        report = evaluate(users, *ev_R, opts);
        report.label = "scores";
      }
      emit_report(report, ev_out, ev_curves);
    } else if (*sc) {
      const Checkpoint ck = load_checkpoint(sc_ckpt);
      const Dataset data = read_csv(sc_data, ck.model.schema().layout());
      write_text(sc_out, scored_to_csv(score_users(ck.model, data)));
      std::cout << "scored_users = " << data.size() << "\n";
    } else if (*ab) {
      const TrainConfig config = ab_flags.resolve();
      const DataSplits splits = split(read_csv(ab_data), SplitFractions{});
      const AblationResult res = run_ablation(config.dims.variant, splits, config, eval_options(ab_ks));
      emit_report(res.test_report, ab_out, ab_curves);
    } else if (*sw) {
      const TrainConfig config = sw_flags.resolve();
      const DataSplits splits = split(read_csv(sw_data), SplitFractions{});
      const auto rows = sweep(sw_param, sw_values, splits, config, eval_options(sw_ks));
      const std::string csv = sweep_to_csv(rows);
      write_text(sw_out, csv);
      std::cout << csv;
    } else if (*ex) {
      const Checkpoint ck = load_checkpoint(ex_ckpt);
      const Dataset data = read_csv(ex_data, ck.model.schema().layout());
      const auto encoded = encode_all(data, ck.model.schema());
      std::vector<std::string> header{"user_id"};
      const std::size_t d1 = ck.model.dims().latent_dim;
      for (std::size_t j = 0; j < d1; ++j) header.push_back("e_" + std::to_string(j));
      header.push_back("segment");
      header.push_back("g");
      std::string csv = join(header, ',') + "\n";
      constexpr std::size_t kChunk = 1024;
      for (std::size_t start = 0; start < encoded.size(); start += kChunk) {
        const std::size_t end = std::min(encoded.size(), start + kChunk);
        const Matrix e = ck.model.latent(std::span(encoded).subspan(start, end - start));
        for (std::size_t i = start; i < end; ++i) {
          const UserRecord& u = data.users[i];
          csv += std::to_string(u.user_id);
          for (double x : e.row(i - start)) csv += "," + format_double(x);
          csv += "," + std::to_string(static_cast<int>(u.segment)) + "," + std::to_string(u.whale) + "\n";
        }
      }
      write_text(ex_out, csv);
      std::cout << "exported_users = " << data.size() << "\nembedding_dim = " << d1 << "\n";
    } else if (*sf) {
      SelfcheckOptions opts;
      opts.corrupt_gradient = sf_corrupt;
      bool ok = true;
      for (const SuiteResult& r : run_selfcheck(opts)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.checks - r.failures << "/"
                  << r.checks << " checks, " << r.seconds << " s): " << r.detail << "\n";
        ok = ok && r.passed;
      }
      return ok ? 0 : kExitCheckFailed;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return 0;
}
