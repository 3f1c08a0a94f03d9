#include "expltv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "expltv/error.hpp"
#include "expltv/kvfile.hpp"

namespace expltv {
namespace {

const std::vector<std::string> kConfigKeys{
    "embed_dim", "latent_dim", "hidden",   "layers", "learning_rate", "batch_size", "lambda",
    "whale_threshold", "epochs", "patience", "seed", "variant", "seq_max_len"};

std::size_t positive_size(const KvFile& kv, const std::string& key, std::size_t fallback) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw ConfigError(key + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

}  // namespace

TrainConfig TrainConfig::from_text(const std::string& text) {
  const KvFile kv = KvFile::parse(text);
  kv.require_known(kConfigKeys);
  if (!kv.has("whale_threshold")) throw ConfigError("whale_threshold (R) is required");
  TrainConfig c;
  c.dims.embed_dim = positive_size(kv, "embed_dim", c.dims.embed_dim);
  c.dims.latent_dim = positive_size(kv, "latent_dim", c.dims.latent_dim);
  c.dims.hidden = positive_size(kv, "hidden", c.dims.hidden);
  c.dims.variant = variant_from_string(kv.get_string("variant", to_string(c.dims.variant)));
  c.layers = positive_size(kv, "layers", c.layers);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.batch_size = positive_size(kv, "batch_size", c.batch_size);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.whale_threshold = kv.get_double("whale_threshold", c.whale_threshold);
  c.epochs = positive_size(kv, "epochs", c.epochs);
  c.patience = positive_size(kv, "patience", c.patience);
  const long long seed = kv.get_int("seed", static_cast<long long>(c.seed));
  if (seed < 0) throw ConfigError("seed must be nonnegative");
  c.seed = static_cast<std::uint64_t>(seed);
  c.seq_max_len = static_cast<int>(kv.get_int("seq_max_len", c.seq_max_len));
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return from_text(text.str());
  } catch (const DataError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream o;
  o << "embed_dim = " << dims.embed_dim << '\n'
    << "latent_dim = " << dims.latent_dim << '\n'
    << "hidden = " << dims.hidden << '\n'
    << "layers = " << layers << '\n'
    << "variant = " << to_string(dims.variant) << '\n'
    << "learning_rate = " << format_double(learning_rate) << '\n'
    << "batch_size = " << batch_size << '\n'
    << "lambda = " << format_double(lambda) << '\n'
    << "whale_threshold = " << format_double(whale_threshold) << '\n'
    << "epochs = " << epochs << '\n'
    << "patience = " << patience << '\n'
    << "seed = " << seed << '\n'
    << "seq_max_len = " << seq_max_len << '\n';
  return o.str();
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(whale_threshold > 0.0)) throw ConfigError("whale_threshold (R) must be set to a positive value");
  if (layers != 2) throw ConfigError("only 2-layer estimators are supported");
  if (dims.embed_dim < 1 || dims.latent_dim < 1 || dims.hidden < 1)
    throw ConfigError("embed_dim, latent_dim and hidden must be positive");
  if (seq_max_len < 1) throw ConfigError("seq_max_len must be at least 1");
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  // NaN thresholds compare unequal on purpose: an unset R never matches.
  return a.dims == b.dims && a.layers == b.layers && a.learning_rate == b.learning_rate &&
         a.batch_size == b.batch_size && a.lambda == b.lambda && a.whale_threshold == b.whale_threshold &&
         a.epochs == b.epochs && a.patience == b.patience && a.seed == b.seed &&
         a.seq_max_len == b.seq_max_len;
}

std::string TrainLog::to_csv(bool header) const {
  std::ostringstream o;
  if (header) o << "epoch,steps,gwd_loss,ziln_loss,joint_loss,lambda,valid_gini,valid_recall_at_500,selected\n";
  auto show = [](const MetricValue& v) { return v ? format_double(*v) : std::string("undefined"); };
  for (const auto& e : epochs) {
    o << e.epoch << ',' << e.steps << ',' << format_double(e.gwd) << ',' << format_double(e.ziln) << ','
      << format_double(e.joint) << ',' << format_double(lambda) << ',' << show(e.valid_gini) << ','
      << show(e.valid_recall_500) << ',' << (e.epoch == selected_epoch ? 1 : 0) << '\n';
  }
  return o.str();
}

std::vector<ScoredUser> score_users(const ExpLtvModel& model, const Dataset& data) {
  const auto scores = model.score(data);
  std::vector<ScoredUser> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const UserRecord& u = data.users[i];
    out.push_back({u.user_id, scores[i].ltv, scores[i].p_gw, scores[i].p_ptr, u.ltv, u.whale, u.purchased});
  }
  return out;
}

EvalReport evaluate_model(const ExpLtvModel& model, const Dataset& data, double whale_threshold,
                          const EvalOptions& opts, const std::string& label) {
  const auto scored = score_users(model, data);
  EvalReport r = evaluate(scored, whale_threshold, opts);
  r.label = label;
  return r;
}

namespace {

struct ValidationScore {
  MetricValue gini;
  MetricValue recall_500;
};

ValidationScore validate_model(const ExpLtvModel& model, const Dataset& valid) {
  EvalOptions opts;
  opts.recall_ks = {500};
  opts.curve_ks = {};
  const auto scored = score_users(model, valid);
  std::vector<double> pred, truth, p_gw;
  std::vector<int> g;
  std::vector<std::int64_t> ids;
  for (const auto& s : scored) {
    pred.push_back(s.ltv_pred);
    truth.push_back(s.ltv);
    p_gw.push_back(s.p_gw);
    g.push_back(s.whale);
    ids.push_back(s.user_id);
  }
  return {gini_normalized(pred, truth), recall_at_k(p_gw, g, ids, 500)};
}

double selection_key(const MetricValue& v) {
  return v ? *v : -std::numeric_limits<double>::infinity();
}

}  // namespace

TrainResult train(const DataSplits& splits, const TrainConfig& config) {
  config.validate();
  if (splits.train.empty()) throw DataError("training split is empty");
  if (splits.valid.empty()) throw DataError("validation split is empty");
  if (!(splits.train.layout == splits.valid.layout)) throw DataError("train and validation schemas differ");
  check_label_consistency(splits.train, config.whale_threshold);

  const FeatureSchema schema = FeatureSchema::fit(splits.train, config.seq_max_len);
  ExpLtvModel model(schema, config.dims);
  model.init(config.seed);

  const auto encoded = encode_all(splits.train, schema);
  std::vector<Targets> targets;
  targets.reserve(splits.train.size());
  for (const auto& u : splits.train.users) targets.push_back(targets_of(u));

  const LossWeights weights{1.0, config.lambda};
  ParamStore params = model.params();
  params.zero_grads();
  AdamState adam(params, AdamOptions{config.learning_rate});

  TrainLog log;
  log.lambda = config.lambda;
  {
    EpochLog e0;
    double gwd = 0.0, ziln = 0.0;
    const std::size_t n = encoded.size();
    for (std::size_t start = 0; start < n; start += 1024) {
      const std::size_t len = std::min<std::size_t>(1024, n - start);
      const auto part = model.loss(std::span(encoded).subspan(start, len), std::span(targets).subspan(start, len), weights);
      gwd += part.gwd * static_cast<double>(len);
      ziln += part.ziln * static_cast<double>(len);
    }
    e0.gwd = gwd / static_cast<double>(n);
    e0.ziln = ziln / static_cast<double>(n);
    e0.joint = e0.gwd + config.lambda * e0.ziln;
    const auto v = validate_model(model, splits.valid);
    e0.valid_gini = v.gini;
    e0.valid_recall_500 = v.recall_500;
    log.epochs.push_back(e0);
  }

  std::mt19937_64 shuffle_rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), 0);

  ExpLtvModel best = model;
  double best_key = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<EncodedUser> batch;
  std::vector<Targets> batch_targets;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double gwd = 0.0, ziln = 0.0, joint = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      batch_targets.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(encoded[order[i]]);
        batch_targets.push_back(targets[order[i]]);
      }
      LossBreakdown l;
      try {
        l = model.loss_and_backward(batch, batch_targets, weights);
      } catch (const NumericError& e) {
        throw NumericError("diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no) + ": " + e.what());
      }
      if (!std::isfinite(l.joint))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      adam.step(params);
      const double w = static_cast<double>(end - start);
      gwd += l.gwd * w;
      ziln += l.ziln * w;
      joint += l.joint * w;
    }
    EpochLog e;
    e.epoch = epoch;
    const double n = static_cast<double>(order.size());
    e.gwd = gwd / n;
    e.ziln = ziln / n;
    e.joint = joint / n;
    e.steps = adam.steps();
    const auto v = validate_model(model, splits.valid);
    e.valid_gini = v.gini;
    e.valid_recall_500 = v.recall_500;
    log.epochs.push_back(e);

    const double key = selection_key(v.gini);
    if (key > best_key) {
      best_key = key;
      best = model;
      log.selected_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (config.epochs == 0) log.selected_epoch = 0;
  return TrainResult{std::move(best), config, std::move(log), adam.steps()};
}

AblationResult run_ablation(Variant variant, const DataSplits& splits, TrainConfig config,
                            const EvalOptions& opts) {
  config.dims.variant = variant;
  TrainResult tr = train(splits, config);
  AblationResult out;
  out.variant = variant;
  out.test_report = evaluate_model(tr.model, splits.test, config.whale_threshold, opts, to_string(variant));
  out.log = std::move(tr.log);
  out.parameter_count = tr.model.parameter_count();
  return out;
}

std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                            const DataSplits& splits, const TrainConfig& config, const EvalOptions& opts) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (param != "lambda" && param != "d") throw ConfigError("sweep parameter must be 'lambda' or 'd'");
  std::vector<SweepRow> rows;
  for (double v : values) {
    TrainConfig c = config;
    if (param == "lambda") {
      c.lambda = v;
    } else {
      if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("d must be a positive integer");
      c.dims.embed_dim = static_cast<std::size_t>(v);
    }
    TrainResult tr = train(splits, c);
    SweepRow row;
    row.param = param;
    row.value = v;
    row.seed = c.seed;
    row.parameter_count = tr.model.parameter_count();
    row.test_report = evaluate_model(tr.model, splits.test, c.whale_threshold, opts,
                                     param + "=" + format_double(v));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::vector<EvalReport> reports;
  for (const auto& r : rows) reports.push_back(r.test_report);
  const std::string metrics = reports_to_csv(reports);
  std::istringstream in(metrics);
  std::string line;
  std::ostringstream o;
  std::getline(in, line);
  o << "param,value,seed,parameter_count," << line << '\n';
  for (const auto& r : rows) {
    std::getline(in, line);
    o << r.param << ',' << format_double(r.value) << ',' << r.seed << ',' << r.parameter_count << ','
      << line << '\n';
  }
  return o.str();
}

}  // namespace expltv
