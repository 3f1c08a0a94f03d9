// Versioned JSON checkpoint: feature schema, training config, and every
// parameter array with its shape and role. Doubles are written in shortest
// round-trip form, so save/load is bit-exact.

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "expltv/error.hpp"
#include "expltv/trainer.hpp"

namespace expltv {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "expltv-checkpoint";
constexpr int kVersion = 1;

json schema_to_json(const FeatureSchema& s) {
  json j;
  j["clamp"] = s.clamp;
  j["dense"] = json::array();
  for (const auto& f : s.dense) j["dense"].push_back({{"name", f.name}, {"mean", f.mean}, {"sd", f.sd}});
  j["categorical"] = json::array();
  for (const auto& f : s.categorical) j["categorical"].push_back({{"name", f.name}, {"cardinality", f.cardinality}});
  j["sequences"] = json::array();
  for (const auto& f : s.sequences)
    j["sequences"].push_back({{"name", f.name}, {"vocab", f.vocab}, {"max_len", f.max_len}});
  return j;
}

FeatureSchema schema_from_json(const json& j) {
  FeatureSchema s;
  s.clamp = j.at("clamp").get<double>();
  for (const auto& f : j.at("dense"))
    s.dense.push_back({f.at("name").get<std::string>(), f.at("mean").get<double>(), f.at("sd").get<double>()});
  for (const auto& f : j.at("categorical"))
    s.categorical.push_back({f.at("name").get<std::string>(), f.at("cardinality").get<int>()});
  for (const auto& f : j.at("sequences"))
    s.sequences.push_back({f.at("name").get<std::string>(), f.at("vocab").get<int>(), f.at("max_len").get<int>()});
  s.validate();
  return s;
}

// Which of the two task parameter sets a block belongs to. The purchase head
// serves both tasks and is stored once.
json parameter_sets(const std::string& role) {
  if (role == "detector") return json::array({"theta1"});
  if (role == "ltv") return json::array({"theta2"});
  return json::array({"theta1", "theta2"});
}

}  // namespace

std::string checkpoint_to_string(const ExpLtvModel& model, const TrainConfig& config) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["config"] = config.to_text();
  j["schema"] = schema_to_json(model.schema());
  j["params"] = json::array();
  for (const Parameter* p : model.blocks()) {
    const auto v = p->value.values();
    j["params"].push_back({{"name", p->name},
                           {"role", p->role},
                           {"sets", parameter_sets(p->role)},
                           {"rows", p->value.rows()},
                           {"cols", p->value.cols()},
                           {"data", std::vector<double>(v.begin(), v.end())}});
  }
  return j.dump(1);
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) throw DataError("not an expltv checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    TrainConfig config = TrainConfig::from_text(j.at("config").get<std::string>());
    FeatureSchema schema = schema_from_json(j.at("schema"));
    ExpLtvModel model(std::move(schema), config.dims);
    ParamStore store = model.params();
    const auto& arrays = j.at("params");
    if (arrays.size() != store.blocks().size())
      throw DataError("checkpoint has " + std::to_string(arrays.size()) + " parameter blocks, model expects " +
                      std::to_string(store.blocks().size()));
    for (std::size_t b = 0; b < arrays.size(); ++b) {
      Parameter& p = *store.blocks()[b];
      const auto& a = arrays[b];
      if (a.at("name").get<std::string>() != p.name) throw DataError("unexpected parameter block " + a.at("name").get<std::string>());
      if (a.at("rows").get<std::size_t>() != p.value.rows() || a.at("cols").get<std::size_t>() != p.value.cols())
        throw DataError("shape mismatch for " + p.name);
      const auto data = a.at("data").get<std::vector<double>>();
      if (data.size() != p.value.size()) throw DataError("wrong element count for " + p.name);
      std::copy(data.begin(), data.end(), p.value.values().begin());
      if (!p.value.all_finite()) throw DataError("non-finite values in " + p.name);
    }
    return Checkpoint{std::move(config), std::move(model)};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ExpLtvModel& model, const TrainConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << checkpoint_to_string(model, config) << '\n';
  if (!out) throw DataError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace expltv
