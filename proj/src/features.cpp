#include "expltv/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "expltv/error.hpp"

namespace expltv {

FeatureSchema FeatureSchema::fit(const Dataset& train, int seq_max_len) {
  if (train.empty()) throw DataError("cannot fit a feature schema on an empty dataset");
  const DataLayout& lay = train.layout;
  FeatureSchema schema;
  const double n = static_cast<double>(train.size());
  for (std::size_t j = 0; j < lay.dense; ++j) {
    double sum = 0.0;
    for (const auto& u : train.users) sum += u.dense.at(j);
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& u : train.users) ss += (u.dense[j] - mean) * (u.dense[j] - mean);
    double sd = std::sqrt(ss / n);
    if (!(sd > 1e-12)) sd = 1.0;
    schema.dense.push_back({"dense_" + std::to_string(j), mean, sd});
  }
  for (std::size_t j = 0; j < lay.categorical; ++j) {
    int max_v = 0;
    for (const auto& u : train.users) max_v = std::max(max_v, u.categorical.at(j));
    schema.categorical.push_back({"cat_" + std::to_string(j), max_v + 1});
  }
  for (std::size_t j = 0; j < lay.sequences; ++j) {
    int max_v = 0;
    for (const auto& u : train.users)
      for (int t : u.sequences.at(j)) max_v = std::max(max_v, t);
    schema.sequences.push_back({"seq_" + std::to_string(j), max_v + 1, seq_max_len});
  }
  schema.validate();
  return schema;
}

void FeatureSchema::validate() const {
  std::set<std::string> names;
  auto unique = [&](const std::string& n) {
    if (!names.insert(n).second) throw ConfigError("duplicate feature name '" + n + "'");
  };
  for (const auto& f : dense) {
    unique(f.name);
    if (!(f.sd > 0.0) || !std::isfinite(f.mean)) throw ConfigError("bad normalization stats for " + f.name);
  }
  for (const auto& f : categorical) {
    unique(f.name);
    if (f.cardinality < 1) throw ConfigError("cardinality of " + f.name + " must be at least 1");
  }
  for (const auto& f : sequences) {
    unique(f.name);
    if (f.vocab < 1) throw ConfigError("vocabulary of " + f.name + " must be at least 1");
    if (f.max_len < 1) throw ConfigError("max length of " + f.name + " must be at least 1");
  }
  if (!(clamp > 0.0)) throw ConfigError("dense clamp must be positive");
}

EncodedUser encode(const UserRecord& record, const FeatureSchema& schema) {
  EncodedUser e;
  if (record.dense.size() < schema.dense.size())
    throw DataError("missing field " + schema.dense[record.dense.size()].name);
  if (record.categorical.size() < schema.categorical.size())
    throw DataError("missing field " + schema.categorical[record.categorical.size()].name);
  if (record.sequences.size() < schema.sequences.size())
    throw DataError("missing field " + schema.sequences[record.sequences.size()].name);

  e.dense.reserve(schema.dense.size());
  for (std::size_t j = 0; j < schema.dense.size(); ++j) {
    const auto& f = schema.dense[j];
    const double z = (record.dense[j] - f.mean) / f.sd;
    if (!std::isfinite(z)) throw DataError("non-finite value for " + f.name);
    e.dense.push_back(std::clamp(z, -schema.clamp, schema.clamp));
  }
  for (std::size_t j = 0; j < schema.categorical.size(); ++j) {
    const int v = record.categorical[j];
    e.categorical.push_back(v >= 0 && v < schema.categorical[j].cardinality ? v : 0);
  }
  for (std::size_t j = 0; j < schema.sequences.size(); ++j) {
    const auto& f = schema.sequences[j];
    const auto& raw = record.sequences[j];
    std::vector<int> seq;
    const std::size_t n = std::min(raw.size(), static_cast<std::size_t>(f.max_len));
    for (std::size_t k = 0; k < n; ++k) seq.push_back(raw[k] >= 0 && raw[k] < f.vocab ? raw[k] : 0);
    e.sequences.push_back(std::move(seq));
  }
  return e;
}

std::vector<EncodedUser> encode_all(const Dataset& data, const FeatureSchema& schema) {
  std::vector<EncodedUser> out;
  out.reserve(data.size());
  for (const auto& u : data.users) out.push_back(encode(u, schema));
  return out;
}

EmbeddingTables::EmbeddingTables(const FeatureSchema& schema, std::size_t dim)
    : dim_(dim), has_dense_(!schema.dense.empty()) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (has_dense_) dense_ = DenseLayer("embed.dense", "shared", schema.dense.size(), dim, Activation::identity);
  for (const auto& f : schema.categorical)
    cat_tables_.emplace_back("embed." + f.name, "shared", static_cast<std::size_t>(f.cardinality), dim);
  for (const auto& f : schema.sequences)
    seq_tables_.emplace_back("embed." + f.name, "shared", static_cast<std::size_t>(f.vocab), dim);
}

std::size_t EmbeddingTables::output_dim() const noexcept {
  return dim_ * ((has_dense_ ? 1 : 0) + cat_tables_.size() + seq_tables_.size());
}

void EmbeddingTables::init(std::mt19937_64& rng) {
  if (has_dense_) dense_.init(rng);
  for (auto& t : cat_tables_) glorot_uniform(t.value, t.value.rows(), dim_, rng);
  for (auto& t : seq_tables_) glorot_uniform(t.value, t.value.rows(), dim_, rng);
}

Matrix EmbeddingTables::forward(std::span<const EncodedUser> batch, EmbedCache* cache) const {
  const std::size_t b = batch.size();
  Matrix out(b, output_dim());
  std::size_t offset = 0;
  if (has_dense_) {
    Matrix x(b, dense_.in_dim());
    for (std::size_t r = 0; r < b; ++r) {
      if (batch[r].dense.size() != dense_.in_dim()) throw ConfigError("encoded user has the wrong dense width");
      std::copy(batch[r].dense.begin(), batch[r].dense.end(), x.row(r).begin());
    }
    Matrix m = dense_.forward(x, cache ? &cache->dense : nullptr);
    for (std::size_t r = 0; r < b; ++r) std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin());
    offset += dim_;
  }
  for (std::size_t j = 0; j < cat_tables_.size(); ++j, offset += dim_) {
    const Matrix& table = cat_tables_[j].value;
    for (std::size_t r = 0; r < b; ++r) {
      const int idx = batch[r].categorical.at(j);
      if (idx < 0 || static_cast<std::size_t>(idx) >= table.rows())
        throw ConfigError("categorical index out of range for " + cat_tables_[j].name);
      auto src = table.row(static_cast<std::size_t>(idx));
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
  }
  for (std::size_t j = 0; j < seq_tables_.size(); ++j, offset += dim_) {
    const Matrix& table = seq_tables_[j].value;
    for (std::size_t r = 0; r < b; ++r) {
      const auto& seq = batch[r].sequences.at(j);
      if (seq.empty()) continue;
      auto dst = out.row(r).subspan(offset, dim_);
      const double w = 1.0 / static_cast<double>(seq.size());
      for (int idx : seq) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= table.rows())
          throw ConfigError("sequence token out of range for " + seq_tables_[j].name);
        auto src = table.row(static_cast<std::size_t>(idx));
        for (std::size_t k = 0; k < dim_; ++k) dst[k] += w * src[k];
      }
    }
  }
  if (cache != nullptr) {
    cache->categorical.clear();
    cache->sequences.clear();
    for (const auto& u : batch) {
      cache->categorical.push_back(u.categorical);
      cache->sequences.push_back(u.sequences);
    }
    cache->valid = true;
  }
  return out;
}

void EmbeddingTables::backward(const EmbedCache& cache, const Matrix& upstream) {
  if (!cache.valid) throw UsageError("embedding backward without a cached forward");
  const std::size_t b = cache.categorical.size();
  if (upstream.rows() != b || upstream.cols() != output_dim())
    throw ConfigError("embedding upstream gradient has the wrong shape");
  std::size_t offset = 0;
  if (has_dense_) {
    Matrix g(b, dim_);
    for (std::size_t r = 0; r < b; ++r) {
      auto src = upstream.row(r).subspan(0, dim_);
      std::copy(src.begin(), src.end(), g.row(r).begin());
    }
    dense_.backward(cache.dense, g);
    offset += dim_;
  }
  for (std::size_t j = 0; j < cat_tables_.size(); ++j, offset += dim_) {
    Parameter& t = cat_tables_[j];
    for (std::size_t r = 0; r < b; ++r) {
      auto src = upstream.row(r).subspan(offset, dim_);
      auto dst = t.grad.row(static_cast<std::size_t>(cache.categorical[r][j]));
      for (std::size_t k = 0; k < dim_; ++k) dst[k] += src[k];
    }
    ++t.accumulated;
  }
  for (std::size_t j = 0; j < seq_tables_.size(); ++j, offset += dim_) {
    Parameter& t = seq_tables_[j];
    for (std::size_t r = 0; r < b; ++r) {
      const auto& seq = cache.sequences[r][j];
      if (seq.empty()) continue;
      auto src = upstream.row(r).subspan(offset, dim_);
      const double w = 1.0 / static_cast<double>(seq.size());
      for (int idx : seq) {
        auto dst = t.grad.row(static_cast<std::size_t>(idx));
        for (std::size_t k = 0; k < dim_; ++k) dst[k] += w * src[k];
      }
    }
    ++t.accumulated;
  }
}

void EmbeddingTables::register_params(ParamStore& store) {
  if (has_dense_) dense_.register_params(store);
  for (auto& t : cat_tables_) store.add(t);
  for (auto& t : seq_tables_) store.add(t);
}

MlpInteraction::MlpInteraction(std::size_t input_dim, std::size_t hidden, std::size_t output_dim)
    : hidden_("encoder.l1", "shared", input_dim, hidden, Activation::relu),
      out_("encoder.l2", "shared", hidden, output_dim, Activation::identity) {}

void MlpInteraction::init(std::mt19937_64& rng) {
  hidden_.init(rng);
  out_.init(rng);
}

Matrix MlpInteraction::forward(const Matrix& input, EncoderCache* cache) const {
  if (cache != nullptr) {
    cache->layers.resize(2);
    Matrix h = hidden_.forward(input, &cache->layers[0]);
    return out_.forward(h, &cache->layers[1]);
  }
  return out_.forward(hidden_.forward(input, nullptr), nullptr);
}

Matrix MlpInteraction::backward(const EncoderCache& cache, const Matrix& upstream) {
  if (cache.layers.size() != 2) throw UsageError("interaction backward without a cached forward");
  return hidden_.backward(cache.layers[0], out_.backward(cache.layers[1], upstream));
}

void MlpInteraction::register_params(ParamStore& store) {
  hidden_.register_params(store);
  out_.register_params(store);
}

std::unique_ptr<InteractionEncoder> MlpInteraction::clone() const {
  return std::make_unique<MlpInteraction>(*this);
}

}  // namespace expltv
