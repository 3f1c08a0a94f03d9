#pragma once

// Raw user record -> encoded features -> lower-level embedding e_u ->
// upper-level embedding e*_u.

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "expltv/cohort.hpp"
#include "expltv/numerics.hpp"

namespace expltv {

struct DenseFeature {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
  friend bool operator==(const DenseFeature&, const DenseFeature&) = default;
};

struct CategoricalFeature {
  std::string name;
  int cardinality = 1;  // index 0 is the reserved "unknown" bucket
  friend bool operator==(const CategoricalFeature&, const CategoricalFeature&) = default;
};

struct SequenceFeature {
  std::string name;
  int vocab = 1;  // index 0 is the reserved "unknown" token
  int max_len = 1;
  friend bool operator==(const SequenceFeature&, const SequenceFeature&) = default;
};

struct FeatureSchema {
  std::vector<DenseFeature> dense;
  std::vector<CategoricalFeature> categorical;
  std::vector<SequenceFeature> sequences;
  double clamp = 6.0;  // |z-score| cap for dense features

  /// Normalization statistics and cardinalities taken from a training split.
  /// Sequences keep at most `seq_max_len` tokens.
  static FeatureSchema fit(const Dataset& train, int seq_max_len = 8);

  DataLayout layout() const noexcept { return {dense.size(), categorical.size(), sequences.size()}; }
  void validate() const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

struct EncodedUser {
  std::vector<double> dense;                // z-scores clamped to +-clamp
  std::vector<int> categorical;             // < cardinality, 0 = unknown
  std::vector<std::vector<int>> sequences;  // each token < vocab, 0 = unknown

  friend bool operator==(const EncodedUser&, const EncodedUser&) = default;
};

/// Throws DataError naming the first missing field.
EncodedUser encode(const UserRecord& record, const FeatureSchema& schema);
std::vector<EncodedUser> encode_all(const Dataset& data, const FeatureSchema& schema);

struct EmbedCache {
  DenseCache dense;
  std::vector<std::vector<int>> categorical;                // [batch][feature]
  std::vector<std::vector<std::vector<int>>> sequences;     // [batch][feature][token]
  bool valid = false;
};

/// Dense block through M (with bias), one lookup table per categorical
/// feature, and one mean-pooled lookup table per sequence feature.
class EmbeddingTables {
 public:
  EmbeddingTables() = default;
  EmbeddingTables(const FeatureSchema& schema, std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  /// d x (1 + #categorical + #sequence), without the dense part when the
  /// schema has no dense features.
  std::size_t output_dim() const noexcept;

  void init(std::mt19937_64& rng);
  Matrix forward(std::span<const EncodedUser> batch, EmbedCache* cache) const;
  void backward(const EmbedCache& cache, const Matrix& upstream);
  void register_params(ParamStore& store);

 private:
  std::size_t dim_ = 0;
  bool has_dense_ = false;
  DenseLayer dense_;
  std::vector<Parameter> cat_tables_;
  std::vector<Parameter> seq_tables_;
};

struct EncoderCache {
  std::vector<DenseCache> layers;
};

/// Maps lower-level embeddings to e*_u. Implementations must be pure
/// functions of (input, parameters) on the forward path.
class InteractionEncoder {
 public:
  virtual ~InteractionEncoder() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual void init(std::mt19937_64& rng) = 0;
  virtual Matrix forward(const Matrix& input, EncoderCache* cache) const = 0;
  virtual Matrix backward(const EncoderCache& cache, const Matrix& upstream) = 0;
  virtual void register_params(ParamStore& store) = 0;
  virtual std::unique_ptr<InteractionEncoder> clone() const = 0;
};

/// Concatenated embeddings -> relu hidden layer -> identity output.
class MlpInteraction final : public InteractionEncoder {
 public:
  MlpInteraction(std::size_t input_dim, std::size_t hidden, std::size_t output_dim);

  std::string kind() const override { return "mlp"; }
  std::size_t input_dim() const override { return hidden_.in_dim(); }
  std::size_t output_dim() const override { return out_.out_dim(); }
  void init(std::mt19937_64& rng) override;
  Matrix forward(const Matrix& input, EncoderCache* cache) const override;
  Matrix backward(const EncoderCache& cache, const Matrix& upstream) override;
  void register_params(ParamStore& store) override;
  std::unique_ptr<InteractionEncoder> clone() const override;

 private:
  DenseLayer hidden_;
  DenseLayer out_;
};

}  // namespace expltv
