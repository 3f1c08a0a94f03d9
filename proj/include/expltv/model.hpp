#pragma once

// The multi-task graph: shared purchase-rate head, game-whale detector used as
// a gate over two zero-inflated-lognormal LTV experts, and the joint loss.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expltv/features.hpp"
#include "expltv/numerics.hpp"

namespace expltv {

/// Architecture variants used for ablations.
enum class Variant {
  full,  // shared purchase head, detector gates two experts
  ne,    // single LTV expert; the detector is trained but not used for mixing
  nssb,  // no purchase factor on the detector side: y-hat targets the joint probabilities directly
  sp,    // separate purchase heads for the two tasks, CE restored on the detector side
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelDims {
  std::size_t embed_dim = 8;    // d
  std::size_t latent_dim = 8;   // d1, width of e*_u
  std::size_t hidden = 8;       // hidden width of every 2-layer head
  Variant variant = Variant::full;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kSigmaFloor = 1e-6;

/// Raw per-user head outputs before they are combined.
struct HeadOutputs {
  double p_ltv = 0.5;                  // purchase probability used by the ZILN term
  double p_gwd = 0.5;                  // purchase probability on the detector side
  std::array<double, 2> gate{0.5, 0.5};  // y-hat = [p^gw, p^ngw]
  std::array<double, 2> mu{0.0, 0.0};
  std::array<double, 2> sigma{1.0, 1.0};
};

struct Prediction {
  double p_ptr = 0.0;     // purchase probability reported for the user
  std::array<double, 2> gate{0.0, 0.0};
  double p_gwptr = 0.0;
  double p_ngwptr = 0.0;
  double mu = 0.0;
  double sigma = 1.0;
  double ltv = 0.0;       // p * exp(mu + sigma^2 / 2)
};

/// Bayes decomposition on the detector side, gate-weighted expert mixing,
/// and the lognormal-mean LTV estimate.
Prediction combine(const HeadOutputs& heads, Variant variant);

struct ZilnGrad {
  double d_p = 0.0;
  double d_mu = 0.0;
  double d_sigma = 0.0;
};

struct ZilnTerms {
  double classification = 0.0;  // CE(1[ltv > 0], p)
  double regression = 0.0;       // lognormal NLL of ltv, 0 when ltv == 0
  double total() const noexcept { return classification + regression; }
};

/// Zero-inflated lognormal loss. The positive-label indicator gates the whole
/// regression term.
ZilnTerms ziln_loss(double p, double mu, double sigma, double ltv, ZilnGrad* grad = nullptr);

/// Binary cross-entropy with log arguments floored at kLogFloor.
double bce_loss(double label, double p, double* d_p = nullptr);

/// KL([t, 1 - t] || [q_gw, q_ngw]) with 0 log 0 := 0.
double gwd_kl_loss(double target, double q_gw, double q_ngw, double* d_qgw = nullptr,
                   double* d_qngw = nullptr);

struct Targets {
  double ltv = 0.0;
  double gwptr = 0.0;
  int purchased = 0;
};

Targets targets_of(const UserRecord& u);

struct LossWeights {
  double gwd = 1.0;
  double ziln = 15.0;  // lambda
};

struct LossBreakdown {
  double gwd = 0.0;    // batch mean detector loss
  double ziln = 0.0;   // batch mean ZILN loss
  double joint = 0.0;  // weights.gwd * gwd + weights.ziln * ziln
};

/// dL/d(head output) for every row of a batch; columns follow HeadOutputs.
struct HeadGradients {
  std::vector<double> p_ltv, p_gwd;
  std::vector<std::array<double, 2>> gate, mu, sigma;
};

/// Batch-mean losses from raw head outputs; fills `grads` (already divided by
/// the batch size) when non-null.
LossBreakdown batch_loss(std::span<const HeadOutputs> heads, std::span<const Targets> targets,
                         const LossWeights& weights, Variant variant, HeadGradients* grads);

struct HeadCache {
  DenseCache hidden;
  DenseCache out;
};

/// Per-batch activations retained for the backward pass.
struct ForwardTrace {
  EmbedCache embed;
  EncoderCache encoder;
  Matrix latent;  // e*_u rows
  HeadCache ptr, ptr_gwd, gwd;
  std::vector<HeadCache> mu, sigma;
  std::vector<HeadOutputs> heads;
  std::vector<Prediction> predictions;
  bool valid = false;
};

/// Scores used for ranking: LTV estimate, whale-ranking key y-hat[0], and the
/// purchase probability.
struct UserScore {
  double ltv = 0.0;
  double p_gw = 0.0;
  double p_ptr = 0.0;
  friend bool operator==(const UserScore&, const UserScore&) = default;
};

class ExpLtvModel {
 public:
  ExpLtvModel(FeatureSchema schema, ModelDims dims);
  ExpLtvModel(const ExpLtvModel& other);
  ExpLtvModel& operator=(const ExpLtvModel& other);
  ExpLtvModel(ExpLtvModel&&) noexcept = default;
  ExpLtvModel& operator=(ExpLtvModel&&) noexcept = default;
  ~ExpLtvModel() = default;

  void init(std::uint64_t seed);

  const FeatureSchema& schema() const noexcept { return schema_; }
  const ModelDims& dims() const noexcept { return dims_; }
  std::size_t expert_count() const noexcept { return mu_.size(); }

  /// Fresh view over all trainable blocks in a fixed order.
  ParamStore params();
  std::size_t parameter_count() const;
  /// Read-only view of the same blocks, same order.
  std::vector<const Parameter*> blocks() const;

  /// e*_u for each user.
  Matrix latent(std::span<const EncodedUser> batch) const;

  std::vector<Prediction> forward(std::span<const EncodedUser> batch, ForwardTrace* trace) const;
  /// Heads and combination on precomputed e*_u rows.
  std::vector<Prediction> forward_latent(const Matrix& latent, ForwardTrace* trace) const;

  LossBreakdown loss(std::span<const EncodedUser> batch, std::span<const Targets> targets,
                     const LossWeights& weights) const;

  /// Forward, batch-mean loss, and gradient accumulation into every block.
  LossBreakdown loss_and_backward(std::span<const EncodedUser> batch, std::span<const Targets> targets,
                                  const LossWeights& weights);

  UserScore score(const UserRecord& record) const;
  std::vector<UserScore> score(const Dataset& data) const;

 private:
  struct Head {
    DenseLayer hidden;
    DenseLayer out;
  };

  static Head make_head(const std::string& name, const std::string& role, const ModelDims& dims,
                        std::size_t out_dim, Activation act);
  static Matrix head_forward(const Head& h, const Matrix& x, HeadCache* cache);
  static Matrix head_backward(Head& h, const HeadCache& cache, const Matrix& upstream);

  void backward(const ForwardTrace& trace, const HeadGradients& grads);

  FeatureSchema schema_;
  ModelDims dims_;
  EmbeddingTables embed_;
  std::unique_ptr<InteractionEncoder> encoder_;
  Head ptr_;
  std::optional<Head> ptr_gwd_;  // sp variant only
  Head gwd_;
  std::vector<Head> mu_;
  std::vector<Head> sigma_;
};

}  // namespace expltv
