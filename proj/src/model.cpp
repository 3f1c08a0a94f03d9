#include "expltv/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "expltv/error.hpp"

namespace expltv {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::ne: return "ne";
    case Variant::nssb: return "nssb";
    case Variant::sp: return "sp";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full" || s == "expltv") return Variant::full;
  if (s == "ne") return Variant::ne;
  if (s == "nssb") return Variant::nssb;
  if (s == "sp") return Variant::sp;
  throw ConfigError("unknown variant '" + s + "' (expected full, ne, nssb or sp)");
}

Prediction combine(const HeadOutputs& h, Variant variant) {
  Prediction out;
  out.gate = h.gate;
  const double y0 = h.gate[0];
  const double y1 = h.gate[1];
  if (variant == Variant::nssb) {
    out.p_gwptr = y0;
    out.p_ngwptr = y1;
  } else {
    out.p_gwptr = h.p_gwd * y0;
    out.p_ngwptr = (1.0 - h.p_gwd) + h.p_gwd * y1;
  }
  if (variant == Variant::ne) {
    out.mu = h.mu[0];
    out.sigma = h.sigma[0];
  } else {
    out.mu = y0 * h.mu[0] + y1 * h.mu[1];
    out.sigma = y0 * h.sigma[0] + y1 * h.sigma[1];
  }
  out.p_ptr = variant == Variant::sp ? h.p_gwd : h.p_ltv;
  out.ltv = h.p_ltv * std::exp(out.mu + 0.5 * out.sigma * out.sigma);
  return out;
}

double bce_loss(double label, double p, double* d_p) {
  double loss = 0.0;
  double grad = 0.0;
  if (label > 0.0) {
    loss -= label * std::log(std::max(p, kLogFloor));
    if (p > kLogFloor) grad -= label / p;
  }
  if (label < 1.0) {
    const double q = 1.0 - p;
    loss -= (1.0 - label) * std::log(std::max(q, kLogFloor));
    if (q > kLogFloor) grad += (1.0 - label) / q;
  }
  if (d_p != nullptr) *d_p = grad;
  return loss;
}

ZilnTerms ziln_loss(double p, double mu, double sigma, double ltv, ZilnGrad* grad) {
  if (!(ltv >= 0.0)) throw DataError("ZILN label must be nonnegative");
  ZilnTerms t;
  ZilnGrad g;
  const double positive = ltv > 0.0 ? 1.0 : 0.0;
  t.classification = bce_loss(positive, p, &g.d_p);
  if (positive > 0.0) {
    const bool floored = sigma < kSigmaFloor;
    const double s = floored ? kSigmaFloor : sigma;
    const double log_y = std::log(std::max(ltv, kLogFloor));
    const double resid = log_y - mu;
    t.regression = log_y + std::log(s) + 0.5 * std::log(2.0 * std::numbers::pi) +
                   resid * resid / (2.0 * s * s);
    g.d_mu = -resid / (s * s);
    g.d_sigma = floored ? 0.0 : 1.0 / s - resid * resid / (s * s * s);
  }
  if (grad != nullptr) *grad = g;
  return t;
}

double gwd_kl_loss(double target, double q_gw, double q_ngw, double* d_qgw, double* d_qngw) {
  double loss = 0.0;
  double g0 = 0.0;
  double g1 = 0.0;
  const double t1 = 1.0 - target;
  if (target > 0.0) {
    loss += target * (std::log(target) - std::log(std::max(q_gw, kLogFloor)));
    if (q_gw > kLogFloor) g0 = -target / q_gw;
  }
  if (t1 > 0.0) {
    loss += t1 * (std::log(t1) - std::log(std::max(q_ngw, kLogFloor)));
    if (q_ngw > kLogFloor) g1 = -t1 / q_ngw;
  }
  if (d_qgw != nullptr) *d_qgw = g0;
  if (d_qngw != nullptr) *d_qngw = g1;
  return loss;
}

Targets targets_of(const UserRecord& u) { return {u.ltv, u.gwptr, u.purchased}; }

LossBreakdown batch_loss(std::span<const HeadOutputs> heads, std::span<const Targets> targets,
                         const LossWeights& weights, Variant variant, HeadGradients* grads) {
  if (heads.size() != targets.size()) throw ConfigError("batch and target sizes differ");
  if (heads.empty()) throw ConfigError("empty batch");
  if (!(weights.ziln >= 0.0) || !(weights.gwd >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  const std::size_t n = heads.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grads != nullptr) {
    grads->p_ltv.assign(n, 0.0);
    grads->p_gwd.assign(n, 0.0);
    grads->gate.assign(n, {0.0, 0.0});
    grads->mu.assign(n, {0.0, 0.0});
    grads->sigma.assign(n, {0.0, 0.0});
  }
  LossBreakdown total;
  for (std::size_t i = 0; i < n; ++i) {
    const HeadOutputs& h = heads[i];
    const Targets& t = targets[i];
    const Prediction pred = combine(h, variant);

    ZilnGrad zg;
    const double ziln = ziln_loss(h.p_ltv, pred.mu, pred.sigma, t.ltv, &zg).total();

    double dq0 = 0.0;
    double dq1 = 0.0;
    double gwd = gwd_kl_loss(t.gwptr, pred.p_gwptr, pred.p_ngwptr, &dq0, &dq1);
    double d_ce = 0.0;
    if (variant == Variant::sp) gwd += bce_loss(t.purchased ? 1.0 : 0.0, h.p_gwd, &d_ce);

    if (!std::isfinite(ziln) || !std::isfinite(gwd))
      throw NumericError("non-finite loss at batch row " + std::to_string(i));
    total.ziln += ziln * inv_n;
    total.gwd += gwd * inv_n;

    if (grads == nullptr) continue;
    const double wz = weights.ziln * inv_n;
    const double wg = weights.gwd * inv_n;
    grads->p_ltv[i] += wz * zg.d_p;
    if (variant == Variant::ne) {
      grads->mu[i][0] += wz * zg.d_mu;
      grads->sigma[i][0] += wz * zg.d_sigma;
    } else {
      for (std::size_t k = 0; k < 2; ++k) {
        grads->mu[i][k] += wz * zg.d_mu * h.gate[k];
        grads->sigma[i][k] += wz * zg.d_sigma * h.gate[k];
        grads->gate[i][k] += wz * (zg.d_mu * h.mu[k] + zg.d_sigma * h.sigma[k]);
      }
    }
    if (variant == Variant::nssb) {
      grads->gate[i][0] += wg * dq0;
      grads->gate[i][1] += wg * dq1;
    } else {
      const double pg = h.p_gwd;
      const double d_pg = dq0 * h.gate[0] + dq1 * (h.gate[1] - 1.0) + d_ce;
      if (variant == Variant::sp) {
        grads->p_gwd[i] += wg * d_pg;
      } else {
        grads->p_ltv[i] += wg * d_pg;
      }
      grads->gate[i][0] += wg * dq0 * pg;
      grads->gate[i][1] += wg * dq1 * pg;
    }
  }
  total.joint = weights.gwd * total.gwd + weights.ziln * total.ziln;
  return total;
}

// ---------------------------------------------------------------------------

ExpLtvModel::Head ExpLtvModel::make_head(const std::string& name, const std::string& role,
                                         const ModelDims& dims, std::size_t out_dim, Activation act) {
  return Head{DenseLayer(name + ".l1", role, dims.latent_dim, dims.hidden, Activation::relu),
              DenseLayer(name + ".l2", role, dims.hidden, out_dim, act)};
}

ExpLtvModel::ExpLtvModel(FeatureSchema schema, ModelDims dims)
    : schema_(std::move(schema)), dims_(dims) {
  schema_.validate();
  if (dims_.embed_dim == 0 || dims_.latent_dim == 0 || dims_.hidden == 0)
    throw ConfigError("model dimensions must be positive");
  embed_ = EmbeddingTables(schema_, dims_.embed_dim);
  if (embed_.output_dim() == 0) throw ConfigError("feature schema has no features");
  encoder_ = std::make_unique<MlpInteraction>(embed_.output_dim(), dims_.hidden, dims_.latent_dim);
  ptr_ = make_head("ptr", "purchase", dims_, 1, Activation::sigmoid);
  if (dims_.variant == Variant::sp) ptr_gwd_ = make_head("ptr_gwd", "detector", dims_, 1, Activation::sigmoid);
  gwd_ = make_head("gwd", "detector", dims_, 2, Activation::softmax);
  const std::size_t experts = dims_.variant == Variant::ne ? 1 : 2;
  for (std::size_t k = 0; k < experts; ++k) {
    const std::string name = "expert" + std::to_string(k);
    mu_.push_back(make_head(name + ".mu", "ltv", dims_, 1, Activation::identity));
    sigma_.push_back(make_head(name + ".sigma", "ltv", dims_, 1, Activation::softplus));
  }
}

ExpLtvModel::ExpLtvModel(const ExpLtvModel& other)
    : schema_(other.schema_),
      dims_(other.dims_),
      embed_(other.embed_),
      encoder_(other.encoder_->clone()),
      ptr_(other.ptr_),
      ptr_gwd_(other.ptr_gwd_),
      gwd_(other.gwd_),
      mu_(other.mu_),
      sigma_(other.sigma_) {}

ExpLtvModel& ExpLtvModel::operator=(const ExpLtvModel& other) {
  if (this != &other) {
    ExpLtvModel tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

ParamStore ExpLtvModel::params() {
  ParamStore store;
  embed_.register_params(store);
  encoder_->register_params(store);
  auto add = [&](Head& h) {
    h.hidden.register_params(store);
    h.out.register_params(store);
  };
  add(ptr_);
  if (ptr_gwd_) add(*ptr_gwd_);
  add(gwd_);
  for (std::size_t k = 0; k < mu_.size(); ++k) {
    add(mu_[k]);
    add(sigma_[k]);
  }
  return store;
}

std::vector<const Parameter*> ExpLtvModel::blocks() const {
  const ParamStore store = const_cast<ExpLtvModel*>(this)->params();
  return {store.blocks().begin(), store.blocks().end()};
}

std::size_t ExpLtvModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : blocks()) n += p->value.size();
  return n;
}

void ExpLtvModel::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  embed_.init(rng);
  encoder_->init(rng);
  auto init = [&](Head& h) {
    h.hidden.init(rng);
    h.out.init(rng);
  };
  init(ptr_);
  if (ptr_gwd_) init(*ptr_gwd_);
  init(gwd_);
  for (std::size_t k = 0; k < mu_.size(); ++k) {
    init(mu_[k]);
    init(sigma_[k]);
  }
}

Matrix ExpLtvModel::head_forward(const Head& h, const Matrix& x, HeadCache* cache) {
  if (cache != nullptr) return h.out.forward(h.hidden.forward(x, &cache->hidden), &cache->out);
  return h.out.forward(h.hidden.forward(x, nullptr), nullptr);
}

Matrix ExpLtvModel::head_backward(Head& h, const HeadCache& cache, const Matrix& upstream) {
  return h.hidden.backward(cache.hidden, h.out.backward(cache.out, upstream));
}

Matrix ExpLtvModel::latent(std::span<const EncodedUser> batch) const {
  return encoder_->forward(embed_.forward(batch, nullptr), nullptr);
}

std::vector<Prediction> ExpLtvModel::forward(std::span<const EncodedUser> batch, ForwardTrace* trace) const {
  if (trace == nullptr) return forward_latent(latent(batch), nullptr);
  trace->valid = false;
  Matrix lower = embed_.forward(batch, &trace->embed);
  Matrix upper = encoder_->forward(lower, &trace->encoder);
  return forward_latent(upper, trace);
}

std::vector<Prediction> ExpLtvModel::forward_latent(const Matrix& latent, ForwardTrace* trace) const {
  if (latent.cols() != dims_.latent_dim) throw ConfigError("latent width does not match the model");
  const std::size_t n = latent.rows();
  const std::size_t experts = mu_.size();

  HeadCache* c_ptr = trace ? &trace->ptr : nullptr;
  HeadCache* c_ptr_gwd = trace ? &trace->ptr_gwd : nullptr;
  HeadCache* c_gwd = trace ? &trace->gwd : nullptr;
  if (trace != nullptr) {
    trace->mu.resize(experts);
    trace->sigma.resize(experts);
  }
  const Matrix p = head_forward(ptr_, latent, c_ptr);
  const Matrix p_gwd = ptr_gwd_ ? head_forward(*ptr_gwd_, latent, c_ptr_gwd) : Matrix();
  const Matrix gate = head_forward(gwd_, latent, c_gwd);
  std::vector<Matrix> mu, sigma;
  for (std::size_t k = 0; k < experts; ++k) {
    mu.push_back(head_forward(mu_[k], latent, trace ? &trace->mu[k] : nullptr));
    sigma.push_back(head_forward(sigma_[k], latent, trace ? &trace->sigma[k] : nullptr));
  }

  std::vector<HeadOutputs> heads(n);
  std::vector<Prediction> preds(n);
  for (std::size_t i = 0; i < n; ++i) {
    HeadOutputs& h = heads[i];
    h.p_ltv = p(i, 0);
    h.p_gwd = ptr_gwd_ ? p_gwd(i, 0) : h.p_ltv;
    h.gate = {gate(i, 0), gate(i, 1)};
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t src = std::min(k, experts - 1);
      h.mu[k] = mu[src](i, 0);
      h.sigma[k] = std::max(sigma[src](i, 0), kSigmaFloor);
    }
    preds[i] = combine(h, dims_.variant);
    const Prediction& q = preds[i];
    const char* bad = !std::isfinite(h.p_ltv) ? "purchase head"
                      : !std::isfinite(h.p_gwd) ? "detector purchase head"
                      : !(std::isfinite(h.gate[0]) && std::isfinite(h.gate[1])) ? "detector head"
                      : !(std::isfinite(q.mu) && std::isfinite(q.sigma)) ? "expert heads"
                      : !std::isfinite(q.ltv) ? "LTV estimate"
                                              : nullptr;
    if (bad != nullptr) throw NumericError(std::string("non-finite output from the ") + bad);
  }
  if (trace != nullptr) {
    trace->latent = latent;
    trace->heads = std::move(heads);
    trace->predictions = preds;
    trace->valid = true;
  }
  return preds;
}

LossBreakdown ExpLtvModel::loss(std::span<const EncodedUser> batch, std::span<const Targets> targets,
                                const LossWeights& weights) const {
  ForwardTrace trace;
  forward(batch, &trace);
  return batch_loss(trace.heads, targets, weights, dims_.variant, nullptr);
}

LossBreakdown ExpLtvModel::loss_and_backward(std::span<const EncodedUser> batch,
                                             std::span<const Targets> targets,
                                             const LossWeights& weights) {
  ForwardTrace trace;
  forward(batch, &trace);
  HeadGradients grads;
  const LossBreakdown out = batch_loss(trace.heads, targets, weights, dims_.variant, &grads);
  backward(trace, grads);
  return out;
}

void ExpLtvModel::backward(const ForwardTrace& trace, const HeadGradients& grads) {
  if (!trace.valid) throw UsageError("model backward without a cached forward");
  const std::size_t n = trace.heads.size();
  Matrix d_latent(n, dims_.latent_dim);
  auto add = [&](const Matrix& g) {
    auto dst = d_latent.values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  auto column = [&](const std::vector<double>& v) {
    Matrix m(n, 1);
    std::copy(v.begin(), v.end(), m.values().begin());
    return m;
  };

  add(head_backward(ptr_, trace.ptr, column(grads.p_ltv)));
  if (ptr_gwd_) add(head_backward(*ptr_gwd_, trace.ptr_gwd, column(grads.p_gwd)));

  Matrix d_gate(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    d_gate(i, 0) = grads.gate[i][0];
    d_gate(i, 1) = grads.gate[i][1];
  }
  add(head_backward(gwd_, trace.gwd, d_gate));

  for (std::size_t k = 0; k < mu_.size(); ++k) {
    Matrix d_mu(n, 1), d_sigma(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      d_mu(i, 0) = grads.mu[i][k];
      // The sigma floor is flat, so no gradient reaches the head below it.
      const bool floored = trace.sigma[k].out.output(i, 0) < kSigmaFloor;
      d_sigma(i, 0) = floored ? 0.0 : grads.sigma[i][k];
    }
    add(head_backward(mu_[k], trace.mu[k], d_mu));
    add(head_backward(sigma_[k], trace.sigma[k], d_sigma));
  }

  const Matrix d_lower = encoder_->backward(trace.encoder, d_latent);
  embed_.backward(trace.embed, d_lower);
}

UserScore ExpLtvModel::score(const UserRecord& record) const {
  const EncodedUser e = encode(record, schema_);
  const Prediction p = forward(std::span<const EncodedUser>(&e, 1), nullptr).front();
  return {p.ltv, p.gate[0], p.p_ptr};
}

std::vector<UserScore> ExpLtvModel::score(const Dataset& data) const {
  if (!(data.layout == schema_.layout()))
    throw DataError("dataset columns do not match the model's feature schema");
  std::vector<UserScore> out;
  out.reserve(data.size());
  constexpr std::size_t kChunk = 1024;
  std::vector<EncodedUser> chunk;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) chunk.push_back(encode(data.users[i], schema_));
    for (const Prediction& p : forward(chunk, nullptr)) out.push_back({p.ltv, p.gate[0], p.p_ptr});
  }
  return out;
}

}  // namespace expltv
