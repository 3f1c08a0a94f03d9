#include "expltv/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "expltv/error.hpp"

namespace expltv {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softplus: return "softplus";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
  }
  return "unknown";
}

double stable_sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double stable_softplus(double z) noexcept {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

Matrix activate(Activation a, const Matrix& pre) {
  Matrix out(pre.rows(), pre.cols());
  auto in = pre.values();
  auto o = out.values();
  switch (a) {
    case Activation::identity:
      std::copy(in.begin(), in.end(), o.begin());
      break;
    case Activation::sigmoid:
      // Clamped so the output stays strictly inside (0, 1).
      for (std::size_t i = 0; i < in.size(); ++i)
        o[i] = std::clamp(stable_sigmoid(in[i]), 1e-15, 1.0 - 1e-15);
      break;
    case Activation::softplus:
      // Floored so very negative inputs stay strictly positive instead of underflowing.
      for (std::size_t i = 0; i < in.size(); ++i)
        o[i] = std::max(stable_softplus(in[i]), std::numeric_limits<double>::min());
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case Activation::softmax:
      for (std::size_t r = 0; r < pre.rows(); ++r) {
        auto x = pre.row(r);
        auto y = out.row(r);
        const double shift = *std::max_element(x.begin(), x.end());
        double total = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
          y[c] = std::exp(x[c] - shift);
          total += y[c];
        }
        for (double& v : y) v /= total;
      }
      break;
  }
  return out;
}

Matrix activation_backward(Activation a, const Matrix& pre, const Matrix& out,
                           const Matrix& upstream) {
  Matrix grad(pre.rows(), pre.cols());
  auto g = grad.values();
  auto u = upstream.values();
  auto x = pre.values();
  auto y = out.values();
  switch (a) {
    case Activation::identity:
      std::copy(u.begin(), u.end(), g.begin());
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) {
        // Derivative of the clamped sigmoid is zero where the clamp is active.
        const bool clamped = y[i] <= 1e-15 || y[i] >= 1.0 - 1e-15;
        g[i] = clamped ? 0.0 : u[i] * y[i] * (1.0 - y[i]);
      }
      break;
    case Activation::softplus:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = u[i] * stable_sigmoid(x[i]);
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = x[i] > 0.0 ? u[i] : 0.0;
      break;
    case Activation::softmax:
      for (std::size_t r = 0; r < pre.rows(); ++r) {
        auto yr = out.row(r);
        auto ur = upstream.row(r);
        auto gr = grad.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * ur[c];
        for (std::size_t c = 0; c < yr.size(); ++c) gr[c] = yr[c] * (ur[c] - dot);
      }
      break;
  }
  return grad;
}

void Parameter::zero_grad() {
  grad.fill(0.0);
  accumulated = 0;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const Parameter* p : blocks_) n += p->value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (Parameter* p : blocks_) p->zero_grad();
}

Parameter* ParamStore::find(std::string_view name) const noexcept {
  for (Parameter* p : blocks_)
    if (p->name == name) return p;
  return nullptr;
}

ParamStore ParamStore::select(std::span<const std::string> prefixes) const {
  ParamStore out;
  for (Parameter* p : blocks_) {
    for (const auto& prefix : prefixes) {
      if (p->name.starts_with(prefix)) {
        out.add(*p);
        break;
      }
    }
  }
  return out;
}

DenseLayer::DenseLayer(const std::string& name, const std::string& role, std::size_t in_dim,
                       std::size_t out_dim, Activation act)
    : weight_(name + ".W", role, in_dim, out_dim), bias_(name + ".b", role, 1, out_dim), act_(act) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("layer " + name + " has a zero dimension");
  if (act == Activation::softmax && out_dim < 2)
    throw ConfigError("softmax layer " + name + " needs at least two outputs");
}

void glorot_uniform(Matrix& m, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& v : m.values()) v = dist(rng);
}

void DenseLayer::init(std::mt19937_64& rng) {
  glorot_uniform(weight_.value, in_dim(), out_dim(), rng);
  bias_.value.fill(0.0);
}

Matrix DenseLayer::forward(const Matrix& input, DenseCache* cache) const {
  if (input.cols() != in_dim())
    throw ConfigError("layer " + weight_.name + ": input width " + std::to_string(input.cols()) +
                      " != " + std::to_string(in_dim()));
  const std::size_t batch = input.rows();
  const std::size_t out = out_dim();
  Matrix pre(batch, out);
  const auto& w = weight_.value;
  const auto b = bias_.value.row(0);
  for (std::size_t r = 0; r < batch; ++r) {
    auto dst = pre.row(r);
    std::copy(b.begin(), b.end(), dst.begin());
    auto x = input.row(r);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      auto wr = w.row(i);
      for (std::size_t j = 0; j < out; ++j) dst[j] += xi * wr[j];
    }
  }
  Matrix output = activate(act_, pre);
  if (cache != nullptr) {
    cache->input = input;
    cache->pre = std::move(pre);
    cache->output = output;
    cache->valid = true;
  }
  return output;
}

std::vector<double> DenseLayer::forward(std::span<const double> input) const {
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.values().begin());
  Matrix y = forward(x, nullptr);
  return {y.values().begin(), y.values().end()};
}

Matrix DenseLayer::backward(const DenseCache& cache, const Matrix& upstream) {
  if (!cache.valid) throw UsageError("backward on layer " + weight_.name + " without a cached forward");
  if (upstream.rows() != cache.output.rows() || upstream.cols() != out_dim())
    throw ConfigError("layer " + weight_.name + ": upstream gradient has the wrong shape");

  const Matrix dpre = activation_backward(act_, cache.pre, cache.output, upstream);
  const std::size_t batch = dpre.rows();
  const std::size_t in = in_dim();
  const std::size_t out = out_dim();
  auto& gw = weight_.grad;
  auto gb = bias_.grad.row(0);
  Matrix dinput(batch, in);
  const auto& w = weight_.value;
  for (std::size_t r = 0; r < batch; ++r) {
    auto d = dpre.row(r);
    auto x = cache.input.row(r);
    auto dx = dinput.row(r);
    for (std::size_t j = 0; j < out; ++j) gb[j] += d[j];
    for (std::size_t i = 0; i < in; ++i) {
      auto gwr = gw.row(i);
      auto wr = w.row(i);
      const double xi = x[i];
      double acc = 0.0;
      for (std::size_t j = 0; j < out; ++j) {
        gwr[j] += xi * d[j];
        acc += wr[j] * d[j];
      }
      dx[i] = acc;
    }
  }
  ++weight_.accumulated;
  ++bias_.accumulated;
  return dinput;
}

void DenseLayer::register_params(ParamStore& store) {
  store.add(weight_);
  store.add(bias_);
}

AdamState::AdamState(const ParamStore& params, AdamOptions opts) : opts_(opts) {
  for (const Parameter* p : params.blocks()) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void AdamState::step(ParamStore& params) {
  const auto blocks = params.blocks();
  if (blocks.size() != m_.size()) throw UsageError("Adam state does not match the parameter store");
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(opts_.beta1, t);
  const double c2 = 1.0 - std::pow(opts_.beta2, t);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Parameter& p = *blocks[b];
    auto value = p.value.values();
    auto grad = p.grad.values();
    auto m = m_[b].values();
    auto v = v_[b].values();
    if (value.size() != m.size()) throw UsageError("Adam state shape mismatch for " + p.name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * grad[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      value[i] -= opts_.learning_rate * mhat / (std::sqrt(vhat) + opts_.epsilon);
    }
    p.zero_grad();
  }
}

GradCheckReport grad_check(ParamStore& params, const std::function<double(bool)>& loss,
                           const GradCheckOptions& opts) {
  GradCheckReport report;
  params.zero_grads();
  const double base = loss(true);
  std::vector<Matrix> analytic;
  for (const Parameter* p : params.blocks()) analytic.push_back(p->grad);
  params.zero_grads();

  const double denom_floor = opts.abs_floor / opts.tolerance;
  const auto blocks = params.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Parameter& p = *blocks[b];
    GradCheckBlock blk;
    blk.name = p.name;
    if (!std::isfinite(base)) blk.finite = false;
    auto value = p.value.values();
    auto ana = analytic[b].values();
    for (std::size_t i = 0; i < value.size() && blk.finite; ++i) {
      const double saved = value[i];
      value[i] = saved + opts.step;
      const double up = loss(false);
      value[i] = saved - opts.step;
      const double down = loss(false);
      value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(ana[i])) {
        blk.finite = false;
        break;
      }
      const double numeric = (up - down) / (2.0 * opts.step);
      const double abs_err = std::abs(ana[i] - numeric);
      const double scale = std::max({std::abs(ana[i]), std::abs(numeric), denom_floor});
      blk.max_abs_error = std::max(blk.max_abs_error, abs_err);
      blk.max_rel_error = std::max(blk.max_rel_error, abs_err / scale);
    }
    blk.passed = blk.finite && blk.max_rel_error <= opts.tolerance;
    report.passed = report.passed && blk.passed;
    report.max_rel_error = std::max(report.max_rel_error, blk.max_rel_error);
    report.blocks.push_back(std::move(blk));
  }
  return report;
}

}  // namespace expltv
