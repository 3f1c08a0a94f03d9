#pragma once

// Dense-network substrate: matrices, affine layers with fixed activations,
// hand-wired reverse-mode gradients, Adam, and a finite-difference checker.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expltv {

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { identity, sigmoid, softplus, relu, softmax };

std::string_view to_string(Activation a);

double stable_sigmoid(double z) noexcept;
double stable_softplus(double z) noexcept;

/// Row-wise activation of a batch of pre-activations.
Matrix activate(Activation a, const Matrix& pre);

/// Vector-Jacobian product of the activation, row by row.
Matrix activation_backward(Activation a, const Matrix& pre, const Matrix& out,
                           const Matrix& upstream);

/// A trainable array together with its gradient slot.
struct Parameter {
  std::string name;
  std::string role;  // "shared", "detector", "ltv", "purchase"
  Matrix value;
  Matrix grad;
  std::size_t accumulated = 0;  // backward passes since the last zero_grad

  Parameter() = default;
  Parameter(std::string n, std::string r, std::size_t rows, std::size_t cols)
      : name(std::move(n)), role(std::move(r)), value(rows, cols), grad(rows, cols) {}

  void zero_grad();
};

/// Non-owning, ordered view over every trainable block of a model.
class ParamStore {
 public:
  void add(Parameter& p) { blocks_.push_back(&p); }

  std::span<Parameter* const> blocks() const noexcept { return blocks_; }
  std::size_t scalar_count() const noexcept;
  void zero_grads();
  Parameter* find(std::string_view name) const noexcept;

  /// Subset of blocks whose name starts with any of the prefixes.
  ParamStore select(std::span<const std::string> prefixes) const;

 private:
  std::vector<Parameter*> blocks_;
};

/// Activations kept by DenseLayer::forward for the matching backward call.
struct DenseCache {
  Matrix input;
  Matrix pre;
  Matrix output;
  bool valid = false;
};

/// y = activation(x W + b), W is in_dim x out_dim.
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(const std::string& name, const std::string& role, std::size_t in_dim,
             std::size_t out_dim, Activation act);

  std::size_t in_dim() const noexcept { return weight_.value.rows(); }
  std::size_t out_dim() const noexcept { return weight_.value.cols(); }
  Activation activation() const noexcept { return act_; }

  /// Glorot-uniform weights, zero bias.
  void init(std::mt19937_64& rng);

  /// Batched forward; `cache` may be null for inference-only calls.
  Matrix forward(const Matrix& input, DenseCache* cache) const;
  std::vector<double> forward(std::span<const double> input) const;

  /// Accumulates dL/dW and dL/db and returns dL/dinput.
  Matrix backward(const DenseCache& cache, const Matrix& upstream);

  Parameter& weight() noexcept { return weight_; }
  Parameter& bias() noexcept { return bias_; }
  const Parameter& weight() const noexcept { return weight_; }
  const Parameter& bias() const noexcept { return bias_; }

  void register_params(ParamStore& store);

 private:
  Parameter weight_;
  Parameter bias_;
  Activation act_ = Activation::identity;
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Matrix& m, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one ParamStore; the store must keep its block order.
class AdamState {
 public:
  AdamState(const ParamStore& params, AdamOptions opts);

  /// Bias-corrected Adam update of every block, then zeroes gradients.
  void step(ParamStore& params);

  std::uint64_t steps() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return opts_; }

 private:
  AdamOptions opts_;
  std::uint64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double abs_floor = 1e-6;
};

struct GradCheckBlock {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool finite = true;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  bool passed = true;
  double max_rel_error = 0.0;
};

/// `loss(true)` must accumulate analytic gradients into the store and return
/// the loss; `loss(false)` only evaluates. Each entry's error is
/// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor / tolerance),
/// so an entry passes when it is within `tolerance` relatively or within
/// `abs_floor` absolutely.
GradCheckReport grad_check(ParamStore& params, const std::function<double(bool)>& loss,
                           const GradCheckOptions& opts = {});

}  // namespace expltv
