// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hierpath/rng.hpp"

namespace hierpath::nn {

/// Dense row-major float64 array.
struct NdArray {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  NdArray() = default;
  explicit NdArray(std::vector<std::size_t> dims, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t rank() const { return shape.size(); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * shape[1], shape[1]}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * shape[1], shape[1]}; }

  void fill(double v);
  bool all_finite() const;
  bool operator==(const NdArray&) const = default;
};

std::string shape_string(std::span<const std::size_t> shape);

/// Learned tensor with its gradient and Adadelta accumulators.
struct Parameter {
  std::string name;
  NdArray value;
  NdArray grad;
  NdArray acc_grad_sq;
  NdArray acc_update_sq;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string name, NdArray initial);

  void zero_grad() { grad.fill(0.0); }
  std::size_t size() const { return value.size(); }
};

enum class Activation { relu, tanh, none };
enum class Mode { train, infer };

double activate(double x, Activation act);
/// Derivative expressed through the pre-activation value.
double activate_grad(double pre, Activation act);

/// Fixed-order dot product; four interleaved partial sums, combined in order.
double dot(const double* a, const double* b, std::size_t n);

// --- embedding -------------------------------------------------------------

NdArray embedding_forward(std::span<const int> indices, const Parameter& table);
/// Scatter-adds upstream rows into table.grad; rows at `pad_index` get nothing.
void embedding_backward(std::span<const int> indices, const NdArray& upstream, Parameter& table,
                        int pad_index = 0);

// --- valid 1-D convolution over word windows -------------------------------

struct ConvOutput {
  NdArray pre;  // [T x F] before the activation
  NdArray out;  // [T x F]
};

/// input [L x D], filters [F x h x D], bias [F] -> [(L-h+1) x F].
/// All-zero input rows (padding) are skipped in the inner products.
ConvOutput conv1d_forward(const NdArray& input, const Parameter& filters, const Parameter& bias,
                          Activation act);
/// Accumulates filter/bias gradients and returns the gradient w.r.t. input.
NdArray conv1d_backward(const NdArray& input, const NdArray& pre, const NdArray& upstream,
                        Parameter& filters, Parameter& bias, Activation act);

// --- max over time ---------------------------------------------------------

struct PoolOutput {
  NdArray values;                   // [F]
  std::vector<std::size_t> argmax;  // [F], earliest window wins ties
};

PoolOutput max_over_time(const NdArray& featmap);
NdArray max_over_time_backward(const NdArray& upstream, std::span<const std::size_t> argmax,
                               std::size_t time_steps);

// --- dropout ---------------------------------------------------------------

struct DropoutOutput {
  NdArray out;
  NdArray mask;  // 0 or 1/(1-p) per element; all ones in infer mode
};

/// Inverted dropout.
DropoutOutput dropout(const NdArray& x, double p, Mode mode, Rng& rng);
NdArray dropout_backward(const NdArray& upstream, const NdArray& mask);

// --- dense -----------------------------------------------------------------

struct DenseOutput {
  NdArray pre;
  NdArray out;
};

/// x [n], weights [m x n], bias [m] -> act(W x + b) [m].
DenseOutput dense_forward(const NdArray& x, const Parameter& weights, const Parameter& bias,
                          Activation act);
NdArray dense_backward(const NdArray& x, const NdArray& pre, const NdArray& upstream,
                       Parameter& weights, Parameter& bias, Activation act);

// --- softmax cross-entropy ---------------------------------------------------

struct SoftmaxOutput {
  double loss = 0.0;
  NdArray probs;
};

NdArray softmax(const NdArray& logits);
SoftmaxOutput softmax_xent(const NdArray& logits, std::size_t true_class);
/// probs - onehot(true_class)
NdArray softmax_xent_backward(const NdArray& probs, std::size_t true_class);

// --- optimizer and initialization -------------------------------------------

struct AdadeltaConfig {
  double rho = 0.95;
  double eps = 1e-6;
};

/// One Adadelta update from param.grad; clears the gradient afterwards.
/// Frozen parameters are left untouched.
void adadelta_step(Parameter& param, const AdadeltaConfig& config);

enum class InitScheme { uniform_xavier, zeros };

/// Xavier-uniform limit sqrt(6 / (fan_in + fan_out)). For rank >= 2 the first
/// axis is fan_out and the product of the rest is fan_in; rank 1 uses the
/// length for both.
NdArray init_params(std::vector<std::size_t> shape, InitScheme scheme, Rng& rng);
NdArray init_uniform(std::vector<std::size_t> shape, double limit, Rng& rng);

// --- finite-difference verification -----------------------------------------

struct GradCheckOptions {
  std::size_t coords_per_param = 20;
  double delta = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0x6C0FFEEULL;
  /// Coordinates that must be checked in addition to the sampled ones, as
  /// (parameter position, flat element index).
  std::vector<std::pair<std::size_t, std::size_t>> forced;
  /// Elements treated as constants (e.g. the frozen padding row).
  std::function<bool(std::size_t param, std::size_t element)> is_constant;
};

struct ParamCheck {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// `loss` evaluates the objective at the current parameter values; `backprop`
/// fills the analytic gradients (grads are zeroed before it is called).
/// Coordinates with a nonzero analytic gradient are sampled first.
GradCheckReport gradient_check(const std::function<double()>& loss,
                               const std::function<void()>& backprop,
                               std::span<Parameter* const> params, const GradCheckOptions& options);

}  // namespace hierpath::nn
