// SPDX-License-Identifier: Apache-2.0
#include "hierpath/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <set>

#include <Eigen/Core>

#include "hierpath/error.hpp"

namespace hierpath::nn {

NdArray::NdArray(std::vector<std::size_t> dims, double fill_value) : shape(std::move(dims)) {
  const auto n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  values.assign(n, fill_value);
}

void NdArray::fill(double v) { std::fill(values.begin(), values.end(), v); }

bool NdArray::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Parameter::Parameter(std::string param_name, NdArray initial)
    : name(std::move(param_name)),
      value(std::move(initial)),
      grad(value.shape),
      acc_grad_sq(value.shape),
      acc_update_sq(value.shape) {}

double activate(double x, Activation act) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::none: return x;
  }
  return x;
}

double activate_grad(double pre, Activation act) {
  switch (act) {
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::none: return 1.0;
  }
  return 1.0;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

namespace {

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void require_rank(const NdArray& a, std::size_t rank, const char* what) {
  if (a.rank() != rank)
    throw ContractError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                        shape_string(a.shape));
}

std::vector<char> nonzero_rows(const NdArray& input) {
  const auto rows = input.dim(0);
  const auto cols = input.dim(1);
  std::vector<char> flags(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = input.values.data() + r * cols;
    flags[r] = std::any_of(p, p + cols, [](double v) { return v != 0.0; });
  }
  return flags;
}

}  // namespace

NdArray embedding_forward(std::span<const int> indices, const Parameter& table) {
  require_rank(table.value, 2, "embedding table");
  const auto vocab = table.value.dim(0);
  const auto width = table.value.dim(1);
  NdArray out({indices.size(), width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= vocab)
      throw ContractError("embedding index " + std::to_string(idx) + " outside [0, " +
                          std::to_string(vocab) + ")");
    std::memcpy(out.values.data() + i * width, table.value.values.data() + idx * width,
                width * sizeof(double));
  }
  return out;
}

void embedding_backward(std::span<const int> indices, const NdArray& upstream, Parameter& table,
                        int pad_index) {
  const auto width = table.value.dim(1);
  if (upstream.rank() != 2 || upstream.dim(0) != indices.size() || upstream.dim(1) != width)
    throw ContractError("embedding upstream shape " + shape_string(upstream.shape) + " does not match [" +
                        std::to_string(indices.size()) + " x " + std::to_string(width) + "]");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx == pad_index) continue;
    if (idx < 0 || static_cast<std::size_t>(idx) >= table.value.dim(0))
      throw ContractError("embedding index " + std::to_string(idx) + " out of range");
    axpy(1.0, upstream.values.data() + i * width, table.grad.values.data() + idx * width, width);
  }
}

ConvOutput conv1d_forward(const NdArray& input, const Parameter& filters, const Parameter& bias,
                          Activation act) {
  require_rank(input, 2, "convolution input");
  require_rank(filters.value, 3, "filter bank");
  const auto len = input.dim(0);
  const auto width = input.dim(1);
  const auto num_filters = filters.value.dim(0);
  const auto window = filters.value.dim(1);
  if (filters.value.dim(2) != width || bias.value.size() != num_filters)
    throw ContractError("filter bank " + shape_string(filters.value.shape) + " / bias " +
                        shape_string(bias.value.shape) + " incompatible with input " +
                        shape_string(input.shape));
  if (len < window)
    throw ContractError("sequence length L=" + std::to_string(len) + " is shorter than window h=" +
                        std::to_string(window));
  const auto steps = len - window + 1;
  const auto active = nonzero_rows(input);
  // Products of every non-padding row with every filter slice in one GEMM:
  // prod(a, f*window + j) = <row a, filters[f][j]>.
  std::vector<std::size_t> slot(len, 0);
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < len; ++r)
    if (active[r]) {
      slot[r] = rows.size();
      rows.push_back(r);
    }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor gathered(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t a = 0; a < rows.size(); ++a)
    std::copy_n(input.values.data() + rows[a] * width, width, gathered.row(static_cast<Eigen::Index>(a)).data());
  const Eigen::Map<const RowMajor> bank(filters.value.values.data(),
                                        static_cast<Eigen::Index>(num_filters * window),
                                        static_cast<Eigen::Index>(width));
  const RowMajor prod = gathered * bank.transpose();

  // Steps whose window holds only padding reduce to the bias.
  ConvOutput result{NdArray({steps, num_filters}), NdArray({steps, num_filters})};
  std::vector<double> bias_out(num_filters);
  for (std::size_t f = 0; f < num_filters; ++f) bias_out[f] = activate(bias.value[f], act);
  std::vector<char> touched(steps, 0);
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < window && j <= r; ++j)
      if (r - j < steps) touched[r - j] = 1;
  for (std::size_t t = 0; t < steps; ++t) {
    double* pre = result.pre.values.data() + t * num_filters;
    double* out = result.out.values.data() + t * num_filters;
    if (!touched[t]) {
      std::copy_n(bias.value.values.data(), num_filters, pre);
      std::copy_n(bias_out.data(), num_filters, out);
      continue;
    }
    for (std::size_t f = 0; f < num_filters; ++f) {
      double s = bias.value[f];
      for (std::size_t j = 0; j < window; ++j)
        if (active[t + j])
          s += prod(static_cast<Eigen::Index>(slot[t + j]), static_cast<Eigen::Index>(f * window + j));
      pre[f] = s;
      out[f] = activate(s, act);
    }
  }
  return result;
}

NdArray conv1d_backward(const NdArray& input, const NdArray& pre, const NdArray& upstream,
                        Parameter& filters, Parameter& bias, Activation act) {
  const auto len = input.dim(0);
  const auto width = input.dim(1);
  const auto num_filters = filters.value.dim(0);
  const auto window = filters.value.dim(1);
  const auto steps = len - window + 1;
  if (upstream.rank() != 2 || upstream.dim(0) != steps || upstream.dim(1) != num_filters)
    throw ContractError("convolution upstream shape " + shape_string(upstream.shape) + " mismatch");
  const auto active = nonzero_rows(input);
  NdArray grad_input({len, width});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t f = 0; f < num_filters; ++f) {
      const double up = upstream.at(t, f);
      if (up == 0.0) continue;
      const double g = up * activate_grad(pre.at(t, f), act);
      if (g == 0.0) continue;
      bias.grad[f] += g;
      for (std::size_t j = 0; j < window; ++j) {
        const auto r = t + j;
        const auto offset = (f * window + j) * width;
        if (active[r])
          axpy(g, input.values.data() + r * width, filters.grad.values.data() + offset, width);
        axpy(g, filters.value.values.data() + offset, grad_input.values.data() + r * width, width);
      }
    }
  }
  return grad_input;
}

PoolOutput max_over_time(const NdArray& featmap) {
  require_rank(featmap, 2, "feature map");
  const auto steps = featmap.dim(0);
  const auto features = featmap.dim(1);
  if (steps == 0) throw ContractError("max over time of an empty feature map");
  PoolOutput out{NdArray({features}), std::vector<std::size_t>(features, 0)};
  for (std::size_t f = 0; f < features; ++f) {
    double best = featmap.at(0, f);
    std::size_t arg = 0;
    for (std::size_t t = 1; t < steps; ++t) {
      if (featmap.at(t, f) > best) {
        best = featmap.at(t, f);
        arg = t;
      }
    }
    out.values[f] = best;
    out.argmax[f] = arg;
  }
  return out;
}

NdArray max_over_time_backward(const NdArray& upstream, std::span<const std::size_t> argmax,
                               std::size_t time_steps) {
  NdArray grad({time_steps, argmax.size()});
  for (std::size_t f = 0; f < argmax.size(); ++f) grad.at(argmax[f], f) = upstream[f];
  return grad;
}

DropoutOutput dropout(const NdArray& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout probability must lie in [0,1)");
  DropoutOutput r{x, NdArray(x.shape, 1.0)};
  if (mode == Mode::infer || p == 0.0) return r;
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.mask[i] = rng.bernoulli(p) ? 0.0 : scale;
    r.out[i] = x[i] * r.mask[i];
  }
  return r;
}

NdArray dropout_backward(const NdArray& upstream, const NdArray& mask) {
  NdArray g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
  return g;
}

DenseOutput dense_forward(const NdArray& x, const Parameter& weights, const Parameter& bias,
                          Activation act) {
  require_rank(weights.value, 2, "dense weights");
  const auto m = weights.value.dim(0);
  const auto n = weights.value.dim(1);
  if (x.size() != n || bias.value.size() != m)
    throw ContractError("dense shape mismatch: weights " + shape_string(weights.value.shape) +
                        ", bias " + shape_string(bias.value.shape) + ", input " + shape_string(x.shape));
  DenseOutput r{NdArray({m}), NdArray({m})};
  for (std::size_t i = 0; i < m; ++i) {
    r.pre[i] = bias.value[i] + dot(weights.value.values.data() + i * n, x.values.data(), n);
    r.out[i] = activate(r.pre[i], act);
  }
  return r;
}

NdArray dense_backward(const NdArray& x, const NdArray& pre, const NdArray& upstream,
                       Parameter& weights, Parameter& bias, Activation act) {
  const auto m = weights.value.dim(0);
  const auto n = weights.value.dim(1);
  if (upstream.size() != m || x.size() != n)
    throw ContractError("dense backward shape mismatch: weights " + shape_string(weights.value.shape) +
                        ", upstream " + shape_string(upstream.shape));
  NdArray grad_x({n});
  for (std::size_t i = 0; i < m; ++i) {
    const double g = upstream[i] * activate_grad(pre[i], act);
    if (g == 0.0) continue;
    bias.grad[i] += g;
    axpy(g, x.values.data(), weights.grad.values.data() + i * n, n);
    axpy(g, weights.value.values.data() + i * n, grad_x.values.data(), n);
  }
  return grad_x;
}

NdArray softmax(const NdArray& logits) {
  const double top = *std::max_element(logits.values.begin(), logits.values.end());
  NdArray probs(logits.shape);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (probs[i] = std::exp(logits[i] - top));
  for (auto& p : probs.values) p /= sum;
  return probs;
}

SoftmaxOutput softmax_xent(const NdArray& logits, std::size_t true_class) {
  if (logits.size() < 2) throw ContractError("softmax needs at least 2 classes");
  if (true_class >= logits.size())
    throw ContractError("true class " + std::to_string(true_class) + " outside [0, " +
                        std::to_string(logits.size()) + ")");
  const double top = *std::max_element(logits.values.begin(), logits.values.end());
  double sum = 0.0;
  for (double z : logits.values) sum += std::exp(z - top);
  return {std::log(sum) - (logits[true_class] - top), softmax(logits)};
}

NdArray softmax_xent_backward(const NdArray& probs, std::size_t true_class) {
  NdArray g = probs;
  g[true_class] -= 1.0;
  return g;
}

void adadelta_step(Parameter& param, const AdadeltaConfig& config) {
  if (!(config.rho > 0.0 && config.rho < 1.0) || !(config.eps > 0.0))
    throw ContractError("adadelta requires 0 < rho < 1 and eps > 0");
  if (param.frozen) {
    param.zero_grad();
    return;
  }
  if (!param.grad.all_finite()) throw NumericError("non-finite gradient in parameter " + param.name);
  const double rho = config.rho;
  const double eps = config.eps;
  auto& v = param.value.values;
  auto& g = param.grad.values;
  auto& eg = param.acc_grad_sq.values;
  auto& ed = param.acc_update_sq.values;
  for (std::size_t i = 0; i < v.size(); ++i) {
    eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
    const double delta = -std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps) * g[i];
    ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
    v[i] += delta;
    g[i] = 0.0;
  }
}

NdArray init_uniform(std::vector<std::size_t> shape, double limit, Rng& rng) {
  NdArray a(std::move(shape));
  for (auto& v : a.values) v = rng.symmetric(limit);
  return a;
}

NdArray init_params(std::vector<std::size_t> shape, InitScheme scheme, Rng& rng) {
  if (scheme == InitScheme::zeros) return NdArray(std::move(shape));
  std::size_t fan_in = 0, fan_out = 0;
  if (shape.size() == 1) {
    fan_in = fan_out = shape[0];
  } else {
    fan_out = shape[0];
    fan_in = std::accumulate(shape.begin() + 1, shape.end(), std::size_t{1}, std::multiplies<>());
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return init_uniform(std::move(shape), limit, rng);
}

GradCheckReport gradient_check(const std::function<double()>& loss,
                               const std::function<void()>& backprop,
                               std::span<Parameter* const> params, const GradCheckOptions& options) {
  const double f0 = loss();
  const double f1 = loss();
  if (std::memcmp(&f0, &f1, sizeof f0) != 0)
    throw ContractError("gradient check: forward pass is not deterministic (" + std::to_string(f0) +
                        " vs " + std::to_string(f1) + ")");
  for (auto* p : params) p->zero_grad();
  backprop();

  GradCheckReport report;
  Rng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    ParamCheck check{p.name};
    if (p.frozen) {
      report.params.push_back(check);
      continue;
    }
    const NdArray analytic = p.grad;
    auto constant = [&](std::size_t i) { return options.is_constant && options.is_constant(pi, i); };

    std::vector<std::size_t> nonzero;
    for (std::size_t i = 0; i < analytic.size(); ++i)
      if (analytic[i] != 0.0 && !constant(i)) nonzero.push_back(i);
    std::set<std::size_t> chosen;
    const auto want = std::min(options.coords_per_param, p.size());
    for (std::size_t i = 0; i < nonzero.size() && chosen.size() < want; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(nonzero.size() - i));
      std::swap(nonzero[i], nonzero[j]);
      chosen.insert(nonzero[i]);
    }
    for (std::size_t attempts = 0; chosen.size() < want && attempts < 50 * want; ++attempts) {
      const auto i = static_cast<std::size_t>(rng.below(p.size()));
      if (!constant(i)) chosen.insert(i);
    }
    for (const auto& [fp, fi] : options.forced)
      if (fp == pi) chosen.insert(fi);

    for (std::size_t i : chosen) {
      const double saved = p.value[i];
      p.value[i] = saved + options.delta;
      const double up = loss();
      p.value[i] = saved - options.delta;
      const double down = loss();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.delta);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      check.max_rel_error = std::max(check.max_rel_error, rel);
      ++check.coords_checked;
    }
    check.passed = check.max_rel_error < options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.passed = report.passed && check.passed;
    report.params.push_back(check);
  }
  return report;
}

}  // namespace hierpath::nn
