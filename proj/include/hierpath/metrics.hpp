// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hierpath {

/// counts[true][pred] over an ordered code list.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::uint64_t>> counts;

  explicit ConfusionMatrix(std::vector<std::string> codes = {});

  std::size_t size() const { return classes.size(); }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t i) const;
  std::uint64_t col_sum(std::size_t j) const;

  /// `true\pred,<codes...>` header, one row per true class.
  std::string to_csv() const;
  static ConfusionMatrix from_csv(std::string_view csv);
  /// Aligned text grid with row/column code labels.
  std::string render_grid() const;

  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const std::size_t> truths, std::span<const std::size_t> preds,
                          std::vector<std::string> classes);

struct ClassScores {
  std::string code;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

enum class MetricKind { f1_macro, f1_micro, accuracy };
std::string_view metric_name(MetricKind kind);
MetricKind parse_metric(std::string_view name);

struct MetricsReport {
  double f1_macro = 0.0;
  double f1_micro = 0.0;
  double accuracy = 0.0;
  std::vector<ClassScores> per_class;
  std::optional<Interval> ci_f1_macro;
  std::optional<Interval> ci_f1_micro;
  std::optional<Interval> ci_accuracy;
  std::string ci_method;
  std::vector<std::string> notes;

  double value(MetricKind kind) const;
  std::optional<Interval> interval(MetricKind kind) const;

  std::string to_text() const;
  /// `metric,value,ci_lower,ci_upper` followed by per-class rows.
  std::string to_csv() const;
};

/// Per-class F1 = 2tp / (2tp + fp + fn), 0 when the denominator is 0.
/// Micro F1 uses pooled counts, so it equals accuracy bit-for-bit.
MetricsReport f1_scores(const ConfusionMatrix& cm);

double metric_of(const ConfusionMatrix& cm, MetricKind kind);

struct BootstrapResult {
  Interval interval;
  std::vector<std::string> warnings;
};

inline constexpr std::string_view kBootstrapMethod =
    "percentile bootstrap over reports (resample seed = seed + resample index)";

/// Percentile bootstrap over (truth, pred) pairs. Quantiles interpolate
/// linearly between order statistics.
BootstrapResult bootstrap_ci(std::span<const std::size_t> truths, std::span<const std::size_t> preds,
                             std::size_t num_classes, MetricKind metric,
                             std::size_t n_resamples = 1000, double level = 0.95,
                             std::uint64_t seed = 0);

/// Fills the three interval fields and the method string of `report`.
void attach_bootstrap(MetricsReport& report, std::span<const std::size_t> truths,
                      std::span<const std::size_t> preds, std::size_t num_classes,
                      std::size_t n_resamples, double level, std::uint64_t seed);

struct ConfusedPair {
  std::string first;   // lexicographically smaller code
  std::string second;
  std::uint64_t mass = 0;
  double rate = 0.0;   // mass / (support_first + support_second)
};

/// All unordered class pairs ranked by normalized symmetric confusion, ties by
/// code order; the first n are returned.
std::vector<ConfusedPair> top_confused_pairs(const ConfusionMatrix& cm, std::size_t n);

/// Linear-interpolation quantile of sorted values.
double sorted_quantile(std::span<const double> sorted, double q);

}  // namespace hierpath
