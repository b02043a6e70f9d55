// SPDX-License-Identifier: Apache-2.0
#include "hierpath/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "hierpath/error.hpp"
#include "hierpath/rng.hpp"

namespace hierpath {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> codes)
    : classes(std::move(codes)),
      counts(classes.size(), std::vector<std::uint64_t>(classes.size(), 0)) {}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const {
  std::uint64_t s = 0;
  for (auto c : counts[i]) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t j) const {
  std::uint64_t s = 0;
  for (const auto& row : counts) s += row[j];
  return s;
}

std::string ConfusionMatrix::to_csv() const {
  std::string out = "true\\pred";
  for (const auto& c : classes) out += "," + c;
  out += '\n';
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out += classes[i];
    for (auto c : counts[i]) out += "," + std::to_string(c);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

ConfusionMatrix ConfusionMatrix::from_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t row_no = 0;
  std::vector<std::string> header;
  ConfusionMatrix cm;
  std::size_t filled = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (header.empty()) {
      if (fields.size() < 2) throw ContractError("confusion CSV row 1: header needs class codes");
      header.assign(fields.begin() + 1, fields.end());
      cm = ConfusionMatrix(header);
      continue;
    }
    if (fields.size() != header.size() + 1)
      throw ContractError("confusion CSV row " + std::to_string(row_no) + ": expected " +
                          std::to_string(header.size() + 1) + " fields");
    if (filled >= header.size() || fields[0] != header[filled])
      throw ContractError("confusion CSV row " + std::to_string(row_no) + ": row label '" + fields[0] +
                          "' does not follow the header order");
    for (std::size_t j = 0; j < header.size(); ++j) {
      const auto& f = fields[j + 1];
      if (f.empty() || f.find_first_not_of("0123456789") != std::string::npos)
        throw ContractError("confusion CSV row " + std::to_string(row_no) + ": bad count '" + f + "'");
      cm.counts[filled][j] = std::stoull(f);
    }
    ++filled;
  }
  if (header.empty() || filled != header.size())
    throw ContractError("confusion CSV must be square with one row per class");
  return cm;
}

std::string ConfusionMatrix::render_grid() const {
  std::size_t width = 6;
  for (const auto& c : classes) width = std::max(width, c.size());
  for (const auto& row : counts)
    for (auto c : row) width = std::max(width, std::to_string(c).size());
  std::ostringstream out;
  out << std::setw(static_cast<int>(width)) << "true\\pred";
  for (const auto& c : classes) out << ' ' << std::setw(static_cast<int>(width)) << c;
  out << '\n';
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out << std::setw(static_cast<int>(width)) << classes[i];
    for (auto c : counts[i]) out << ' ' << std::setw(static_cast<int>(width)) << c;
    out << '\n';
  }
  return out.str();
}

ConfusionMatrix confusion(std::span<const std::size_t> truths, std::span<const std::size_t> preds,
                          std::vector<std::string> classes) {
  if (truths.size() != preds.size())
    throw ContractError("confusion: " + std::to_string(truths.size()) + " truths vs " +
                        std::to_string(preds.size()) + " predictions");
  ConfusionMatrix cm(std::move(classes));
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] >= cm.size() || preds[i] >= cm.size())
      throw ContractError("confusion: class index out of range at position " + std::to_string(i));
    ++cm.counts[truths[i]][preds[i]];
  }
  return cm;
}

std::string_view metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::f1_macro: return "f1_macro";
    case MetricKind::f1_micro: return "f1_micro";
    case MetricKind::accuracy: return "accuracy";
  }
  return "?";
}

MetricKind parse_metric(std::string_view name) {
  if (name == "f1_macro") return MetricKind::f1_macro;
  if (name == "f1_micro") return MetricKind::f1_micro;
  if (name == "accuracy") return MetricKind::accuracy;
  throw ContractError("unknown metric '" + std::string(name) + "'");
}

double MetricsReport::value(MetricKind kind) const {
  switch (kind) {
    case MetricKind::f1_macro: return f1_macro;
    case MetricKind::f1_micro: return f1_micro;
    case MetricKind::accuracy: return accuracy;
  }
  return 0.0;
}

std::optional<Interval> MetricsReport::interval(MetricKind kind) const {
  switch (kind) {
    case MetricKind::f1_macro: return ci_f1_macro;
    case MetricKind::f1_micro: return ci_f1_micro;
    case MetricKind::accuracy: return ci_accuracy;
  }
  return std::nullopt;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  for (auto kind : {MetricKind::f1_macro, MetricKind::f1_micro, MetricKind::accuracy}) {
    out << std::left << std::setw(10) << metric_name(kind) << ' ' << fmt3(value(kind));
    if (auto ci = interval(kind)) out << " (" << fmt3(ci->lower) << ", " << fmt3(ci->upper) << ")";
    out << '\n';
  }
  out << "per-class:\n";
  for (const auto& c : per_class)
    out << "  " << c.code << "  P=" << fmt3(c.precision) << " R=" << fmt3(c.recall)
        << " F1=" << fmt3(c.f1) << " n=" << c.support << '\n';
  if (!ci_method.empty()) out << "ci_method: " << ci_method << '\n';
  for (const auto& n : notes) out << "note: " << n << '\n';
  return out.str();
}

std::string MetricsReport::to_csv() const {
  std::string out = "metric,value,ci_lower,ci_upper\n";
  for (auto kind : {MetricKind::f1_macro, MetricKind::f1_micro, MetricKind::accuracy}) {
    out += std::string(metric_name(kind)) + "," + fmt(value(kind));
    if (auto ci = interval(kind)) out += "," + fmt(ci->lower) + "," + fmt(ci->upper);
    else out += ",,";
    out += '\n';
  }
  out += "class,precision,recall,f1,support\n";
  for (const auto& c : per_class)
    out += c.code + "," + fmt(c.precision) + "," + fmt(c.recall) + "," + fmt(c.f1) + "," +
           std::to_string(c.support) + "\n";
  return out;
}

MetricsReport f1_scores(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (cm.size() == 0 || total == 0) throw ContractError("cannot score an empty confusion matrix");
  MetricsReport r;
  double macro_sum = 0.0;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    const auto tp = cm.counts[i][i];
    const auto fp = cm.col_sum(i) - tp;
    const auto fn = cm.row_sum(i) - tp;
    ClassScores s{cm.classes[i], ratio(tp, tp + fp), ratio(tp, tp + fn), ratio(2 * tp, 2 * tp + fp + fn),
                  tp + fn};
    macro_sum += s.f1;
    r.per_class.push_back(std::move(s));
  }
  const auto tp = cm.trace();
  const auto errors = total - tp;  // pooled fp == pooled fn
  r.f1_macro = macro_sum / static_cast<double>(cm.size());
  r.f1_micro = ratio(2 * tp, 2 * tp + errors + errors);
  r.accuracy = ratio(tp, total);
  r.notes.push_back("0/0 precision, recall or F1 is scored as 0");
  return r;
}

double metric_of(const ConfusionMatrix& cm, MetricKind kind) { return f1_scores(cm).value(kind); }

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap_ci(std::span<const std::size_t> truths, std::span<const std::size_t> preds,
                             std::size_t num_classes, MetricKind metric, std::size_t n_resamples,
                             double level, std::uint64_t seed) {
  if (truths.size() != preds.size()) throw ContractError("bootstrap: truths/preds length mismatch");
  if (truths.size() < 2) throw ContractError("bootstrap needs at least 2 examples");
  if (n_resamples == 0) throw ContractError("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw ContractError("confidence level must lie in (0,1)");
  BootstrapResult result;
  if (n_resamples < 100)
    result.warnings.push_back("only " + std::to_string(n_resamples) +
                              " bootstrap resamples; intervals are unreliable below 100");
  const auto n = truths.size();
  std::vector<std::string> codes(num_classes);
  std::vector<double> values(n_resamples);
  for (std::size_t r = 0; r < n_resamples; ++r) {
    Rng rng(seed + r);
    ConfusionMatrix cm(codes);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(rng.below(n));
      if (truths[k] >= num_classes || preds[k] >= num_classes)
        throw ContractError("bootstrap: class index out of range");
      ++cm.counts[truths[k]][preds[k]];
    }
    values[r] = metric_of(cm, metric);
  }
  std::sort(values.begin(), values.end());
  const double tail = (1.0 - level) / 2.0;
  result.interval = {sorted_quantile(values, tail), sorted_quantile(values, 1.0 - tail)};
  return result;
}

void attach_bootstrap(MetricsReport& report, std::span<const std::size_t> truths,
                      std::span<const std::size_t> preds, std::size_t num_classes,
                      std::size_t n_resamples, double level, std::uint64_t seed) {
  for (auto kind : {MetricKind::f1_macro, MetricKind::f1_micro, MetricKind::accuracy}) {
    auto b = bootstrap_ci(truths, preds, num_classes, kind, n_resamples, level, seed);
    switch (kind) {
      case MetricKind::f1_macro: report.ci_f1_macro = b.interval; break;
      case MetricKind::f1_micro: report.ci_f1_micro = b.interval; break;
      case MetricKind::accuracy: report.ci_accuracy = b.interval; break;
    }
    if (kind == MetricKind::f1_macro)
      for (auto& w : b.warnings) report.notes.push_back(std::move(w));
  }
  report.ci_method = std::string(kBootstrapMethod) + ", n=" + std::to_string(n_resamples) +
                     ", level=" + [&] {
                       char buf[40];
                       std::snprintf(buf, sizeof buf, "%g", level);
                       return std::string(buf);
                     }();
}

std::vector<ConfusedPair> top_confused_pairs(const ConfusionMatrix& cm, std::size_t n) {
  std::vector<ConfusedPair> pairs;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    for (std::size_t j = i + 1; j < cm.size(); ++j) {
      const auto mass = cm.counts[i][j] + cm.counts[j][i];
      const auto support = cm.row_sum(i) + cm.row_sum(j);
      auto a = cm.classes[i], b = cm.classes[j];
      if (b < a) std::swap(a, b);
      pairs.push_back({a, b, mass, ratio(mass, support)});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const ConfusedPair& x, const ConfusedPair& y) {
    if (x.rate != y.rate) return x.rate > y.rate;
    if (x.first != y.first) return x.first < y.first;
    return x.second < y.second;
  });
  if (pairs.size() > n) pairs.resize(n);
  return pairs;
}

}  // namespace hierpath
