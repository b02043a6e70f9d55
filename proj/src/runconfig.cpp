// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <sstream>

#include "hierpath/cli.hpp"
#include "hierpath/error.hpp"
#include "hierpath/io.hpp"

namespace hierpath::cli {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::string g17(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

RunConfig::RunConfig() {
  const CnnConfig cnn;
  const PrepConfig prep;
  const SyntheticSpec synth;
  const LabelSchema schema = LabelSchema::breast_topography();
  values_ = {
      {"run.seed", "42"},
      {"run.jobs", "1"},
      {"corpus.path", files::corpus_jsonl},
      {"corpus.reports_per_class", std::to_string(synth.reports_per_class)},
      {"corpus.tokens_min", std::to_string(synth.tokens_min)},
      {"corpus.tokens_max", std::to_string(synth.tokens_max)},
      {"corpus.signature_strength", "0.3"},
      {"corpus.overlap", "0.5"},
      {"corpus.partner_share", g17(synth.partner_share)},
      {"corpus.numeric_rate", g17(synth.numeric_rate)},
      {"corpus.min_count", std::to_string(schema.min_count)},
      {"prep.top_k", std::to_string(prep.top_k)},
      {"prep.max_len", std::to_string(prep.max_len)},
      {"prep.afrikaans_filter", prep.afrikaans_filter_enabled ? "true" : "false"},
      {"prep.afrikaans_threshold", g17(prep.afrikaans_ratio_threshold)},
      {"prep.stopwords_file", ""},
      {"split.train", "0.8"},
      {"split.validation", "0.1"},
      {"split.test", "0.1"},
      {"cnn.embed_dim", std::to_string(cnn.embed_dim)},
      {"cnn.window_sizes", "3,4,5"},
      {"cnn.maps_per_window", std::to_string(cnn.maps_per_window)},
      {"cnn.hidden_dim", std::to_string(cnn.hidden_dim)},
      {"cnn.dropout_p", g17(cnn.dropout_p)},
      {"cnn.epochs", std::to_string(cnn.epochs)},
      {"cnn.batch_size", std::to_string(cnn.batch_size)},
      {"cnn.selection_metric", std::string(selection_metric_name(cnn.selection_metric))},
      {"cnn.activation", std::string(activation_name(cnn.activation))},
      {"cnn.embed_init_range", g17(cnn.embed_init_range)},
      {"cnn.adadelta_rho", g17(cnn.optimizer.rho)},
      {"cnn.adadelta_eps", g17(cnn.optimizer.eps)},
      {"crossval.k", "10"},
      {"crossval.classes", ""},
      {"crossval.inner_validation", "0.1"},
      {"analyze.confusion", files::flat_val_confusion},
      {"analyze.strategy", "top_pair"},
      {"analyze.threshold", "0.05"},
      {"ensemble.grouping", "expert"},
      {"ensemble.grouping_file", ""},
      {"eval.bootstrap_resamples", "1000"},
      {"eval.ci_level", "0.95"},
  };
}

void RunConfig::set(const std::string& key, std::string value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("unknown config key '" + key + "'");
  it->second = std::move(value);
}

void RunConfig::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ContractError("expected section.key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::merge_text(std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    auto body = trim(line);
    if (body.empty() || body[0] == '#' || body[0] == ';') continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ContractError(where + "unterminated section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ContractError(where + "expected key = value");
    if (section.empty()) throw ContractError(where + "key outside of a [section]");
    const auto key = section + "." + trim(std::string_view(body).substr(0, eq));
    if (!is_known(key)) throw ContractError(where + "unknown config key '" + key + "'");
    values_[key] = trim(std::string_view(body).substr(eq + 1));
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("unknown config key '" + key + "'");
  return it->second;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const auto& v = get(key);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ContractError("config key " + key + " expects a non-negative integer, got '" + v + "'");
  errno = 0;
  const auto parsed = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ContractError("config key " + key + " is out of range: " + v);
  return parsed;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  char* end = nullptr;
  const double parsed = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ContractError("config key " + key + " expects a number, got '" + v + "'");
  return parsed;
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ContractError("config key " + key + " expects true or false, got '" + v + "'");
}

std::string RunConfig::snapshot() const {
  std::string out;
  std::string section;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  auto spec = SyntheticSpec::breast_default(seed());
  spec.reports_per_class = get_size("corpus.reports_per_class");
  spec.tokens_min = get_size("corpus.tokens_min");
  spec.tokens_max = get_size("corpus.tokens_max");
  spec.partner_share = get_double("corpus.partner_share");
  spec.numeric_rate = get_double("corpus.numeric_rate");
  const double strength = get_double("corpus.signature_strength");
  for (auto& c : spec.classes) c.strength = strength;
  for (auto& p : spec.confusable_pairs) p.overlap = get_double("corpus.overlap");
  spec.validate();
  return spec;
}

PrepConfig RunConfig::prep_config() const {
  auto prep = PrepConfig::defaults();
  prep.top_k = get_size("prep.top_k");
  prep.max_len = get_size("prep.max_len");
  prep.afrikaans_filter_enabled = get_bool("prep.afrikaans_filter");
  prep.afrikaans_ratio_threshold = get_double("prep.afrikaans_threshold");
  if (const auto& path = get("prep.stopwords_file"); !path.empty()) {
    prep.stopwords.clear();
    std::istringstream in(read_file(path));
    std::string word;
    while (in >> word) prep.stopwords.insert(word);
  }
  prep.validate();
  return prep;
}

SplitRatios RunConfig::split_ratios() const {
  return {get_double("split.train"), get_double("split.validation"), get_double("split.test")};
}

CnnConfig RunConfig::cnn_config() const {
  std::string text;
  for (const auto& [key, value] : values_)
    if (key.rfind("cnn.", 0) == 0) text += key.substr(4) + "=" + value + "\n";
  return CnnConfig::parse(text);
}

BootstrapOptions RunConfig::bootstrap_options() const {
  BootstrapOptions b;
  b.resamples = get_size("eval.bootstrap_resamples");
  b.level = get_double("eval.ci_level");
  if (!(b.level > 0.0 && b.level < 1.0)) throw ContractError("eval.ci_level must lie in (0,1)");
  b.seed = seed();
  return b;
}

std::vector<std::string> parse_class_list(std::string_view text) {
  const auto schema = LabelSchema::breast_topography();
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto range = item.find("..");
    if (range == std::string::npos) {
      if (!is_valid_code(item)) throw ContractError("invalid ICD-O code '" + item + "'");
      out.push_back(item);
      continue;
    }
    const auto lo = schema.index_of(trim(std::string_view(item).substr(0, range)));
    const auto hi = schema.index_of(trim(std::string_view(item).substr(range + 2)));
    if (!lo || !hi || *lo > *hi) throw ContractError("invalid class range '" + item + "'");
    for (auto i = *lo; i <= *hi; ++i) out.push_back(schema.codes[i]);
  }
  std::vector<std::string> seen;
  for (const auto& c : out) {
    if (std::find(seen.begin(), seen.end(), c) != seen.end())
      throw ContractError("class " + c + " listed twice");
    seen.push_back(c);
  }
  return out;
}

}  // namespace hierpath::cli
