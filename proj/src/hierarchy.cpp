// SPDX-License-Identifier: Apache-2.0
#include "hierpath/hierarchy.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "hierpath/digest.hpp"
#include "hierpath/error.hpp"
#include "hierpath/io.hpp"

namespace hierpath {

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::expert: return "expert";
    case Provenance::suggested: return "suggested";
    case Provenance::file: return "file";
  }
  return "?";
}

Provenance parse_provenance(std::string_view name) {
  if (name == "expert") return Provenance::expert;
  if (name == "suggested") return Provenance::suggested;
  if (name == "file") return Provenance::file;
  throw ContractError("unknown grouping provenance '" + std::string(name) + "'");
}

GroupingSpec GroupingSpec::expert_breast() {
  return {{"C50.8", "C50.9"}, {"C50.0", "C50.1", "C50.2", "C50.3", "C50.4", "C50.5"}, Provenance::expert};
}

void GroupingSpec::validate(std::span<const std::string> active) const {
  if (group_one.empty() || group_two.empty()) throw ContractError("both groups must be non-empty");
  std::set<std::string> seen;
  for (const auto* g : {&group_one, &group_two})
    for (const auto& code : *g)
      if (!seen.insert(code).second) throw ContractError("code " + code + " appears in more than one group");
  if (!active.empty()) {
    const std::set<std::string> want(active.begin(), active.end());
    if (want != seen) {
      std::string msg = "grouping does not partition the active classes:";
      for (const auto& c : want)
        if (!seen.count(c)) msg += " missing " + c;
      for (const auto& c : seen)
        if (!want.count(c)) msg += " unexpected " + c;
      throw ContractError(msg);
    }
  }
}

std::optional<std::size_t> GroupingSpec::group_of(std::string_view code) const {
  if (std::find(group_one.begin(), group_one.end(), code) != group_one.end()) return 0;
  if (std::find(group_two.begin(), group_two.end(), code) != group_two.end()) return 1;
  return std::nullopt;
}

std::vector<std::string> GroupingSpec::ordered_codes() const {
  auto codes = group_one;
  codes.insert(codes.end(), group_two.begin(), group_two.end());
  return codes;
}

namespace {

std::string join(const std::vector<std::string>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::map<std::string, std::string> parse_kv(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ContractError("missing key '" + key + "'");
  return it->second;
}

}  // namespace

std::string GroupingSpec::to_text() const {
  return "provenance=" + std::string(provenance_name(provenance)) + "\ngroup_one=" + join(group_one) +
         "\ngroup_two=" + join(group_two) + "\n";
}

GroupingSpec GroupingSpec::parse(std::string_view text) {
  const auto kv = parse_kv(text);
  GroupingSpec g;
  g.group_one = split_list(require(kv, "group_one"));
  g.group_two = split_list(require(kv, "group_two"));
  if (auto it = kv.find("provenance"); it != kv.end()) g.provenance = parse_provenance(it->second);
  g.validate();
  return g;
}

std::vector<GroupingCandidate> suggest_grouping(const ConfusionMatrix& cm, GroupingStrategy strategy,
                                                double threshold) {
  if (cm.size() < 3) throw ContractError("grouping needs at least 3 classes, got " + std::to_string(cm.size()));
  for (std::size_t i = 0; i < cm.size(); ++i)
    if (cm.row_sum(i) == 0) throw ContractError("class " + cm.classes[i] + " has no examples in the confusion matrix");

  auto sorted_codes = cm.classes;
  std::sort(sorted_codes.begin(), sorted_codes.end());
  auto make = [&](std::vector<std::string> one, double score) {
    std::sort(one.begin(), one.end());
    GroupingCandidate c{{one, {}, Provenance::suggested}, score};
    for (const auto& code : sorted_codes)
      if (!std::binary_search(one.begin(), one.end(), code)) c.grouping.group_two.push_back(code);
    return c;
  };

  const auto pairs = top_confused_pairs(cm, cm.size() * cm.size());
  std::vector<GroupingCandidate> out;
  if (strategy == GroupingStrategy::top_pair) {
    for (std::size_t i = 0; i < pairs.size() && i < 2; ++i)
      out.push_back(make({pairs[i].first, pairs[i].second}, pairs[i].rate));
    return out;
  }

  // Union-find over codes linked by pairs at or above the threshold.
  std::map<std::string, std::string> parent;
  for (const auto& c : sorted_codes) parent[c] = c;
  std::function<std::string(const std::string&)> find = [&](const std::string& c) -> std::string {
    return parent[c] == c ? c : parent[c] = find(parent[c]);
  };
  std::map<std::string, double> best_rate;
  for (const auto& p : pairs) {
    if (p.rate < threshold || p.rate == 0.0) continue;
    auto a = find(p.first), b = find(p.second);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  for (const auto& p : pairs) {
    if (p.rate < threshold || p.rate == 0.0) continue;
    auto root = find(p.first);
    best_rate[root] = std::max(best_rate[root], p.rate);
  }
  std::map<std::string, std::vector<std::string>> components;
  for (const auto& c : sorted_codes) components[find(c)].push_back(c);
  for (auto& [root, members] : components)
    if (members.size() >= 2 && members.size() < sorted_codes.size()) out.push_back(make(members, best_rate[root]));
  std::stable_sort(out.begin(), out.end(),
                   [](const GroupingCandidate& a, const GroupingCandidate& b) { return a.score > b.score; });
  return out;
}

std::vector<EncodedReport> label_with(std::span<const LabeledExample> examples,
                                      std::span<const std::string> codes) {
  std::vector<EncodedReport> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    auto it = std::find(codes.begin(), codes.end(), e.code);
    if (it == codes.end()) throw ContractError("code " + e.code + " of report '" + e.id + "' is not in the class map");
    out.push_back({e.id, e.indices, static_cast<std::size_t>(it - codes.begin())});
  }
  return out;
}

std::vector<EncodedReport> derive_parent_labels(std::span<const LabeledExample> examples,
                                                const GroupingSpec& grouping) {
  std::vector<EncodedReport> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    auto g = grouping.group_of(e.code);
    if (!g) throw ContractError("code " + e.code + " of report '" + e.id + "' belongs to neither group");
    out.push_back({e.id, e.indices, *g});
  }
  return out;
}

std::vector<EncodedReport> group_subset(std::span<const LabeledExample> examples,
                                        const GroupingSpec& grouping, std::size_t g) {
  std::vector<LabeledExample> members;
  for (const auto& e : examples)
    if (grouping.group_of(e.code) == g) members.push_back(e);
  return label_with(members, grouping.group(g));
}

void Ensemble::validate() const {
  grouping.validate();
  if (parent.class_codes != kParentClasses) throw ContractError("parent class map must be {group_one, group_two}");
  if (child_one.class_codes != grouping.group_one)
    throw ContractError("child_one class map does not match group_one");
  if (child_two.class_codes != grouping.group_two)
    throw ContractError("child_two class map does not match group_two");
  if (parent.vocab_digest != child_one.vocab_digest || parent.vocab_digest != child_two.vocab_digest)
    throw DigestMismatch("ensemble members were trained on different vocabularies (" +
                         digest_hex(parent.vocab_digest) + ", " + digest_hex(child_one.vocab_digest) + ", " +
                         digest_hex(child_two.vocab_digest) + ")");
}

EnsembleTraining train_ensemble(std::span<const LabeledExample> train_set,
                                std::span<const LabeledExample> val_set, const GroupingSpec& grouping,
                                MemberConfigs configs, std::size_t table_size, std::uint64_t vocab_digest,
                                std::uint64_t master_seed, std::size_t jobs) {
  grouping.validate();

  struct Job {
    CnnConfig config;
    std::vector<EncodedReport> train, val;
    std::vector<std::string> codes;
    std::optional<TrainResult> out;
    std::exception_ptr error;
  };
  std::array<Job, 3> work;
  work[0].config = configs.parent;
  work[1].config = configs.child_one;
  work[2].config = configs.child_two;
  work[0].train = derive_parent_labels(train_set, grouping);
  work[0].val = derive_parent_labels(val_set, grouping);
  work[0].codes = kParentClasses;
  for (std::size_t g = 0; g < 2; ++g) {
    work[g + 1].train = group_subset(train_set, grouping, g);
    work[g + 1].val = group_subset(val_set, grouping, g);
    work[g + 1].codes = grouping.group(g);
  }

  EnsembleTraining result;
  result.ensemble.grouping = grouping;
  std::array<Checkpoint*, 3> slots{&result.ensemble.parent, &result.ensemble.child_one,
                                   &result.ensemble.child_two};
  std::vector<std::size_t> pending;
  for (std::size_t m = 0; m < 3; ++m) {
    work[m].config.seed = master_seed + m;
    work[m].config.num_classes = work[m].codes.size();
    if (work[m].codes.size() == 1) {
      *slots[m] = Checkpoint::constant(work[m].codes.front(), vocab_digest);
      result.warnings.push_back("group " + work[m].codes.front() +
                                " has a single class; using a constant classifier");
      continue;
    }
    work[m].config.validate();
    pending.push_back(m);
  }

  auto run = [&](std::size_t m) {
    try {
      Rng rng(work[m].config.seed);
      auto model = build_model(work[m].config, table_size, rng);
      work[m].out = train(std::move(model), work[m].train, work[m].val, work[m].codes, vocab_digest);
    } catch (...) {
      work[m].error = std::current_exception();
    }
  };
  if (jobs > 1 && pending.size() > 1) {
    std::vector<std::thread> threads;
    for (std::size_t m : pending) threads.emplace_back(run, m);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t m : pending) run(m);
  }
  for (std::size_t m : pending) {
    if (work[m].error) std::rethrow_exception(work[m].error);
    *slots[m] = std::move(work[m].out->checkpoint);
    result.reports[m] = std::move(work[m].out->report);
  }
  return result;
}

RoutedPrediction ensemble_predict(const Ensemble& ensemble, const LabeledExample& example,
                                  const GroupRouter& router) {
  ensemble.validate();
  RoutedPrediction out;
  out.report_id = example.id;
  if (router) {
    out.group_probs = router(example);
  } else {
    const auto p = ensemble.parent.predict(example.indices);
    out.group_probs = {p.probs.values.at(0), p.probs.values.at(1)};
  }
  out.group = out.group_probs[1] > out.group_probs[0] ? 1 : 0;
  const auto& child = ensemble.child(out.group);
  auto pred = child.predict(example.indices);
  out.final_code = child.class_codes.at(pred.class_index);
  out.final_probs = std::move(pred.probs);
  return out;
}

HierarchicalRun run_hierarchical(const Ensemble& ensemble, std::span<const LabeledExample> examples,
                                 std::vector<std::string> class_order, const GroupRouter& router) {
  ensemble.validate();
  ensemble.grouping.validate(class_order);
  HierarchicalRun run{ConfusionMatrix(class_order), {}};
  run.routing.reserve(examples.size());
  auto index = [&](const std::string& code) {
    auto it = std::find(class_order.begin(), class_order.end(), code);
    if (it == class_order.end()) throw ContractError("code " + code + " is not in the evaluation class order");
    return static_cast<std::size_t>(it - class_order.begin());
  };
  for (const auto& e : examples) {
    auto routed = ensemble_predict(ensemble, e, router);
    ++run.cm.counts[index(e.code)][index(routed.final_code)];
    run.routing.push_back(std::move(routed));
  }
  return run;
}

ConfusionMatrix checkpoint_confusion(const Checkpoint& checkpoint, std::span<const LabeledExample> examples) {
  const auto labeled = label_with(examples, checkpoint.class_codes);
  std::vector<std::size_t> truths, preds;
  truths.reserve(labeled.size());
  for (const auto& r : labeled) truths.push_back(*r.label_index);
  preds = predict_all(checkpoint, labeled);
  return confusion(truths, preds, checkpoint.class_codes);
}

namespace {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> pairs_of(const ConfusionMatrix& cm) {
  std::vector<std::size_t> truths, preds;
  for (std::size_t i = 0; i < cm.size(); ++i)
    for (std::size_t j = 0; j < cm.size(); ++j)
      for (std::uint64_t c = 0; c < cm.counts[i][j]; ++c) {
        truths.push_back(i);
        preds.push_back(j);
      }
  return {truths, preds};
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string ci_text(const std::optional<Interval>& ci) {
  if (!ci) return "-";
  return "[" + fixed(ci->lower) + ", " + fixed(ci->upper) + "]";
}

}  // namespace

PipelineEvaluation evaluate_pipeline(const Ensemble& ensemble, const Checkpoint& flat,
                                     std::span<const LabeledExample> test_set,
                                     const BootstrapOptions& bootstrap) {
  if (test_set.empty()) throw ContractError("evaluation set is empty");
  ensemble.validate();
  if (flat.vocab_digest != ensemble.parent.vocab_digest)
    throw DigestMismatch("flat model vocabulary " + digest_hex(flat.vocab_digest) +
                         " differs from ensemble vocabulary " + digest_hex(ensemble.parent.vocab_digest));

  PipelineEvaluation ev;
  ev.flat_cm = checkpoint_confusion(flat, test_set);
  auto run = run_hierarchical(ensemble, test_set, flat.class_codes);
  ev.hierarchical_cm = std::move(run.cm);
  ev.routing = std::move(run.routing);
  ev.flat = f1_scores(ev.flat_cm);
  ev.hierarchical = f1_scores(ev.hierarchical_cm);
  if (bootstrap.resamples > 0) {
    // Resampling is over reports; both matrices expand to (truth, pred) pairs.
    auto [ft, fp] = pairs_of(ev.flat_cm);
    attach_bootstrap(ev.flat, ft, fp, ev.flat_cm.size(), bootstrap.resamples, bootstrap.level, bootstrap.seed);
    auto [ht, hp] = pairs_of(ev.hierarchical_cm);
    attach_bootstrap(ev.hierarchical, ht, hp, ev.hierarchical_cm.size(), bootstrap.resamples, bootstrap.level,
                     bootstrap.seed);
  }
  return ev;
}

std::string PipelineEvaluation::routing_csv() const {
  std::string out = "report_id,group_prob_0,group_prob_1,routed_group,final_code\n";
  char buf[64];
  for (const auto& r : routing) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%zu,", r.group_probs[0], r.group_probs[1], r.group);
    out += r.report_id + buf + r.final_code + "\n";
  }
  return out;
}

std::string PipelineEvaluation::comparison_table() const {
  std::ostringstream out;
  out << std::left << std::setw(14) << "model" << std::setw(10) << "micro-F1" << std::setw(20) << "micro-F1 CI"
      << std::setw(10) << "macro-F1" << "macro-F1 CI\n";
  auto row = [&](const char* name, const MetricsReport& m) {
    out << std::left << std::setw(14) << name << std::setw(10) << fixed(m.f1_micro) << std::setw(20)
        << ci_text(m.ci_f1_micro) << std::setw(10) << fixed(m.f1_macro) << ci_text(m.ci_f1_macro) << "\n";
  };
  row("flat", flat);
  row("hierarchical", hierarchical);
  out << "\nper-class F1\n" << std::left << std::setw(8) << "code" << std::setw(10) << "support" << std::setw(10)
      << "flat" << "hierarchical\n";
  for (std::size_t i = 0; i < flat.per_class.size(); ++i) {
    const auto& f = flat.per_class[i];
    const double h = i < hierarchical.per_class.size() ? hierarchical.per_class[i].f1 : 0.0;
    out << std::setw(8) << f.code << std::setw(10) << f.support << std::setw(10) << fixed(f.f1) << fixed(h) << "\n";
  }
  if (!flat.ci_method.empty()) out << "\nintervals: " << flat.ci_method << "\n";
  return out.str();
}

std::string EnsembleManifest::to_text() const {
  std::string out = grouping.to_text();
  out += "vocab_digest=" + digest_hex(vocab_digest) + "\n";
  static const char* names[] = {"parent", "child_one", "child_two"};
  for (std::size_t m = 0; m < 3; ++m) {
    out += std::string(names[m]) + "=" + paths[m] + "\n";
    out += std::string(names[m]) + "_digest=" + digest_hex(digests[m]) + "\n";
  }
  return out;
}

EnsembleManifest EnsembleManifest::parse(std::string_view text) {
  const auto kv = parse_kv(text);
  EnsembleManifest m;
  m.grouping = GroupingSpec::parse(text);
  m.vocab_digest = parse_digest_hex(require(kv, "vocab_digest"));
  static const char* names[] = {"parent", "child_one", "child_two"};
  for (std::size_t i = 0; i < 3; ++i) {
    m.paths[i] = require(kv, names[i]);
    m.digests[i] = parse_digest_hex(require(kv, std::string(names[i]) + "_digest"));
  }
  return m;
}

EnsembleManifest save_ensemble(const Ensemble& ensemble, const std::filesystem::path& manifest_path) {
  ensemble.validate();
  EnsembleManifest m;
  m.grouping = ensemble.grouping;
  m.vocab_digest = ensemble.parent.vocab_digest;
  const auto dir = manifest_path.parent_path();
  static const char* files[] = {"parent.ckpt", "child_one.ckpt", "child_two.ckpt"};
  const Checkpoint* members[] = {&ensemble.parent, &ensemble.child_one, &ensemble.child_two};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto bytes = serialize_checkpoint(*members[i]);
    write_file(dir / files[i], bytes);
    m.paths[i] = files[i];
    m.digests[i] = fnv1a(bytes);
  }
  write_file(manifest_path, m.to_text());
  return m;
}

Ensemble load_ensemble(const std::filesystem::path& manifest_path,
                       std::optional<std::uint64_t> expected_vocab_digest) {
  const auto m = EnsembleManifest::parse(read_file(manifest_path));
  if (expected_vocab_digest && *expected_vocab_digest != m.vocab_digest)
    throw DigestMismatch("ensemble vocabulary " + digest_hex(m.vocab_digest) + " does not match expected " +
                         digest_hex(*expected_vocab_digest));
  Ensemble e;
  e.grouping = m.grouping;
  Checkpoint* members[] = {&e.parent, &e.child_one, &e.child_two};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto path = manifest_path.parent_path() / m.paths[i];
    const auto bytes = read_file(path);
    if (fnv1a(bytes) != m.digests[i])
      throw CheckpointCorrupt("checkpoint " + path.string() + " does not match its manifest digest");
    *members[i] = parse_checkpoint(bytes, m.vocab_digest);
  }
  e.validate();
  return e;
}

}  // namespace hierpath
