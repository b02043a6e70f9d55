// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "hierpath/cli.hpp"
#include "hierpath/digest.hpp"
#include "hierpath/error.hpp"
#include "hierpath/io.hpp"
#include "hierpath/metrics.hpp"

namespace hierpath::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string serialize_prepared(std::span<const PreparedReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    json j;
    j["id"] = r.id;
    j["code"] = r.code;
    j["tokens"] = r.tokens;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<PreparedReport> parse_prepared(std::string_view content) {
  std::vector<PreparedReport> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("code").get<std::string>(),
                     j.at("tokens").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw ContractError("prepared reports line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

class Session {
 public:
  Session(const Context& ctx, std::string command) : ctx_(ctx), command_(std::move(command)) {
    write_file(path(command_ + ".effective.conf"), ctx_.config.snapshot());
  }

  const RunConfig& config() const { return ctx_.config; }
  fs::path path(const std::string& name) const { return ctx_.workdir / name; }
  /// Config paths are relative to the work directory unless absolute.
  fs::path resolve(const std::string& p) const { return fs::path(p).is_absolute() ? fs::path(p) : path(p); }

  template <typename... Parts>
  void say(const Parts&... parts) const {
    if (!ctx_.out) return;
    ((*ctx_.out) << ... << parts) << '\n';
  }

 private:
  const Context& ctx_;
  std::string command_;
};

std::vector<PreparedReport> load_prepared(const Session& s) {
  return parse_prepared(read_file(s.path(files::prepared)));
}

Vocabulary load_vocab(const Session& s) { return Vocabulary::parse(read_file(s.path(files::vocab))); }

DatasetSplit load_split(const Session& s) { return parse_split(read_file(s.path(files::split))); }

/// Codes present in the prepared corpus, in schema order.
std::vector<std::string> active_classes(std::span<const PreparedReport> prepared) {
  std::set<std::string> present;
  for (const auto& r : prepared) present.insert(r.code);
  std::vector<std::string> out;
  for (const auto& code : LabelSchema::breast_topography().codes)
    if (present.count(code)) out.push_back(code);
  return out;
}

std::vector<LabeledExample> to_examples(std::span<const PreparedReport> prepared,
                                        std::span<const std::string> ids, const Vocabulary& vocab,
                                        std::size_t max_len) {
  std::unordered_map<std::string, const PreparedReport*> by_id;
  for (const auto& r : prepared) by_id[r.id] = &r;
  std::vector<LabeledExample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("split refers to unknown report '" + id + "'");
    const auto kept = filter_by_vocab(it->second->tokens, vocab);
    out.push_back({id, encode(kept, vocab, max_len), it->second->code});
  }
  return out;
}

Vocabulary fit_on(std::span<const PreparedReport> prepared, std::span<const std::string> ids, std::size_t top_k) {
  std::unordered_map<std::string, const PreparedReport*> by_id;
  for (const auto& r : prepared) by_id[r.id] = &r;
  std::vector<std::vector<std::string>> docs;
  docs.reserve(ids.size());
  for (const auto& id : ids) docs.push_back(by_id.at(id)->tokens);
  return fit_tfidf(docs, top_k);
}

std::string marker_text(std::string_view split_bytes, const DatasetSplit& split, std::uint64_t vocab_digest) {
  Fnv1a test_ids;
  for (const auto& id : split.test) {
    test_ids.update(id);
    test_ids.update("\n");
  }
  return "split_digest=" + digest_hex(fnv1a(split_bytes)) + "\ntest_ids_digest=" + digest_hex(test_ids.value()) +
         "\nvocab_digest=" + digest_hex(vocab_digest) + "\n";
}

std::string suffix_for(std::size_t num_classes) { return "crossval_" + std::to_string(num_classes) + "class"; }

std::string metrics_csv_rows(const std::string& model, const MetricsReport& m) {
  std::string out;
  for (auto kind : {MetricKind::f1_micro, MetricKind::f1_macro, MetricKind::accuracy}) {
    const auto ci = m.interval(kind);
    out += model + "," + std::string(metric_name(kind)) + "," + g17(m.value(kind)) + "," +
           (ci ? g17(ci->lower) : "") + "," + (ci ? g17(ci->upper) : "") + "\n";
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::istringstream in(read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void cmd_gen_corpus(const Context& ctx) {
  Session s(ctx, "gen-corpus");
  const auto spec = s.config().synthetic_spec();
  const auto reports = generate_synthetic(spec);
  write_reports(s.path(files::corpus_jsonl), reports, CorpusFormat::jsonl);
  write_reports(s.path(files::corpus_xml), reports, CorpusFormat::xml);
  s.say("wrote ", reports.size(), " reports over ", spec.classes.size(), " classes to ",
        s.path(files::corpus_jsonl).string(), " and ", files::corpus_xml);
}

void cmd_prep(const Context& ctx) {
  Session s(ctx, "prep");
  const auto prep = s.config().prep_config();
  const auto corpus_path = s.resolve(s.config().get("corpus.path"));
  const auto reports = load_reports(corpus_path, format_from_path(corpus_path));

  std::vector<Report> retained;
  std::vector<std::vector<std::string>> tokens;
  std::vector<std::string> dropped_language;
  for (const auto& r : reports) {
    auto t = tokenize(r.text, prep);
    if (prep.afrikaans_filter_enabled && detect_afrikaans_only(t, prep)) {
      dropped_language.push_back(r.id);
      continue;
    }
    retained.push_back(r);
    tokens.push_back(std::move(t));
  }
  auto schema = LabelSchema::breast_topography();
  schema.min_count = s.config().get_size("corpus.min_count");
  const auto policy = apply_class_policy(retained, schema);
  const std::set<std::string> excluded(policy.excluded_codes.begin(), policy.excluded_codes.end());

  std::vector<PreparedReport> prepared;
  for (std::size_t i = 0; i < retained.size(); ++i)
    if (!excluded.count(*retained[i].label))
      prepared.push_back({retained[i].id, *retained[i].label, std::move(tokens[i])});
  if (prepared.empty()) throw ContractError("no reports remain after the class policy (min_count " +
                                            std::to_string(schema.min_count) + ")");
  write_file(s.path(files::prepared), serialize_prepared(prepared));

  std::string excluded_list;
  for (const auto& c : policy.excluded_codes) excluded_list += (excluded_list.empty() ? "" : ",") + c;
  std::ostringstream summary;
  summary << "input_reports=" << reports.size() << "\nafrikaans_dropped=" << dropped_language.size()
          << "\nmin_count=" << schema.min_count << "\nexcluded_codes=" << excluded_list
          << "\nkept_reports=" << prepared.size() << "\n";
  for (const auto& [code, n] : count_labels(policy.kept)) summary << "count." << code << "=" << n << "\n";
  write_file(s.path(files::prep_summary), summary.str());
  s.say("prepared ", prepared.size(), " of ", reports.size(), " reports; excluded codes: ",
        excluded_list.empty() ? "none" : excluded_list);
}

void cmd_split(const Context& ctx) {
  Session s(ctx, "split");
  const auto prep = s.config().prep_config();
  const auto prepared = load_prepared(s);
  std::vector<Report> labeled;
  labeled.reserve(prepared.size());
  for (const auto& r : prepared) labeled.push_back({r.id, "", r.code});
  const auto split = stratified_split(labeled, s.config().split_ratios(), s.config().seed());
  const auto split_bytes = serialize_split(split);
  write_file(s.path(files::split), split_bytes);
  const auto vocab = fit_on(prepared, split.train, prep.top_k);
  write_file(s.path(files::vocab), vocab.serialize());
  write_file(s.path(files::test_marker), marker_text(split_bytes, split, vocab.digest()));
  s.say("split ", prepared.size(), " reports into ", split.train.size(), " train / ", split.validation.size(),
        " validation / ", split.test.size(), " test; vocabulary of ", vocab.entries().size(), " tokens (digest ",
        digest_hex(vocab.digest()), ")");
}

void cmd_train_flat(const Context& ctx) {
  Session s(ctx, "train-flat");
  const auto prep = s.config().prep_config();
  const auto prepared = load_prepared(s);
  const auto split = load_split(s);
  const auto vocab = load_vocab(s);
  const auto classes = active_classes(prepared);

  auto cfg = s.config().cnn_config();
  cfg.seed = s.config().seed();
  cfg.num_classes = classes.size();
  cfg.validate(prep.max_len);
  const auto train_set = to_examples(prepared, split.train, vocab, prep.max_len);
  const auto val_set = to_examples(prepared, split.validation, vocab, prep.max_len);

  Rng rng(cfg.seed);
  auto model = build_model(cfg, vocab.table_size(), rng);
  auto result = train(std::move(model), label_with(train_set, classes), label_with(val_set, classes), classes,
                      vocab.digest());
  save_checkpoint(result.checkpoint, s.path(files::flat_checkpoint));
  write_file(s.path(files::flat_train), result.report.to_csv());
  const auto cm = checkpoint_confusion(result.checkpoint, val_set);
  write_file(s.path(files::flat_val_confusion), cm.to_csv());
  s.say("flat CNN over ", classes.size(), " classes: best epoch ", result.report.best_epoch, " of ", cfg.epochs,
        ", validation F1-micro ", fixed4(metric_of(cm, MetricKind::f1_micro)), ", F1-macro ",
        fixed4(metric_of(cm, MetricKind::f1_macro)));
}

void cmd_crossval(const Context& ctx) {
  Session s(ctx, "crossval");
  const auto& config = s.config();
  const auto prep = config.prep_config();
  const auto prepared = load_prepared(s);
  const auto split = load_split(s);
  auto classes = parse_class_list(config.get("crossval.classes"));
  if (classes.empty()) classes = active_classes(prepared);
  const auto active = active_classes(prepared);
  for (const auto& c : classes)
    if (std::find(active.begin(), active.end(), c) == active.end())
      throw ContractError("class " + c + " is not present in the prepared corpus");
  if (classes.size() < 2) throw ContractError("cross-validation needs at least two classes");

  // Folds cover train and validation only; the test partition stays untouched.
  std::set<std::string> pool_ids(split.train.begin(), split.train.end());
  pool_ids.insert(split.validation.begin(), split.validation.end());
  const std::set<std::string> wanted(classes.begin(), classes.end());
  std::vector<PreparedReport> pool;
  std::vector<Report> labeled;
  for (const auto& r : prepared)
    if (pool_ids.count(r.id) && wanted.count(r.code)) {
      pool.push_back(r);
      labeled.push_back({r.id, "", r.code});
    }
  const auto k = config.get_size("crossval.k");
  if (k < 2) throw ContractError("crossval.k must be at least 2");
  const auto plan = make_folds(labeled, k, config.seed());
  const double inner_val = config.get_double("crossval.inner_validation");
  auto base = config.cnn_config();
  base.num_classes = classes.size();
  base.validate(prep.max_len);

  struct FoldResult {
    ConfusionMatrix cm;
    std::vector<std::size_t> truths, preds;
    std::exception_ptr error;
  };
  std::vector<FoldResult> results(k);
  auto run_fold = [&](std::size_t f) {
    try {
      try {
        std::vector<Report> rest;
        std::vector<std::string> held;
        for (const auto& r : labeled) (plan.assignment.at(r.id) == f ? held.push_back(r.id) : rest.push_back(r));
        const auto inner = stratified_split(rest, {1.0 - inner_val, inner_val, 0.0}, config.seed() + f);
        const auto vocab = fit_on(pool, inner.train, prep.top_k);
        auto cfg = base;
        cfg.seed = config.seed() + f;
        Rng rng(cfg.seed);
        auto model = build_model(cfg, vocab.table_size(), rng);
        auto trained = train(std::move(model), label_with(to_examples(pool, inner.train, vocab, prep.max_len), classes),
                             label_with(to_examples(pool, inner.validation, vocab, prep.max_len), classes), classes,
                             vocab.digest());
        const auto test = label_with(to_examples(pool, held, vocab, prep.max_len), classes);
        auto& out = results[f];
        for (const auto& r : test) out.truths.push_back(*r.label_index);
        out.preds = predict_all(trained.checkpoint, test);
        out.cm = confusion(out.truths, out.preds, classes);
      } catch (const NumericError& e) {
        throw NumericError("fold " + std::to_string(f) + ": " + e.what());
      } catch (const ContractError& e) {
        throw ContractError("fold " + std::to_string(f) + ": " + e.what());
      }
    } catch (...) {
      results[f].error = std::current_exception();
    }
  };
  const auto jobs = std::max<std::size_t>(1, config.jobs());
  for (std::size_t start = 0; start < k; start += jobs) {
    std::vector<std::thread> threads;
    for (std::size_t f = start; f < std::min(k, start + jobs); ++f) {
      if (jobs == 1) run_fold(f);
      else threads.emplace_back(run_fold, f);
    }
    for (auto& t : threads) t.join();
  }
  for (const auto& r : results)
    if (r.error) std::rethrow_exception(r.error);

  std::string folds_csv = "fold,size,accuracy,f1_micro,f1_macro\n";
  double sum_micro = 0.0, sum_macro = 0.0, sum_acc = 0.0;
  std::vector<std::size_t> truths, preds;
  ConfusionMatrix pooled(classes);
  for (std::size_t f = 0; f < k; ++f) {
    const auto m = f1_scores(results[f].cm);
    folds_csv += std::to_string(f) + "," + std::to_string(results[f].cm.total()) + "," + g17(m.accuracy) + "," +
                 g17(m.f1_micro) + "," + g17(m.f1_macro) + "\n";
    sum_micro += m.f1_micro;
    sum_macro += m.f1_macro;
    sum_acc += m.accuracy;
    truths.insert(truths.end(), results[f].truths.begin(), results[f].truths.end());
    preds.insert(preds.end(), results[f].preds.begin(), results[f].preds.end());
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (std::size_t j = 0; j < classes.size(); ++j) pooled.counts[i][j] += results[f].cm.counts[i][j];
  }
  const double kd = static_cast<double>(k);
  const auto boot = config.bootstrap_options();
  std::ostringstream summary;
  summary << "classes=";
  for (std::size_t i = 0; i < classes.size(); ++i) summary << (i ? "," : "") << classes[i];
  summary << "\nk=" << k << "\nreports=" << labeled.size() << "\nf1_micro_mean=" << g17(sum_micro / kd)
          << "\nf1_macro_mean=" << g17(sum_macro / kd) << "\naccuracy_mean=" << g17(sum_acc / kd) << "\n";
  std::vector<std::string> warnings;
  if (boot.resamples > 0) {
    for (auto kind : {MetricKind::f1_micro, MetricKind::f1_macro}) {
      auto ci = bootstrap_ci(truths, preds, classes.size(), kind, boot.resamples, boot.level, boot.seed);
      summary << metric_name(kind) << "_ci=" << g17(ci.interval.lower) << "," << g17(ci.interval.upper) << "\n";
      warnings.insert(warnings.end(), ci.warnings.begin(), ci.warnings.end());
    }
    summary << "ci_method=" << kBootstrapMethod << " over pooled out-of-fold predictions, level " << g17(boot.level)
            << "\n";
  }
  const auto stem = suffix_for(classes.size());
  write_file(s.path(stem + "_folds.csv"), folds_csv);
  write_file(s.path(stem + "_summary.txt"), summary.str());
  write_file(s.path(stem + "_confusion.csv"), pooled.to_csv());
  for (const auto& w : warnings) s.say("warning: ", w);
  s.say(k, "-fold cross-validation over ", classes.size(), " classes: mean F1-micro ", fixed4(sum_micro / kd),
        ", mean F1-macro ", fixed4(sum_macro / kd));
}

void cmd_analyze(const Context& ctx) {
  Session s(ctx, "analyze");
  const auto& config = s.config();
  const auto cm = ConfusionMatrix::from_csv(read_file(s.resolve(config.get("analyze.confusion"))));
  const auto& strategy_name = config.get("analyze.strategy");
  GroupingStrategy strategy;
  if (strategy_name == "top_pair") strategy = GroupingStrategy::top_pair;
  else if (strategy_name == "threshold") strategy = GroupingStrategy::threshold;
  else throw ContractError("unknown grouping strategy '" + strategy_name + "' (top_pair or threshold)");
  const auto candidates = suggest_grouping(cm, strategy, config.get_double("analyze.threshold"));

  std::ostringstream out;
  out << "# most confused pairs: rate = symmetric confusions / combined support\n";
  for (const auto& p : top_confused_pairs(cm, 5))
    out << "pair " << p.first << " " << p.second << " mass=" << p.mass << " rate=" << g17(p.rate) << "\n";
  out << "# candidates: rank score group_one | group_two\n";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& g = candidates[i].grouping;
    out << "candidate " << i + 1 << " " << g17(candidates[i].score) << " ";
    for (std::size_t j = 0; j < g.group_one.size(); ++j) out << (j ? "," : "") << g.group_one[j];
    out << " | ";
    for (std::size_t j = 0; j < g.group_two.size(); ++j) out << (j ? "," : "") << g.group_two[j];
    out << "\n";
  }
  write_file(s.path(files::candidates), out.str());
  if (!candidates.empty()) {
    write_file(s.path(files::suggested_grouping), candidates.front().grouping.to_text());
    s.say(out.str(), "wrote the first candidate to ", files::suggested_grouping);
  } else {
    s.say(out.str(), "no candidate grouping; keep the expert grouping");
  }
}

void cmd_train_ensemble(const Context& ctx) {
  Session s(ctx, "train-ensemble");
  const auto& config = s.config();
  const auto prep = config.prep_config();
  const auto prepared = load_prepared(s);
  const auto split = load_split(s);
  const auto vocab = load_vocab(s);
  const auto classes = active_classes(prepared);

  GroupingSpec grouping;
  const auto& choice = config.get("ensemble.grouping");
  if (choice == "expert") {
    grouping = GroupingSpec::expert_breast();
  } else if (choice == "suggested") {
    grouping = GroupingSpec::parse(read_file(s.path(files::suggested_grouping)));
    grouping.provenance = Provenance::suggested;
  } else if (choice == "file") {
    const auto& file = config.get("ensemble.grouping_file");
    if (file.empty()) throw ContractError("--grouping file needs ensemble.grouping_file");
    grouping = GroupingSpec::parse(read_file(s.resolve(file)));
    grouping.provenance = Provenance::file;
  } else {
    throw ContractError("unknown grouping '" + choice + "' (expert, suggested or file)");
  }
  grouping.validate(classes);

  auto cfg = config.cnn_config();
  for (std::size_t g = 0; g < 2; ++g) {
    auto probe = cfg;
    probe.num_classes = std::max<std::size_t>(2, grouping.group(g).size());
    probe.validate(prep.max_len);
  }
  const auto train_set = to_examples(prepared, split.train, vocab, prep.max_len);
  const auto val_set = to_examples(prepared, split.validation, vocab, prep.max_len);
  auto trained = train_ensemble(train_set, val_set, grouping, {cfg, cfg, cfg}, vocab.table_size(), vocab.digest(),
                                config.seed(), config.jobs());
  save_ensemble(trained.ensemble, s.path(files::ensemble_manifest));
  static const char* names[] = {"parent", "child_one", "child_two"};
  for (std::size_t m = 0; m < 3; ++m)
    if (trained.reports[m])
      write_file(s.path(std::string("ensemble/") + names[m] + "_train.csv"), trained.reports[m]->to_csv());
  for (const auto& w : trained.warnings) s.say("warning: ", w);
  std::string summary = "ensemble trained (" + std::string(provenance_name(grouping.provenance)) + " grouping):";
  for (std::size_t m = 0; m < 3; ++m)
    summary += std::string(" ") + names[m] + "=" +
               (trained.reports[m] ? "epoch " + std::to_string(trained.reports[m]->best_epoch) : "constant");
  s.say(summary);
}

void cmd_eval(const Context& ctx) {
  Session s(ctx, "eval");
  const auto prep = s.config().prep_config();
  const auto split_bytes = read_file(s.path(files::split));
  const auto split = parse_split(split_bytes);
  const auto vocab = load_vocab(s);
  const auto marker = read_file(s.path(files::test_marker));
  if (marker != marker_text(split_bytes, split, vocab.digest()))
    throw DigestMismatch("split or vocabulary changed since `split` wrote " + std::string(files::test_marker));

  const auto flat = load_checkpoint(s.path(files::flat_checkpoint), vocab.digest());
  const auto ensemble = load_ensemble(s.path(files::ensemble_manifest), vocab.digest());
  const auto prepared = load_prepared(s);
  const auto test_set = to_examples(prepared, split.test, vocab, prep.max_len);
  const auto ev = evaluate_pipeline(ensemble, flat, test_set, s.config().bootstrap_options());

  std::ostringstream report;
  report << "Final performance on test set (" << test_set.size() << " reports, " << flat.class_codes.size()
         << " classes)\n\n"
         << ev.comparison_table() << "\nflat confusion\n"
         << ev.flat_cm.render_grid() << "\nhierarchical confusion\n"
         << ev.hierarchical_cm.render_grid();
  for (const auto& note : ev.flat.notes) report << "note: " << note << "\n";
  write_file(s.path(files::eval_report), report.str());
  write_file(s.path(files::eval_metrics),
             "model,metric,value,ci_lower,ci_upper\n" + metrics_csv_rows("flat", ev.flat) +
                 metrics_csv_rows("hierarchical", ev.hierarchical));
  write_file(s.path(files::routing), ev.routing_csv());
  write_file(s.path(files::flat_test_confusion), ev.flat_cm.to_csv());
  write_file(s.path(files::hier_test_confusion), ev.hierarchical_cm.to_csv());
  s.say(report.str());
}

void cmd_report(const Context& ctx) {
  Session s(ctx, "report");
  std::ostringstream out;
  bool any = false;
  std::vector<fs::path> summaries;
  if (fs::is_directory(s.path("")))
    for (const auto& entry : fs::directory_iterator(s.path("")))
      if (entry.path().filename().string().rfind("crossval_", 0) == 0 &&
          entry.path().filename().string().ends_with("_summary.txt"))
        summaries.push_back(entry.path());
  std::sort(summaries.begin(), summaries.end());
  std::reverse(summaries.begin(), summaries.end());  // most classes first
  if (!summaries.empty()) {
    any = true;
    out << "Cross-validation (mean over folds, bootstrap interval)\n";
    for (const auto& p : summaries) {
      const auto kv = read_key_values(p);
      auto get = [&](const std::string& key) { return kv.count(key) ? kv.at(key) : std::string("-"); };
      auto ci = [&](const std::string& key) {
        const auto v = get(key);
        if (v == "-") return v;
        const auto comma = v.find(',');
        return "[" + fixed4(std::stod(v.substr(0, comma))) + ", " + fixed4(std::stod(v.substr(comma + 1))) + "]";
      };
      const auto classes = get("classes");
      const auto n = std::count(classes.begin(), classes.end(), ',') + 1;
      out << "  " << n << " classes (" << classes << "), k=" << get("k") << ": F1-micro "
          << fixed4(std::stod(get("f1_micro_mean"))) << " " << ci("f1_micro_ci") << ", F1-macro "
          << fixed4(std::stod(get("f1_macro_mean"))) << " " << ci("f1_macro_ci") << "\n";
    }
    out << "\n";
  }
  if (fs::exists(s.path(files::eval_report))) {
    any = true;
    out << read_file(s.path(files::eval_report));
  }
  if (!any) throw ContractError("nothing to report in " + s.path("").string() + "; run crossval or eval first");
  write_file(s.path(files::report), out.str());
  s.say(out.str());
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"gen-corpus", "prep", "split", "train-flat", "crossval",
                                                 "analyze", "train-ensemble", "eval", "report"};
  return names;
}

void run_command(std::string_view name, const Context& ctx) {
  static const std::map<std::string, std::function<void(const Context&)>, std::less<>> table = {
      {"gen-corpus", cmd_gen_corpus}, {"prep", cmd_prep},
      {"split", cmd_split},           {"train-flat", cmd_train_flat},
      {"crossval", cmd_crossval},     {"analyze", cmd_analyze},
      {"train-ensemble", cmd_train_ensemble}, {"eval", cmd_eval},
      {"report", cmd_report}};
  auto it = table.find(name);
  if (it == table.end()) throw ContractError("unknown command '" + std::string(name) + "'");
  it->second(ctx);
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->exit_code();
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
  return 1;
}

}  // namespace hierpath::cli
