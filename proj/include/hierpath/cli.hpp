// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "hierpath/cnnmodel.hpp"
#include "hierpath/corpus.hpp"
#include "hierpath/hierarchy.hpp"
#include "hierpath/textprep.hpp"

namespace hierpath::cli {

/// Flat `section.key` settings with typed accessors. Every key has a default;
/// setting an unknown key is a ContractError.
class RunConfig {
 public:
  RunConfig();

  /// `[section]` headers followed by `key = value` lines; `#` and `;` start
  /// comments. Errors carry the line number.
  void merge_text(std::string_view text, std::string_view origin = "config");
  /// One `section.key=value` assignment (the --set flag).
  void set_assignment(std::string_view assignment);
  void set(const std::string& key, std::string value);

  const std::string& get(const std::string& key) const;
  std::string get_string(const std::string& key) const { return get(key); }
  std::uint64_t get_u64(const std::string& key) const;
  std::size_t get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  bool is_known(const std::string& key) const { return values_.count(key) != 0; }
  /// Sectioned snapshot of every key; parsing it back gives the same config.
  std::string snapshot() const;

  std::uint64_t seed() const { return get_u64("run.seed"); }
  std::size_t jobs() const { return get_size("run.jobs"); }

  SyntheticSpec synthetic_spec() const;
  PrepConfig prep_config() const;
  SplitRatios split_ratios() const;
  /// [cnn] settings; seed and class count are filled in by each command.
  CnnConfig cnn_config() const;
  BootstrapOptions bootstrap_options() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Expands "C50.0..C50.5" ranges (over the breast schema order) and comma lists.
std::vector<std::string> parse_class_list(std::string_view text);

/// A tokenized report as written by `prep`.
struct PreparedReport {
  std::string id;
  std::string code;
  std::vector<std::string> tokens;
};

std::string serialize_prepared(std::span<const PreparedReport> reports);
std::vector<PreparedReport> parse_prepared(std::string_view content);

/// Fixed artifact names inside the work directory.
namespace files {
inline constexpr const char* corpus_jsonl = "corpus.jsonl";
inline constexpr const char* corpus_xml = "corpus.xml";
inline constexpr const char* prepared = "prepared.jsonl";
inline constexpr const char* prep_summary = "prep_summary.txt";
inline constexpr const char* split = "split.tsv";
inline constexpr const char* vocab = "vocab.tsv";
inline constexpr const char* test_marker = "test.marker";
inline constexpr const char* flat_checkpoint = "flat.ckpt";
inline constexpr const char* flat_train = "flat_train.csv";
inline constexpr const char* flat_val_confusion = "flat_val_confusion.csv";
inline constexpr const char* candidates = "grouping_candidates.txt";
inline constexpr const char* suggested_grouping = "suggested.grouping";
inline constexpr const char* ensemble_manifest = "ensemble/ensemble.manifest";
inline constexpr const char* eval_report = "eval_report.txt";
inline constexpr const char* eval_metrics = "eval_metrics.csv";
inline constexpr const char* routing = "routing.csv";
inline constexpr const char* flat_test_confusion = "flat_test_confusion.csv";
inline constexpr const char* hier_test_confusion = "hier_test_confusion.csv";
inline constexpr const char* report = "report.txt";
}  // namespace files

struct Context {
  RunConfig config;
  std::filesystem::path workdir = ".";
  std::ostream* out = nullptr;  // progress and result text; may be null
};

/// Each command throws hierpath::Error subclasses on failure and writes
/// `<command>.effective.conf` into the work directory on success.
void cmd_gen_corpus(const Context& ctx);
void cmd_prep(const Context& ctx);
void cmd_split(const Context& ctx);
void cmd_train_flat(const Context& ctx);
void cmd_crossval(const Context& ctx);
void cmd_analyze(const Context& ctx);
void cmd_train_ensemble(const Context& ctx);
void cmd_eval(const Context& ctx);
void cmd_report(const Context& ctx);

/// Runs a command by its subcommand name.
void run_command(std::string_view name, const Context& ctx);
const std::vector<std::string>& command_names();

/// Maps an exception to the process exit code (0 is never returned).
int exit_code_for(const std::exception& e);

}  // namespace hierpath::cli
