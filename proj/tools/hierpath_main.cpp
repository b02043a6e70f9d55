// SPDX-License-Identifier: Apache-2.0
// hierpath: pathology-report topography classification pipeline.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hierpath/cli.hpp"
#include "hierpath/error.hpp"
#include "hierpath/io.hpp"

namespace {

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string config_path;
  std::vector<std::string> assignments;
  std::string workdir = ".";
};

void add_common(CLI::App& sub, CommonFlags& flags) {
  sub.add_option("--seed", flags.seed, "Master seed (falls back to HIERPATH_SEED, then run.seed)");
  sub.add_option("--jobs", flags.jobs, "Parallel folds or ensemble members")->check(CLI::PositiveNumber);
  sub.add_option("--config", flags.config_path, "Run config file ([section] key = value)");
  sub.add_option("--set", flags.assignments, "Override one setting: section.key=value");
  sub.add_option("--workdir", flags.workdir, "Directory holding the pipeline artifacts");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Classify breast pathology reports into ICD-O topography codes with flat and hierarchical CNNs"};
  app.require_subcommand(1);
  CommonFlags flags;
  // Command-specific flags map onto config keys.
  std::string classes, confusion, strategy, threshold, grouping, grouping_file;
  std::optional<std::size_t> folds;

  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry entries[] = {
      {"gen-corpus", "Generate the seeded synthetic corpus (jsonl and xml)"},
      {"prep", "Tokenize, filter languages and apply the class policy"},
      {"split", "Stratified train/validation/test split, vocabulary fit and test marker"},
      {"train-flat", "Train the flat multiclass CNN"},
      {"crossval", "k-fold cross-validation of the flat CNN"},
      {"analyze", "Rank confused class pairs and suggest groupings"},
      {"train-ensemble", "Train the parent and child classifiers"},
      {"eval", "Score flat and hierarchical models on the test split"},
      {"report", "Summarize cross-validation and evaluation results"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    add_common(*sub, flags);
    subs.push_back(sub);
  }
  app.get_subcommand("crossval")->add_option("--classes", classes, "Codes, e.g. C50.0..C50.5 or C50.0,C50.8");
  app.get_subcommand("crossval")->add_option("--k", folds, "Number of folds");
  app.get_subcommand("analyze")->add_option("--confusion", confusion, "Confusion matrix CSV");
  app.get_subcommand("analyze")->add_option("--strategy", strategy, "top_pair or threshold");
  app.get_subcommand("analyze")->add_option("--threshold", threshold, "Rate threshold for the threshold strategy")
      ->check(CLI::Number);
  app.get_subcommand("train-ensemble")->add_option("--grouping", grouping, "expert, suggested or file");
  app.get_subcommand("train-ensemble")->add_option("--grouping-file", grouping_file, "Grouping file for --grouping file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    hierpath::cli::Context ctx;
    auto& config = ctx.config;
    if (const char* env = std::getenv("HIERPATH_SEED"); env && *env) config.set("run.seed", env);
    if (!flags.config_path.empty()) config.merge_text(hierpath::read_file(flags.config_path), flags.config_path);
    for (const auto& a : flags.assignments) config.set_assignment(a);
    if (flags.seed) config.set("run.seed", std::to_string(*flags.seed));
    if (flags.jobs) config.set("run.jobs", std::to_string(*flags.jobs));
    if (!classes.empty()) config.set("crossval.classes", classes);
    if (folds) config.set("crossval.k", std::to_string(*folds));
    if (!confusion.empty()) config.set("analyze.confusion", confusion);
    if (!strategy.empty()) config.set("analyze.strategy", strategy);
    if (!threshold.empty()) config.set("analyze.threshold", threshold);
    if (!grouping.empty()) config.set("ensemble.grouping", grouping);
    if (!grouping_file.empty()) config.set("ensemble.grouping_file", grouping_file);
    config.seed();  // rejects a malformed HIERPATH_SEED early
    ctx.workdir = flags.workdir;
    ctx.out = &std::cout;

    for (auto* sub : subs)
      if (sub->parsed()) hierpath::cli::run_command(sub->get_name(), ctx);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "hierpath: " << e.what() << '\n';
    return hierpath::cli::exit_code_for(e);
  }
}
