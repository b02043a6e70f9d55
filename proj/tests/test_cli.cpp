// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "hierpath/cli.hpp"
#include "hierpath/error.hpp"
#include "hierpath/io.hpp"
#include "test_support.hpp"

using namespace hierpath;
using namespace hierpath::cli;

namespace {

// Small enough that the whole pipeline runs in a few seconds.
constexpr const char* kTinyConfig = R"([corpus]
reports_per_class = 24
tokens_min = 12
tokens_max = 20
min_count = 10
[prep]
top_k = 150
max_len = 24
[cnn]
embed_dim = 8
maps_per_window = 4
hidden_dim = 8
epochs = 2
batch_size = 16
[eval]
bootstrap_resamples = 100
)";

Context tiny_context(const std::filesystem::path& dir, std::uint64_t seed = 7) {
  Context ctx;
  ctx.config.merge_text(kTinyConfig, "tiny");
  ctx.config.set("run.seed", std::to_string(seed));
  ctx.workdir = dir;
  return ctx;
}

void run_pipeline(const Context& ctx) {
  for (const char* cmd : {"gen-corpus", "prep", "split", "train-flat", "analyze", "train-ensemble", "eval"})
    run_command(cmd, ctx);
}

int run_cli(const std::string& args) {
  const auto cmd = std::string(HIERPATH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> csv_column(const std::string& csv, std::size_t col) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string f;
    for (std::size_t c = 0; c <= col; ++c) std::getline(fields, f, ',');
    out.push_back(f);
  }
  return out;
}

}  // namespace

TEST(RunConfig, SectionsCommentsAndOverrides) {
  RunConfig c;
  c.merge_text("# comment\n[cnn]\nepochs = 3 \n; other\n[run]\nseed=9\n", "file");
  EXPECT_EQ(c.get_size("cnn.epochs"), 3u);
  EXPECT_EQ(c.seed(), 9u);
  c.set_assignment("cnn.epochs=4");
  EXPECT_EQ(c.cnn_config().epochs, 4u);
  RunConfig back;
  back.merge_text(c.snapshot(), "snapshot");
  EXPECT_EQ(back.snapshot(), c.snapshot());
}

TEST(RunConfig, UnknownKeysRejectedWithLine) {
  RunConfig c;
  try {
    c.merge_text("[cnn]\nepochs = 3\nepoch = 4\n", "my.conf");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("my.conf:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("cnn.epoch"), std::string::npos);
  }
  EXPECT_THROW(c.merge_text("seed = 1\n"), ContractError);
  EXPECT_THROW(c.merge_text("[run\n"), ContractError);
  EXPECT_THROW(c.set_assignment("run.nope=1"), ContractError);
  EXPECT_THROW(c.set_assignment("run.seed"), ContractError);
}

TEST(RunConfig, TypedAccessorsValidate) {
  RunConfig c;
  c.set("run.seed", "-1");
  EXPECT_THROW(c.seed(), ContractError);
  c.set("run.seed", "18446744073709551615");
  EXPECT_EQ(c.seed(), 18446744073709551615ULL);
  c.set("eval.ci_level", "0.9x");
  EXPECT_THROW(c.get_double("eval.ci_level"), ContractError);
  c.set("prep.afrikaans_filter", "maybe");
  EXPECT_THROW(c.get_bool("prep.afrikaans_filter"), ContractError);
  c.set("cnn.dropout_p", "2");
  EXPECT_THROW(c.cnn_config().validate(), ContractError);
}

TEST(ClassList, RangesAndLists) {
  EXPECT_EQ(parse_class_list("C50.0..C50.5"),
            (std::vector<std::string>{"C50.0", "C50.1", "C50.2", "C50.3", "C50.4", "C50.5"}));
  EXPECT_EQ(parse_class_list("C50.8, C50.0..C50.1"), (std::vector<std::string>{"C50.8", "C50.0", "C50.1"}));
  EXPECT_TRUE(parse_class_list("").empty());
  EXPECT_THROW(parse_class_list("C50.5..C50.0"), ContractError);
  EXPECT_THROW(parse_class_list("C50.1,C50.1"), ContractError);
  EXPECT_THROW(parse_class_list("breast"), ContractError);
}

TEST(Prepared, JsonlRoundTrip) {
  std::vector<PreparedReport> in{{"a", "C50.1", {"x", "y"}}, {"b", "C50.9", {}}};
  const auto back = parse_prepared(serialize_prepared(in));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].tokens, in[0].tokens);
  EXPECT_EQ(back[1].code, "C50.9");
}

TEST(GenCorpus, DefaultSizeAndDeterminism) {
  test_support::TempDir a("gen"), b("gen");
  Context ca, cb;
  ca.workdir = a.path() / "nested" / "out";  // created on demand
  cb.workdir = b.path();
  ca.config.set("run.seed", "7");
  cb.config.set("run.seed", "7");
  cmd_gen_corpus(ca);
  cmd_gen_corpus(cb);
  const auto reports = load_reports(ca.workdir / files::corpus_jsonl, CorpusFormat::jsonl);
  EXPECT_EQ(reports.size(), 2200u);
  EXPECT_EQ(read_file(ca.workdir / files::corpus_jsonl), read_file(b / files::corpus_jsonl));
  EXPECT_EQ(read_file(ca.workdir / files::corpus_xml), read_file(b / files::corpus_xml));
  EXPECT_EQ(load_reports(ca.workdir / files::corpus_xml, CorpusFormat::xml), reports);
  EXPECT_TRUE(std::filesystem::exists(ca.workdir / "gen-corpus.effective.conf"));
}

TEST(GenCorpus, BinaryDeterministicAndExitCodes) {
  test_support::TempDir a("bin"), b("bin");
  ASSERT_EQ(run_cli("gen-corpus --seed 7 --workdir " + a.path().string()), 0);
  ASSERT_EQ(run_cli("gen-corpus --seed 7 --workdir " + b.path().string()), 0);
  EXPECT_EQ(read_file(a / files::corpus_jsonl), read_file(b / files::corpus_jsonl));

  // A regular file where a directory is expected cannot be written to.
  write_file(a / "blocker", "x");
  EXPECT_EQ(run_cli("gen-corpus --workdir " + (a / "blocker" / "sub").string()), 2);
  EXPECT_EQ(run_cli("gen-corpus --set corpus.bogus=1 --workdir " + a.path().string()), 1);
  EXPECT_EQ(run_cli("no-such-command"), 1);
  EXPECT_EQ(run_cli("prep --workdir " + (a / "empty").string()), 2);
}

TEST(GenCorpus, SeedPrecedence) {
  test_support::TempDir dir("seed");
  write_file(dir / "c.conf", "[run]\nseed = 5\n");
  const auto conf = (dir / "c.conf").string();
  ASSERT_EQ(run_cli("gen-corpus --config " + conf + " --workdir " + (dir / "file").string()), 0);
  ASSERT_EQ(run_cli("gen-corpus --seed 5 --workdir " + (dir / "flag").string()), 0);
  ASSERT_EQ(run_cli("gen-corpus --config " + conf + " --seed 6 --workdir " + (dir / "both").string()), 0);
  const auto cmd = "HIERPATH_SEED=5 " + std::string(HIERPATH_CLI_PATH) + " gen-corpus --workdir " +
                   (dir / "env").string() + " >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto five = read_file(dir / "flag" / files::corpus_jsonl);
  EXPECT_EQ(read_file(dir / "file" / files::corpus_jsonl), five);
  EXPECT_EQ(read_file(dir / "env" / files::corpus_jsonl), five);
  EXPECT_NE(read_file(dir / "both" / files::corpus_jsonl), five);
}

TEST(Pipeline, EndToEndAndEvalRerunIsBitExact) {
  test_support::TempDir dir("pipe");
  const auto ctx = tiny_context(dir.path());
  run_pipeline(ctx);
  for (const char* f : {files::prepared, files::split, files::vocab, files::test_marker, files::flat_checkpoint,
                        files::flat_val_confusion, files::candidates, files::ensemble_manifest, files::eval_report,
                        files::eval_metrics, files::routing, files::flat_test_confusion, files::hier_test_confusion})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto report = read_file(dir / files::eval_report);
  EXPECT_NE(report.find("flat"), std::string::npos);
  EXPECT_NE(report.find("hierarchical"), std::string::npos);
  const auto metrics = read_file(dir / files::eval_metrics);
  const auto routing = read_file(dir / files::routing);
  run_command("eval", ctx);
  EXPECT_EQ(read_file(dir / files::eval_report), report);
  EXPECT_EQ(read_file(dir / files::eval_metrics), metrics);
  EXPECT_EQ(read_file(dir / files::routing), routing);

  run_command("report", ctx);
  EXPECT_NE(read_file(dir / files::report).find("hierarchical"), std::string::npos);
}

TEST(Pipeline, ExpertGroupingUsedVerbatim) {
  test_support::TempDir dir("grp");
  const auto ctx = tiny_context(dir.path());
  run_pipeline(ctx);
  const auto manifest = EnsembleManifest::parse(read_file(dir / files::ensemble_manifest));
  EXPECT_EQ(manifest.grouping.group_one, GroupingSpec::expert_breast().group_one);
  EXPECT_EQ(manifest.grouping.group_two, GroupingSpec::expert_breast().group_two);
  EXPECT_EQ(manifest.grouping.provenance, Provenance::expert);
}

TEST(Pipeline, MarkerBlocksChangedSplit) {
  test_support::TempDir dir("marker");
  const auto ctx = tiny_context(dir.path());
  run_pipeline(ctx);
  // Move one report from train into test behind the marker's back.
  auto split = parse_split(read_file(dir / files::split));
  split.test.push_back(split.train.back());
  split.train.pop_back();
  write_file(dir / files::split, serialize_split(split));
  EXPECT_THROW(run_command("eval", ctx), DigestMismatch);

  std::filesystem::remove(dir / files::test_marker);
  EXPECT_THROW(run_command("eval", ctx), IoError);
}

TEST(Crossval, AggregateIsFoldMean) {
  test_support::TempDir dir("cv");
  auto ctx = tiny_context(dir.path());
  ctx.config.set("crossval.k", "3");
  ctx.config.set("crossval.classes", "C50.0..C50.5");
  for (const char* cmd : {"gen-corpus", "prep", "split", "crossval"}) run_command(cmd, ctx);
  const auto folds = read_file(dir / "crossval_6class_folds.csv");
  const auto f1 = csv_column(folds, 3);
  ASSERT_EQ(f1.size(), 3u);
  double mean = 0.0;
  for (const auto& v : f1) mean += std::stod(v);
  mean /= 3.0;
  std::map<std::string, std::string> kv;
  std::istringstream in(read_file(dir / "crossval_6class_summary.txt"));
  for (std::string line; std::getline(in, line);)
    if (auto eq = line.find('='); eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  ASSERT_TRUE(kv.count("f1_micro_mean"));
  EXPECT_NEAR(std::stod(kv["f1_micro_mean"]), mean, 1e-12);
  const auto cm = ConfusionMatrix::from_csv(read_file(dir / "crossval_6class_confusion.csv"));
  EXPECT_EQ(cm.size(), 6u);
}

TEST(Crossval, TooManyFoldsNamesTheClass) {
  test_support::TempDir dir("cvbad");
  auto ctx = tiny_context(dir.path());
  ctx.config.set("crossval.k", "40");
  for (const char* cmd : {"gen-corpus", "prep", "split"}) run_command(cmd, ctx);
  try {
    run_command("crossval", ctx);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("C50."), std::string::npos) << e.what();
  }
}

TEST(Analyze, MalformedConfusionNamesRow) {
  test_support::TempDir dir("an");
  auto ctx = tiny_context(dir.path());
  write_file(dir / "bad.csv", "true\\pred,C50.0,C50.1,C50.2\nC50.0,1,0,0\nC50.1,0,x,0\nC50.2,0,0,1\n");
  ctx.config.set("analyze.confusion", "bad.csv");
  try {
    run_command("analyze", ctx);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("row"), std::string::npos) << e.what();
  }
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ContractError("x")), 1);
  EXPECT_EQ(exit_code_for(IoError("x")), 2);
  EXPECT_EQ(exit_code_for(NumericError("x")), 3);
  EXPECT_EQ(exit_code_for(CheckpointCorrupt("x")), 2);
  EXPECT_EQ(exit_code_for(DigestMismatch("x")), 1);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), 1);
  EXPECT_EQ(command_names().size(), 9u);
  Context ctx;
  EXPECT_THROW(run_command("bogus", ctx), ContractError);
}
