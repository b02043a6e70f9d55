// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hierpath/cnnmodel.hpp"
#include "hierpath/metrics.hpp"

namespace hierpath {

enum class Provenance { expert, suggested, file };
std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view name);

/// Two-way partition of the active codes. Group index 0 is group_one.
struct GroupingSpec {
  std::vector<std::string> group_one;
  std::vector<std::string> group_two;
  Provenance provenance = Provenance::expert;

  /// C50.8/C50.9 against C50.0-C50.5.
  static GroupingSpec expert_breast();

  /// Disjoint, non-empty, and (when given) covering exactly `active`.
  void validate(std::span<const std::string> active = {}) const;
  std::optional<std::size_t> group_of(std::string_view code) const;
  const std::vector<std::string>& group(std::size_t g) const { return g == 0 ? group_one : group_two; }
  /// group_one codes followed by group_two codes.
  std::vector<std::string> ordered_codes() const;

  std::string to_text() const;
  static GroupingSpec parse(std::string_view text);

  bool operator==(const GroupingSpec&) const = default;
};

enum class GroupingStrategy { top_pair, threshold };

struct GroupingCandidate {
  GroupingSpec grouping;
  double score = 0.0;  // normalized confusion rate that produced the candidate
};

/// top_pair: one candidate per each of the two most confused pairs (rate =
/// symmetric mass / pair support), pair in group_one. threshold: connected
/// components of pairs whose rate reaches `threshold`.
std::vector<GroupingCandidate> suggest_grouping(const ConfusionMatrix& cm, GroupingStrategy strategy,
                                                double threshold = 0.05);

/// An encoded report with its ICD-O code.
struct LabeledExample {
  std::string id;
  std::vector<int> indices;
  std::string code;
};

/// Indexes each example's code into `codes`; a code outside the list is an error.
std::vector<EncodedReport> label_with(std::span<const LabeledExample> examples,
                                      std::span<const std::string> codes);

/// Group labels: group_one -> 0, group_two -> 1.
std::vector<EncodedReport> derive_parent_labels(std::span<const LabeledExample> examples,
                                                const GroupingSpec& grouping);

/// Members of group `g` only, labeled against that group's code list.
std::vector<EncodedReport> group_subset(std::span<const LabeledExample> examples,
                                        const GroupingSpec& grouping, std::size_t g);

inline const std::vector<std::string> kParentClasses = {"group_one", "group_two"};

struct Ensemble {
  GroupingSpec grouping;
  Checkpoint parent;
  Checkpoint child_one;
  Checkpoint child_two;

  const Checkpoint& child(std::size_t g) const { return g == 0 ? child_one : child_two; }
  /// Class maps must match the grouping and all vocabulary digests must agree.
  void validate() const;
};

struct MemberConfigs {
  CnnConfig parent;
  CnnConfig child_one;
  CnnConfig child_two;
};

struct EnsembleTraining {
  Ensemble ensemble;
  std::array<std::optional<TrainReport>, 3> reports;  // parent, child_one, child_two
  std::vector<std::string> warnings;
};

/// Member seeds are master_seed + member index (parent 0, child_one 1,
/// child_two 2). A group with a single class gets a constant classifier.
/// With jobs > 1 the three members train on separate threads. `table_size` is
/// the embedding row count (vocabulary table size).
EnsembleTraining train_ensemble(std::span<const LabeledExample> train_set,
                                std::span<const LabeledExample> val_set, const GroupingSpec& grouping,
                                MemberConfigs configs, std::size_t table_size, std::uint64_t vocab_digest,
                                std::uint64_t master_seed, std::size_t jobs = 1);

struct RoutedPrediction {
  std::string report_id;
  std::size_t group = 0;
  std::array<double, 2> group_probs{};
  std::string final_code;
  nn::NdArray final_probs;
};

/// Replaces the parent's group probabilities (e.g. an oracle for analysis).
using GroupRouter = std::function<std::array<double, 2>(const LabeledExample&)>;

/// Hard routing: parent argmax (ties to group_one), then only that child.
RoutedPrediction ensemble_predict(const Ensemble& ensemble, const LabeledExample& example,
                                  const GroupRouter& router = {});

struct HierarchicalRun {
  ConfusionMatrix cm;
  std::vector<RoutedPrediction> routing;
};

/// Routes every example and scores against `class_order`.
HierarchicalRun run_hierarchical(const Ensemble& ensemble, std::span<const LabeledExample> examples,
                                 std::vector<std::string> class_order, const GroupRouter& router = {});

/// Confusion matrix of one classifier over examples labeled within its class map.
ConfusionMatrix checkpoint_confusion(const Checkpoint& checkpoint, std::span<const LabeledExample> examples);

struct BootstrapOptions {
  std::size_t resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct PipelineEvaluation {
  MetricsReport flat;
  MetricsReport hierarchical;
  ConfusionMatrix flat_cm;
  ConfusionMatrix hierarchical_cm;
  std::vector<RoutedPrediction> routing;

  /// report_id,group_prob_0,group_prob_1,routed_group,final_code
  std::string routing_csv() const;
  /// Side-by-side comparison table.
  std::string comparison_table() const;
};

/// Scores the flat model and the ensemble on the same examples, over the flat
/// model's class order.
PipelineEvaluation evaluate_pipeline(const Ensemble& ensemble, const Checkpoint& flat,
                                     std::span<const LabeledExample> test_set,
                                     const BootstrapOptions& bootstrap = {});

/// Plain-text manifest: grouping, member checkpoint paths (relative to the
/// manifest), their file digests, the shared vocabulary digest.
struct EnsembleManifest {
  GroupingSpec grouping;
  std::uint64_t vocab_digest = 0;
  std::array<std::string, 3> paths;
  std::array<std::uint64_t, 3> digests{};

  std::string to_text() const;
  static EnsembleManifest parse(std::string_view text);
};

EnsembleManifest save_ensemble(const Ensemble& ensemble, const std::filesystem::path& manifest_path);
Ensemble load_ensemble(const std::filesystem::path& manifest_path,
                       std::optional<std::uint64_t> expected_vocab_digest = std::nullopt);

}  // namespace hierpath
