// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hierpath {

/// One pathology document.
struct Report {
  std::string id;
  std::string text;
  std::optional<std::string> label;  // ICD-O topography code, e.g. "C50.4"

  bool operator==(const Report&) const = default;
};

/// True for codes of the form C<digit><digit>.<digit>.
bool is_valid_code(std::string_view code);

enum class CorpusFormat { xml, jsonl };

/// Picks the format from the file extension (.xml or .jsonl/.json).
CorpusFormat format_from_path(const std::filesystem::path& path);

/// Loads reports in file order; text is returned verbatim.
std::vector<Report> load_reports(const std::filesystem::path& path, CorpusFormat format);
std::vector<Report> parse_reports_jsonl(std::string_view content);
std::vector<Report> parse_reports_xml(std::string_view content);

std::string serialize_reports(std::span<const Report> reports, CorpusFormat format);
void write_reports(const std::filesystem::path& path, std::span<const Report> reports,
                   CorpusFormat format);

/// Ordered code universe; a code's position is its class index.
struct LabelSchema {
  std::vector<std::string> codes;
  std::size_t min_count = 200;

  /// C50.0-C50.6, C50.8, C50.9 with the strict ">200 reports" threshold.
  static LabelSchema breast_topography();
  std::optional<std::size_t> index_of(std::string_view code) const;
};

struct PolicyResult {
  std::vector<Report> kept;
  std::vector<std::string> excluded_codes;  // sorted
};

/// Drops every code with count <= schema.min_count, together with its reports.
PolicyResult apply_class_policy(std::span<const Report> reports, const LabelSchema& schema);

enum class Partition : std::uint8_t { train = 0, validation = 1, test = 2 };
std::string_view partition_name(Partition p);
Partition parse_partition(std::string_view name);

using SplitRatios = std::array<double, 3>;

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  SplitRatios ratios{0.8, 0.1, 0.1};

  const std::vector<std::string>& ids(Partition p) const;
  bool operator==(const DatasetSplit&) const = default;
};

/// Largest-remainder allocation of n items over the given ratios; ties in the
/// fractional parts go to the earlier partition.
std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> ratios);

/// Per-class shuffled, largest-remainder allocation. Partition id lists keep the
/// input order of the reports.
DatasetSplit stratified_split(std::span<const Report> reports, const SplitRatios& ratios,
                              std::uint64_t seed);

std::string serialize_split(const DatasetSplit& split);
DatasetSplit parse_split(std::string_view content);

struct FoldPlan {
  std::size_t k = 0;
  std::map<std::string, std::size_t> assignment;

  std::vector<std::string> ids_in_fold(std::size_t fold) const;
};

/// Per-class round-robin over shuffled ids; the round-robin offset carries over
/// between classes so fold totals stay balanced as well.
FoldPlan make_folds(std::span<const Report> reports, std::size_t k, std::uint64_t seed);

/// Selects reports by id, keeping the order of `ids`.
std::vector<Report> select_reports(std::span<const Report> reports,
                                   std::span<const std::string> ids);

/// Per-code report counts, keyed by code.
std::map<std::string, std::size_t> count_labels(std::span<const Report> reports);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticClass {
  std::string code;
  std::vector<std::string> signature;
  double strength = 0.3;
};

struct ConfusablePair {
  std::string first;
  std::string second;
  double overlap = 0.0;
};

/// Bag-of-tokens mixture model. Each token of a report comes from the class
/// signature with probability `strength`, otherwise from the shared vocabulary.
/// For a confusable pair, round(overlap * reports_per_class) reports of each
/// class are "confused": each of their signature draws comes from the partner's
/// signature with probability `partner_share`.
struct SyntheticSpec {
  std::vector<SyntheticClass> classes;
  std::vector<std::string> shared_vocabulary;
  std::size_t reports_per_class = 275;
  std::size_t tokens_min = 30;
  std::size_t tokens_max = 60;
  std::vector<ConfusablePair> confusable_pairs;
  double partner_share = 0.4;
  double numeric_rate = 0.02;  // digit-bearing filler such as "12mm"
  std::uint64_t seed = 42;

  /// Eight breast topography classes at 275 reports each, with C50.8/C50.9
  /// confusable at overlap 0.5.
  static SyntheticSpec breast_default(std::uint64_t seed);
  void validate() const;
};

/// Deterministic word lists for building specs.
std::vector<std::string> pathology_shared_vocabulary();
std::vector<std::string> pseudo_words(std::size_t count, std::uint64_t seed,
                                      std::span<const std::string> avoid);

std::vector<Report> generate_synthetic(const SyntheticSpec& spec);

}  // namespace hierpath
