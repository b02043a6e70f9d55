// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "hierpath/corpus.hpp"
#include "hierpath/error.hpp"
#include "hierpath/io.hpp"
#include "hierpath/rng.hpp"
#include "test_support.hpp"

using namespace hierpath;

namespace {

std::vector<Report> labeled(const std::map<std::string, std::size_t>& counts) {
  std::vector<Report> out;
  std::size_t next = 0;
  for (const auto& [code, n] : counts)
    for (std::size_t i = 0; i < n; ++i) out.push_back({"r" + std::to_string(next++), "text", code});
  return out;
}

}  // namespace

TEST(Codes, Pattern) {
  EXPECT_TRUE(is_valid_code("C50.4"));
  EXPECT_TRUE(is_valid_code("C18.0"));
  EXPECT_FALSE(is_valid_code("C50"));
  EXPECT_FALSE(is_valid_code("c50.4"));
  EXPECT_FALSE(is_valid_code("C50.45"));
  EXPECT_FALSE(is_valid_code("C5X.4"));
  EXPECT_FALSE(is_valid_code(""));
}

TEST(LoadReports, XmlSingleRecord) {
  const auto reports = parse_reports_xml(
      R"(<reports><report id="r1"><text>ductal carcinoma</text><code>C50.4</code></report></reports>)");
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0], (Report{"r1", "ductal carcinoma", "C50.4"}));
}

TEST(LoadReports, EmptyLists) {
  EXPECT_TRUE(parse_reports_xml("<reports></reports>").empty());
  EXPECT_TRUE(parse_reports_xml("<reports/>").empty());
  EXPECT_TRUE(parse_reports_jsonl("").empty());
  EXPECT_TRUE(parse_reports_jsonl("\n\n").empty());
}

TEST(LoadReports, MissingLabelIsAbsent) {
  const auto xml = parse_reports_xml(R"(<reports><report id="a"><text>x</text></report></reports>)");
  ASSERT_EQ(xml.size(), 1u);
  EXPECT_FALSE(xml[0].label.has_value());
  const auto jsonl = parse_reports_jsonl(R"({"id":"a","text":"x"})");
  ASSERT_EQ(jsonl.size(), 1u);
  EXPECT_FALSE(jsonl[0].label.has_value());
}

TEST(LoadReports, TextIsVerbatimAndOrderKept) {
  const std::string text = "  Grade 2,  PT2N0 élève <tag> & \"q\"\n";
  std::vector<Report> in{{"z", text, "C50.1"}, {"a", "second", std::nullopt}, {"m", "", "C50.9"}};
  for (auto fmt : {CorpusFormat::jsonl, CorpusFormat::xml}) {
    const auto bytes = serialize_reports(in, fmt);
    const auto out = fmt == CorpusFormat::jsonl ? parse_reports_jsonl(bytes) : parse_reports_xml(bytes);
    EXPECT_EQ(out, in);
  }
}

TEST(LoadReports, MalformedRecordNamesLine) {
  try {
    parse_reports_jsonl("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\",\"text\":\n");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  try {
    parse_reports_xml(R"(<reports><report id="a"><text>x</text></report><report><text>y</text></report></reports>)");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
  }
}

TEST(LoadReports, BadCodeRejected) {
  EXPECT_THROW(parse_reports_jsonl(R"({"id":"a","text":"x","code":"C50"})"), ContractError);
}

TEST(LoadReports, DuplicateIdNamed) {
  try {
    parse_reports_jsonl("{\"id\":\"dup7\",\"text\":\"x\"}\n{\"id\":\"dup7\",\"text\":\"y\"}\n");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("dup7"), std::string::npos);
  }
}

TEST(LoadReports, UnreadableFileIsIoError) {
  test_support::TempDir dir("corpus");
  EXPECT_THROW(load_reports(dir / "missing.jsonl", CorpusFormat::jsonl), IoError);
  try {
    load_reports(dir / "missing.xml", CorpusFormat::xml);
  } catch (const Error& e) {
    EXPECT_EQ(e.exit_code(), 2);
  }
}

TEST(LoadReports, PaperScaleRoundTrip) {
  auto spec = SyntheticSpec::breast_default(11);
  spec.classes.push_back({"C50.6", {"zzlobe"}, 0.3});
  spec.reports_per_class = 2201 / 9 + 1;  // 245 * 9 = 2205
  auto reports = generate_synthetic(spec);
  reports.resize(2201);
  test_support::TempDir dir("corpus");
  for (auto fmt : {CorpusFormat::jsonl, CorpusFormat::xml}) {
    const auto path = dir / (fmt == CorpusFormat::jsonl ? "c.jsonl" : "c.xml");
    write_reports(path, reports, fmt);
    EXPECT_EQ(format_from_path(path), fmt);
    const auto back = load_reports(path, fmt);
    ASSERT_EQ(back.size(), 2201u);
    std::set<std::string> ids;
    for (const auto& r : back) ids.insert(r.id);
    EXPECT_EQ(ids.size(), 2201u);
    EXPECT_EQ(back, reports);
  }
}

TEST(ClassPolicy, ExcludesSparseClass) {
  const auto schema = LabelSchema::breast_topography();
  ASSERT_EQ(schema.codes.size(), 9u);
  std::map<std::string, std::size_t> counts;
  for (const auto& c : schema.codes) counts[c] = 201 + counts.size();
  counts["C50.6"] = 150;
  const auto reports = labeled(counts);
  const auto result = apply_class_policy(reports, schema);
  EXPECT_EQ(result.excluded_codes, std::vector<std::string>{"C50.6"});
  EXPECT_EQ(result.kept.size(), reports.size() - 150);
  for (const auto& r : result.kept) EXPECT_NE(*r.label, "C50.6");
}

TEST(ClassPolicy, AllAboveThresholdIsNoOp) {
  auto schema = LabelSchema::breast_topography();
  schema.min_count = 2;
  std::map<std::string, std::size_t> counts;
  for (const auto& c : schema.codes) counts[c] = 3;
  const auto reports = labeled(counts);
  const auto result = apply_class_policy(reports, schema);
  EXPECT_TRUE(result.excluded_codes.empty());
  EXPECT_EQ(result.kept, reports);
}

TEST(ClassPolicy, BoundaryIsStrict) {
  // Enumerate counts around the threshold: kept exactly when count > min_count.
  auto schema = LabelSchema::breast_topography();
  schema.min_count = 200;
  for (std::size_t n : {199u, 200u, 201u}) {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : schema.codes) counts[c] = 250;
    counts["C50.2"] = n;
    const auto result = apply_class_policy(labeled(counts), schema);
    const bool excluded = std::count(result.excluded_codes.begin(), result.excluded_codes.end(), "C50.2") == 1;
    EXPECT_EQ(excluded, !(n > 200)) << n;
  }
}

TEST(ClassPolicy, Errors) {
  const auto schema = LabelSchema::breast_topography();
  std::vector<Report> unlabeled{{"a", "x", std::nullopt}};
  EXPECT_THROW(apply_class_policy(unlabeled, schema), ContractError);
  std::vector<Report> outside{{"a", "x", "C18.0"}};
  try {
    apply_class_policy(outside, schema);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("C18.0"), std::string::npos);
  }
}

TEST(LargestRemainder, BruteForceAgainstRule) {
  // Oracle: floor quotas, then hand leftovers to the largest fractional parts,
  // earlier partition first on equal fractions.
  const std::array<double, 3> ratios{0.8, 0.1, 0.1};
  for (std::size_t n = 3; n <= 30; ++n) {
    std::array<std::size_t, 3> expect{};
    std::array<double, 3> frac{};
    std::size_t total = 0;
    for (int p = 0; p < 3; ++p) {
      const double q = static_cast<double>(n) * ratios[p];
      expect[p] = static_cast<std::size_t>(std::floor(q + 1e-9));
      frac[p] = q - static_cast<double>(expect[p]);
      total += expect[p];
    }
    while (total < n) {
      int best = 0;
      for (int p = 1; p < 3; ++p)
        if (frac[p] > frac[best] + 1e-12) best = p;
      ++expect[best];
      frac[best] = -1.0;
      ++total;
    }
    const auto got = largest_remainder(n, ratios);
    ASSERT_EQ(got.size(), 3u);
    for (int p = 0; p < 3; ++p) {
      EXPECT_EQ(got[p], expect[p]) << "n=" << n << " p=" << p;
      EXPECT_LE(std::abs(static_cast<double>(got[p]) - ratios[p] * static_cast<double>(n)), 1.0);
    }
    EXPECT_EQ(got[0] + got[1] + got[2], n);
  }
  EXPECT_EQ(largest_remainder(21, ratios), (std::vector<std::size_t>{17, 2, 2}));
}

TEST(StratifiedSplit, ExactDivisibility) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : SyntheticSpec::breast_default(1).classes) counts[c.code] = 10;
  const auto reports = labeled(counts);
  const auto split = stratified_split(reports, {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(split.train.size(), 64u);
  EXPECT_EQ(split.validation.size(), 8u);
  EXPECT_EQ(split.test.size(), 8u);
  for (auto p : {Partition::train, Partition::validation, Partition::test}) {
    const auto per = count_labels(select_reports(reports, split.ids(p)));
    for (const auto& [code, n] : per) EXPECT_EQ(n, p == Partition::train ? 8u : 1u) << code;
  }
}

TEST(StratifiedSplit, TwentyOneInOneClass) {
  const auto reports = labeled({{"C50.4", 21}});
  const auto split = stratified_split(reports, {0.8, 0.1, 0.1}, 9);
  EXPECT_EQ(split.train.size(), 17u);
  EXPECT_EQ(split.validation.size(), 2u);
  EXPECT_EQ(split.test.size(), 2u);
}

TEST(StratifiedSplit, InvariantsOverSeeds) {
  const auto reports = generate_synthetic([] {
    auto s = SyntheticSpec::breast_default(5);
    s.reports_per_class = 23;
    return s;
  }());
  const auto total = count_labels(reports);
  const SplitRatios ratios{0.7, 0.2, 0.1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto split = stratified_split(reports, ratios, seed);
    std::set<std::string> all;
    for (auto p : {Partition::train, Partition::validation, Partition::test}) {
      for (const auto& id : split.ids(p)) EXPECT_TRUE(all.insert(id).second) << "overlap on " << id;
      const auto per = count_labels(select_reports(reports, split.ids(p)));
      for (const auto& [code, n] : total) {
        const auto it = per.find(code);
        const double got = it == per.end() ? 0.0 : static_cast<double>(it->second);
        EXPECT_LE(std::abs(got - ratios[static_cast<int>(p)] * static_cast<double>(n)), 1.0);
      }
    }
    EXPECT_EQ(all.size(), reports.size());
  }
}

TEST(StratifiedSplit, DeterministicAndSerializable) {
  const auto reports = labeled({{"C50.1", 13}, {"C50.2", 9}});
  const auto a = stratified_split(reports, {0.8, 0.1, 0.1}, 77);
  const auto b = stratified_split(reports, {0.8, 0.1, 0.1}, 77);
  EXPECT_EQ(a, b);
  EXPECT_EQ(parse_split(serialize_split(a)), a);
  EXPECT_NE(stratified_split(reports, {0.8, 0.1, 0.1}, 78), a);
}

TEST(StratifiedSplit, Errors) {
  EXPECT_THROW(stratified_split(labeled({{"C50.1", 10}}), {0.5, 0.1, 0.1}, 1), ContractError);
  try {
    stratified_split(labeled({{"C50.1", 10}, {"C50.3", 2}}), {0.8, 0.1, 0.1}, 1);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("C50.3"), std::string::npos);
  }
  try {
    stratified_split(labeled({{"C50.5", 4}}), {0.1, 0.45, 0.45}, 1);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("C50.5"), std::string::npos);
  }
}

TEST(Folds, ExactAndUnevenSizes) {
  const auto twenty = make_folds(labeled({{"C50.0", 20}}), 10, 1);
  for (std::size_t f = 0; f < 10; ++f) EXPECT_EQ(twenty.ids_in_fold(f).size(), 2u);

  const auto plan = make_folds(labeled({{"C50.0", 23}}), 10, 2);
  std::vector<std::size_t> sizes;
  for (std::size_t f = 0; f < 10; ++f) sizes.push_back(plan.ids_in_fold(f).size());
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 2, 2, 2, 2, 2, 2, 2}));

  const auto reports = labeled({{"C50.0", 2}, {"C50.1", 2}, {"C50.9", 2}});
  const auto minimal = make_folds(reports, 2, 3);
  for (std::size_t f = 0; f < 2; ++f) {
    const auto per = count_labels(select_reports(reports, minimal.ids_in_fold(f)));
    for (const auto& [code, n] : per) EXPECT_EQ(n, 1u) << code;
    EXPECT_EQ(per.size(), 3u);
  }
}

TEST(Folds, BalanceProperty) {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : {"C50.0", "C50.1", "C50.4", "C50.8"}) counts[c] = 10 + rng.below(40);
    const auto reports = labeled(counts);
    const std::size_t k = 2 + rng.below(9);
    const auto plan = make_folds(reports, k, rng.next());
    EXPECT_EQ(plan.assignment.size(), reports.size());
    std::map<std::string, std::vector<std::size_t>> per(
        [&] {
          std::map<std::string, std::vector<std::size_t>> m;
          for (const auto& [c, n] : counts) m[c].assign(k, 0);
          return m;
        }());
    for (const auto& r : reports) {
      const auto f = plan.assignment.at(r.id);
      ASSERT_LT(f, k);
      ++per[*r.label][f];
    }
    for (const auto& [code, folds] : per) {
      const auto [lo, hi] = std::minmax_element(folds.begin(), folds.end());
      EXPECT_LE(*hi - *lo, 1u) << code << " k=" << k;
    }
  }
}

TEST(Folds, Errors) {
  EXPECT_THROW(make_folds(labeled({{"C50.0", 5}}), 1, 0), ContractError);
  try {
    make_folds(labeled({{"C50.0", 12}, {"C50.2", 4}}), 5, 0);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("C50.2"), std::string::npos);
  }
}

TEST(Synthetic, FullStrengthUsesOnlySignature) {
  auto spec = SyntheticSpec::breast_default(3);
  spec.confusable_pairs.clear();
  spec.numeric_rate = 0.0;
  spec.reports_per_class = 20;
  for (auto& c : spec.classes) c.strength = 1.0;
  std::map<std::string, std::set<std::string>> signature;
  for (const auto& c : spec.classes)
    for (const auto& w : c.signature) signature[c.code].insert(w);
  for (const auto& r : generate_synthetic(spec)) {
    std::string word;
    for (char ch : r.text + " ") {
      if (std::isalpha(static_cast<unsigned char>(ch))) {
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      } else if (!word.empty()) {
        EXPECT_TRUE(signature[*r.label].count(word)) << word << " in " << r.id;
        word.clear();
      }
    }
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  auto spec = SyntheticSpec::breast_default(21);
  spec.reports_per_class = 30;
  const auto a = serialize_reports(generate_synthetic(spec), CorpusFormat::jsonl);
  const auto b = serialize_reports(generate_synthetic(spec), CorpusFormat::jsonl);
  EXPECT_EQ(a, b);
  spec.seed = 22;
  EXPECT_NE(serialize_reports(generate_synthetic(spec), CorpusFormat::jsonl), a);
}

TEST(Synthetic, DefaultShape) {
  const auto reports = generate_synthetic(SyntheticSpec::breast_default(1));
  EXPECT_EQ(reports.size(), 2200u);
  for (const auto& [code, n] : count_labels(reports)) EXPECT_EQ(n, 275u) << code;
}

TEST(Synthetic, ValidationErrors) {
  auto spec = SyntheticSpec::breast_default(1);
  spec.shared_vocabulary.clear();
  EXPECT_THROW(generate_synthetic(spec), ContractError);
  spec = SyntheticSpec::breast_default(1);
  spec.classes[0].signature.clear();
  EXPECT_THROW(generate_synthetic(spec), ContractError);
  spec = SyntheticSpec::breast_default(1);
  spec.confusable_pairs[0].overlap = 1.5;
  EXPECT_THROW(spec.validate(), ContractError);
  spec = SyntheticSpec::breast_default(1);
  spec.classes[2].strength = -0.1;
  EXPECT_THROW(spec.validate(), ContractError);
  spec = SyntheticSpec::breast_default(1);
  spec.reports_per_class = 0;
  EXPECT_THROW(spec.validate(), ContractError);
}
