// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <unordered_map>

#include "hierpath/corpus.hpp"
#include "hierpath/error.hpp"
#include "hierpath/rng.hpp"

namespace hierpath {

std::vector<std::string> pathology_shared_vocabulary() {
  return {
      "specimen",    "received",    "formalin",    "labelled",     "breast",      "tissue",
      "fibrofatty",  "lesion",      "tumour",      "carcinoma",    "invasive",    "ductal",
      "lobular",     "grade",       "nuclear",     "pleomorphism", "mitotic",     "count",
      "tubule",      "formation",   "margin",      "margins",      "clear",       "involved",
      "lymph",       "node",        "nodes",       "axillary",     "sentinel",    "metastatic",
      "deposit",     "extranodal",  "extension",   "lymphovascular", "invasion",  "perineural",
      "calcification", "necrosis",  "situ",        "cribriform",   "solid",       "comedo",
      "pattern",     "receptor",    "oestrogen",   "progesterone", "positive",    "negative",
      "immunohistochemistry", "staining", "score", "allred",      "proportion",  "intensity",
      "microscopy",  "macroscopy",  "section",     "sections",     "representative", "cassette",
      "blocks",      "skin",        "ellipse",     "mastectomy",   "excision",    "wide",
      "local",       "biopsy",      "core",        "needle",       "stroma",      "desmoplastic",
      "fibrosis",    "benign",      "malignant",   "cells",        "cytoplasm",   "nuclei",
      "nucleoli",    "prominent",   "hyperchromatic", "atypia",    "epithelial",  "myoepithelial",
      "layer",       "absent",      "present",     "identified",   "seen",        "noted",
      "measuring",   "diameter",    "maximum",     "distance",     "closest",     "deep",
      "superficial", "diagnosis",   "clinical",    "history",      "lump",        "palpable",
      "mass",        "patient",     "female",      "years",        "referral",    "histology",
      "features",    "consistent",  "suggestive",  "opinion",      "comment",     "additional",
      "fragments",   "cores",       "haematoxylin", "eosin",       "slides",      "reviewed",
      "pathologist", "surgical",    "resection",   "specimens",    "orientated",  "sutures",
      "inked",       "painted",     "sliced",      "serially",     "firm",        "white",
      "cut",         "surface",     "ill",         "defined",      "stellate",    "scar",
      "cyst",        "duct",        "ducts",       "ectasia",      "hyperplasia", "usual",
      "columnar",    "change",      "apocrine",    "metaplasia",   "sclerosing",  "adenosis",
      "focal",       "multifocal",  "residual",    "response",     "chemotherapy", "treatment",
  };
}

std::vector<std::string> pseudo_words(std::size_t count, std::uint64_t seed,
                                      std::span<const std::string> avoid) {
  static constexpr const char* kOnsets[] = {"b",  "c",  "d",  "f",  "g",  "k",  "l",  "m",
                                            "n",  "p",  "r",  "s",  "t",  "v",  "z",  "br",
                                            "tr", "st", "pl", "gr", "ch", "th", "sl", "dr"};
  static constexpr const char* kNuclei[] = {"a", "e", "i", "o", "u", "ea", "io", "ou", "ai"};
  static constexpr const char* kCodas[] = {"", "", "", "n", "r", "s", "l", "x", "m"};
  std::set<std::string> taken(avoid.begin(), avoid.end());
  std::vector<std::string> words;
  Rng rng(seed);
  while (words.size() < count) {
    std::string w;
    const auto syllables = 2 + rng.below(2);
    for (std::uint64_t s = 0; s < syllables; ++s) {
      w += kOnsets[rng.below(std::size(kOnsets))];
      w += kNuclei[rng.below(std::size(kNuclei))];
    }
    w += kCodas[rng.below(std::size(kCodas))];
    if (taken.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

SyntheticSpec SyntheticSpec::breast_default(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.shared_vocabulary = pathology_shared_vocabulary();
  const std::vector<std::string> codes = {"C50.0", "C50.1", "C50.2", "C50.3",
                                          "C50.4", "C50.5", "C50.8", "C50.9"};
  // Fixed word-list seed: the vocabulary is part of the default spec, not of the draw.
  const auto words = pseudo_words(12 * codes.size(), 0x70A7401067ULL, spec.shared_vocabulary);
  for (std::size_t c = 0; c < codes.size(); ++c) {
    spec.classes.push_back(
        {codes[c], std::vector<std::string>(words.begin() + 12 * c, words.begin() + 12 * (c + 1)),
         0.3});
  }
  spec.confusable_pairs.push_back({"C50.8", "C50.9", 0.5});
  spec.seed = seed;
  return spec;
}

void SyntheticSpec::validate() const {
  if (classes.empty()) throw ContractError("synthetic spec has no classes");
  std::set<std::string> codes;
  for (const auto& c : classes) {
    if (!is_valid_code(c.code)) throw ContractError("invalid ICD-O code '" + c.code + "'");
    if (!codes.insert(c.code).second) throw ContractError("duplicate class code " + c.code);
    if (c.signature.empty()) throw ContractError("class " + c.code + " has an empty signature vocabulary");
    if (!(c.strength >= 0.0 && c.strength <= 1.0))
      throw ContractError("signature strength of " + c.code + " must lie in [0,1]");
  }
  if (shared_vocabulary.empty()) throw ContractError("shared vocabulary is empty");
  if (reports_per_class < 1) throw ContractError("reports_per_class must be at least 1");
  if (tokens_min < 1 || tokens_min > tokens_max)
    throw ContractError("token range must satisfy 1 <= tokens_min <= tokens_max");
  if (!(partner_share >= 0.0 && partner_share <= 1.0))
    throw ContractError("partner_share must lie in [0,1]");
  if (!(numeric_rate >= 0.0 && numeric_rate < 1.0))
    throw ContractError("numeric_rate must lie in [0,1)");
  for (const auto& p : confusable_pairs) {
    if (!codes.count(p.first) || !codes.count(p.second) || p.first == p.second)
      throw ContractError("confusable pair " + p.first + "/" + p.second + " must name two distinct classes");
    if (!(p.overlap >= 0.0 && p.overlap <= 1.0))
      throw ContractError("overlap fraction must lie in [0,1]");
  }
}

namespace {

std::string numeric_filler(Rng& rng) {
  char buf[32];
  const auto a = static_cast<unsigned>(1 + rng.below(60));
  const auto b = static_cast<unsigned>(rng.below(10));
  switch (rng.below(4)) {
    case 0: std::snprintf(buf, sizeof buf, "%umm", a); break;
    case 1: std::snprintf(buf, sizeof buf, "%u.%ucm", a, b); break;
    case 2: std::snprintf(buf, sizeof buf, "%u/%u", b, a); break;
    default: std::snprintf(buf, sizeof buf, "%u", a); break;
  }
  return buf;
}

std::string render(const std::vector<const std::string*>& tokens, double numeric_rate, Rng& rng) {
  std::string text;
  std::size_t in_sentence = 0;
  std::size_t sentence_len = 5 + rng.below(8);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!text.empty()) text += ' ';
    if (numeric_rate > 0.0 && rng.bernoulli(numeric_rate)) {
      text += numeric_filler(rng);
      text += ' ';
    }
    std::string word = *tokens[i];
    if (in_sentence == 0 && !word.empty() && word[0] >= 'a' && word[0] <= 'z')
      word[0] = static_cast<char>(word[0] - 'a' + 'A');
    text += word;
    ++in_sentence;
    const bool last = i + 1 == tokens.size();
    if (last || in_sentence == sentence_len) {
      text += '.';
      in_sentence = 0;
      sentence_len = 5 + rng.below(8);
    } else if (rng.bernoulli(0.08)) {
      text += ',';
    }
  }
  return text;
}

}  // namespace

std::vector<Report> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::unordered_map<std::string, std::size_t> class_of;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) class_of[spec.classes[c].code] = c;

  const std::size_t n = spec.reports_per_class;
  // partners[c][i]: classes whose signatures report i of class c also draws from.
  std::vector<std::vector<std::vector<std::size_t>>> partners(
      spec.classes.size(), std::vector<std::vector<std::size_t>>(n));
  for (const auto& pair : spec.confusable_pairs) {
    const auto a = class_of.at(pair.first);
    const auto b = class_of.at(pair.second);
    const auto m = static_cast<std::size_t>(std::llround(pair.overlap * static_cast<double>(n)));
    for (auto [self, other] : {std::pair{a, b}, std::pair{b, a}}) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      shuffle(std::span<std::size_t>(order), rng);
      for (std::size_t i = 0; i < m; ++i) partners[self][order[i]].push_back(other);
    }
  }

  std::vector<Report> reports;
  reports.reserve(n * spec.classes.size());
  const auto span = spec.tokens_max - spec.tokens_min + 1;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& cls = spec.classes[c];
    for (std::size_t i = 0; i < n; ++i) {
      const auto len = spec.tokens_min + rng.below(span);
      std::vector<const std::string*> tokens;
      tokens.reserve(len);
      for (std::size_t t = 0; t < len; ++t) {
        if (rng.bernoulli(cls.strength)) {
          const auto* source = &cls.signature;
          const auto& mine = partners[c][i];
          if (!mine.empty() && rng.bernoulli(spec.partner_share))
            source = &spec.classes[mine[rng.below(mine.size())]].signature;
          tokens.push_back(&(*source)[rng.below(source->size())]);
        } else {
          tokens.push_back(&spec.shared_vocabulary[rng.below(spec.shared_vocabulary.size())]);
        }
      }
      reports.push_back({"", render(tokens, spec.numeric_rate, rng), cls.code});
    }
  }
  shuffle(std::span<Report>(reports), rng);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    char id[24];
    std::snprintf(id, sizeof id, "rpt-%05zu", i + 1);
    reports[i].id = id;
  }
  return reports;
}

}  // namespace hierpath
