// SPDX-License-Identifier: Apache-2.0
#include "hierpath/textprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "hierpath/digest.hpp"
#include "hierpath/error.hpp"

namespace hierpath {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

// Decodes one UTF-8 sequence starting at s[i]; invalid bytes become U+FFFD.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i++]);
  if (b0 < 0x80) return b0;
  int extra = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) { extra = 1; cp = b0 & 0x1F; }
  else if ((b0 & 0xF0) == 0xE0) { extra = 2; cp = b0 & 0x0F; }
  else if ((b0 & 0xF8) == 0xF0) { extra = 3; cp = b0 & 0x07; }
  else return kReplacement;
  for (int k = 0; k < extra; ++k) {
    if (i >= s.size() || (static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) return kReplacement;
    cp = (cp << 6) | (static_cast<unsigned char>(s[i++]) & 0x3F);
  }
  return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

bool is_space(char32_t c) {
  return c == ' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

bool is_digit(char32_t c) {
  return (c >= '0' && c <= '9') || (c >= 0x0660 && c <= 0x0669) || (c >= 0x06F0 && c <= 0x06F9) ||
         (c >= 0x0966 && c <= 0x096F) || (c >= 0xFF10 && c <= 0xFF19);
}

// Alphabetic scripts likely in clinical text; everything else separates tokens.
bool is_letter(char32_t c) {
  if (c < 0x80) return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
  if (c == 0xAA || c == 0xB5 || c == 0xBA) return true;
  if (c >= 0xC0 && c <= 0x24F) return c != 0xD7 && c != 0xF7;
  if (c >= 0x250 && c <= 0x2AF) return true;                      // IPA
  if (c >= 0x370 && c <= 0x3FF) return c != 0x37E && c != 0x387;  // Greek
  if (c >= 0x400 && c <= 0x52F) return !(c >= 0x482 && c <= 0x489);
  if (c >= 0x5D0 && c <= 0x5EA) return true;                      // Hebrew
  if (c >= 0x620 && c <= 0x64A) return true;                      // Arabic
  if (c >= 0x1E00 && c <= 0x1EFF) return true;                    // Latin extended additional
  if (c >= 0x3040 && c <= 0x30FF) return c != 0x30FB;             // kana
  if (c >= 0x4E00 && c <= 0x9FFF) return true;                    // CJK ideographs
  if (c >= 0xAC00 && c <= 0xD7A3) return true;                    // Hangul
  return false;
}

char32_t to_lower(char32_t c) {
  if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 32 : c;
  if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 32;
  if (c >= 0x100 && c <= 0x137) return c | 1;
  if (c >= 0x139 && c <= 0x148) return (c & 1) ? c + 1 : c;
  if (c >= 0x14A && c <= 0x177) return c | 1;
  if (c == 0x178) return 0xFF;
  if (c >= 0x179 && c <= 0x17E) return (c & 1) ? c + 1 : c;
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  if (c >= 0x1E00 && c <= 0x1E95) return c | 1;
  if (c >= 0x1EA0 && c <= 0x1EFF) return c | 1;
  return c;
}

}  // namespace

std::vector<std::string> default_stopwords() {
  return {"a",       "about",  "above",   "after",   "again",  "against", "all",     "am",
          "an",      "and",    "any",     "are",     "as",     "at",      "be",      "because",
          "been",    "before", "being",   "below",   "between", "both",   "but",     "by",
          "can",     "could",  "did",     "do",      "does",   "doing",   "down",    "during",
          "each",    "few",    "for",     "from",    "further", "had",    "has",     "have",
          "having",  "he",     "her",     "here",    "hers",   "herself", "him",     "himself",
          "his",     "how",    "i",       "if",      "in",     "into",    "is",      "it",
          "its",     "itself", "just",    "me",      "more",   "most",    "my",      "myself",
          "no",      "nor",    "not",     "now",     "of",     "off",     "on",      "once",
          "only",    "or",     "other",   "our",     "ours",   "ourselves", "out",   "over",
          "own",     "same",   "she",     "should",  "so",     "some",    "such",    "than",
          "that",    "the",    "their",   "theirs",  "them",   "themselves", "then", "there",
          "these",   "they",   "this",    "those",   "through", "to",     "too",     "under",
          "until",   "up",     "very",    "was",     "we",     "were",    "what",    "when",
          "where",   "which",  "while",   "who",     "whom",   "why",     "will",    "with",
          "would",   "you",    "your",    "yours",   "yourself", "yourselves", "also", "per",
          "x",       "cm",     "mm"};
}

std::vector<std::string> default_afrikaans_wordlist() {
  return {"die",      "en",        "van",      "het",      "nie",     "met",     "op",
          "vir",      "wat",       "te",       "word",     "sy",      "hy",      "ons",
          "hulle",    "aan",       "om",       "uit",      "ook",     "maar",    "tot",
          "na",       "daar",      "hierdie",  "sal",      "moet",    "geen",    "n",
          "linker",   "regter",    "bors",     "borsweefsel", "weefsel", "kliere", "klier",
          "karsinoom", "gradering", "monster", "ontvang",  "duktale", "indringende", "snit",
          "rand",     "rande",     "gewys",    "gesien",   "teenwoordig", "afwesig", "geen",
          "kern",     "naald",     "biopsie",  "tumor",    "letsel",  "mastektomie", "okselklier",
          "limfklier", "selle",    "kwadrant", "boonste",  "onderste", "buitenste", "binneste",
          "tepel",    "verslag",   "diagnose", "kommentaar", "mikroskopie", "makroskopie",
          "is",       "was",       "by",       "in",       "as",      "kan",     "baie"};
}

PrepConfig PrepConfig::defaults() {
  PrepConfig c;
  for (auto& w : default_stopwords()) c.stopwords.insert(std::move(w));
  for (auto& w : default_afrikaans_wordlist()) c.afrikaans_wordlist.insert(std::move(w));
  return c;
}

void PrepConfig::validate() const {
  if (top_k < 1) throw ContractError("top_k must be at least 1");
  if (max_len < 1) throw ContractError("max_len must be at least 1");
  if (!(afrikaans_ratio_threshold >= 0.0 && afrikaans_ratio_threshold <= 1.0))
    throw ContractError("afrikaans_ratio_threshold must lie in [0,1]");
}

std::vector<std::string> tokenize(std::string_view text, const PrepConfig& config) {
  std::vector<std::string> tokens;
  std::vector<char32_t> chunk;
  auto flush = [&] {
    const bool has_digit = std::any_of(chunk.begin(), chunk.end(), is_digit);
    if (!has_digit) {
      std::string token;
      auto emit = [&] {
        if (!token.empty() && !config.stopwords.count(token)) tokens.push_back(token);
        token.clear();
      };
      for (char32_t c : chunk) {
        if (is_letter(c)) encode_utf8(to_lower(c), token);
        else emit();
      }
      emit();
    }
    chunk.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t c = decode_utf8(text, i);
    if (is_space(c)) flush();
    else chunk.push_back(c);
  }
  flush();
  return tokens;
}

bool detect_afrikaans_only(std::span<const std::string> tokens, const PrepConfig& config) {
  if (tokens.empty()) return false;
  const auto hits = std::count_if(tokens.begin(), tokens.end(), [&](const std::string& t) {
    return config.afrikaans_wordlist.count(t) > 0;
  });
  return static_cast<double>(hits) / static_cast<double>(tokens.size()) >=
         config.afrikaans_ratio_threshold;
}

Vocabulary::Vocabulary(std::vector<VocabEntry> entries, std::size_t top_k, std::size_t fitted_on)
    : entries_(std::move(entries)), top_k_(top_k), fitted_on_(fitted_on) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.index != static_cast<int>(i) + kFirstTokenIndex)
      throw ContractError("vocabulary indices must be contiguous from 2 (token '" + e.token + "')");
    if (!(e.idf >= 0.0)) throw ContractError("negative idf for token '" + e.token + "'");
    if (!lookup_.emplace(e.token, e.index).second)
      throw ContractError("duplicate vocabulary token '" + e.token + "'");
  }
}

std::optional<int> Vocabulary::index_of(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::serialize() const {
  std::string out = "#top_k=" + std::to_string(top_k_) + "\n#idf=smooth-ln\n#fitted_on=" +
                    std::to_string(fitted_on_) + "\n";
  char buf[40];
  for (const auto& e : entries_) {
    std::snprintf(buf, sizeof buf, "%.17g", e.idf);
    out += e.token + '\t' + std::to_string(e.index) + '\t' + buf + '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t top_k = 0, fitted_on = 0, line_no = 0;
  std::vector<VocabEntry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      const auto key = line.substr(1, eq == std::string::npos ? std::string::npos : eq - 1);
      const auto value = eq == std::string::npos ? std::string() : line.substr(eq + 1);
      if (key == "top_k") top_k = std::stoul(value);
      else if (key == "fitted_on") fitted_on = std::stoul(value);
      else if (key == "idf" && value != "smooth-ln")
        throw ContractError("unsupported idf variant '" + value + "'");
      continue;
    }
    std::istringstream fields(line);
    VocabEntry e;
    std::string idx, idf;
    if (!std::getline(fields, e.token, '\t') || !std::getline(fields, idx, '\t') ||
        !std::getline(fields, idf))
      throw ContractError("vocabulary line " + std::to_string(line_no) + " is malformed");
    try {
      e.index = std::stoi(idx);
      e.idf = std::stod(idf);
    } catch (const std::exception&) {
      throw ContractError("vocabulary line " + std::to_string(line_no) + " is malformed");
    }
    entries.push_back(std::move(e));
  }
  return Vocabulary(std::move(entries), top_k, fitted_on);
}

std::uint64_t Vocabulary::digest() const { return fnv1a(serialize()); }

double smooth_idf(std::size_t num_docs, std::size_t doc_freq) {
  return std::log((1.0 + static_cast<double>(num_docs)) / (1.0 + static_cast<double>(doc_freq))) + 1.0;
}

Vocabulary fit_tfidf(std::span<const std::vector<std::string>> documents, std::size_t top_k) {
  if (top_k < 1) throw ContractError("top_k must be at least 1");
  struct Stats {
    std::size_t df = 0;
    std::size_t max_tf = 0;
  };
  // Max tf-idf over documents equals idf * max tf because idf is per token.
  std::map<std::string, Stats> stats;
  std::map<std::string_view, std::size_t> tf;
  for (const auto& doc : documents) {
    tf.clear();
    for (const auto& t : doc) ++tf[t];
    for (const auto& [token, count] : tf) {
      auto& s = stats[std::string(token)];
      ++s.df;
      s.max_tf = std::max(s.max_tf, count);
    }
  }
  if (stats.empty()) throw ContractError("cannot fit a vocabulary: every document is empty");
  struct Scored {
    const std::string* token;
    double score;
    double idf;
  };
  std::vector<Scored> scored;
  scored.reserve(stats.size());
  for (const auto& [token, s] : stats) {
    const double idf = smooth_idf(documents.size(), s.df);
    scored.push_back({&token, static_cast<double>(s.max_tf) * idf, idf});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });
  scored.resize(std::min(scored.size(), top_k));
  std::vector<VocabEntry> entries;
  entries.reserve(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i)
    entries.push_back({*scored[i].token, static_cast<int>(i) + kFirstTokenIndex, scored[i].idf});
  return Vocabulary(std::move(entries), top_k, documents.size());
}

std::vector<std::string> filter_by_vocab(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (vocab.contains(t)) out.push_back(t);
  return out;
}

std::vector<int> encode(std::span<const std::string> tokens, const Vocabulary& vocab,
                        std::size_t max_len) {
  std::vector<int> out(max_len, kPadIndex);
  const auto n = std::min(max_len, tokens.size());
  for (std::size_t i = 0; i < n; ++i) out[i] = vocab.index_of(tokens[i]).value_or(kUnknownIndex);
  return out;
}

}  // namespace hierpath
