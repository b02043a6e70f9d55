// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hierpath {

inline constexpr int kPadIndex = 0;
inline constexpr int kUnknownIndex = 1;
inline constexpr int kFirstTokenIndex = 2;

/// Cleaning and encoding settings. Stopwords and the Afrikaans word list are
/// matched against lowercased tokens, so they must be lowercase themselves.
struct PrepConfig {
  std::unordered_set<std::string> stopwords;
  std::size_t top_k = 1400;
  std::size_t max_len = 400;
  std::unordered_set<std::string> afrikaans_wordlist;
  double afrikaans_ratio_threshold = 0.8;
  bool afrikaans_filter_enabled = false;

  /// Built-in English stopwords and Afrikaans function words.
  static PrepConfig defaults();
  void validate() const;
};

std::vector<std::string> default_stopwords();
std::vector<std::string> default_afrikaans_wordlist();

/// Whitespace chunks containing a digit are dropped; the rest is split into
/// runs of letters, lowercased, and filtered against the stopword list.
std::vector<std::string> tokenize(std::string_view text, const PrepConfig& config);

/// True when at least `afrikaans_ratio_threshold` of the tokens are listed
/// Afrikaans words. Empty input is never Afrikaans-only.
bool detect_afrikaans_only(std::span<const std::string> tokens, const PrepConfig& config);

struct VocabEntry {
  std::string token;
  int index = 0;
  double idf = 0.0;

  bool operator==(const VocabEntry&) const = default;
};

/// Top-K TF-IDF vocabulary. Index 0 is padding, 1 is unknown, tokens start at 2.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<VocabEntry> entries, std::size_t top_k, std::size_t fitted_on);

  const std::vector<VocabEntry>& entries() const { return entries_; }
  std::size_t top_k() const { return top_k_; }
  std::size_t fitted_on() const { return fitted_on_; }
  /// Embedding rows needed: entries plus the two reserved indices.
  std::size_t table_size() const { return entries_.size() + kFirstTokenIndex; }
  std::optional<int> index_of(std::string_view token) const;
  bool contains(std::string_view token) const { return index_of(token).has_value(); }

  /// Line-oriented text form: `#top_k=`, `#idf=smooth-ln`, `#fitted_on=` headers
  /// then `token<TAB>index<TAB>idf` sorted by index.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  std::uint64_t digest() const;

  bool operator==(const Vocabulary& other) const { return entries_ == other.entries_; }

 private:
  std::vector<VocabEntry> entries_;
  std::size_t top_k_ = 0;
  std::size_t fitted_on_ = 0;
  std::unordered_map<std::string, int> lookup_;
};

/// Smoothed inverse document frequency ln((1+N)/(1+df)) + 1.
double smooth_idf(std::size_t num_docs, std::size_t doc_freq);

/// Scores every token by its maximum raw-count tf * smoothed idf over the
/// documents and keeps the top_k, ties broken lexicographically.
Vocabulary fit_tfidf(std::span<const std::vector<std::string>> documents, std::size_t top_k);

std::vector<std::string> filter_by_vocab(std::span<const std::string> tokens, const Vocabulary& vocab);

/// Maps tokens to indices (unknown -> 1), right-pads with 0 or truncates to max_len.
std::vector<int> encode(std::span<const std::string> tokens, const Vocabulary& vocab,
                        std::size_t max_len);

struct EncodedReport {
  std::string id;
  std::vector<int> indices;
  std::optional<std::size_t> label_index;
};

}  // namespace hierpath
