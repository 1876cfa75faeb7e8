#pragma once

// Symptom normalization: tokenization, one-level synonym expansion and
// single-link Jaccard merging of raw symptom strings into canonical ones.

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "medmin/corpus.hpp"
#include "medmin/text.hpp"

namespace medmin {

class NormalizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// English function words dropped by tokenize(). Negations are kept on purpose:
// "no fever" and "fever" must not collapse.
inline constexpr std::array<std::string_view, 52> kStopwords = {
    "a",     "about", "after", "also",  "an",    "and",   "are",   "as",    "at",
    "be",    "been",  "before", "but",  "by",    "can",   "do",    "does",  "during",
    "for",   "from",  "had",   "has",   "have",  "her",   "his",   "in",    "into",
    "is",    "it",    "its",   "may",   "of",    "on",    "or",    "other", "over",
    "some",  "such",  "than",  "that",  "the",   "their", "then",  "there", "these",
    "this",  "those", "to",    "under", "was",   "were",  "with"};

inline bool is_stopword(std::string_view token) {
  return std::binary_search(kStopwords.begin(), kStopwords.end(), token);
}

/// Lowercases, splits on runs of ASCII non-alphanumerics and drops stopwords.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !is_stopword(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char c : s) {
    if (text::is_alnum(c) || static_cast<unsigned char>(c) >= 0x80)
      cur.push_back(text::to_lower(c));
    else
      flush();
  }
  flush();
  return out;
}

/// Token -> synonym tokens. A token never lists itself.
class SynonymLexicon {
 public:
  void add(const std::string& token, const std::string& synonym, const std::string& source = {}) {
    if (token.empty() || synonym.empty() || token == synonym) return;
    entries_[token].insert(synonym);
    if (!source.empty()) sources_[token].insert(source);
  }

  const TokenSet* find(const std::string& token) const {
    auto it = entries_.find(token);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, TokenSet>& entries() const { return entries_; }
  const std::map<std::string, std::set<std::string>>& sources() const { return sources_; }
  std::size_t size() const { return entries_.size(); }

  /// Parses "token: syn1, syn2" lines into this lexicon (set union per token).
  /// Multi-word synonyms contribute each of their tokens.
  void merge_text(std::string_view content, const std::string& source) {
    std::size_t line_no = 0;
    for (const auto& raw_line : text::split(content, '\n')) {
      ++line_no;
      auto line = text::trim_view(raw_line);
      if (line.empty() || line.front() == '#') continue;
      auto colon = line.find(':');
      if (colon == std::string_view::npos)
        throw NormalizerError(source + ":" + std::to_string(line_no) + ": expected 'token: synonyms'");
      auto head = tokenize(line.substr(0, colon));
      if (head.size() != 1)
        throw NormalizerError(source + ":" + std::to_string(line_no) +
                              ": entry head must be a single token");
      for (const auto& syn : text::split(line.substr(colon + 1), ','))
        for (const auto& tok : tokenize(syn)) add(head.front(), tok, source);
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NormalizerError("cannot read lexicon file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    merge_text(content, path);
  }

 private:
  std::map<std::string, TokenSet> entries_;
  std::map<std::string, std::set<std::string>> sources_;
};

inline SynonymLexicon load_lexicons(const std::vector<std::string>& paths) {
  SynonymLexicon lex;
  for (const auto& p : paths) lex.merge_file(p);
  return lex;
}

/// set(tokens) plus the direct synonyms of each token. No transitive closure.
inline TokenSet expand_tokens(const std::vector<std::string>& tokens, const SynonymLexicon& lexicon) {
  TokenSet out(tokens.begin(), tokens.end());
  for (const auto& t : tokens)
    if (const auto* syns = lexicon.find(t)) out.insert(syns->begin(), syns->end());
  return out;
}

/// |a ∩ b| / |a ∪ b|; two empty sets count as identical (1.0).
inline double jaccard(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline RawSymptom make_raw_symptom(std::string text, const SynonymLexicon& lexicon) {
  RawSymptom r;
  r.tokens = tokenize(text);
  r.expanded_tokens = expand_tokens(r.tokens, lexicon);
  r.text = std::move(text);
  return r;
}

namespace detail {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Shorter text wins, then the lexicographically smaller one.
inline bool better_representative(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace detail

/// Single-link clustering: two raw symptoms share a cluster when their
/// expanded token sets reach `threshold` Jaccard similarity (transitively).
/// Canonical ids follow the sorted representative texts.
inline SymptomVocabulary merge_symptoms(const std::vector<RawSymptom>& raw, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw NormalizerError("merge threshold must be in (0,1], got " + std::to_string(threshold));

  const std::size_t n = raw.size();
  detail::DisjointSets sets(n);

  // Any pair with positive similarity shares a token; empty sets only match each other.
  std::map<std::string, std::vector<std::size_t>> by_token;
  std::vector<std::size_t> empties;
  for (std::size_t i = 0; i < n; ++i) {
    if (raw[i].expanded_tokens.empty()) empties.push_back(i);
    for (const auto& t : raw[i].expanded_tokens) by_token[t].push_back(i);
  }
  for (std::size_t k = 1; k < empties.size(); ++k) sets.unite(empties[0], empties[k]);

  std::set<std::pair<std::size_t, std::size_t>> checked;
  for (const auto& [tok, members] : by_token) {
    for (std::size_t x = 0; x < members.size(); ++x) {
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        const auto i = members[x], j = members[y];
        if (sets.find(i) == sets.find(j)) continue;
        if (!checked.emplace(i, j).second) continue;
        if (jaccard(raw[i].expanded_tokens, raw[j].expanded_tokens) >= threshold) sets.unite(i, j);
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters[sets.find(i)].push_back(i);

  struct Cluster {
    std::size_t rep;
    std::vector<std::size_t> members;
  };
  std::vector<Cluster> ordered;
  for (auto& [root, members] : clusters) {
    std::size_t rep = members.front();
    for (auto m : members)
      if (detail::better_representative(raw[m].text, raw[rep].text)) rep = m;
    ordered.push_back({rep, std::move(members)});
  }
  std::sort(ordered.begin(), ordered.end(), [&](const Cluster& a, const Cluster& b) {
    return raw[a.rep].text < raw[b.rep].text;
  });

  std::vector<CanonicalSymptom> canonical;
  std::map<std::string, SymptomId> mapping;
  for (std::size_t c = 0; c < ordered.size(); ++c) {
    CanonicalSymptom entry;
    entry.id = SymptomId{static_cast<std::uint32_t>(c)};
    entry.text = raw[ordered[c].rep].text;
    entry.expanded = raw[ordered[c].rep].expanded_tokens;
    for (auto m : ordered[c].members) {
      entry.member_tokens.insert(raw[m].expanded_tokens.begin(), raw[m].expanded_tokens.end());
      mapping[raw[m].text] = entry.id;
    }
    canonical.push_back(std::move(entry));
  }
  return SymptomVocabulary(std::move(canonical), std::move(mapping), threshold);
}

/// Bundles the lexicon with the tokenizer so callers expand text the same way
/// the vocabulary was built.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(SynonymLexicon lexicon) : lexicon_(std::move(lexicon)) {}

  const SynonymLexicon& lexicon() const { return lexicon_; }
  TokenSet expand(std::string_view s) const { return expand_tokens(tokenize(s), lexicon_); }
  RawSymptom raw(std::string s) const { return make_raw_symptom(std::move(s), lexicon_); }

 private:
  SynonymLexicon lexicon_;
};

}  // namespace medmin
