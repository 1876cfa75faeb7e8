#pragma once

// Shared data model: diseases, symptoms, the canonical vocabulary and the
// inverted index the rankers score against. Everything here is immutable
// once built and may be read from many threads.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medmin/text.hpp"

namespace medmin {

struct DiseaseId {
  std::uint32_t value = 0;
  auto operator<=>(const DiseaseId&) const = default;
};

struct SymptomId {
  std::uint32_t value = 0;
  auto operator<=>(const SymptomId&) const = default;
};

using TokenSet = std::set<std::string>;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SourceKind { ScrapedNhp, Predefined, Fixture };

inline std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::ScrapedNhp: return "scraped-nhp";
    case SourceKind::Predefined: return "predefined";
    case SourceKind::Fixture: return "fixture";
  }
  return "fixture";
}

inline SourceKind parse_source_kind(std::string_view s) {
  if (s == "scraped-nhp") return SourceKind::ScrapedNhp;
  if (s == "predefined") return SourceKind::Predefined;
  if (s == "fixture") return SourceKind::Fixture;
  throw CorpusError("unknown source kind '" + std::string(s) + "'");
}

struct Source {
  SourceKind kind = SourceKind::Fixture;
  std::string url;
  bool operator==(const Source&) const = default;
};

struct DiseaseRecord {
  DiseaseId id;
  std::string name;
  std::vector<std::string> raw_symptoms;
  std::set<SymptomId> canonical_symptoms;
  std::string description;
  std::string treatment;
  Source source;
  bool operator==(const DiseaseRecord&) const = default;
};

/// One scraped symptom string after tokenization and synonym expansion.
struct RawSymptom {
  std::string text;
  std::vector<std::string> tokens;
  TokenSet expanded_tokens;
};

struct CanonicalSymptom {
  SymptomId id;
  std::string text;
  // Expanded tokens of the representative. Matching and merge-stability use this.
  TokenSet expanded;
  // Union of the expanded tokens of every merged member.
  TokenSet member_tokens;
};

class SymptomVocabulary {
 public:
  SymptomVocabulary() = default;

  /// `canonical` ids must equal their positions. Throws CorpusError when a
  /// mapping target is missing or two representatives share a text.
  SymptomVocabulary(std::vector<CanonicalSymptom> canonical,
                    std::map<std::string, SymptomId> raw_to_canonical, double merge_threshold)
      : canonical_(std::move(canonical)),
        raw_to_canonical_(std::move(raw_to_canonical)),
        merge_threshold_(merge_threshold) {
    if (!(merge_threshold_ > 0.0 && merge_threshold_ <= 1.0))
      throw CorpusError("merge threshold must be in (0,1]");
    for (std::size_t i = 0; i < canonical_.size(); ++i) {
      if (canonical_[i].id.value != i)
        throw CorpusError("canonical symptom ids must be dense and ordered");
      if (!by_text_.emplace(canonical_[i].text, canonical_[i].id).second)
        throw CorpusError("duplicate canonical symptom '" + canonical_[i].text + "'");
    }
    for (const auto& [raw, id] : raw_to_canonical_)
      if (!contains(id)) throw CorpusError("raw symptom '" + raw + "' maps to unknown id");
  }

  std::size_t size() const { return canonical_.size(); }
  bool empty() const { return canonical_.empty(); }
  bool contains(SymptomId id) const { return id.value < canonical_.size(); }
  double merge_threshold() const { return merge_threshold_; }

  const std::vector<CanonicalSymptom>& entries() const { return canonical_; }
  const std::map<std::string, SymptomId>& raw_to_canonical() const { return raw_to_canonical_; }

  const CanonicalSymptom& at(SymptomId id) const {
    if (!contains(id)) throw CorpusError("unknown symptom id " + std::to_string(id.value));
    return canonical_[id.value];
  }

  std::optional<SymptomId> find_text(std::string_view representative) const {
    auto it = by_text_.find(std::string(representative));
    if (it == by_text_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<SymptomId> canonical_of(std::string_view raw) const {
    auto it = raw_to_canonical_.find(std::string(raw));
    if (it == raw_to_canonical_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<CanonicalSymptom> canonical_;
  std::map<std::string, SymptomId> raw_to_canonical_;
  std::map<std::string, SymptomId> by_text_;
  double merge_threshold_ = 0.75;
};

struct Violation {
  std::string code;
  std::string detail;
  bool operator==(const Violation&) const = default;
};

/// Collects every invariant violation of `record` against `vocab`.
inline std::vector<Violation> validate_record(const DiseaseRecord& record,
                                              const SymptomVocabulary& vocab) {
  std::vector<Violation> out;
  if (text::trim_view(record.name).empty()) out.push_back({"empty name", "disease name is blank"});
  for (auto id : record.canonical_symptoms)
    if (!vocab.contains(id))
      out.push_back({"dangling symptom id", "symptom id " + std::to_string(id.value) +
                                                " is not in the vocabulary"});
  return out;
}

/// Inverted index over canonical symptoms; one disease is one document.
class CorpusIndex {
 public:
  using Postings = std::map<SymptomId, std::set<DiseaseId>>;

  std::size_t N() const { return names_.size(); }
  double avg_doc_len() const { return avg_doc_len_; }
  const Postings& postings() const { return postings_; }

  bool has_disease(DiseaseId d) const { return names_.count(d) != 0; }
  bool has_term(SymptomId t) const { return postings_.count(t) != 0; }

  std::size_t df(SymptomId t) const {
    auto it = postings_.find(t);
    return it == postings_.end() ? 0 : it->second.size();
  }

  std::uint32_t tf(DiseaseId d, SymptomId t) const {
    auto it = tf_.find({d, t});
    return it == tf_.end() ? 0 : it->second;
  }

  /// Terms of `d` in ascending id order. Throws for an unknown disease.
  const std::vector<SymptomId>& terms(DiseaseId d) const {
    auto it = terms_.find(d);
    if (it == terms_.end()) throw CorpusError("unknown disease id " + std::to_string(d.value));
    return it->second;
  }

  std::size_t doc_len(DiseaseId d) const { return terms(d).size(); }

  const std::string& name(DiseaseId d) const {
    auto it = names_.find(d);
    if (it == names_.end()) throw CorpusError("unknown disease id " + std::to_string(d.value));
    return it->second;
  }

  const std::map<DiseaseId, std::string>& diseases() const { return names_; }

  friend CorpusIndex build_index(const std::vector<DiseaseRecord>& records);

 private:
  Postings postings_;
  std::map<std::pair<DiseaseId, SymptomId>, std::uint32_t> tf_;
  std::map<DiseaseId, std::vector<SymptomId>> terms_;
  std::map<DiseaseId, std::string> names_;
  double avg_doc_len_ = 0.0;
};

/// Builds the index. Each canonical symptom counts once per disease (tf is 0 or 1).
inline CorpusIndex build_index(const std::vector<DiseaseRecord>& records) {
  if (records.empty()) throw CorpusError("empty corpus");
  CorpusIndex index;
  std::size_t total_len = 0;
  for (const auto& r : records) {
    if (!index.names_.emplace(r.id, r.name).second)
      throw CorpusError("duplicate disease id " + std::to_string(r.id.value));
    auto& terms = index.terms_[r.id];
    for (auto t : r.canonical_symptoms) {
      index.postings_[t].insert(r.id);
      index.tf_[{r.id, t}] = 1;
      terms.push_back(t);
    }
    total_len += r.canonical_symptoms.size();
  }
  index.avg_doc_len_ = static_cast<double>(total_len) / static_cast<double>(records.size());
  return index;
}

/// Records, vocabulary and index loaded together; shared read-only.
struct Corpus {
  std::vector<DiseaseRecord> records;  // ordered by id
  SymptomVocabulary vocabulary;
  CorpusIndex index;

  const DiseaseRecord& record(DiseaseId id) const {
    auto it = std::lower_bound(records.begin(), records.end(), id,
                               [](const DiseaseRecord& r, DiseaseId v) { return r.id < v; });
    if (it == records.end() || it->id != id)
      throw CorpusError("unknown disease id " + std::to_string(id.value));
    return *it;
  }
};

/// Validates every record and builds the index. Throws CorpusError listing
/// the first offending record's violations.
inline std::shared_ptr<const Corpus> make_corpus(std::vector<DiseaseRecord> records,
                                                 SymptomVocabulary vocabulary) {
  std::sort(records.begin(), records.end(),
            [](const DiseaseRecord& a, const DiseaseRecord& b) { return a.id < b.id; });
  for (const auto& r : records) {
    auto violations = validate_record(r, vocabulary);
    if (!violations.empty()) {
      std::string msg = "invalid record " + std::to_string(r.id.value) + ":";
      for (const auto& v : violations) msg += " " + v.code + " (" + v.detail + ");";
      throw CorpusError(msg);
    }
  }
  auto index = build_index(records);
  return std::make_shared<const Corpus>(
      Corpus{std::move(records), std::move(vocabulary), std::move(index)});
}

}  // namespace medmin
