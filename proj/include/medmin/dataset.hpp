#pragma once

// Corpus dataset file: one JSON object per line, sorted by id. Canonical
// symptoms are stored as representative texts so the file is readable on
// its own; the loader re-derives ids and expansions.

#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "medmin/corpus.hpp"
#include "medmin/normalizer.hpp"

namespace medmin {

inline nlohmann::json record_to_json(const DiseaseRecord& r, const SymptomVocabulary& vocab) {
  auto canonical = nlohmann::json::array();
  for (auto id : r.canonical_symptoms) canonical.push_back(vocab.at(id).text);
  return {{"id", r.id.value},
          {"name", r.name},
          {"raw_symptoms", r.raw_symptoms},
          {"canonical_symptoms", canonical},
          {"description", r.description},
          {"treatment", r.treatment},
          {"source", {{"kind", std::string(to_string(r.source.kind))}, {"url", r.source.url}}}};
}

inline std::string serialize_dataset(const Corpus& corpus) {
  std::string out;
  for (const auto& r : corpus.records) out += record_to_json(r, corpus.vocabulary).dump() + "\n";
  return out;
}

/// Parses dataset text. Vocabulary ids follow the sorted representative texts.
inline std::shared_ptr<const Corpus> parse_dataset(std::string_view content,
                                                   const Normalizer& normalizer,
                                                   double merge_threshold = 0.75) {
  struct Row {
    DiseaseRecord record;
    std::vector<std::string> canonical;
  };
  std::vector<Row> rows;
  std::set<std::string> texts;
  std::size_t line_no = 0;
  long long previous_id = -1;
  for (const auto& line : text::split(content, '\n')) {
    ++line_no;
    if (text::trim_view(line).empty()) continue;
    const auto where = "dataset line " + std::to_string(line_no) + ": ";
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw CorpusError(where + "not a JSON object");
    try {
      Row row;
      auto& r = row.record;
      r.id = DiseaseId{j.at("id").get<std::uint32_t>()};
      if (static_cast<long long>(r.id.value) <= previous_id)
        throw CorpusError(where + "ids must be strictly increasing");
      previous_id = r.id.value;
      r.name = j.at("name").get<std::string>();
      r.raw_symptoms = j.at("raw_symptoms").get<std::vector<std::string>>();
      row.canonical = j.at("canonical_symptoms").get<std::vector<std::string>>();
      r.description = j.value("description", "");
      r.treatment = j.value("treatment", "");
      const auto& src = j.at("source");
      r.source.kind = parse_source_kind(src.at("kind").get<std::string>());
      r.source.url = src.value("url", "");
      std::set<std::string> unique(row.canonical.begin(), row.canonical.end());
      if (unique.size() != row.canonical.size())
        throw CorpusError(where + "duplicate canonical symptom");
      texts.insert(unique.begin(), unique.end());
      rows.push_back(std::move(row));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(where + e.what());
    }
  }

  std::vector<CanonicalSymptom> canonical;
  std::map<std::string, SymptomId> mapping;
  for (const auto& t : texts) {
    CanonicalSymptom c;
    c.id = SymptomId{static_cast<std::uint32_t>(canonical.size())};
    c.text = t;
    c.expanded = normalizer.expand(t);
    c.member_tokens = c.expanded;
    mapping[t] = c.id;
    canonical.push_back(std::move(c));
  }
  std::vector<DiseaseRecord> records;
  for (auto& row : rows) {
    for (const auto& t : row.canonical) row.record.canonical_symptoms.insert(mapping.at(t));
    records.push_back(std::move(row.record));
  }
  return make_corpus(std::move(records),
                     SymptomVocabulary(std::move(canonical), std::move(mapping), merge_threshold));
}

inline std::shared_ptr<const Corpus> load_dataset(const std::string& path, const Normalizer& normalizer,
                                                  double merge_threshold = 0.75) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read dataset file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), normalizer, merge_threshold);
}

struct NormalizedCorpus {
  std::shared_ptr<const Corpus> corpus;
  std::size_t raw_mentions = 0;       // symptom strings across all records
  std::size_t raw_unique = 0;         // distinct strings fed to the merge
  std::size_t dropped_empty = 0;      // strings with no tokens left after stopwords
  std::size_t merges = 0;             // raw_unique - canonical count
};

/// Maps every record's raw symptoms onto a freshly merged vocabulary.
inline NormalizedCorpus normalize_records(std::vector<DiseaseRecord> records,
                                          const Normalizer& normalizer, double merge_threshold) {
  NormalizedCorpus out;
  std::set<std::string> unique;
  for (const auto& r : records) {
    out.raw_mentions += r.raw_symptoms.size();
    unique.insert(r.raw_symptoms.begin(), r.raw_symptoms.end());
  }
  std::vector<RawSymptom> raw;
  for (const auto& t : unique) {
    auto rs = normalizer.raw(t);
    if (rs.tokens.empty()) {
      ++out.dropped_empty;
      continue;
    }
    raw.push_back(std::move(rs));
  }
  out.raw_unique = raw.size();
  auto vocab = merge_symptoms(raw, merge_threshold);
  out.merges = raw.size() - vocab.size();
  for (auto& r : records) {
    r.canonical_symptoms.clear();
    for (const auto& s : r.raw_symptoms)
      if (auto id = vocab.canonical_of(s)) r.canonical_symptoms.insert(*id);
  }
  out.corpus = make_corpus(std::move(records), std::move(vocab));
  return out;
}

}  // namespace medmin
