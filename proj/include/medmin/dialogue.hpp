#pragma once

// Doctor-style triage loop: the user names symptoms, the engine offers
// co-occurring ones to confirm or decline, then ranks diseases and serves
// per-disease detail. Every successful mutation is appended to the session's
// action log, and replay() rebuilds a session from that log.

#include <algorithm>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "medmin/corpus.hpp"
#include "medmin/normalizer.hpp"
#include "medmin/retrieval.hpp"

namespace medmin {

enum class SessionState { Collecting, Predicted, Closed };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Collecting: return "collecting";
    case SessionState::Predicted: return "predicted";
    case SessionState::Closed: return "closed";
  }
  return "closed";
}

enum class Answer { Yes, No };

enum class DialogueErrorKind {
  NotCollecting,
  NoSeedSymptoms,
  UnknownSymptom,
  NotSuggested,
  DuplicateResponse,
  InvalidIndex,
  NoPrediction,
  InvalidArgument,
};

class DialogueError : public std::runtime_error {
 public:
  DialogueError(DialogueErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  DialogueErrorKind kind() const { return kind_; }

 private:
  DialogueErrorKind kind_;
};

struct ActionRecord {
  std::chrono::system_clock::time_point at;
  std::string action;  // start | symptom | suggest | respond | predict | close
  nlohmann::json payload;
};

struct Session {
  std::string id;
  std::vector<SymptomId> confirmed;  // insertion order, no duplicates
  std::set<SymptomId> declined;
  std::set<SymptomId> suggested_history;
  SessionState state = SessionState::Collecting;
  std::optional<std::vector<RankedDisease>> last_ranking;
  RankerParams params;
  std::chrono::system_clock::time_point created_at;
  std::vector<ActionRecord> log;

  bool is_confirmed(SymptomId s) const {
    return std::find(confirmed.begin(), confirmed.end(), s) != confirmed.end();
  }
  std::set<SymptomId> confirmed_set() const { return {confirmed.begin(), confirmed.end()}; }
};

struct SymptomMatch {
  std::string input;
  std::optional<SymptomId> matched;
  double similarity = 0.0;
  std::vector<std::pair<SymptomId, double>> alternatives;  // up to 3, best first
  bool added = false;  // newly confirmed by this call
};

struct Suggestion {
  SymptomId symptom;
  std::size_t count = 0;  // diseases sharing a confirmed symptom that list this one
  bool operator==(const Suggestion&) const = default;
};

struct DiseaseView {
  DiseaseId id;
  std::string name;
  std::vector<std::string> symptoms;
  std::string description;
  std::string treatment;
};

struct DialogueConfig {
  double match_threshold = 0.4;
  std::size_t top_k = 10;
};

inline nlohmann::json params_to_json(const RankerParams& p) {
  return {{"model", std::string(to_string(p.model))}, {"k1", p.k1}, {"b", p.b}};
}

inline RankerParams params_from_json(const nlohmann::json& j) {
  RankerParams p;
  p.model = parse_ranking_model(j.at("model").get<std::string>());
  p.k1 = j.at("k1").get<double>();
  p.b = j.at("b").get<double>();
  return p;
}

class TriageEngine {
 public:
  TriageEngine(std::shared_ptr<const Corpus> corpus, Normalizer normalizer, DialogueConfig config = {})
      : corpus_(std::move(corpus)), normalizer_(std::move(normalizer)), config_(config) {
    if (!corpus_) throw DialogueError(DialogueErrorKind::InvalidArgument, "corpus missing");
    if (!(config_.match_threshold > 0.0 && config_.match_threshold <= 1.0))
      throw DialogueError(DialogueErrorKind::InvalidArgument, "match threshold must be in (0,1]");
    if (config_.top_k == 0)
      throw DialogueError(DialogueErrorKind::InvalidArgument, "top-k must be >= 1");
  }

  const Corpus& corpus() const { return *corpus_; }
  const DialogueConfig& config() const { return config_; }
  const Normalizer& normalizer() const { return normalizer_; }

  Session start_session(const RankerParams& params) const { return start_with_id(new_id(), params); }

  /// Matches free text against the vocabulary and confirms the best entry when
  /// its Jaccard similarity reaches the match threshold.
  SymptomMatch match_symptom(Session& s, std::string_view input) const {
    require_collecting(s);
    auto m = best_match(input);
    if (m.matched && !s.is_confirmed(*m.matched) && !s.declined.count(*m.matched)) {
      s.confirmed.push_back(*m.matched);
      m.added = true;
    }
    log(s, "symptom", {{"text", std::string(input)}});
    return m;
  }

  /// Pure matching step, no session involved.
  SymptomMatch best_match(std::string_view input) const {
    SymptomMatch m;
    m.input = std::string(input);
    const auto query = normalizer_.expand(input);
    if (query.empty()) return m;

    std::vector<std::pair<SymptomId, double>> scored;
    for (const auto& entry : corpus_->vocabulary.entries()) {
      const double sim = jaccard(query, entry.expanded);
      if (sim > 0.0) scored.emplace_back(entry.id, sim);
    }
    const auto& vocab = corpus_->vocabulary;
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return vocab.at(a.first).text < vocab.at(b.first).text;
    });
    std::size_t start = 0;
    if (!scored.empty()) {
      m.similarity = scored.front().second;
      if (m.similarity >= config_.match_threshold) {
        m.matched = scored.front().first;
        start = 1;
      }
    }
    for (std::size_t i = start; i < scored.size() && m.alternatives.size() < 3; ++i)
      m.alternatives.push_back(scored[i]);
    return m;
  }

  /// Symptoms that co-occur with the confirmed ones, most frequent first.
  /// An empty result means there is nothing left to ask.
  std::vector<Suggestion> suggest_cooccurring(Session& s, std::size_t batch) const {
    require_collecting(s);
    if (batch == 0) throw DialogueError(DialogueErrorKind::InvalidArgument, "batch must be >= 1");
    if (s.confirmed.empty())
      throw DialogueError(DialogueErrorKind::NoSeedSymptoms, "no seed symptoms");

    const auto& index = corpus_->index;
    std::set<DiseaseId> diseases;
    for (auto c : s.confirmed) {
      auto it = index.postings().find(c);
      if (it != index.postings().end()) diseases.insert(it->second.begin(), it->second.end());
    }
    std::map<SymptomId, std::size_t> counts;
    for (auto d : diseases)
      for (auto t : index.terms(d))
        if (!s.is_confirmed(t) && !s.declined.count(t) && !s.suggested_history.count(t)) ++counts[t];

    std::vector<Suggestion> out;
    for (const auto& [t, n] : counts) out.push_back({t, n});
    const auto& vocab = corpus_->vocabulary;
    std::sort(out.begin(), out.end(), [&](const Suggestion& a, const Suggestion& b) {
      if (a.count != b.count) return a.count > b.count;
      return vocab.at(a.symptom).text < vocab.at(b.symptom).text;
    });
    if (out.size() > batch) out.resize(batch);
    for (const auto& sug : out) s.suggested_history.insert(sug.symptom);
    log(s, "suggest", {{"batch", batch}});
    return out;
  }

  void record_response(Session& s, SymptomId symptom, Answer answer) const {
    require_collecting(s);
    if (!corpus_->vocabulary.contains(symptom))
      throw DialogueError(DialogueErrorKind::UnknownSymptom,
                          "unknown symptom " + std::to_string(symptom.value));
    if (!s.suggested_history.count(symptom))
      throw DialogueError(DialogueErrorKind::NotSuggested,
                          "symptom " + std::to_string(symptom.value) + " was not suggested");
    if (s.is_confirmed(symptom) || s.declined.count(symptom))
      throw DialogueError(DialogueErrorKind::DuplicateResponse, "duplicate response");
    if (answer == Answer::Yes)
      s.confirmed.push_back(symptom);
    else
      s.declined.insert(symptom);
    log(s, "respond",
        {{"symptom", symptom.value}, {"answer", answer == Answer::Yes ? "yes" : "no"}});
  }

  /// Ranks diseases for the confirmed symptoms. Declined symptoms carry no weight.
  const std::vector<RankedDisease>& predict(Session& s, std::optional<std::size_t> k = {}) const {
    if (s.state == SessionState::Closed)
      throw DialogueError(DialogueErrorKind::NotCollecting, "session not collecting");
    if (s.confirmed.empty())
      throw DialogueError(DialogueErrorKind::NoSeedSymptoms,
                          "at least one confirmed symptom is required");
    const auto top = k.value_or(config_.top_k);
    if (top == 0) throw DialogueError(DialogueErrorKind::InvalidArgument, "k must be >= 1");
    s.last_ranking = rank(corpus_->index, s.confirmed_set(), s.params, top);
    s.state = SessionState::Predicted;
    log(s, "predict", {{"k", top}});
    return *s.last_ranking;
  }

  DiseaseView disease_detail(const Session& s, std::size_t index) const {
    if (!s.last_ranking)
      throw DialogueError(DialogueErrorKind::NoPrediction, "no prediction yet");
    if (index < 1 || index > s.last_ranking->size())
      throw DialogueError(DialogueErrorKind::InvalidIndex, "invalid disease index");
    return view((*s.last_ranking)[index - 1].disease);
  }

  DiseaseView view(DiseaseId id) const {
    const auto& r = corpus_->record(id);
    DiseaseView v{r.id, r.name, {}, r.description, r.treatment};
    for (auto t : r.canonical_symptoms) v.symptoms.push_back(corpus_->vocabulary.at(t).text);
    return v;
  }

  void close(Session& s) const {
    s.state = SessionState::Closed;
    log(s, "close", nlohmann::json::object());
  }

  /// Rebuilds a session by re-running every logged action in order.
  Session replay(const std::vector<ActionRecord>& actions) const {
    if (actions.empty() || actions.front().action != "start")
      throw DialogueError(DialogueErrorKind::InvalidArgument, "log must begin with start");
    const auto& first = actions.front().payload;
    Session s = start_with_id(first.at("session_id").get<std::string>(),
                              params_from_json(first.at("params")));
    for (std::size_t i = 1; i < actions.size(); ++i) {
      const auto& a = actions[i];
      const auto& p = a.payload;
      if (a.action == "symptom") {
        match_symptom(s, p.at("text").get<std::string>());
      } else if (a.action == "suggest") {
        suggest_cooccurring(s, p.at("batch").get<std::size_t>());
      } else if (a.action == "respond") {
        record_response(s, SymptomId{p.at("symptom").get<std::uint32_t>()},
                        p.at("answer").get<std::string>() == "yes" ? Answer::Yes : Answer::No);
      } else if (a.action == "predict") {
        predict(s, p.at("k").get<std::size_t>());
      } else if (a.action == "close") {
        close(s);
      } else {
        throw DialogueError(DialogueErrorKind::InvalidArgument, "unknown action '" + a.action + "'");
      }
    }
    return s;
  }

 private:
  Session start_with_id(std::string id, const RankerParams& params) const {
    params.validate();
    Session s;
    s.id = std::move(id);
    s.params = params;
    s.created_at = std::chrono::system_clock::now();
    log(s, "start", {{"session_id", s.id}, {"params", params_to_json(params)}});
    return s;
  }

  static void require_collecting(const Session& s) {
    if (s.state != SessionState::Collecting)
      throw DialogueError(DialogueErrorKind::NotCollecting, "session not collecting");
  }

  static void log(Session& s, std::string action, nlohmann::json payload) {
    s.log.push_back({std::chrono::system_clock::now(), std::move(action), std::move(payload)});
  }

  std::string new_id() const {
    std::lock_guard lock(id_mu_);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id;
    for (int part = 0; part < 2; ++part) {
      auto v = rng_();
      for (int i = 0; i < 16; ++i, v >>= 4) id.push_back(kHex[v & 0xF]);
    }
    return id;
  }

  std::shared_ptr<const Corpus> corpus_;
  Normalizer normalizer_;
  DialogueConfig config_;
  mutable std::mutex id_mu_;
  mutable std::mt19937_64 rng_{std::random_device{}()};
};

// Action log lines: {"at": epoch-ms, "action": ..., "payload": {...}}.

inline nlohmann::json action_to_json(const ActionRecord& a) {
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(a.at.time_since_epoch()).count();
  return {{"at", ms}, {"action", a.action}, {"payload", a.payload}};
}

inline ActionRecord action_from_json(const nlohmann::json& j) {
  ActionRecord a;
  a.at = std::chrono::system_clock::time_point(std::chrono::milliseconds(j.at("at").get<long long>()));
  a.action = j.at("action").get<std::string>();
  a.payload = j.at("payload");
  return a;
}

inline std::string serialize_log(const std::vector<ActionRecord>& log) {
  std::string out;
  for (const auto& a : log) out += action_to_json(a).dump() + "\n";
  return out;
}

inline std::vector<ActionRecord> parse_log(std::string_view content) {
  std::vector<ActionRecord> out;
  for (const auto& line : text::split(content, '\n')) {
    if (text::trim_view(line).empty()) continue;
    out.push_back(action_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

inline nlohmann::json ranking_to_json(const Corpus& corpus, const std::vector<RankedDisease>& ranked) {
  auto arr = nlohmann::json::array();
  for (const auto& r : ranked)
    arr.push_back({{"rank", r.rank},
                   {"disease_id", r.disease.value},
                   {"name", corpus.index.name(r.disease)},
                   {"score", r.score},
                   {"zero_score", r.zero_score}});
  return arr;
}

}  // namespace medmin
