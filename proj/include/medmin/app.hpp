#pragma once

// Application layer: configuration, the dataset build command and the
// terminal chat loop. The HTTP service lives in service.hpp.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "medmin/corpus.hpp"
#include "medmin/dataset.hpp"
#include "medmin/dialogue.hpp"
#include "medmin/normalizer.hpp"
#include "medmin/retrieval.hpp"
#include "medmin/scraper.hpp"

namespace medmin {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AppConfig {
  std::string dataset_path = "medmin_dataset.jsonl";
  std::string report_path;  // defaults to <dataset>.report.json
  std::vector<std::string> lexicon_paths;
  double merge_threshold = 0.75;
  double match_threshold = 0.4;
  RankerParams ranker;
  std::size_t top_k = 10;
  std::size_t suggestion_batch = 5;
  bool normalize_scores = false;

  scrape::ScrapeConfig scrape;

  std::string bind_host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> cors_allowlist;
  std::chrono::minutes session_idle{30};

  enum class Mode { BuildDataset, Chat, Serve };

  void validate(Mode mode) const {
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in_unit(merge_threshold)) throw ConfigError("merge threshold must be in (0,1]");
    if (!in_unit(match_threshold)) throw ConfigError("match threshold must be in (0,1]");
    if (top_k < 1) throw ConfigError("top-k must be >= 1");
    if (suggestion_batch < 1) throw ConfigError("suggestion batch must be >= 1");
    try {
      ranker.validate();
    } catch (const RetrievalError& e) {
      throw ConfigError(e.what());
    }
    if (dataset_path.empty()) throw ConfigError("dataset path is required");
    if (mode == Mode::BuildDataset) {
      if (scrape.list_source.empty()) throw ConfigError("list source is required");
      if (scrape.resolver.backend == scrape::ResolverBackend::FixtureMap &&
          scrape.resolver.fixture_dir.empty())
        throw ConfigError("fixture directory is required for the fixture backend");
      if (scrape.resolver.backend == scrape::ResolverBackend::TitleSearch &&
          scrape.resolver.cache_dir.empty())
        throw ConfigError("cache directory is required for title search");
    }
    if (mode == Mode::Serve && (port < 0 || port > 65535)) throw ConfigError("invalid port");
  }

  DialogueConfig dialogue() const { return {match_threshold, top_k}; }
};

/// Loads every lexicon, failing with the offending path.
inline Normalizer make_normalizer(const AppConfig& config) {
  for (const auto& p : config.lexicon_paths)
    if (!std::filesystem::exists(p)) throw ConfigError("lexicon file not found: " + p);
  return Normalizer(load_lexicons(config.lexicon_paths));
}

inline std::shared_ptr<const TriageEngine> load_engine(const AppConfig& config) {
  auto normalizer = make_normalizer(config);
  auto corpus = load_dataset(config.dataset_path, normalizer, config.merge_threshold);
  return std::make_shared<const TriageEngine>(std::move(corpus), std::move(normalizer),
                                              config.dialogue());
}

// ---------------------------------------------------------------------------
// build-dataset

struct BuildReport {
  std::size_t diseases = 0;
  std::size_t scraped_names = 0;
  std::size_t predefined_names = 0;
  std::size_t unresolved = 0;
  std::size_t raw_symptom_mentions = 0;
  std::size_t raw_symptoms = 0;
  std::size_t dropped_empty = 0;
  std::size_t canonical_symptoms = 0;
  std::size_t merges = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    return {{"diseases", diseases},
            {"scraped_names", scraped_names},
            {"predefined_names", predefined_names},
            {"unresolved", unresolved},
            {"raw_symptom_mentions", raw_symptom_mentions},
            {"raw_symptoms", raw_symptoms},
            {"dropped_empty_symptoms", dropped_empty},
            {"canonical_symptoms", canonical_symptoms},
            {"merges", merges},
            {"warnings", warnings}};
  }
};

/// Scrapes, normalizes and writes the dataset plus a JSON report.
inline BuildReport cmd_build_dataset(const AppConfig& config,
                                     std::shared_ptr<scrape::Transport> transport) {
  config.validate(AppConfig::Mode::BuildDataset);
  const auto normalizer = make_normalizer(config);

  auto scraped = scrape::scrape_corpus(config.scrape, std::move(transport));
  auto normalized = normalize_records(std::move(scraped.records), normalizer, config.merge_threshold);

  BuildReport report;
  report.diseases = normalized.corpus->records.size();
  report.scraped_names = scraped.scraped_names;
  report.predefined_names = scraped.predefined_names;
  report.unresolved = scraped.unresolved;
  report.raw_symptom_mentions = normalized.raw_mentions;
  report.raw_symptoms = normalized.raw_unique;
  report.dropped_empty = normalized.dropped_empty;
  report.canonical_symptoms = normalized.corpus->vocabulary.size();
  report.merges = normalized.merges;
  report.warnings = std::move(scraped.warnings);

  scrape::write_file(config.dataset_path, serialize_dataset(*normalized.corpus));
  const auto report_path =
      config.report_path.empty() ? config.dataset_path + ".report.json" : config.report_path;
  scrape::write_file(report_path, report.to_json().dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------------------
// chat

struct ChatOptions {
  std::size_t suggestion_batch = 5;
  bool normalize_scores = false;
  bool echo_input = false;  // print each input line after its prompt (scripted runs)
};

struct ChatOutcome {
  Session session;
};

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

class Console {
 public:
  Console(std::istream& in, std::ostream& out, bool echo) : in_(in), out_(out), echo_(echo) {}

  std::optional<std::string> ask(const std::string& prompt) {
    out_ << prompt << std::flush;
    std::string line;
    if (!std::getline(in_, line)) {
      out_ << "\n";
      return std::nullopt;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (echo_) out_ << line << "\n";
    return text::trim(line);
  }

  std::ostream& out() { return out_; }

 private:
  std::istream& in_;
  std::ostream& out_;
  bool echo_;
};

inline void print_ranking(std::ostream& out, const TriageEngine& engine, const Session& s,
                          bool normalize) {
  const auto& ranked = *s.last_ranking;
  const auto shown = normalize ? normalized_scores(ranked) : std::vector<double>{};
  out << "\nTop " << ranked.size() << " most probable diseases (model: "
      << to_string(s.params.model) << (normalize ? ", normalized scores" : "") << ")\n";
  out << "  rank  score   disease\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    auto rank = std::to_string(r.rank);
    out << std::string(6 - std::min<std::size_t>(rank.size(), 5), ' ') << rank << "  "
        << fixed(normalize ? shown[i] : r.score, 4) << "  " << engine.corpus().index.name(r.disease)
        << "\n";
  }
}

inline void print_detail(std::ostream& out, const DiseaseView& v) {
  out << "== " << v.name << " ==\n";
  out << "Symptoms: " << scrape::join(v.symptoms, ", ") << "\n";
  out << "Description: " << (v.description.empty() ? "(none)" : v.description) << "\n";
  out << "Treatment: " << (v.treatment.empty() ? "(not available)" : v.treatment) << "\n";
}

inline bool is_quit(const std::string& s) { return text::iequals(s, "quit") || text::iequals(s, "exit"); }

}  // namespace detail

/// Interactive loop over an already loaded engine. Returns the final session.
inline ChatOutcome run_chat(const TriageEngine& engine, const RankerParams& params,
                            const ChatOptions& options, std::istream& in, std::ostream& out) {
  detail::Console con(in, out, options.echo_input);
  Session s = engine.start_session(params);
  const auto& vocab = engine.corpus().vocabulary;

  out << "Describe your symptoms, separated by commas.\n"
         "Type \"done\" when you have listed everything, or \"quit\" to leave.\n";

  enum class Phase { Symptoms, Suggestions, Details };
  Phase phase = Phase::Symptoms;
  std::vector<Suggestion> pending;
  std::size_t next_pending = 0;
  bool finished = false;

  auto do_predict = [&] {
    engine.predict(s);
    detail::print_ranking(out, engine, s, options.normalize_scores);
    out << "Enter a rank number for details, or \"quit\" to exit.\n";
    phase = Phase::Details;
  };

  while (!finished) {
    if (phase == Phase::Symptoms) {
      auto line = con.ask("symptoms> ");
      if (!line || detail::is_quit(*line)) break;
      if (line->empty()) continue;
      if (text::iequals(*line, "done")) {
        if (s.confirmed.empty()) {
          out << "At least one recognized symptom is required before predicting.\n";
          continue;
        }
        do_predict();
        continue;
      }
      for (const auto& part : text::split(*line, ',')) {
        const auto piece = text::collapse_ws(part);
        if (piece.empty()) continue;
        const auto m = engine.match_symptom(s, piece);
        if (m.matched) {
          out << "  \"" << piece << "\" -> " << vocab.at(*m.matched).text << " (similarity "
              << detail::fixed(m.similarity, 3) << (m.added ? "" : ", already noted") << ")\n";
        } else {
          out << "  \"" << piece << "\" not recognized";
          if (!m.alternatives.empty()) {
            out << "; closest:";
            for (const auto& [id, sim] : m.alternatives)
              out << " " << vocab.at(id).text << " (" << detail::fixed(sim, 3) << ")";
          }
          out << "\n";
        }
      }
      if (!s.confirmed.empty()) phase = Phase::Suggestions;
      continue;
    }

    if (phase == Phase::Suggestions) {
      if (next_pending >= pending.size()) {
        pending = engine.suggest_cooccurring(s, options.suggestion_batch);
        next_pending = 0;
        if (pending.empty()) {
          out << "No further related symptoms to ask about.\n";
          do_predict();
          continue;
        }
      }
      const auto& sug = pending[next_pending];
      auto line = con.ask("Do you also have " + vocab.at(sug.symptom).text + "? (listed by " +
                          std::to_string(sug.count) + " related disease" +
                          (sug.count == 1 ? "" : "s") + ") [yes/no/done] ");
      if (!line || detail::is_quit(*line)) break;
      if (text::iequals(*line, "done")) {
        do_predict();
        continue;
      }
      if (text::iequals(*line, "yes") || text::iequals(*line, "y")) {
        engine.record_response(s, sug.symptom, Answer::Yes);
        ++next_pending;
      } else if (text::iequals(*line, "no") || text::iequals(*line, "n")) {
        engine.record_response(s, sug.symptom, Answer::No);
        ++next_pending;
      } else {
        out << "Please answer yes, no, done or quit.\n";
      }
      continue;
    }

    auto line = con.ask("details> ");
    if (!line || detail::is_quit(*line)) break;
    if (line->empty()) continue;
    std::size_t idx = 0;
    bool numeric = !line->empty() && line->size() < 10;
    for (char c : *line) {
      if (c < '0' || c > '9') {
        numeric = false;
        break;
      }
      idx = idx * 10 + static_cast<std::size_t>(c - '0');
    }
    try {
      if (!numeric) throw DialogueError(DialogueErrorKind::InvalidIndex, "invalid disease index");
      detail::print_detail(out, engine.disease_detail(s, idx));
    } catch (const DialogueError& e) {
      out << "error: " << e.what() << "\n";
    }
  }
  engine.close(s);
  out << "Goodbye.\n";
  return {std::move(s)};
}

/// Loads the dataset named in `config` and runs the chat loop. Returns the
/// process exit code.
inline int cmd_chat(const AppConfig& config, std::istream& in, std::ostream& out, std::ostream& err,
                    bool echo_input = false, std::optional<ChatOutcome>* outcome = nullptr) {
  std::shared_ptr<const TriageEngine> engine;
  try {
    config.validate(AppConfig::Mode::Chat);
    engine = load_engine(config);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  auto result = run_chat(*engine, config.ranker,
                         {config.suggestion_batch, config.normalize_scores, echo_input}, in, out);
  if (outcome) *outcome = std::move(result);
  return 0;
}

}  // namespace medmin
