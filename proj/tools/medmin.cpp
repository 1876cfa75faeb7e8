// medmin: build the symptom corpus, chat in the terminal, or serve the HTTP API.

#include <unistd.h>

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "medmin/app.hpp"
#include "medmin/http_transport.hpp"
#include "medmin/service.hpp"

int main(int argc, char** argv) {
  using medmin::AppConfig;
  AppConfig config;
  CLI::App app{"Symptom corpus builder and triage assistant"};
  app.set_config("--config", "", "TOML/INI file with option defaults");
  app.require_subcommand(1);

  auto env = [](const char* name) { return std::string("MEDMIN_") + name; };

  std::string model = "tfidf";
  app.add_option("--dataset", config.dataset_path, "Corpus dataset file (JSON lines)")
      ->envname(env("DATASET"))
      ->capture_default_str();
  app.add_option("--lexicon", config.lexicon_paths, "Synonym lexicon file (repeatable)")
      ->envname(env("LEXICON"))
      ->delimiter(',');
  app.add_option("--merge-threshold", config.merge_threshold, "Jaccard threshold for merging symptoms")
      ->envname(env("MERGE_THRESHOLD"))
      ->capture_default_str();
  app.add_option("--match-threshold", config.match_threshold, "Jaccard threshold for free-text matches")
      ->envname(env("MATCH_THRESHOLD"))
      ->capture_default_str();
  app.add_option("--model", model, "Ranking model")
      ->check(CLI::IsMember({"tfidf", "bm25"}))
      ->envname(env("MODEL"))
      ->capture_default_str();
  app.add_option("--k1", config.ranker.k1, "BM25 saturation")->envname(env("K1"))->capture_default_str();
  app.add_option("--b", config.ranker.b, "BM25 length normalization")->envname(env("B"))->capture_default_str();
  app.add_option("--top-k", config.top_k, "Diseases shown after prediction")
      ->envname(env("TOP_K"))
      ->capture_default_str();
  app.add_option("--batch", config.suggestion_batch, "Suggestions per prompt round")
      ->envname(env("BATCH"))
      ->capture_default_str();
  app.add_flag("--normalize-scores", config.normalize_scores, "Display scores rescaled to sum to 1")
      ->envname(env("NORMALIZE_SCORES"));

  auto* build = app.add_subcommand("build-dataset", "Scrape, normalize and write the corpus dataset");
  build->fallthrough();
  std::string backend = "fixture";
  std::vector<std::string> selectors;
  long politeness_ms = config.scrape.resolver.politeness_delay.count();
  std::string fixture_dir, cache_dir = config.scrape.resolver.cache_dir.string();
  build->add_option("--list-source", config.scrape.list_source, "Disease list page: file path or URL")
      ->envname(env("LIST_SOURCE"));
  build->add_option("--predefined", config.scrape.predefined_path, "Predefined disease names file")
      ->envname(env("PREDEFINED"));
  build->add_option("--selector", selectors, "List region selector, #id or .class (repeatable)")
      ->envname(env("SELECTOR"))
      ->delimiter(',');
  build->add_option("--backend", backend, "Page resolver backend")
      ->check(CLI::IsMember({"fixture", "title-search"}))
      ->envname(env("BACKEND"))
      ->capture_default_str();
  build->add_option("--fixture-dir", fixture_dir, "Directory with resolver_map.txt and pages/")
      ->envname(env("FIXTURE_DIR"));
  build->add_option("--cache-dir", cache_dir, "Cache for fetched pages")
      ->envname(env("CACHE_DIR"))
      ->capture_default_str();
  build->add_option("--politeness-ms", politeness_ms, "Minimum gap between live fetches")
      ->envname(env("POLITENESS_MS"))
      ->capture_default_str();
  build->add_option("--user-agent", config.scrape.resolver.user_agent, "User-Agent for live fetches")
      ->envname(env("USER_AGENT"));
  build->add_option("--concurrency", config.scrape.concurrency, "Parallel page resolutions")
      ->envname(env("CONCURRENCY"))
      ->capture_default_str();
  build->add_option("--report", config.report_path, "Build report path (default <dataset>.report.json)")
      ->envname(env("REPORT"));

  auto* chat = app.add_subcommand("chat", "Interactive triage session in the terminal");
  chat->fallthrough();

  auto* serve = app.add_subcommand("serve", "Serve the triage HTTP API");
  serve->fallthrough();
  long idle_minutes = config.session_idle.count();
  serve->add_option("--host", config.bind_host, "Bind address")->envname(env("HOST"))->capture_default_str();
  serve->add_option("--port", config.port, "Port")->envname(env("PORT"))->capture_default_str();
  serve->add_option("--cors", config.cors_allowlist, "Allowed CORS origins (repeatable)")
      ->envname(env("CORS"))
      ->delimiter(',');
  serve->add_option("--idle-minutes", idle_minutes, "Evict sessions idle this long")
      ->envname(env("IDLE_MINUTES"))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    config.ranker.model = medmin::parse_ranking_model(model);
    config.session_idle = std::chrono::minutes(idle_minutes);
    auto& rc = config.scrape.resolver;
    rc.backend = backend == "title-search" ? medmin::scrape::ResolverBackend::TitleSearch
                                           : medmin::scrape::ResolverBackend::FixtureMap;
    rc.fixture_dir = fixture_dir;
    rc.cache_dir = cache_dir;
    rc.politeness_delay = std::chrono::milliseconds(politeness_ms);
    if (!selectors.empty()) {
      config.scrape.selectors.clear();
      for (const auto& s : selectors)
        config.scrape.selectors.push_back(medmin::scrape::ListSelector::parse(s));
    }

    if (*build) {
      auto report =
          medmin::cmd_build_dataset(config, std::make_shared<medmin::scrape::HttplibTransport>());
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << report.to_json().dump(2) << "\n";
      return 0;
    }
    if (*chat) return medmin::cmd_chat(config, std::cin, std::cout, std::cerr, !isatty(STDIN_FILENO));
    if (*serve) return medmin::serve(config, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
