#pragma once

// JSON-over-HTTP front end for the triage engine. Sessions live in memory and
// are evicted after an idle period; each session is mutated by one request at
// a time while distinct sessions proceed in parallel.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "medmin/app.hpp"
#include "medmin/dialogue.hpp"

namespace medmin {

class SessionStore {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  explicit SessionStore(std::chrono::steady_clock::duration idle,
                        Clock clock = [] { return std::chrono::steady_clock::now(); })
      : idle_(idle), clock_(std::move(clock)) {}

  std::string add(Session s) {
    auto entry = std::make_shared<Entry>();
    auto id = s.id;
    entry->session = std::move(s);
    entry->last_access = clock_().time_since_epoch().count();
    std::lock_guard lock(mu_);
    sessions_[id] = std::move(entry);
    return id;
  }

  /// Runs `fn` on the session with its entry lock held. False if the id is unknown.
  template <class Fn>
  bool with(const std::string& id, Fn&& fn) {
    std::shared_ptr<Entry> entry;
    {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) return false;
      entry = it->second;
    }
    std::lock_guard lock(entry->mu);
    entry->last_access = clock_().time_since_epoch().count();
    fn(entry->session);
    return true;
  }

  std::size_t evict_idle() {
    const auto now = clock_().time_since_epoch().count();
    const auto idle = idle_.count();
    std::lock_guard lock(mu_);
    return std::erase_if(sessions_, [&](const auto& kv) {
      return now - kv.second->last_access.load() > idle;
    });
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
  }

 private:
  struct Entry {
    std::mutex mu;
    Session session;
    std::atomic<std::chrono::steady_clock::rep> last_access{0};
  };

  std::chrono::steady_clock::duration idle_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

struct ServiceOptions {
  RankerParams default_params;
  std::size_t suggestion_batch = 5;
  bool normalize_scores = false;
  std::vector<std::string> cors_allowlist;
};

class TriageService {
 public:
  TriageService(std::shared_ptr<const TriageEngine> engine, ServiceOptions options,
                std::shared_ptr<SessionStore> store)
      : engine_(std::move(engine)), options_(std::move(options)), store_(std::move(store)) {}

  SessionStore& store() { return *store_; }

  void register_routes(httplib::Server& server) {
    using httplib::Request;
    using httplib::Response;
    const std::string base = "/api/v1";
    const std::string sid = "/sessions/([^/]+)";

    server.set_post_routing_handler([this](const Request& req, Response& res) { cors(req, res); });
    server.Options(R"(/api/v1/.*)", [](const Request&, Response& res) { res.status = 204; });

    server.Get(base + "/healthz", [this](const Request&, Response& res) {
      const auto& c = engine_->corpus();
      reply(res, 200,
            {{"status", "ok"},
             {"corpus", {{"diseases", c.records.size()}, {"symptoms", c.vocabulary.size()}}}});
    });

    server.Post(base + "/sessions", [this](const Request& req, Response& res) {
      store_->evict_idle();
      auto params = options_.default_params;
      if (!req.body.empty()) {
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        std::vector<std::string> errors;
        if (body.is_discarded() || !body.is_object()) {
          errors.push_back("body must be a JSON object");
        } else {
          try {
            if (body.contains("model")) params.model = parse_ranking_model(body.at("model").get<std::string>());
            if (body.contains("k1")) params.k1 = body.at("k1").get<double>();
            if (body.contains("b")) params.b = body.at("b").get<double>();
            params.validate();
          } catch (const std::exception& e) {
            errors.push_back(e.what());
          }
        }
        if (!errors.empty()) return bad_request(res, errors);
      }
      auto id = store_->add(engine_->start_session(params));
      reply(res, 201, {{"session_id", id}});
    });

    server.Post(base + sid + "/symptoms", [this](const Request& req, Response& res) {
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("text") ||
          !body["text"].is_string())
        return bad_request(res, {"body must be an object with a string field 'text'"});
      const auto text = body["text"].get<std::string>();
      session_call(req, res, [&](Session& s) {
        auto m = engine_->match_symptom(s, text);
        reply(res, 200, match_json(m));
      });
    });

    server.Get(base + sid + "/suggestions", [this](const Request& req, Response& res) {
      auto batch = positive_param(req, "batch", options_.suggestion_batch);
      if (!batch) return bad_request(res, {"batch must be a positive integer"});
      session_call(req, res, [&](Session& s) {
        auto arr = nlohmann::json::array();
        for (const auto& sug : engine_->suggest_cooccurring(s, *batch))
          arr.push_back({{"symptom_id", sug.symptom.value},
                         {"representative", vocab().at(sug.symptom).text},
                         {"count", sug.count}});
        reply(res, 200, arr);
      });
    });

    server.Post(base + sid + "/responses", [this](const Request& req, Response& res) {
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      std::vector<std::string> errors;
      if (body.is_discarded() || !body.is_object()) {
        errors.push_back("body must be a JSON object");
      } else {
        if (!body.contains("symptom_id") || !body["symptom_id"].is_number_unsigned())
          errors.push_back("symptom_id must be a non-negative integer");
        if (!body.contains("answer") || !body["answer"].is_string() ||
            (body["answer"] != "yes" && body["answer"] != "no"))
          errors.push_back("answer must be \"yes\" or \"no\"");
      }
      if (!errors.empty()) return bad_request(res, errors);
      const SymptomId symptom{body["symptom_id"].get<std::uint32_t>()};
      const auto answer = body["answer"] == "yes" ? Answer::Yes : Answer::No;
      session_call(req, res, [&](Session& s) {
        engine_->record_response(s, symptom, answer);
        reply(res, 200,
              {{"confirmed", s.confirmed.size()},
               {"declined", s.declined.size()},
               {"suggested", s.suggested_history.size()}});
      });
    });

    server.Post(base + sid + "/predict", [this](const Request& req, Response& res) {
      auto k = positive_param(req, "k", engine_->config().top_k);
      if (!k) return bad_request(res, {"k must be a positive integer"});
      session_call(req, res, [&](Session& s) {
        const auto& ranked = engine_->predict(s, *k);
        auto arr = ranking_to_json(engine_->corpus(), ranked);
        if (options_.normalize_scores) {
          const auto shown = normalized_scores(ranked);
          for (std::size_t i = 0; i < arr.size(); ++i) arr[i]["display_score"] = shown[i];
        }
        reply(res, 200, arr);
      });
    });

    server.Get(base + sid + "/diseases/([^/]+)", [this](const Request& req, Response& res) {
      const auto& raw = req.matches[2].str();
      std::size_t rank = 0;
      bool ok = !raw.empty() && raw.size() < 10;
      for (char c : raw) {
        if (c < '0' || c > '9') {
          ok = false;
          break;
        }
        rank = rank * 10 + static_cast<std::size_t>(c - '0');
      }
      session_call(req, res, [&](Session& s) {
        if (!ok) throw DialogueError(DialogueErrorKind::InvalidIndex, "invalid disease index");
        auto v = engine_->disease_detail(s, rank);
        reply(res, 200,
              {{"disease_id", v.id.value},
               {"name", v.name},
               {"symptoms", v.symptoms},
               {"description", v.description},
               {"treatment", v.treatment}});
      });
    });

    server.Get(base + sid + "/log", [this](const Request& req, Response& res) {
      session_call(req, res, [&](Session& s) {
        auto arr = nlohmann::json::array();
        for (const auto& a : s.log) arr.push_back(action_to_json(a));
        reply(res, 200, arr);
      });
    });
  }

 private:
  const SymptomVocabulary& vocab() const { return engine_->corpus().vocabulary; }

  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void bad_request(httplib::Response& res, const std::vector<std::string>& errors) {
    reply(res, 400, {{"errors", errors}});
  }

  template <class Fn>
  void session_call(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
    const auto id = req.matches[1].str();
    bool found = store_->with(id, [&](Session& s) {
      try {
        fn(s);
      } catch (const DialogueError& e) {
        const int status = e.kind() == DialogueErrorKind::InvalidArgument ? 400 : 409;
        if (status == 400)
          reply(res, 400, {{"errors", {e.what()}}});
        else
          reply(res, 409, {{"error", e.what()}});
      }
    });
    if (!found) reply(res, 404, {{"error", "unknown session"}});
  }

  static std::optional<std::size_t> positive_param(const httplib::Request& req, const char* name,
                                                   std::size_t fallback) {
    if (!req.has_param(name)) return fallback;
    const auto v = req.get_param_value(name);
    if (v.empty() || v.size() > 6) return std::nullopt;
    std::size_t n = 0;
    for (char c : v) {
      if (c < '0' || c > '9') return std::nullopt;
      n = n * 10 + static_cast<std::size_t>(c - '0');
    }
    if (n == 0) return std::nullopt;
    return n;
  }

  nlohmann::json match_json(const SymptomMatch& m) const {
    auto alts = nlohmann::json::array();
    for (const auto& [id, sim] : m.alternatives)
      alts.push_back({{"symptom_id", id.value}, {"representative", vocab().at(id).text}, {"similarity", sim}});
    nlohmann::json matched = nullptr;
    if (m.matched)
      matched = {{"symptom_id", m.matched->value}, {"representative", vocab().at(*m.matched).text}};
    return {{"input", m.input},
            {"matched", matched},
            {"similarity", m.similarity},
            {"alternatives", alts},
            {"added", m.added}};
  }

  void cors(const httplib::Request& req, httplib::Response& res) const {
    if (!req.has_header("Origin")) return;
    const auto origin = req.get_header_value("Origin");
    for (const auto& allowed : options_.cors_allowlist) {
      if (allowed == "*" || allowed == origin) {
        res.set_header("Access-Control-Allow-Origin", allowed == "*" ? "*" : origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Vary", "Origin");
        return;
      }
    }
  }

  std::shared_ptr<const TriageEngine> engine_;
  ServiceOptions options_;
  std::shared_ptr<SessionStore> store_;
};

inline ServiceOptions service_options(const AppConfig& config) {
  return {config.ranker, config.suggestion_batch, config.normalize_scores, config.cors_allowlist};
}

/// Loads the dataset, then serves until the process is stopped. Returns the exit code.
inline int serve(const AppConfig& config, std::ostream& log) {
  std::shared_ptr<const TriageEngine> engine;
  try {
    config.validate(AppConfig::Mode::Serve);
    engine = load_engine(config);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
  auto store = std::make_shared<SessionStore>(config.session_idle);
  TriageService service(engine, service_options(config), store);
  httplib::Server server;
  service.register_routes(server);

  std::mutex mu;
  std::condition_variable_any cv;
  std::jthread sweeper([&](std::stop_token stop) {
    std::unique_lock lock(mu);
    while (!cv.wait_for(lock, stop, std::chrono::seconds(60), [] { return false; })) {
      if (stop.stop_requested()) break;
      store->evict_idle();
    }
  });

  log << "serving " << engine->corpus().records.size() << " diseases on http://"
      << config.bind_host << ":" << config.port << "/api/v1\n"
      << std::flush;
  if (!server.listen(config.bind_host, config.port)) {
    log << "error: cannot listen on " << config.bind_host << ":" << config.port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace medmin
