#pragma once

// Disease-list and infobox scraping. Parsing is pure; network access goes
// through a Transport so tests can run fully offline.

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "medmin/corpus.hpp"
#include "medmin/html.hpp"
#include "medmin/text.hpp"

namespace medmin::scrape {

class ScrapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a fetch keeps failing after every retry.
class FetchError : public ScrapeError {
 public:
  FetchError(const std::string& what, int attempts)
      : ScrapeError(what + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// ---------------------------------------------------------------------------
// Disease list

/// "#id" selects by element id, ".cls" (or a bare word) by class.
struct ListSelector {
  enum class Kind { Id, Class };
  Kind kind = Kind::Class;
  std::string value;

  static ListSelector parse(std::string_view s) {
    s = text::trim_view(s);
    if (!s.empty() && s.front() == '#') return {Kind::Id, std::string(s.substr(1))};
    if (!s.empty() && s.front() == '.') return {Kind::Class, std::string(s.substr(1))};
    return {Kind::Class, std::string(s)};
  }

  std::string str() const { return (kind == Kind::Id ? "#" : ".") + value; }

  bool matches(const html::Node& n) const {
    if (!n.is_element() || value.empty()) return false;
    return kind == Kind::Id ? n.has_id(value) : n.has_class(value);
  }
};

inline const std::vector<ListSelector>& default_list_selectors() {
  static const std::vector<ListSelector> sel{ListSelector::parse(".all-disease")};
  return sel;
}

/// Anchor texts of the first region matching one of `selectors`, deduplicated
/// case-insensitively in page order.
inline std::vector<std::string> parse_disease_list(
    std::string_view html_text,
    const std::vector<ListSelector>& selectors = default_list_selectors()) {
  html::Document doc(html_text);
  const html::Node* region = nullptr;
  for (const auto& sel : selectors) {
    region = html::find_first(doc.root(), [&](const html::Node& n) { return sel.matches(n); });
    if (region) break;
  }
  if (!region) {
    std::string tried;
    for (const auto& sel : selectors) tried += (tried.empty() ? "" : ", ") + sel.str();
    throw ScrapeError("list region not found (selectors tried: " + tried + ")");
  }
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto* a : html::find_all(*region, [](const html::Node& n) { return n.tag == "a"; })) {
    auto name = html::text_content(*a);
    if (name.empty()) continue;
    if (seen.insert(text::lower(name)).second) names.push_back(std::move(name));
  }
  return names;
}

/// Scraped names first, then predefined names not already present (case-insensitive).
inline std::vector<std::string> merge_with_predefined(const std::vector<std::string>& scraped,
                                                      const std::vector<std::string>& predefined) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto* list : {&scraped, &predefined})
    for (const auto& n : *list)
      if (seen.insert(text::lower(n)).second) out.push_back(n);
  return out;
}

/// One name per line; '#' starts a comment line.
inline std::vector<std::string> parse_predefined_list(std::string_view content) {
  std::vector<std::string> out;
  for (const auto& line : text::split(content, '\n')) {
    auto t = text::collapse_ws(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Article extraction

struct InfoboxExtract {
  std::string page_title;
  std::string symptoms_field_raw;
  std::vector<std::string> symptoms;
  std::chrono::system_clock::time_point fetched_at{};
  std::string source_url;
};

/// Removes citation markers of the form [digits].
inline std::string strip_footnotes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '[') {
      std::size_t j = i + 1;
      while (j < s.size() && s[j] >= '0' && s[j] <= '9') ++j;
      if (j > i + 1 && j < s.size() && s[j] == ']') {
        i = j + 1;
        continue;
      }
    }
    out.push_back(s[i++]);
  }
  return out;
}

namespace detail {

inline constexpr char kItemBreak = '\x1f';

// Cell text with list-item and <br> boundaries marked by kItemBreak.
inline std::string cell_text_with_breaks(const html::Node& cell) {
  std::string out;
  std::function<void(const html::Node&, std::size_t)> rec = [&](const html::Node& n,
                                                                 std::size_t depth) {
    if (n.kind == html::Node::Kind::Text) {
      out += n.text;
      return;
    }
    if (n.tag == "br") out.push_back(kItemBreak);
    if (n.tag == "li") out.push_back(kItemBreak);
    if (depth < html::detail::TreeBuilder::kMaxDepth)
      for (const auto& c : n.children) rec(*c, depth + 1);
    if (n.tag == "li") out.push_back(kItemBreak);
  };
  rec(cell, 0);
  return out;
}

// Splits on commas, semicolons and item breaks outside parentheses.
inline std::vector<std::string> split_items(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  auto flush = [&] {
    auto t = text::collapse_ws(cur);
    if (!t.empty()) out.push_back(std::move(t));
    cur.clear();
  };
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')' && depth > 0) --depth;
    if (c == kItemBreak || ((c == ',' || c == ';') && depth == 0)) {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

inline bool inside(const html::Node& n, std::string_view tag) {
  for (const html::Node* p = n.parent; p; p = p->parent)
    if (p->tag == tag) return true;
  return false;
}

}  // namespace detail

struct ArticleExtract {
  std::string title;
  std::string symptoms_raw;
  std::vector<std::string> symptoms;
  std::vector<std::string> treatment;
  std::string description;
};

/// Parses an encyclopedia article once and pulls out everything the corpus needs.
inline ArticleExtract extract_article(std::string_view html_text) {
  html::Document doc(html_text);
  ArticleExtract out;

  if (const auto* h1 = html::find_first(doc.root(), [](const html::Node& n) {
        return n.tag == "h1" && (n.has_id("firstHeading") || n.has_class("firstHeading"));
      })) {
    out.title = html::text_content(*h1);
  }
  if (out.title.empty()) {
    if (const auto* t =
            html::find_first(doc.root(), [](const html::Node& n) { return n.tag == "title"; })) {
      out.title = html::text_content(*t);
      constexpr std::string_view suffix = " - Wikipedia";
      if (out.title.size() > suffix.size() &&
          out.title.compare(out.title.size() - suffix.size(), suffix.size(), suffix) == 0)
        out.title.resize(out.title.size() - suffix.size());
    }
  }

  const auto* infobox = html::find_first(doc.root(), [](const html::Node& n) {
    return n.tag == "table" && n.has_class("infobox");
  });
  auto row_value = [&](std::initializer_list<std::string_view> labels) -> const html::Node* {
    if (!infobox) return nullptr;
    for (auto label : labels) {
      for (const auto* tr :
           html::find_all(*infobox, [](const html::Node& n) { return n.tag == "tr"; })) {
        const html::Node* header = nullptr;
        const html::Node* value = nullptr;
        for (const auto& c : tr->children) {
          if (c->tag == "th" && !header) header = c.get();
          if (c->tag == "td" && !value) value = c.get();
        }
        if (header && value && text::iequals(html::text_content(*header), label)) return value;
      }
    }
    return nullptr;
  };

  if (const auto* cell = row_value({"Symptoms"})) {
    auto raw = strip_footnotes(detail::cell_text_with_breaks(*cell));
    out.symptoms = detail::split_items(raw);
    if (!out.symptoms.empty()) {
      std::replace(raw.begin(), raw.end(), detail::kItemBreak, ';');
      out.symptoms_raw = text::collapse_ws(raw);
    }
  }
  if (const auto* cell = row_value({"Treatment", "Medication"}))
    out.treatment = detail::split_items(strip_footnotes(detail::cell_text_with_breaks(*cell)));

  for (const auto* p : html::find_all(doc.root(), [](const html::Node& n) { return n.tag == "p"; })) {
    if (detail::inside(*p, "table")) continue;
    auto t = text::collapse_ws(strip_footnotes(html::text_content(*p)));
    if (!t.empty()) {
      out.description = std::move(t);
      break;
    }
  }
  return out;
}

inline InfoboxExtract extract_infobox_symptoms(std::string_view html_text) {
  auto a = extract_article(html_text);
  InfoboxExtract e;
  e.page_title = std::move(a.title);
  e.symptoms_field_raw = std::move(a.symptoms_raw);
  e.symptoms = std::move(a.symptoms);
  return e;
}

inline std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Raised by transports for connection-level failures; retried by the resolver.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse get(const std::string& url, const std::string& user_agent) = 0;
};

/// Enforces a minimum gap between consecutive fetches across all workers.
class RateLimiter {
 public:
  explicit RateLimiter(std::chrono::milliseconds delay) : delay_(delay) {}

  void acquire() {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    if (last_ && now < *last_ + delay_) std::this_thread::sleep_until(*last_ + delay_);
    last_ = std::chrono::steady_clock::now();
  }

  std::chrono::milliseconds delay() const { return delay_; }

 private:
  std::mutex mu_;
  std::chrono::milliseconds delay_;
  std::optional<std::chrono::steady_clock::time_point> last_;
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw ScrapeError("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

inline std::string normalize_name(std::string_view name) { return text::lower(text::collapse_ws(name)); }

inline std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (text::is_alnum(static_cast<char>(c)) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ScrapeError("cannot read " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ScrapeError("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

inline std::string format_time(std::chrono::system_clock::time_point tp) {
  const auto t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Page resolution

enum class ResolverBackend { FixtureMap, TitleSearch };

struct ResolverConfig {
  ResolverBackend backend = ResolverBackend::FixtureMap;
  // Directory holding resolver_map.txt and pages/ for the fixture backend.
  std::filesystem::path fixture_dir;
  std::filesystem::path cache_dir = ".medmin-cache";
  std::chrono::milliseconds politeness_delay{1000};
  std::string user_agent = "medmin-scraper/0.1 (symptom corpus builder; offline-first)";
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  std::string search_endpoint = "https://en.wikipedia.org/w/api.php";
};

struct ResolvedPage {
  std::string title;
  std::string url;
  std::string html;
  std::chrono::system_clock::time_point fetched_at{};
  bool from_cache = false;
};

/// Parses "name<TAB>slug" lines. Names compare case-insensitively.
inline std::map<std::string, std::string> parse_resolver_map(std::string_view content) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split(content, '\n')) {
    ++line_no;
    auto t = text::trim_view(line);
    if (t.empty() || t.front() == '#') continue;
    auto tab = t.find('\t');
    if (tab == std::string_view::npos)
      throw ScrapeError("resolver map line " + std::to_string(line_no) + ": expected name<TAB>slug");
    out[normalize_name(t.substr(0, tab))] = text::trim(t.substr(tab + 1));
  }
  return out;
}

class PageResolver {
 public:
  PageResolver(ResolverConfig config, std::shared_ptr<Transport> transport)
      : config_(std::move(config)),
        transport_(std::move(transport)),
        limiter_(std::make_shared<RateLimiter>(config_.politeness_delay)) {
    if (config_.backend == ResolverBackend::FixtureMap)
      map_ = parse_resolver_map(read_file(config_.fixture_dir / "resolver_map.txt"));
  }

  const ResolverConfig& config() const { return config_; }

  /// Requests that went out over the transport (cache hits excluded).
  std::size_t network_fetches() const { return fetches_.load(); }

  /// Returns nullopt when the name cannot be resolved. Throws FetchError when
  /// the network keeps failing.
  std::optional<ResolvedPage> resolve(std::string_view name) {
    if (text::trim_view(name).empty()) throw ScrapeError("disease name is empty");
    if (config_.backend == ResolverBackend::FixtureMap) return resolve_fixture(name);
    return resolve_live(name);
  }

  /// Rate-limited GET with retry and exponential backoff on transport errors,
  /// 429 and 5xx. Other statuses are returned to the caller.
  HttpResponse fetch(const std::string& url) {
    if (!transport_) throw ScrapeError("no transport configured for " + url);
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      if (attempt > 1) std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 2)));
      limiter_->acquire();
      ++fetches_;
      try {
        auto resp = transport_->get(url, config_.user_agent);
        if (resp.status != 429 && resp.status < 500 && resp.status != 0) return resp;
        last_error = "HTTP " + std::to_string(resp.status) + " from " + url;
      } catch (const TransportError& e) {
        last_error = e.what();
      }
    }
    throw FetchError(last_error, config_.max_attempts);
  }

  std::filesystem::path cache_path(std::string_view name, std::string_view ext) const {
    return config_.cache_dir / (sha256_hex(normalize_name(name)) + std::string(ext));
  }

 private:
  std::optional<ResolvedPage> resolve_fixture(std::string_view name) {
    auto it = map_.find(normalize_name(name));
    if (it == map_.end()) return std::nullopt;
    const auto rel = "pages/" + it->second + ".html";
    ResolvedPage page;
    page.html = read_file(config_.fixture_dir / rel);
    page.title = std::string(name);
    page.url = "fixture://" + rel;
    return page;
  }

  std::optional<ResolvedPage> resolve_live(std::string_view name) {
    const auto html_path = cache_path(name, ".html");
    const auto meta_path = cache_path(name, ".meta");
    std::error_code ec;
    if (std::filesystem::exists(html_path, ec) && std::filesystem::exists(meta_path, ec)) {
      auto meta = nlohmann::json::parse(read_file(meta_path), nullptr, false);
      if (!meta.is_discarded() && meta.is_object()) {
        ResolvedPage page;
        page.html = read_file(html_path);
        page.url = meta.value("url", "");
        page.title = meta.value("title", std::string(name));
        page.from_cache = true;
        return page;
      }
    }

    const auto search_url = config_.search_endpoint +
                            "?action=opensearch&limit=1&namespace=0&format=json&search=" +
                            url_encode(text::collapse_ws(name));
    auto search = fetch(search_url);
    if (search.status != 200) return std::nullopt;
    auto results = nlohmann::json::parse(search.body, nullptr, false);
    if (results.is_discarded() || !results.is_array() || results.size() < 4 ||
        !results[1].is_array() || results[1].empty() || !results[3].is_array() ||
        results[3].empty() || !results[3][0].is_string())
      return std::nullopt;

    ResolvedPage page;
    page.title = results[1][0].is_string() ? results[1][0].get<std::string>() : std::string(name);
    page.url = results[3][0].get<std::string>();
    auto article = fetch(page.url);
    if (article.status != 200) return std::nullopt;
    page.html = std::move(article.body);
    page.fetched_at = std::chrono::system_clock::now();

    std::filesystem::create_directories(config_.cache_dir, ec);
    write_file(html_path, page.html);
    nlohmann::json meta{{"url", page.url}, {"title", page.title},
                        {"fetched_at", format_time(page.fetched_at)}};
    write_file(meta_path, meta.dump());
    return page;
  }

  ResolverConfig config_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<RateLimiter> limiter_;
  std::map<std::string, std::string> map_;
  std::atomic<std::size_t> fetches_{0};
};

// ---------------------------------------------------------------------------
// Batch scrape

struct ScrapeConfig {
  // A file path, or an http(s) URL fetched through the resolver's transport.
  std::string list_source;
  std::string predefined_path;  // optional
  std::vector<ListSelector> selectors = default_list_selectors();
  ResolverConfig resolver;
  std::size_t concurrency = 1;
};

struct ScrapeResult {
  std::vector<DiseaseRecord> records;  // sorted by name, ids assigned in that order
  std::vector<std::string> warnings;
  std::size_t scraped_names = 0;
  std::size_t predefined_names = 0;
  std::size_t unresolved = 0;
};

inline bool is_url(std::string_view s) {
  return text::starts_with(s, "http://") || text::starts_with(s, "https://");
}

/// Runs list parsing, predefined merge, page resolution and infobox
/// extraction. Per-disease failures become warnings; list failures throw.
inline ScrapeResult scrape_corpus(const ScrapeConfig& config, std::shared_ptr<Transport> transport) {
  PageResolver resolver(config.resolver, std::move(transport));

  std::string list_html;
  if (is_url(config.list_source)) {
    auto resp = resolver.fetch(config.list_source);
    if (resp.status != 200)
      throw ScrapeError("list source returned HTTP " + std::to_string(resp.status));
    list_html = std::move(resp.body);
  } else {
    list_html = read_file(config.list_source);
  }
  const auto scraped = parse_disease_list(list_html, config.selectors);
  std::vector<std::string> predefined;
  if (!config.predefined_path.empty())
    predefined = parse_predefined_list(read_file(config.predefined_path));
  auto names = merge_with_predefined(scraped, predefined);

  std::set<std::string> scraped_lower;
  for (const auto& n : scraped) scraped_lower.insert(text::lower(n));

  std::sort(names.begin(), names.end());

  struct Slot {
    DiseaseRecord record;
    std::optional<std::string> warning;
    bool unresolved = false;
  };
  std::vector<Slot> slots(names.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < names.size(); i = next++) {
      auto& slot = slots[i];
      auto& r = slot.record;
      r.id = DiseaseId{static_cast<std::uint32_t>(i)};
      r.name = names[i];
      r.source.kind = scraped_lower.count(text::lower(names[i])) ? SourceKind::ScrapedNhp
                                                                  : SourceKind::Predefined;
      try {
        auto page = resolver.resolve(names[i]);
        if (!page) {
          slot.unresolved = true;
          slot.warning = "unresolved disease: " + names[i];
          continue;
        }
        auto article = extract_article(page->html);
        r.source.url = page->url;
        r.raw_symptoms = std::move(article.symptoms);
        r.description = std::move(article.description);
        r.treatment = join(article.treatment, ", ");
        if (r.raw_symptoms.empty()) slot.warning = "no symptoms found for " + names[i];
      } catch (const std::exception& e) {
        slot.unresolved = true;
        slot.warning = names[i] + ": " + e.what();
      }
    }
  };

  const auto workers = std::max<std::size_t>(1, std::min(config.concurrency, names.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  ScrapeResult result;
  result.scraped_names = scraped.size();
  result.predefined_names = predefined.size();
  for (auto& s : slots) {
    if (s.warning) result.warnings.push_back(*s.warning);
    if (s.unresolved) ++result.unresolved;
    result.records.push_back(std::move(s.record));
  }
  return result;
}

}  // namespace medmin::scrape
