#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "medmin/html.hpp"
#include "medmin/scraper.hpp"
#include "test_support.hpp"

namespace medmin::scrape {
namespace {

using testing::fixtures;
using testing::slurp;

// ---------------------------------------------------------------------------
// HTML tree

TEST(Html, DecodesEntities) {
  EXPECT_EQ(html::decode_entities("a &amp; b &lt;c&gt; &#65;&#x42; &nbsp;x"), "a & b <c> AB  x");
  EXPECT_EQ(html::decode_entities("&bogus; &"), "&bogus; &");
}

TEST(Html, ImpliedEndTagsAndDroppedScripts) {
  html::Document doc("<ul><li>one<li>two</ul><script>var a = '<a>x</a>';</script><p>a<p>b");
  auto lis = html::find_all(doc.root(), [](const html::Node& n) { return n.tag == "li"; });
  ASSERT_EQ(lis.size(), 2u);
  EXPECT_EQ(html::text_content(*lis[1]), "two");
  EXPECT_TRUE(html::find_all(doc.root(), [](const html::Node& n) { return n.tag == "a"; }).empty());
  EXPECT_EQ(html::find_all(doc.root(), [](const html::Node& n) { return n.tag == "p"; }).size(), 2u);
}

TEST(Html, DeepNestingIsBounded) {
  std::string s;
  for (int i = 0; i < 5000; ++i) s += "<div>";
  s += "x";
  html::Document doc(s);
  EXPECT_EQ(html::text_content(doc.root()), "x");
}

// ---------------------------------------------------------------------------
// Disease list

TEST(DiseaseList, FixturePageYieldsExpectedNames) {
  const auto names = parse_disease_list(slurp(fixtures() / "list/nhp_list.html"));
  EXPECT_EQ(names, testing::lines_of(fixtures() / "list/nhp_list.names.txt"));
}

TEST(DiseaseList, EmptyRegionYieldsNothing) {
  EXPECT_TRUE(parse_disease_list("<div class=\"all-disease\"></div>").empty());
}

TEST(DiseaseList, DeduplicatesCaseInsensitively) {
  auto names = parse_disease_list(
      "<div class='all-disease'><a>Malaria</a><a>MALARIA</a><a> malaria </a><a>Flu</a></div>");
  EXPECT_EQ(names, (std::vector<std::string>{"Malaria", "Flu"}));
}

TEST(DiseaseList, MissingRegionNamesSelectors) {
  try {
    parse_disease_list("<div class='other'><a>x</a></div>",
                       {ListSelector::parse("#list"), ListSelector::parse(".all-disease")});
    FAIL() << "expected ScrapeError";
  } catch (const ScrapeError& e) {
    EXPECT_NE(std::string(e.what()).find("#list, .all-disease"), std::string::npos) << e.what();
  }
}

TEST(DiseaseList, FallsBackToLaterSelector) {
  auto names = parse_disease_list("<ul id='az'><li><a>Gout</a></ul>",
                                  {ListSelector::parse(".all-disease"), ListSelector::parse("#az")});
  EXPECT_EQ(names, (std::vector<std::string>{"Gout"}));
}

TEST(DiseaseList, MergeWithPredefined) {
  EXPECT_EQ(merge_with_predefined({"A", "B"}, {"b", "C"}), (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(merge_with_predefined({}, {"X"}), (std::vector<std::string>{"X"}));
  EXPECT_EQ(merge_with_predefined({"X"}, {}), (std::vector<std::string>{"X"}));
  EXPECT_EQ(parse_predefined_list("# c\nMalaria\n\n  Dengue   fever \n"),
            (std::vector<std::string>{"Malaria", "Dengue fever"}));
}

// ---------------------------------------------------------------------------
// Infobox extraction

TEST(Infobox, EveryFixturePageMatchesItsHandWrittenList) {
  for (const auto& slug : testing::page_slugs()) {
    const auto got = extract_infobox_symptoms(slurp(fixtures() / "pages" / (slug + ".html")));
    EXPECT_EQ(got.symptoms, testing::lines_of(fixtures() / "pages" / (slug + ".symptoms.txt"))) << slug;
    EXPECT_FALSE(got.page_title.empty()) << slug;
  }
}

std::string infobox(const std::string& label, const std::string& cell) {
  return "<html><head><title>X - Wikipedia</title></head><body><table class=\"infobox\"><tr><th>" + label +
         "</th><td>" + cell + "</td></tr></table><p>Lead text[2].</p></body></html>";
}

TEST(Infobox, FootnotesAreStripped) {
  EXPECT_EQ(extract_infobox_symptoms(infobox("Symptoms", "Often none[1]")).symptoms,
            (std::vector<std::string>{"Often none"}));
  EXPECT_EQ(strip_footnotes("a[12] b[x] c[]"), "a b[x] c[]");
}

TEST(Infobox, SingleItem) {
  EXPECT_EQ(extract_infobox_symptoms(infobox("Symptoms", "Wheezing")).symptoms,
            (std::vector<std::string>{"Wheezing"}));
}

TEST(Infobox, NoSymptomsRow) {
  auto e = extract_infobox_symptoms(infobox("Causes", "Virus"));
  EXPECT_TRUE(e.symptoms.empty());
  EXPECT_TRUE(e.symptoms_field_raw.empty());
  EXPECT_TRUE(extract_infobox_symptoms("<p>no table</p>").symptoms.empty());
}

TEST(Infobox, SeparatorsAndParentheses) {
  auto e = extract_infobox_symptoms(infobox("Symptoms", "Fever; cough, pain (chest, back)<br>rash"));
  EXPECT_EQ(e.symptoms, (std::vector<std::string>{"Fever", "cough", "pain (chest, back)", "rash"}));
}

TEST(Article, TitleDescriptionTreatment) {
  auto a = extract_article(infobox("Treatment", "Rest, fluids"));
  EXPECT_EQ(a.title, "X");
  EXPECT_EQ(a.description, "Lead text.");
  EXPECT_EQ(a.treatment, (std::vector<std::string>{"Rest", "fluids"}));

  auto dengue = extract_article(slurp(fixtures() / "pages/dengue.html"));
  EXPECT_FALSE(dengue.description.empty());
  EXPECT_FALSE(dengue.treatment.empty());
  auto cold = extract_article(slurp(fixtures() / "pages/common-cold.html"));
  EXPECT_TRUE(cold.treatment.empty());
  auto asthma = extract_article(slurp(fixtures() / "pages/asthma.html"));
  EXPECT_FALSE(asthma.treatment.empty());  // "Medication" row
}

// Neither parser may throw or crash on arbitrary bytes.
TEST(ParserFuzz, RandomBytesNeverThrow) {
  std::mt19937 rng(99);
  const std::string alphabet = "<>/=\"' abcdilpstruhyx-.#&;![]\n\t";
  std::uniform_int_distribution<int> any(0, 255), pick(0, static_cast<int>(alphabet.size()) - 1),
      len(0, 400), mode(0, 2);
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const int m = mode(rng);
    for (int k = len(rng); k > 0; --k)
      s.push_back(m == 0 ? static_cast<char>(any(rng)) : alphabet[pick(rng)]);
    if (m == 2) s = "<div class=\"all-disease\">" + s + "<table class=infobox><tr><th>Symptoms<td>" + s;
    EXPECT_NO_THROW(extract_article(s));
    try {
      parse_disease_list(s);
    } catch (const ScrapeError&) {
    }
  }
}

// ---------------------------------------------------------------------------
// Resolution

ResolverConfig fixture_resolver() {
  ResolverConfig c;
  c.backend = ResolverBackend::FixtureMap;
  c.fixture_dir = fixtures();
  return c;
}

TEST(FixtureResolver, HitAndMiss) {
  auto t = std::make_shared<testing::ForbiddenTransport>();
  PageResolver r(fixture_resolver(), t);
  auto page = r.resolve("dengue   FEVER");
  ASSERT_TRUE(page);
  EXPECT_EQ(page->url, "fixture://pages/dengue.html");
  EXPECT_FALSE(r.resolve("Unknownitis"));
  EXPECT_THROW(r.resolve("  "), ScrapeError);
  EXPECT_EQ(t->calls, 0);
}

/// Scripted transport: per-URL queues of responses; the last one repeats.
class FakeTransport : public Transport {
 public:
  HttpResponse get(const std::string& url, const std::string& ua) override {
    std::lock_guard lock(mu);
    calls.push_back({url, std::chrono::steady_clock::now()});
    user_agents.push_back(ua);
    for (auto& [prefix, q] : routes) {
      if (url.rfind(prefix, 0) != 0) continue;
      if (q.empty()) break;
      auto r = q.front();
      if (q.size() > 1) q.pop_front();
      if (r.status < 0) throw TransportError("connection reset");
      return r;
    }
    return {404, ""};
  }
  std::mutex mu;
  std::vector<std::pair<std::string, std::deque<HttpResponse>>> routes;
  std::vector<std::pair<std::string, std::chrono::steady_clock::time_point>> calls;
  std::vector<std::string> user_agents;
};

ResolverConfig live_resolver(const std::filesystem::path& cache) {
  ResolverConfig c;
  c.backend = ResolverBackend::TitleSearch;
  c.cache_dir = cache;
  c.politeness_delay = std::chrono::milliseconds(50);
  c.backoff_base = std::chrono::milliseconds(1);
  c.search_endpoint = "https://wiki.test/w/api.php";
  return c;
}

std::shared_ptr<FakeTransport> wiki_transport() {
  auto t = std::make_shared<FakeTransport>();
  t->routes.push_back({"https://wiki.test/w/api.php",
                       {{200, R"(["Dengue fever",["Dengue fever"],[""],["https://wiki.test/wiki/Dengue_fever"]])"}}});
  t->routes.push_back({"https://wiki.test/wiki/Dengue_fever", {{200, slurp(fixtures() / "pages/dengue.html")}}});
  return t;
}

TEST(LiveResolver, CachesAndServesSecondResolveOffline) {
  testing::TempDir dir;
  auto t = wiki_transport();
  {
    PageResolver r(live_resolver(dir.path()), t);
    auto page = r.resolve("Dengue fever");
    ASSERT_TRUE(page);
    EXPECT_FALSE(page->from_cache);
    EXPECT_EQ(page->url, "https://wiki.test/wiki/Dengue_fever");
    EXPECT_EQ(r.network_fetches(), 2u);  // search + article
  }
  const auto cached = slurp(PageResolver(live_resolver(dir.path()), t).cache_path("Dengue fever", ".html"));
  EXPECT_EQ(cached, slurp(fixtures() / "pages/dengue.html"));
  const auto before = t->calls.size();
  PageResolver again(live_resolver(dir.path()), t);
  auto page = again.resolve("dengue  fever");
  ASSERT_TRUE(page);
  EXPECT_TRUE(page->from_cache);
  EXPECT_EQ(page->html, cached);
  EXPECT_EQ(again.network_fetches(), 0u);
  EXPECT_EQ(t->calls.size(), before);
  for (const auto& ua : t->user_agents) EXPECT_FALSE(ua.empty());
}

TEST(LiveResolver, NoSearchResultIsUnresolved) {
  testing::TempDir dir;
  auto t = std::make_shared<FakeTransport>();
  t->routes.push_back({"https://wiki.test/w/api.php", {{200, R"(["Zzz",[],[],[]])"}}});
  PageResolver r(live_resolver(dir.path()), t);
  EXPECT_FALSE(r.resolve("Zzz"));
}

TEST(LiveResolver, RetriesAreCappedAndReported) {
  testing::TempDir dir;
  auto t = std::make_shared<FakeTransport>();
  t->routes.push_back({"https://wiki.test/", {{503, ""}}});
  PageResolver r(live_resolver(dir.path()), t);
  try {
    r.resolve("Dengue fever");
    FAIL() << "expected FetchError";
  } catch (const FetchError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
  EXPECT_EQ(t->calls.size(), 3u);
}

TEST(LiveResolver, RecoversAfterTransientFailures) {
  testing::TempDir dir;
  auto t = wiki_transport();
  auto& q = t->routes[0].second;
  q.push_front({-1, ""});
  q.push_front({429, ""});
  PageResolver r(live_resolver(dir.path()), t);
  EXPECT_TRUE(r.resolve("Dengue fever"));
  EXPECT_EQ(r.network_fetches(), 4u);
}

// The limiter spaces its grants exactly; the transport sees the request a
// moment after the grant, so allow a little scheduling slack.
constexpr auto kJitter = std::chrono::milliseconds(5);

TEST(LiveResolver, PolitenessGapBetweenFetches) {
  testing::TempDir dir;
  auto t = std::make_shared<FakeTransport>();
  t->routes.push_back({"https://wiki.test/", {{200, "[]"}}});
  auto config = live_resolver(dir.path());
  PageResolver r(config, t);
  for (auto n : {"a", "b", "c", "d"}) r.resolve(n);
  ASSERT_EQ(t->calls.size(), 4u);
  for (std::size_t i = 1; i < t->calls.size(); ++i)
    EXPECT_GE(t->calls[i].second - t->calls[i - 1].second, config.politeness_delay - kJitter);
}

TEST(LiveResolver, ConcurrentScrapeStillRespectsGap) {
  testing::TempDir dir;
  auto t = std::make_shared<FakeTransport>();
  t->routes.push_back({"https://wiki.test/w/api.php", {{200, "[]"}}});
  write_file(dir / "list.html", "<div class=all-disease><a>A</a><a>B</a><a>C</a><a>D</a><a>E</a></div>");
  ScrapeConfig sc;
  sc.list_source = (dir / "list.html").string();
  sc.resolver = live_resolver(dir / "cache");
  sc.concurrency = 4;
  auto result = scrape_corpus(sc, t);
  EXPECT_EQ(result.unresolved, 5u);
  auto calls = t->calls;
  std::sort(calls.begin(), calls.end(), [](auto& a, auto& b) { return a.second < b.second; });
  for (std::size_t i = 1; i < calls.size(); ++i)
    EXPECT_GE(calls[i].second - calls[i - 1].second, sc.resolver.politeness_delay - kJitter);
}

// ---------------------------------------------------------------------------
// Batch scrape

TEST(ScrapeCorpus, FixtureRunIsHermetic) {
  testing::TempDir dir;
  auto config = testing::fixture_config(dir / "x.jsonl");
  auto t = std::make_shared<testing::ForbiddenTransport>();
  auto result = scrape_corpus(config.scrape, t);
  EXPECT_EQ(t->calls, 0);
  EXPECT_EQ(result.records.size(), 12u);
  EXPECT_EQ(result.unresolved, 0u);
  EXPECT_TRUE(result.warnings.empty());
  EXPECT_EQ(result.scraped_names, 12u);
  EXPECT_EQ(result.predefined_names, 3u);
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    EXPECT_EQ(r.id.value, i);
    if (i) {
      EXPECT_LT(result.records[i - 1].name, r.name);
    }
    EXPECT_EQ(r.source.kind, SourceKind::ScrapedNhp);
    EXPECT_TRUE(r.source.url.starts_with("fixture://pages/"));
    EXPECT_FALSE(r.raw_symptoms.empty()) << r.name;
  }
}

TEST(ScrapeCorpus, UnmappedNameBecomesWarning) {
  testing::TempDir dir;
  write_file(dir / "pre.txt", "Yellow fever\n");
  auto config = testing::fixture_config(dir / "x.jsonl");
  config.scrape.predefined_path = (dir / "pre.txt").string();
  auto result = scrape_corpus(config.scrape, std::make_shared<testing::ForbiddenTransport>());
  EXPECT_EQ(result.records.size(), 13u);
  EXPECT_EQ(result.unresolved, 1u);
  ASSERT_EQ(result.warnings.size(), 1u);
  EXPECT_NE(result.warnings[0].find("Yellow fever"), std::string::npos);
  auto it = std::find_if(result.records.begin(), result.records.end(),
                         [](auto& r) { return r.name == "Yellow fever"; });
  ASSERT_NE(it, result.records.end());
  EXPECT_EQ(it->source.kind, SourceKind::Predefined);
  EXPECT_TRUE(it->raw_symptoms.empty());
}

TEST(ScrapeCorpus, ConcurrencyDoesNotChangeOutput) {
  testing::TempDir dir;
  auto config = testing::fixture_config(dir / "x.jsonl");
  auto serial = scrape_corpus(config.scrape, nullptr);
  config.scrape.concurrency = 4;
  auto parallel = scrape_corpus(config.scrape, nullptr);
  EXPECT_EQ(serial.records, parallel.records);
}

}  // namespace
}  // namespace medmin::scrape
