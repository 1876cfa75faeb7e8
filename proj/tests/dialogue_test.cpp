#include <gtest/gtest.h>

#include <random>

#include "medmin/dataset.hpp"
#include "medmin/dialogue.hpp"
#include "test_support.hpp"

namespace medmin {
namespace {

Normalizer test_normalizer() {
  return Normalizer(load_lexicons({(testing::source_dir() / "tests/data/test_lexicon.txt").string()}));
}

/// Four diseases over a handful of symptoms, normalized with the test lexicon.
std::shared_ptr<const TriageEngine> small_engine() {
  auto rec = [](std::uint32_t id, std::string name, std::vector<std::string> raw) {
    DiseaseRecord r;
    r.id = DiseaseId{id};
    r.name = std::move(name);
    r.raw_symptoms = std::move(raw);
    return r;
  };
  auto normalizer = test_normalizer();
  auto nc = normalize_records({rec(0, "Flu", {"fever", "headache", "cough"}),
                               rec(1, "Measles", {"fever", "rash", "cough"}),
                               rec(2, "Migraine", {"headache", "nausea"}),
                               rec(3, "Hives", {"rash"})},
                              normalizer, 0.75);
  return std::make_shared<const TriageEngine>(nc.corpus, normalizer, DialogueConfig{0.4, 10});
}

SymptomId sid(const TriageEngine& e, std::string_view text) { return *e.corpus().vocabulary.find_text(text); }

std::string snapshot(const Session& s) {
  nlohmann::json j;
  j["id"] = s.id;
  for (auto c : s.confirmed) j["confirmed"].push_back(c.value);
  for (auto c : s.declined) j["declined"].push_back(c.value);
  for (auto c : s.suggested_history) j["suggested"].push_back(c.value);
  j["state"] = std::string(to_string(s.state));
  j["params"] = params_to_json(s.params);
  if (s.last_ranking)
    for (const auto& r : *s.last_ranking) j["ranking"].push_back({r.disease.value, r.score, r.rank, r.zero_score});
  for (const auto& a : s.log) j["log"].push_back({a.action, a.payload});
  return j.dump();
}

TEST(StartSession, DistinctIdsAndParams) {
  auto e = small_engine();
  RankerParams p{RankingModel::Bm25, 1.2, 0.5};
  auto a = e->start_session(p);
  auto b = e->start_session({});
  EXPECT_NE(a.id, b.id);
  EXPECT_EQ(a.id.size(), 32u);
  EXPECT_EQ(a.params, p);
  EXPECT_EQ(a.state, SessionState::Collecting);
  ASSERT_EQ(a.log.size(), 1u);
  EXPECT_EQ(a.log[0].action, "start");
  EXPECT_THROW(e->start_session({RankingModel::Bm25, -1.0, 0.5}), RetrievalError);
}

TEST(MatchSymptom, ExactFuzzyAndUnknown) {
  auto e = small_engine();
  auto s = e->start_session({});
  auto exact = e->match_symptom(s, "Fever");
  ASSERT_TRUE(exact.matched);
  EXPECT_DOUBLE_EQ(exact.similarity, 1.0);
  EXPECT_TRUE(exact.added);

  auto fuzzy = e->match_symptom(s, "pain in the forehead");
  ASSERT_TRUE(fuzzy.matched);
  EXPECT_EQ(*fuzzy.matched, sid(*e, "headache"));
  EXPECT_DOUBLE_EQ(fuzzy.similarity, 0.4);

  auto none = e->match_symptom(s, "xyzzy");
  EXPECT_FALSE(none.matched);
  EXPECT_EQ(none.similarity, 0.0);
  EXPECT_FALSE(e->match_symptom(s, "the of").matched);

  auto again = e->match_symptom(s, "fever");
  EXPECT_TRUE(again.matched);
  EXPECT_FALSE(again.added);
  EXPECT_EQ(s.confirmed, (std::vector<SymptomId>{sid(*e, "fever"), sid(*e, "headache")}));
}

TEST(MatchSymptom, BelowThresholdOffersAlternatives) {
  auto e = small_engine();
  auto m = e->best_match("rash cough fever nausea itch");
  EXPECT_FALSE(m.matched);
  EXPECT_GT(m.similarity, 0.0);
  EXPECT_FALSE(m.alternatives.empty());
  EXPECT_LE(m.alternatives.size(), 3u);
}

TEST(Suggest, CountsExcludeSeedsAndBatchesAreDisjoint) {
  auto e = small_engine();
  auto s = e->start_session({});
  EXPECT_THROW(e->suggest_cooccurring(s, 5), DialogueError);
  e->match_symptom(s, "fever");
  EXPECT_THROW(e->suggest_cooccurring(s, 0), DialogueError);
  auto first = e->suggest_cooccurring(s, 1);
  // fever -> Flu, Measles: cough 2, headache 1, rash 1.
  ASSERT_EQ(first.size(), 1u);
  EXPECT_EQ(first[0], (Suggestion{sid(*e, "cough"), 2}));
  auto rest = e->suggest_cooccurring(s, 5);
  EXPECT_EQ(rest, (std::vector<Suggestion>{{sid(*e, "headache"), 1}, {sid(*e, "rash"), 1}}));
  EXPECT_TRUE(e->suggest_cooccurring(s, 5).empty());
}

TEST(Suggest, FixtureCountsMatchOracle) {
  const auto corpus = testing::fixture_corpus();
  TriageEngine e(corpus, Normalizer(load_lexicons(testing::lexicon_paths())));
  for (const auto& c : testing::fixture_oracle()["cooccurrence"]) {
    auto s = e.start_session({});
    for (const auto& seed : c["seed"]) {
      auto m = e.match_symptom(s, seed.get<std::string>());
      ASSERT_TRUE(m.matched && m.similarity == 1.0) << seed;
    }
    auto got = e.suggest_cooccurring(s, 1000);
    ASSERT_EQ(got.size(), c["suggestions"].size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(corpus->vocabulary.at(got[i].symptom).text, c["suggestions"][i]["symptom"].get<std::string>());
      EXPECT_EQ(got[i].count, c["suggestions"][i]["count"].get<std::size_t>());
    }
  }
}

TEST(RecordResponse, Errors) {
  auto e = small_engine();
  auto s = e->start_session({});
  e->match_symptom(s, "fever");
  auto sug = e->suggest_cooccurring(s, 2);
  auto expect_kind = [&](auto fn, DialogueErrorKind kind) {
    try {
      fn();
      ADD_FAILURE() << "no error";
    } catch (const DialogueError& err) {
      EXPECT_EQ(err.kind(), kind) << err.what();
    }
  };
  expect_kind([&] { e->record_response(s, SymptomId{999}, Answer::Yes); }, DialogueErrorKind::UnknownSymptom);
  expect_kind([&] { e->record_response(s, sid(*e, "nausea"), Answer::Yes); }, DialogueErrorKind::NotSuggested);
  e->record_response(s, sug[0].symptom, Answer::No);
  expect_kind([&] { e->record_response(s, sug[0].symptom, Answer::Yes); }, DialogueErrorKind::DuplicateResponse);
  e->record_response(s, sug[1].symptom, Answer::Yes);
  EXPECT_TRUE(s.is_confirmed(sug[1].symptom));
  EXPECT_TRUE(s.declined.count(sug[0].symptom));
}

TEST(Predict, DefaultTopKAndExplicitK) {
  const auto corpus = testing::fixture_corpus();
  TriageEngine e(corpus, Normalizer(load_lexicons(testing::lexicon_paths())));
  auto s = e.start_session({});
  EXPECT_THROW(e.predict(s), DialogueError);
  e.match_symptom(s, "fever");
  EXPECT_EQ(e.predict(s).size(), 10u);
  EXPECT_EQ(s.state, SessionState::Predicted);
  EXPECT_EQ(e.predict(s, 1).size(), 1u);
  EXPECT_EQ(e.predict(s, 100).size(), 12u);
  EXPECT_THROW(e.match_symptom(s, "rash"), DialogueError);
}

TEST(Predict, DeclinedSymptomsCarryNoWeight) {
  auto e = small_engine();
  auto a = e->start_session({});
  e->match_symptom(a, "fever");
  auto sug = e->suggest_cooccurring(a, 5);
  for (const auto& x : sug) e->record_response(a, x.symptom, Answer::No);
  auto b = e->start_session({});
  e->match_symptom(b, "fever");
  EXPECT_EQ(e->predict(a), e->predict(b));
}

TEST(DiseaseDetail, IndexBounds) {
  const auto corpus = testing::fixture_corpus();
  TriageEngine e(corpus, Normalizer(load_lexicons(testing::lexicon_paths())));
  auto s = e.start_session({});
  e.match_symptom(s, "fever");
  EXPECT_THROW(e.disease_detail(s, 1), DialogueError);
  e.predict(s);
  EXPECT_THROW(e.disease_detail(s, 0), DialogueError);
  EXPECT_THROW(e.disease_detail(s, 11), DialogueError);
  auto v = e.disease_detail(s, 1);
  EXPECT_EQ(v.id, (*s.last_ranking)[0].disease);
  EXPECT_FALSE(v.symptoms.empty());
  EXPECT_FALSE(v.description.empty());
}

TEST(Replay, ReproducesSessionAndLogSurvivesSerialization) {
  auto e = small_engine();
  auto s = e->start_session({RankingModel::Bm25, 1.5, 0.75});
  e->match_symptom(s, "fever");
  e->match_symptom(s, "nothing");
  auto sug = e->suggest_cooccurring(s, 2);
  e->record_response(s, sug[0].symptom, Answer::Yes);
  e->record_response(s, sug[1].symptom, Answer::No);
  e->predict(s, 3);
  e->close(s);
  const auto text = serialize_log(s.log);
  auto r = e->replay(parse_log(text));
  EXPECT_EQ(snapshot(r), snapshot(s));
  EXPECT_THROW(e->replay({}), DialogueError);
}

/// Random walks over the state machine. Failed calls must leave the session
/// untouched; successful ones keep every invariant and replay exactly.
TEST(StateMachine, RandomActionSequences) {
  const auto corpus = testing::fixture_corpus();
  TriageEngine e(corpus, Normalizer(load_lexicons(testing::lexicon_paths())));
  std::vector<std::string> inputs;
  for (const auto& c : corpus->vocabulary.entries()) inputs.push_back(c.text);
  for (auto x : {"", "zzz", "pain", "head ache", "high temperature", "FEVER!!"}) inputs.emplace_back(x);
  std::mt19937 rng(77);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  for (int run = 0; run < 300; ++run) {
    auto s = e.start_session(pick(2) ? RankerParams{} : RankerParams{RankingModel::Bm25, 1.5, 0.75});
    for (int step = 0; step < 25; ++step) {
      const auto before = snapshot(s);
      bool ok = true;
      try {
        switch (pick(6)) {
          case 0: e.match_symptom(s, inputs[pick(inputs.size())]); break;
          case 1: {
            auto sug = e.suggest_cooccurring(s, 1 + pick(5));
            for (const auto& x : sug) {
              EXPECT_FALSE(s.is_confirmed(x.symptom));
              EXPECT_FALSE(s.declined.count(x.symptom));
            }
            break;
          }
          case 2: e.record_response(s, SymptomId{static_cast<std::uint32_t>(pick(corpus->vocabulary.size() + 2))},
                                    pick(2) ? Answer::Yes : Answer::No); break;
          case 3: EXPECT_LE(e.predict(s).size(), 10u); break;
          case 4: e.disease_detail(s, pick(12)); break;
          case 5: if (pick(8) == 0) e.close(s); break;
        }
      } catch (const DialogueError&) {
        ok = false;
      }
      if (!ok) {
        ASSERT_EQ(snapshot(s), before);
      }
      std::set<SymptomId> uniq(s.confirmed.begin(), s.confirmed.end());
      ASSERT_EQ(uniq.size(), s.confirmed.size());
      for (auto d : s.declined) ASSERT_FALSE(uniq.count(d));
      if (s.state == SessionState::Predicted) {
        ASSERT_TRUE(s.last_ranking);
      }
    }
    ASSERT_EQ(snapshot(e.replay(parse_log(serialize_log(s.log)))), snapshot(s)) << "run " << run;
  }
}

}  // namespace
}  // namespace medmin
