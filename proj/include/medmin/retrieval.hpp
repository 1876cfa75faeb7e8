#pragma once

// Lexical ranking of diseases against a set of canonical symptoms.
// Two models share one interface: TF-IDF with cosine similarity, and Okapi BM25.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "medmin/corpus.hpp"

namespace medmin {

class RetrievalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sparse non-negative weights; zero weights are never stored.
class WeightedVector {
 public:
  void set(SymptomId t, double w) {
    if (!(w >= 0.0)) throw RetrievalError("weights must be non-negative");
    if (w == 0.0)
      weights_.erase(t);
    else
      weights_[t] = w;
  }
  double get(SymptomId t) const {
    auto it = weights_.find(t);
    return it == weights_.end() ? 0.0 : it->second;
  }
  bool empty() const { return weights_.empty(); }
  std::size_t size() const { return weights_.size(); }
  const std::map<SymptomId, double>& weights() const { return weights_; }

  double norm() const {
    double s = 0.0;
    for (const auto& [t, w] : weights_) s += w * w;
    return std::sqrt(s);
  }

 private:
  std::map<SymptomId, double> weights_;
};

enum class RankingModel { TfidfCosine, Bm25 };

inline std::string_view to_string(RankingModel m) {
  return m == RankingModel::Bm25 ? "bm25" : "tfidf";
}

inline RankingModel parse_ranking_model(std::string_view s) {
  if (s == "tfidf" || s == "tfidf-cosine") return RankingModel::TfidfCosine;
  if (s == "bm25") return RankingModel::Bm25;
  throw RetrievalError("unknown ranking model '" + std::string(s) + "' (expected tfidf or bm25)");
}

struct RankerParams {
  RankingModel model = RankingModel::TfidfCosine;
  double k1 = 1.5;
  double b = 0.75;

  void validate() const {
    if (!(k1 > 0.0)) throw RetrievalError("k1 must be > 0");
    if (!(b >= 0.0 && b <= 1.0)) throw RetrievalError("b must be in [0,1]");
  }
  bool operator==(const RankerParams&) const = default;
};

struct RankedDisease {
  DiseaseId disease;
  double score = 0.0;
  std::size_t rank = 0;
  bool zero_score = false;
  bool operator==(const RankedDisease&) const = default;
};

/// ln(N / df). Throws for a term that no disease contains.
inline double idf(const CorpusIndex& index, SymptomId t) {
  const auto df = index.df(t);
  if (df == 0) throw RetrievalError("unknown term " + std::to_string(t.value));
  return std::log(static_cast<double>(index.N()) / static_cast<double>(df));
}

inline WeightedVector tfidf_vector(const CorpusIndex& index, DiseaseId d) {
  if (!index.has_disease(d)) throw RetrievalError("unknown disease " + std::to_string(d.value));
  WeightedVector v;
  for (auto t : index.terms(d)) v.set(t, index.tf(d, t) * idf(index, t));
  return v;
}

/// Query terms as tf = 1, weighted by idf. Unindexed terms are dropped.
inline WeightedVector query_vector(const CorpusIndex& index, const std::set<SymptomId>& query) {
  WeightedVector v;
  for (auto t : query)
    if (index.has_term(t)) v.set(t, idf(index, t));
  return v;
}

/// dot(q, d) / (|q| |d|); 0 when either vector is zero.
inline double cosine(const WeightedVector& q, const WeightedVector& d) {
  const double nq = q.norm(), nd = d.norm();
  if (nq == 0.0 || nd == 0.0) return 0.0;
  const auto& small = q.size() <= d.size() ? q : d;
  const auto& large = q.size() <= d.size() ? d : q;
  double dot = 0.0;
  for (const auto& [t, w] : small.weights()) dot += w * large.get(t);
  return std::clamp(dot / (nq * nd), 0.0, 1.0);
}

inline double bm25_idf(const CorpusIndex& index, SymptomId t) {
  const double n = static_cast<double>(index.N());
  const double df = static_cast<double>(index.df(t));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

inline double bm25(const CorpusIndex& index, const std::set<SymptomId>& query, DiseaseId d,
                   const RankerParams& params) {
  if (!index.has_disease(d)) throw RetrievalError("unknown disease " + std::to_string(d.value));
  const double len_norm =
      1.0 - params.b + params.b * static_cast<double>(index.doc_len(d)) / index.avg_doc_len();
  double score = 0.0;
  for (auto t : query) {
    if (!index.has_term(t)) continue;
    const double tf = index.tf(d, t);
    if (tf == 0.0) continue;
    score += bm25_idf(index, t) * (tf * (params.k1 + 1.0)) / (tf + params.k1 * len_norm);
  }
  return score;
}

/// Scoring strategy. Dense or learned models would plug in here.
class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual double score(const CorpusIndex& index, const std::set<SymptomId>& query,
                       DiseaseId d) const = 0;
};

class TfidfCosineRanker : public Ranker {
 public:
  double score(const CorpusIndex& index, const std::set<SymptomId>& query,
               DiseaseId d) const override {
    return cosine(query_vector(index, query), tfidf_vector(index, d));
  }
};

class Bm25Ranker : public Ranker {
 public:
  explicit Bm25Ranker(RankerParams params) : params_(params) {}
  double score(const CorpusIndex& index, const std::set<SymptomId>& query,
               DiseaseId d) const override {
    return bm25(index, query, d, params_);
  }

 private:
  RankerParams params_;
};

inline std::unique_ptr<Ranker> make_ranker(const RankerParams& params) {
  params.validate();
  if (params.model == RankingModel::Bm25) return std::make_unique<Bm25Ranker>(params);
  return std::make_unique<TfidfCosineRanker>();
}

/// Scores every disease and returns the best min(k, N), highest score first,
/// ties broken by disease name. Zero-score entries only pad out the list.
inline std::vector<RankedDisease> rank(const CorpusIndex& index, const std::set<SymptomId>& query,
                                       const RankerParams& params, std::size_t k) {
  if (index.N() == 0) throw RetrievalError("empty index");
  if (k == 0) throw RetrievalError("k must be >= 1");
  const auto ranker = make_ranker(params);

  std::vector<RankedDisease> all;
  all.reserve(index.N());
  if (params.model == RankingModel::TfidfCosine) {
    const auto q = query_vector(index, query);
    for (const auto& [d, name] : index.diseases())
      all.push_back({d, cosine(q, tfidf_vector(index, d)), 0, false});
  } else {
    for (const auto& [d, name] : index.diseases()) all.push_back({d, ranker->score(index, query, d), 0, false});
  }
  std::sort(all.begin(), all.end(), [&](const RankedDisease& a, const RankedDisease& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto& na = index.name(a.disease);
    const auto& nb = index.name(b.disease);
    if (na != nb) return na < nb;
    return a.disease < b.disease;
  });
  all.resize(std::min(k, all.size()));
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i].rank = i + 1;
    all[i].zero_score = all[i].score == 0.0;
  }
  return all;
}

/// Display helper: rescales scores to sum to 1. Not a probability model.
inline std::vector<double> normalized_scores(const std::vector<RankedDisease>& ranked) {
  double total = 0.0;
  for (const auto& r : ranked) total += r.score;
  std::vector<double> out;
  for (const auto& r : ranked) out.push_back(total > 0.0 ? r.score / total : 0.0);
  return out;
}

}  // namespace medmin
