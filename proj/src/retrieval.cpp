#include "shelflife/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "shelflife/signals.hpp"
#include "shelflife/survival.hpp"

namespace shelflife {

const char* to_string(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::uniform_exp: return "uniform_exp";
    case Method::uniform_halflife: return "uniform_halflife";
    case Method::level1: return "level1";
    case Method::level12: return "level12";
    case Method::level123: return "level123";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : kAllMethods) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown retrieval method '" + s + "'");
}

double semantic_sim(const Edge& edge, const Query& query) {
  const bool subject_ok = !query.subject || *query.subject == edge.subject;
  if (subject_ok && edge.predicate == query.predicate) return 1.0;
  if (!query.embedding || edge.value.embedding.empty()) return 0.0;
  const auto& q = *query.embedding;
  if (q.size() != edge.value.embedding.size()) return 0.0;
  const double cosine = 1.0 - embed_distance(edge.value.embedding, q, Metric::cosine);
  return std::clamp(cosine, 0.0, 1.0);
}

double TableSimilarity::similarity(const Edge& edge, const Query&) const {
  if (auto it = by_edge.find(edge.id); it != by_edge.end()) return it->second;
  if (auto it = by_predicate.find(edge.predicate); it != by_predicate.end()) return it->second;
  return fallback;
}

UniformBaseline uniform_baseline(std::span<const LifetimeRecord> records) {
  std::vector<double> life;
  for (const auto& r : records) {
    if (r.event == Event::superseded) life.push_back(r.duration);
  }
  if (life.empty()) throw DataError("no supersession events; uniform baselines are undefined");
  UniformBaseline u;
  double sum = 0.0;
  for (double x : life) sum += x;
  u.tau = sum / static_cast<double>(life.size());
  u.half_life = median_gap(std::move(life), 1.0);
  return u;
}

Covariates covariates_at(const EdgeStore& store, const std::string& subject, const std::string& predicate,
                         double t_q, std::optional<double> velocity_window) {
  History h = store.concept_history(subject, predicate);
  h.erase(std::find_if(h.begin(), h.end(), [&](const Edge* e) { return e->t > t_q; }), h.end());
  Covariates c;
  if (h.empty()) {
    c.volatility_imputed = true;
    return c;
  }
  const ConceptSignals s = concept_signals(h, Metric::euclidean, velocity_window);
  c.velocity = s.velocity;
  c.volatility = s.volatility;
  c.volatility_imputed = !s.volatility_defined;
  return c;
}

namespace {

Level depth_of(Method m) {
  switch (m) {
    case Method::level1: return Level::cluster;
    case Method::level12: return Level::context;
    default: return Level::entity;
  }
}

bool is_level(Method m) { return m == Method::level1 || m == Method::level12 || m == Method::level123; }

void check_query(const Query& q) {
  if (!(q.alpha >= 0.0) || !(q.beta >= 0.0)) throw ConfigError("alpha and beta must be >= 0");
  if (!std::isfinite(q.t_q)) throw ConfigError("query time must be finite");
}

ScoredEdge score_with(const Edge& edge, const Query& query, const Scorer& scorer, const Covariates* cov) {
  if (edge.t > query.t_q) {
    throw DataError("edge " + std::to_string(edge.id) + " was created after the query time");
  }
  ScoredEdge out;
  out.edge_id = edge.id;
  out.t = edge.t;
  out.age = query.t_q - edge.t;
  out.sim = scorer.similarity ? scorer.similarity->similarity(edge, query) : semantic_sim(edge, query);

  switch (query.method) {
    case Method::none: out.freshness = 1.0; break;
    case Method::uniform_exp:
      out.freshness = exponential_sf(out.age, scorer.uniform.tau);
      out.tau_eff = scorer.uniform.tau;
      out.kappa = 1.0;
      break;
    case Method::uniform_halflife:
      out.freshness = std::exp2(-out.age / scorer.uniform.half_life);
      out.tau_eff = scorer.uniform.half_life / std::log(2.0);
      out.kappa = 1.0;
      break;
    default: {
      const auto res = resolve_params(*scorer.model, edge.predicate, edge.context,
                                      edge.entity.empty() ? edge.subject : edge.entity, depth_of(query.method));
      double sigma = cov->volatility;
      if (cov->volatility_imputed) {
        auto tr = scorer.model->transforms.find(res.cluster);
        sigma = tr == scorer.model->transforms.end() ? 0.0 : tr->second.s_mean;
      }
      const double tau = effective_tau(res.params, cov->velocity, sigma);
      out.freshness = weibull_sf(out.age, tau, res.params.kappa);
      out.tau_eff = tau;
      out.kappa = res.params.kappa;
      out.level = res.level;
      out.cluster = res.cluster;
    }
  }
  out.score = std::pow(out.sim, query.alpha) * std::pow(out.freshness, query.beta);
  return out;
}

}  // namespace

ScoredEdge score_edge(const EdgeStore& store, const Edge& edge, const Query& query, const Scorer& scorer) {
  check_query(query);
  if (is_level(query.method) && !scorer.model) throw ConfigError("level methods need a fitted model");
  if (edge.t > query.t_q) {
    throw DataError("edge " + std::to_string(edge.id) + " was created after the query time");
  }
  Covariates cov;
  if (is_level(query.method)) {
    cov = covariates_at(store, edge.subject, edge.predicate, query.t_q, scorer.velocity_window);
  }
  return score_with(edge, query, scorer, &cov);
}

RankedResult rank(const EdgeStore& store, const Query& query, const Scorer& scorer) {
  check_query(query);
  if (is_level(query.method) && !scorer.model) throw ConfigError("level methods need a fitted model");
  if (store.window() && query.t_q > store.window()->end) {
    throw ConfigError("query time lies past the end of the store window");
  }
  RankedResult res;
  res.t_q = query.t_q;
  res.method = query.method;

  std::vector<const Edge*> candidates;
  if (query.subject) {
    for (std::size_t i : store.subject_edges(*query.subject)) candidates.push_back(&store.edges()[i]);
  } else {
    for (const auto& e : store.edges()) candidates.push_back(&e);
  }
  std::erase_if(candidates, [&](const Edge* e) { return e->t > query.t_q; });

  std::map<ConceptKey, Covariates> cache;
  res.items.reserve(candidates.size());
  for (const Edge* e : candidates) {
    const Covariates* cov = nullptr;
    if (is_level(query.method)) {
      const ConceptKey key{e->subject, e->predicate};
      auto it = cache.find(key);
      if (it == cache.end()) {
        it = cache.emplace(key, covariates_at(store, e->subject, e->predicate, query.t_q, scorer.velocity_window))
                 .first;
      }
      cov = &it->second;
    }
    res.items.push_back(score_with(*e, query, scorer, cov));
  }
  std::sort(res.items.begin(), res.items.end(), [](const ScoredEdge& a, const ScoredEdge& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.t != b.t) return a.t > b.t;
    return a.edge_id < b.edge_id;
  });
  return res;
}

nlohmann::ordered_json to_json(const RankedResult& result, const EdgeStore& store) {
  nlohmann::ordered_json j;
  j["t_q"] = result.t_q;
  j["method"] = to_string(result.method);
  auto items = nlohmann::ordered_json::array();
  std::size_t rank_no = 0;
  for (const auto& it : result.items) {
    const Edge& e = store.edge(it.edge_id);
    nlohmann::ordered_json row;
    row["rank"] = ++rank_no;
    row["edge_id"] = it.edge_id;
    row["subject"] = e.subject;
    row["predicate"] = e.predicate;
    row["value"] = e.value.raw;
    row["t"] = e.t;
    row["score"] = it.score;
    row["sim"] = it.sim;
    row["freshness"] = it.freshness;
    row["age_days"] = it.age;
    row["tau_eff"] = it.tau_eff ? nlohmann::ordered_json(*it.tau_eff) : nlohmann::ordered_json(nullptr);
    row["kappa"] = it.kappa ? nlohmann::ordered_json(*it.kappa) : nlohmann::ordered_json(nullptr);
    row["level"] = it.level ? nlohmann::ordered_json(to_string(*it.level)) : nlohmann::ordered_json(nullptr);
    row["cluster"] = it.cluster ? nlohmann::ordered_json(*it.cluster) : nlohmann::ordered_json(nullptr);
    items.push_back(std::move(row));
  }
  j["results"] = std::move(items);
  return j;
}

}  // namespace shelflife
