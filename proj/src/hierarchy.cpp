#include "shelflife/hierarchy.hpp"

#include <algorithm>
#include <cmath>

namespace shelflife {

const char* to_string(Level level) {
  switch (level) {
    case Level::cluster: return "cluster";
    case Level::context: return "context";
    case Level::entity: return "entity";
  }
  return "?";
}

namespace {

Level level_from_string(const std::string& s) {
  if (s == "cluster") return Level::cluster;
  if (s == "context") return Level::context;
  if (s == "entity") return Level::entity;
  throw DataError("unknown hierarchy level '" + s + "'");
}

DecayParams from_surface(const SurfaceFit& f) {
  DecayParams p;
  p.theta = f.theta_raw;
  p.theta_std = f.theta_std;
  p.kappa = f.kappa;
  p.n_records = f.n_records;
  p.n_events = f.n_events;
  p.converged = f.converged;
  return p;
}

DecayParams inherit(const DecayParams& parent, std::size_t n_records, std::size_t n_events) {
  DecayParams p = parent;
  p.inherited = true;
  p.n_records = n_records;
  p.n_events = n_events;
  p.converged = true;
  return p;
}

std::size_t count_events(std::span<const LifetimeRecord> rs) {
  return static_cast<std::size_t>(
      std::count_if(rs.begin(), rs.end(), [](const LifetimeRecord& r) { return r.event == Event::superseded; }));
}

// Top-level node for one cluster. Falls back to a covariate-free Weibull
// when there is too little data for the surface.
DecayParams fit_cluster(std::span<const LifetimeRecord> rs, const HierarchyOptions& opt, double window,
                        CovariateTransform& transform) {
  transform = CovariateTransform::fit(rs);
  const std::size_t events = count_events(rs);
  if (events == 0) {
    DecayParams p;
    p.theta = p.theta_std = {std::log(window), 0.0, 0.0, 0.0};
    p.kappa = 1.0;
    p.no_event = true;
    p.n_records = rs.size();
    return p;
  }
  try {
    SurfaceFit f = fit_surface(rs, opt.surface);
    transform = f.transform;
    return from_surface(f);
  } catch (const FitError&) {
  }
  FitOptions fo;
  fo.min_obs = 1;
  fo.min_duration = opt.min_duration;
  const ParamFit w = fit_parametric(rs, Family::weibull, fo);
  DecayParams p;
  p.theta = p.theta_std = {std::log(w.tau), 0.0, 0.0, 0.0};
  p.kappa = w.kappa;
  p.n_records = rs.size();
  p.n_events = events;
  p.converged = w.converged;
  return p;
}

DecayParams fit_child(std::span<const LifetimeRecord> rs, const DecayParams& parent, const CovariateTransform& tr,
                      double lambda, bool free_kappa, std::size_t threshold, const HierarchyOptions& opt) {
  const std::size_t events = count_events(rs);
  if (rs.size() < threshold || parent.no_event) return inherit(parent, rs.size(), events);
  PenalizedSpec spec;
  spec.transform = tr;
  spec.theta_parent = parent.theta_std;
  spec.kappa_parent = parent.kappa;
  spec.lambda = lambda;
  spec.free_kappa = free_kappa;
  spec.lambda_kappa = lambda;
  spec.max_iter = opt.surface.max_iter;
  spec.grad_tol = opt.surface.grad_tol;
  spec.min_duration = opt.min_duration;
  DecayParams p = from_surface(fit_surface_penalized(rs, spec));
  // kappa stays exactly the parent's unless it was refit
  if (!free_kappa) p.kappa = parent.kappa;
  return p;
}

template <class Key>
struct Groups {
  std::vector<Key> keys;
  std::vector<std::vector<LifetimeRecord>> records;
};

template <class Key, class KeyFn>
Groups<Key> group_by(std::span<const LifetimeRecord> rs, KeyFn key_of) {
  std::map<Key, std::vector<LifetimeRecord>> m;
  for (const auto& r : rs) m[key_of(r)].push_back(r);
  Groups<Key> g;
  for (auto& [k, v] : m) {
    g.keys.push_back(k);
    g.records.push_back(std::move(v));
  }
  return g;
}

}  // namespace

std::map<std::string, int> effective_assignment(const ClusterModel& model, const ProfileSet& profiles) {
  std::map<std::string, int> out = model.labels;
  if (model.n_clusters() == 0) return out;
  for (const auto& p : profiles.profiles) {
    auto it = out.find(p.predicate);
    if (it == out.end() || it->second >= 0) continue;
    it->second = assign_cold_start(model, p.raw);
  }
  return out;
}

HierarchyModel fit_hierarchy(const EdgeStore& store, std::span<const LifetimeRecord> records,
                             const ClusterModel& cluster_model, const std::map<std::string, int>& predicate_cluster,
                             const HierarchyOptions& options) {
  if (!(options.lambda_context >= 0.0) || !(options.lambda_entity >= 0.0)) {
    throw ConfigError("shrinkage weights must be >= 0");
  }
  if (options.min_obs < 1 || options.min_entity_records < 1) throw ConfigError("hierarchy thresholds must be >= 1");

  HierarchyModel model;
  model.cluster_model = cluster_model;
  model.options = options;
  model.window_length = store.window_or_throw().length();
  for (const auto& [p, c] : predicate_cluster) {
    if (c >= 0) model.predicate_cluster[p] = c;
  }
  if (model.predicate_cluster.empty()) throw DataError("no predicate has a cluster; cannot fit the hierarchy");

  std::vector<LifetimeRecord> annotated;
  annotated.reserve(records.size());
  for (const auto& r : records) {
    auto it = model.predicate_cluster.find(r.predicate);
    if (it == model.predicate_cluster.end()) continue;
    annotated.push_back(r);
    annotated.back().cluster = it->second;
  }

  // Level 1
  std::map<int, std::vector<LifetimeRecord>> by_cluster;
  for (const auto& [p, c] : model.predicate_cluster) by_cluster.try_emplace(c);
  for (const auto& r : annotated) by_cluster[r.cluster].push_back(r);
  for (const auto& [c, rs] : by_cluster) {
    CovariateTransform tr;
    model.clusters[c] = fit_cluster(rs, options, model.window_length, tr);
    model.transforms[c] = tr;
  }
  by_cluster.clear();

  const auto floors = tau_floors(store, model.predicate_cluster, options.min_duration);
  auto floor_of = [&](int c, const std::string& ctx) {
    auto it = floors.find({c, ctx});
    return it == floors.end() ? 0.0 : it->second;
  };

  // Level 2
  auto ctx_groups = group_by<ContextKey>(annotated, [](const LifetimeRecord& r) {
    return ContextKey{r.cluster, r.context};
  });
  std::vector<DecayParams> ctx_fit(ctx_groups.keys.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ctx_groups.keys.size()); ++i) {
    const int c = ctx_groups.keys[i].first;
    ctx_fit[i] = fit_child(ctx_groups.records[i], model.clusters.at(c), model.transforms.at(c),
                           options.lambda_context, options.per_context_kappa, options.min_obs, options);
  }
  for (std::size_t i = 0; i < ctx_fit.size(); ++i) {
    const auto& [c, ctx] = ctx_groups.keys[i];
    ctx_fit[i].parent = NodeRef{Level::cluster, c, "", ""};
    ctx_fit[i].tau_floor = floor_of(c, ctx);
    model.contexts[ctx_groups.keys[i]] = std::move(ctx_fit[i]);
  }
  ctx_groups = {};

  // Level 3
  auto ent_groups = group_by<EntityKey>(annotated, [](const LifetimeRecord& r) {
    return EntityKey{r.cluster, r.context, r.entity.empty() ? r.subject : r.entity};
  });
  std::vector<DecayParams> ent_fit(ent_groups.keys.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ent_groups.keys.size()); ++i) {
    const auto& [c, ctx, ent] = ent_groups.keys[i];
    ent_fit[i] = fit_child(ent_groups.records[i], model.contexts.at({c, ctx}), model.transforms.at(c),
                           options.lambda_entity, false, options.min_entity_records, options);
  }
  for (std::size_t i = 0; i < ent_fit.size(); ++i) {
    const auto& [c, ctx, ent] = ent_groups.keys[i];
    ent_fit[i].parent = NodeRef{Level::context, c, ctx, ""};
    ent_fit[i].tau_floor = floor_of(c, ctx);
    model.entities[ent_groups.keys[i]] = std::move(ent_fit[i]);
  }
  return model;
}

Resolution resolve_params(const HierarchyModel& model, const std::string& predicate,
                          const std::optional<std::string>& context, const std::optional<std::string>& entity,
                          Level max_level, const ColdStartHint& hint) {
  Resolution res;
  auto known = model.predicate_cluster.find(predicate);
  if (known != model.predicate_cluster.end()) {
    res.cluster = known->second;
  } else {
    res.cold_start = true;
    int c = -1;
    if (model.cluster_model.n_clusters() > 0) {
      if (hint.raw_features) {
        c = assign_cold_start(model.cluster_model, *hint.raw_features);
      } else if (hint.embedding && !model.cluster_model.embedding_centroids.empty()) {
        c = assign_cold_start_embedding(model.cluster_model, *hint.embedding);
      }
    }
    if (!model.clusters.contains(c)) {
      std::size_t best = 0;
      c = model.clusters.empty() ? 0 : model.clusters.begin()->first;
      for (const auto& [id, p] : model.clusters) {
        if (p.n_records > best) {
          best = p.n_records;
          c = id;
        }
      }
    }
    res.cluster = c;
  }

  auto cit = model.clusters.find(res.cluster);
  if (cit == model.clusters.end()) {
    // empty model: a flat window-length exponential
    res.params.theta = res.params.theta_std = {std::log(std::max(model.window_length, 1.0)), 0.0, 0.0, 0.0};
    return res;
  }
  res.params = cit->second;
  res.level = Level::cluster;
  if (max_level == Level::cluster || !context) return res;

  auto xit = model.contexts.find({res.cluster, *context});
  if (xit == model.contexts.end()) return res;
  res.params = xit->second;
  res.level = Level::context;
  if (max_level == Level::context || !entity) return res;

  auto eit = model.entities.find({res.cluster, *context, *entity});
  if (eit == model.entities.end()) return res;
  res.params = eit->second;
  res.level = Level::entity;
  return res;
}

double effective_tau(const DecayParams& params, double v, double sigma) {
  const auto& t = params.theta;
  const double eta = t[0] + t[1] * v + t[2] * sigma + t[3] * v * sigma;
  return std::max(std::exp(std::clamp(eta, -700.0, 700.0)), params.tau_floor);
}

// ---------------------------------------------------------------------------
// Snapshot

namespace {

nlohmann::ordered_json node_json(const DecayParams& p) {
  nlohmann::ordered_json j;
  j["theta"] = p.theta;
  j["theta_std"] = p.theta_std;
  j["kappa"] = p.kappa;
  j["tau_floor"] = p.tau_floor;
  j["n_records"] = p.n_records;
  j["n_events"] = p.n_events;
  j["inherited"] = p.inherited;
  j["no_event"] = p.no_event;
  j["converged"] = p.converged;
  if (p.parent) {
    j["parent"] = {{"level", to_string(p.parent->level)},
                   {"cluster", p.parent->cluster},
                   {"context", p.parent->context},
                   {"entity", p.parent->entity}};
  } else {
    j["parent"] = nullptr;
  }
  return j;
}

DecayParams node_from_json(const nlohmann::json& j) {
  DecayParams p;
  p.theta = j.at("theta").get<std::array<double, 4>>();
  p.theta_std = j.at("theta_std").get<std::array<double, 4>>();
  p.kappa = j.at("kappa").get<double>();
  p.tau_floor = j.at("tau_floor").get<double>();
  p.n_records = j.at("n_records").get<std::size_t>();
  p.n_events = j.at("n_events").get<std::size_t>();
  p.inherited = j.at("inherited").get<bool>();
  p.no_event = j.at("no_event").get<bool>();
  p.converged = j.at("converged").get<bool>();
  if (!(p.kappa > 0.0) || !(p.tau_floor >= 0.0)) throw DataError("snapshot node has invalid kappa or tau_floor");
  const auto& par = j.at("parent");
  if (!par.is_null()) {
    p.parent = NodeRef{level_from_string(par.at("level").get<std::string>()), par.at("cluster").get<int>(),
                       par.at("context").get<std::string>(), par.at("entity").get<std::string>()};
  }
  return p;
}

nlohmann::ordered_json transform_json(const CovariateTransform& t) {
  return {{"v_mean", t.v_mean},         {"v_sd", t.v_sd},
          {"s_mean", t.s_mean},         {"s_sd", t.s_sd},
          {"v_constant", t.v_constant}, {"s_constant", t.s_constant}};
}

CovariateTransform transform_from_json(const nlohmann::json& j) {
  CovariateTransform t;
  t.v_mean = j.at("v_mean").get<double>();
  t.v_sd = j.at("v_sd").get<double>();
  t.s_mean = j.at("s_mean").get<double>();
  t.s_sd = j.at("s_sd").get<double>();
  t.v_constant = j.at("v_constant").get<bool>();
  t.s_constant = j.at("s_constant").get<bool>();
  return t;
}

}  // namespace

nlohmann::ordered_json to_json(const HierarchyModel& model) {
  nlohmann::ordered_json j;
  j["window_length"] = model.window_length;
  j["options"] = {{"lambda_context", model.options.lambda_context},
                  {"lambda_entity", model.options.lambda_entity},
                  {"min_obs", model.options.min_obs},
                  {"min_entity_records", model.options.min_entity_records},
                  {"per_context_kappa", model.options.per_context_kappa},
                  {"min_duration", model.options.min_duration}};
  j["predicate_cluster"] = model.predicate_cluster;
  j["cluster_model"] = to_json(model.cluster_model);

  auto clusters = nlohmann::ordered_json::array();
  for (const auto& [c, p] : model.clusters) {
    auto n = node_json(p);
    n["cluster"] = c;
    auto tr = model.transforms.find(c);
    n["transform"] = transform_json(tr == model.transforms.end() ? CovariateTransform{} : tr->second);
    clusters.push_back(std::move(n));
  }
  j["clusters"] = std::move(clusters);

  auto contexts = nlohmann::ordered_json::array();
  for (const auto& [key, p] : model.contexts) {
    auto n = node_json(p);
    n["cluster"] = key.first;
    n["context"] = key.second;
    contexts.push_back(std::move(n));
  }
  j["contexts"] = std::move(contexts);

  auto entities = nlohmann::ordered_json::array();
  for (const auto& [key, p] : model.entities) {
    auto n = node_json(p);
    n["cluster"] = std::get<0>(key);
    n["context"] = std::get<1>(key);
    n["entity"] = std::get<2>(key);
    entities.push_back(std::move(n));
  }
  j["entities"] = std::move(entities);
  return j;
}

HierarchyModel hierarchy_from_json(const nlohmann::json& j) {
  try {
    HierarchyModel m;
    m.window_length = j.at("window_length").get<double>();
    const auto& o = j.at("options");
    m.options.lambda_context = o.at("lambda_context").get<double>();
    m.options.lambda_entity = o.at("lambda_entity").get<double>();
    m.options.min_obs = o.at("min_obs").get<std::size_t>();
    m.options.min_entity_records = o.at("min_entity_records").get<std::size_t>();
    m.options.per_context_kappa = o.at("per_context_kappa").get<bool>();
    m.options.min_duration = o.at("min_duration").get<double>();
    m.predicate_cluster = j.at("predicate_cluster").get<std::map<std::string, int>>();
    m.cluster_model = cluster_model_from_json(j.at("cluster_model"));
    for (const auto& n : j.at("clusters")) {
      const int c = n.at("cluster").get<int>();
      m.clusters[c] = node_from_json(n);
      m.transforms[c] = transform_from_json(n.at("transform"));
    }
    for (const auto& n : j.at("contexts")) {
      const ContextKey key{n.at("cluster").get<int>(), n.at("context").get<std::string>()};
      if (!m.clusters.contains(key.first)) throw DataError("context node without a cluster parent");
      m.contexts[key] = node_from_json(n);
    }
    for (const auto& n : j.at("entities")) {
      const EntityKey key{n.at("cluster").get<int>(), n.at("context").get<std::string>(),
                          n.at("entity").get<std::string>()};
      if (!m.contexts.contains({std::get<0>(key), std::get<1>(key)})) {
        throw DataError("entity node without a context parent");
      }
      m.entities[key] = node_from_json(n);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model snapshot: ") + e.what());
  }
}

}  // namespace shelflife
