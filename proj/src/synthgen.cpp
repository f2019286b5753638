#include "shelflife/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace shelflife {

GenConfig GenConfig::defaults() {
  GenConfig c;
  c.clusters = {
      {"permanent_facts", 2981.0, 0.5, 0.01, 0.02,
       {{"genomic", 1.74}, {"demographic", 0.95}, {"established_knowledge", 1.43}}, std::nullopt},
      {"current_state", 245.0, 1.2, 0.1, 0.4,
       {{"aggressive", 0.21}, {"routine", 0.6}, {"stable_chronic", 1.44}}, std::nullopt},
      {"volatile_measurements", 20.0, 1.0, 0.8, 0.7,
       {{"icu", 0.12}, {"ward", 0.26}, {"outpatient", 1.3}}, std::make_pair(120.0, 600.0)},
      {"periodic_assessments", 90.0, 0.8, 0.03, 0.3,
       {{"quarterly", 1.30}, {"annual", 2.81}, {"specialist", 2.11}}, std::nullopt},
  };
  return c;
}

void GenConfig::validate() const {
  if (clusters.empty()) throw ConfigError("generator needs at least one cluster");
  if (predicates_per_cluster < 1) throw ConfigError("predicates_per_cluster must be >= 1");
  if (entities_min < 1 || entities_max < entities_min) throw ConfigError("invalid entities_per_context range");
  if (!(sigma_entity >= 0.0)) throw ConfigError("sigma_entity must be >= 0");
  if (!(window > 0.0)) throw ConfigError("window must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (!(jump_scale > 0.0)) throw ConfigError("jump_scale must be positive");
  if (!(jitter_frac >= 0.0 && jitter_frac < 0.5)) throw ConfigError("jitter_frac must be in [0, 0.5)");
  for (const auto& cl : clusters) {
    if (cl.name.empty()) throw ConfigError("cluster name must be non-empty");
    if (!(cl.tau_base > 0.0) || !(cl.kappa > 0.0) || !(cl.velocity > 0.0) || !(cl.volatility > 0.0)) {
      throw ConfigError("cluster '" + cl.name + "': tau_base, kappa, velocity and volatility must be positive");
    }
    if (cl.contexts.empty()) throw ConfigError("cluster '" + cl.name + "' has no contexts");
    for (const auto& ctx : cl.contexts) {
      if (!(ctx.tau_multiplier > 0.0)) throw ConfigError("context '" + ctx.name + "': multiplier must be positive");
    }
    if (cl.follow_up && !(cl.follow_up->first > 0.0 && cl.follow_up->second >= cl.follow_up->first)) {
      throw ConfigError("cluster '" + cl.name + "': invalid follow_up range");
    }
  }
}

nlohmann::ordered_json to_json(const GenConfig& c) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
  for (const auto& cl : c.clusters) {
    nlohmann::ordered_json cj;
    cj["name"] = cl.name;
    cj["tau_base"] = cl.tau_base;
    cj["kappa"] = cl.kappa;
    cj["velocity"] = cl.velocity;
    cj["volatility"] = cl.volatility;
    nlohmann::ordered_json ctx = nlohmann::ordered_json::array();
    for (const auto& x : cl.contexts) ctx.push_back({{"name", x.name}, {"tau_multiplier", x.tau_multiplier}});
    cj["contexts"] = ctx;
    if (cl.follow_up) cj["follow_up"] = {cl.follow_up->first, cl.follow_up->second};
    clusters.push_back(cj);
  }
  j["clusters"] = clusters;
  j["predicates_per_cluster"] = c.predicates_per_cluster;
  j["entities_per_context"] = {c.entities_min, c.entities_max};
  j["sigma_entity"] = c.sigma_entity;
  j["window"] = c.window;
  j["epsilon"] = c.epsilon;
  j["embed_dim"] = c.embed_dim;
  j["seed"] = c.seed;
  j["jump_scale"] = c.jump_scale;
  j["jitter_frac"] = c.jitter_frac;
  j["predicate_embedding_noise"] = c.predicate_embedding_noise;
  return j;
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
  GenConfig c = GenConfig::defaults();
  try {
    if (j.contains("clusters")) {
      c.clusters.clear();
      for (const auto& cj : j.at("clusters")) {
        ClusterSpec cl;
        cl.name = cj.at("name").get<std::string>();
        cl.tau_base = cj.at("tau_base").get<double>();
        cl.kappa = cj.at("kappa").get<double>();
        cl.velocity = cj.at("velocity").get<double>();
        cl.volatility = cj.at("volatility").get<double>();
        for (const auto& x : cj.at("contexts")) {
          cl.contexts.push_back({x.at("name").get<std::string>(), x.at("tau_multiplier").get<double>()});
        }
        if (cj.contains("follow_up") && !cj.at("follow_up").is_null()) {
          const auto& f = cj.at("follow_up");
          cl.follow_up = std::make_pair(f.at(0).get<double>(), f.at(1).get<double>());
        }
        c.clusters.push_back(std::move(cl));
      }
    }
    c.predicates_per_cluster = j.value("predicates_per_cluster", c.predicates_per_cluster);
    if (j.contains("entities_per_context")) {
      c.entities_min = j.at("entities_per_context").at(0).get<std::size_t>();
      c.entities_max = j.at("entities_per_context").at(1).get<std::size_t>();
    }
    c.sigma_entity = j.value("sigma_entity", c.sigma_entity);
    c.window = j.value("window", c.window);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.seed = j.value("seed", c.seed);
    c.jump_scale = j.value("jump_scale", c.jump_scale);
    c.jitter_frac = j.value("jitter_frac", c.jitter_frac);
    c.predicate_embedding_noise = j.value("predicate_embedding_noise", c.predicate_embedding_noise);
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError(std::string("invalid generator config: ") + err.what());
  }
  c.validate();
  return c;
}

namespace {

std::string two_digit(std::size_t i) {
  std::ostringstream s;
  s.width(2);
  s.fill('0');
  s << i;
  return s.str();
}

std::string entity_name(std::size_t i) {
  std::ostringstream s;
  s << "ent_";
  s.width(4);
  s.fill('0');
  s << i;
  return s.str();
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

std::vector<double> unit_vector(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(d);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (double& x : v) {
      x = g(rng);
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

struct ConceptJob {
  std::string subject;
  std::string predicate;
  std::string context;
  int cluster = 0;
  double tau = 0.0;
  double entry = 0.0;
  std::uint64_t seed = 0;
};

struct ConceptOut {
  std::vector<Edge> edges;
  std::vector<PlantedSupersession> supersessions;
};

ConceptOut simulate(const GenConfig& cfg, const ClusterSpec& cl, const ConceptJob& job) {
  std::mt19937_64 rng(job.seed);
  ConceptOut out;
  const double eps = cfg.epsilon;
  const double end = cfg.window;
  std::weibull_distribution<double> life(cl.kappa, job.tau);
  std::normal_distribution<double> jump(std::max(2.0 * eps, cl.volatility * cfg.jump_scale), 0.1 * eps);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double mean_life = job.tau * std::tgamma(1.0 + 1.0 / cl.kappa);
  const double rein_rate = std::max(cl.velocity - 1.0 / mean_life, 0.1 * cl.velocity);

  std::vector<double> value(cfg.embed_dim);
  std::normal_distribution<double> origin(0.0, 1.0);
  for (double& x : value) x = origin(rng);
  std::size_t serial = 0;

  auto emit = [&](double t, const std::vector<double>& emb) {
    Edge e;
    e.subject = job.subject;
    e.predicate = job.predicate;
    e.context = job.context;
    e.entity = job.subject;
    e.t = t;
    e.value.kind = ValueKind::categorical;
    e.value.raw = job.predicate + "#" + std::to_string(serial);
    e.value.embedding.resize(emb.size());
    for (std::size_t i = 0; i < emb.size(); ++i) e.value.embedding[i] = round6(emb[i]);
    out.edges.push_back(std::move(e));
  };

  double t = job.entry;
  while (true) {
    double l = life(rng);
    if (l >= 1.0) l = std::round(l);
    const bool superseded = t + l <= end;
    const double span = superseded ? l : end - t;

    emit(t, value);
    // Reinforcements inside the span, strictly before any supersession.
    std::poisson_distribution<long> count(rein_rate * span);
    const long k = count(rng);
    std::vector<double> offsets;
    for (long i = 0; i < k; ++i) {
      double off = unit(rng) * span;
      if (span >= 2.0) {
        off = std::round(off);
        const double hi = superseded ? span - 1.0 : std::floor(span);
        if (off < 1.0 || off > hi) continue;
      } else if (off <= 0.0 || (superseded && off >= span)) {
        continue;
      }
      offsets.push_back(off);
    }
    std::sort(offsets.begin(), offsets.end());
    offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
    const std::vector<double> live = value;
    for (double off : offsets) {
      std::vector<double> dir = unit_vector(cfg.embed_dim, rng);
      const double r = unit(rng) * cfg.jitter_frac * eps;
      std::vector<double> v = live;
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += r * dir[i];
      emit(t + off, v);
    }
    if (!superseded) break;

    const double dist = std::max(jump(rng), 1.05 * eps);
    const std::vector<double> dir = unit_vector(cfg.embed_dim, rng);
    for (std::size_t i = 0; i < value.size(); ++i) value[i] += dist * dir[i];
    out.supersessions.push_back({job.subject, job.predicate, t, t + l});
    t += l;
    ++serial;
  }
  return out;
}

}  // namespace

Generated generate(const GenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 master(cfg.seed);
  GroundTruth truth;
  truth.window = Window{0.0, cfg.window};
  for (const auto& cl : cfg.clusters) truth.cluster_names.push_back(cl.name);

  // Predicates interleaved across clusters: pred_i belongs to cluster i % K.
  const std::size_t n_clusters = cfg.clusters.size();
  const std::size_t n_pred = n_clusters * cfg.predicates_per_cluster;
  std::vector<std::vector<std::string>> cluster_preds(n_clusters);
  std::vector<std::vector<double>> anchors(n_clusters);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& a : anchors) {
    a.resize(cfg.embed_dim);
    for (double& x : a) x = g(master);
  }
  for (std::size_t i = 0; i < n_pred; ++i) {
    const std::string name = "pred_" + two_digit(i);
    const std::size_t k = i % n_clusters;
    cluster_preds[k].push_back(name);
    truth.predicate_cluster[name] = static_cast<int>(k);
    std::vector<double> emb = anchors[k];
    for (double& x : emb) x = round6(x + cfg.predicate_embedding_noise * g(master));
    truth.predicate_embeddings[name] = emb;
  }

  std::vector<ConceptJob> jobs;
  std::size_t entity_counter = 0;
  std::uniform_int_distribution<std::size_t> n_ent(cfg.entities_min, cfg.entities_max);
  std::uniform_int_distribution<std::uint64_t> seeds;
  for (std::size_t k = 0; k < n_clusters; ++k) {
    const auto& cl = cfg.clusters[k];
    for (const auto& ctx : cl.contexts) {
      const std::size_t count = n_ent(master);
      for (std::size_t e = 0; e < count; ++e) {
        const std::string subject = entity_name(entity_counter++);
        double entry = 0.0;
        if (cl.follow_up) {
          std::uniform_real_distribution<double> fu(cl.follow_up->first, cl.follow_up->second);
          entry = std::max(0.0, std::round(cfg.window - fu(master)));
        }
        for (const auto& pred : cluster_preds[k]) {
          ConceptJob job;
          job.subject = subject;
          job.predicate = pred;
          job.context = ctx.name;
          job.cluster = static_cast<int>(k);
          job.tau = cl.tau_base * ctx.tau_multiplier * std::exp(cfg.sigma_entity * g(master));
          job.entry = entry;
          job.seed = seeds(master);
          jobs.push_back(std::move(job));
        }
      }
    }
  }
  truth.n_entities = entity_counter;

  std::vector<ConceptOut> outs(jobs.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(jobs.size()); ++i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    outs[static_cast<std::size_t>(i)] = simulate(cfg, cfg.clusters[static_cast<std::size_t>(job.cluster)], job);
  }

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& job = jobs[i];
    truth.concepts.push_back({job.subject, job.predicate, job.context, job.cluster, job.tau,
                              cfg.clusters[static_cast<std::size_t>(job.cluster)].kappa});
    for (auto& s : outs[i].supersessions) truth.supersessions.push_back(std::move(s));
    for (auto& e : outs[i].edges) edges.push_back(std::move(e));
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.subject != b.subject) return a.subject < b.subject;
    return a.predicate < b.predicate;
  });
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i].id = static_cast<EdgeId>(i);
  truth.n_edges = edges.size();
  return Generated{EdgeStore(std::move(edges), truth.window), std::move(truth)};
}

nlohmann::ordered_json to_json(const GroundTruth& t) {
  nlohmann::ordered_json j;
  j["window"] = {t.window.start, t.window.end};
  j["n_edges"] = t.n_edges;
  j["n_entities"] = t.n_entities;
  j["cluster_names"] = t.cluster_names;
  j["predicate_cluster"] = t.predicate_cluster;
  nlohmann::ordered_json emb = nlohmann::ordered_json::object();
  for (const auto& [p, v] : t.predicate_embeddings) emb[p] = v;
  j["predicate_embeddings"] = emb;
  nlohmann::ordered_json concepts = nlohmann::ordered_json::array();
  for (const auto& c : t.concepts) {
    concepts.push_back({{"subject", c.subject},
                        {"predicate", c.predicate},
                        {"context", c.context},
                        {"cluster", c.cluster},
                        {"tau", c.tau},
                        {"kappa", c.kappa}});
  }
  j["concepts"] = concepts;
  nlohmann::ordered_json sup = nlohmann::ordered_json::array();
  for (const auto& s : t.supersessions) sup.push_back({s.subject, s.predicate, s.t_start, s.t_end});
  j["supersessions"] = sup;
  return j;
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  try {
    GroundTruth t;
    t.window = Window{j.at("window").at(0).get<double>(), j.at("window").at(1).get<double>()};
    t.n_edges = j.at("n_edges").get<std::size_t>();
    t.n_entities = j.value("n_entities", std::size_t{0});
    t.cluster_names = j.at("cluster_names").get<std::vector<std::string>>();
    t.predicate_cluster = j.at("predicate_cluster").get<std::map<std::string, int>>();
    t.predicate_embeddings = j.at("predicate_embeddings").get<std::map<std::string, std::vector<double>>>();
    for (const auto& c : j.at("concepts")) {
      t.concepts.push_back({c.at("subject").get<std::string>(), c.at("predicate").get<std::string>(),
                            c.at("context").get<std::string>(), c.at("cluster").get<int>(),
                            c.at("tau").get<double>(), c.at("kappa").get<double>()});
    }
    for (const auto& s : j.at("supersessions")) {
      t.supersessions.push_back({s.at(0).get<std::string>(), s.at(1).get<std::string>(), s.at(2).get<double>(),
                                 s.at(3).get<double>()});
    }
    return t;
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("malformed ground truth: ") + err.what());
  }
}

void dump(const Generated& g, const std::string& edges_path, const std::string& truth_path) {
  write_edges(g.store, edges_path);
  std::ofstream out(truth_path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + truth_path + "'");
  out << to_json(g.truth).dump() << '\n';
}

GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("malformed ground truth: ") + err.what());
  }
  return ground_truth_from_json(j);
}

}  // namespace shelflife
