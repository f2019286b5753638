#include "shelflife/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "shelflife/eval.hpp"
#include "shelflife/survival.hpp"

namespace fs = std::filesystem;

namespace shelflife {

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (edges_path.empty()) throw ConfigError("paths.edges must be set");
  if (out_dir.empty()) throw ConfigError("paths.out_dir must be set");
  generator.validate();
  if (!(extract.default_epsilon > 0.0)) throw ConfigError("extract.epsilon must be positive");
  for (const auto& [p, e] : extract.epsilon) {
    if (!(e > 0.0)) throw ConfigError("extract.epsilon_overrides." + p + " must be positive");
  }
  if (!(extract.min_duration > 0.0)) throw ConfigError("extract.min_duration must be positive");
  if (extract.velocity_window && !(*extract.velocity_window > 0.0)) {
    throw ConfigError("extract.velocity_window must be positive");
  }
  if (window && !(window->end > window->start)) throw ConfigError("window end must exceed its start");
  if (density.min_cluster_size < 2) throw ConfigError("clustering.min_cluster_size must be >= 2");
  if (density.min_samples < 1) throw ConfigError("clustering.min_samples must be >= 1");
  if (mixture.max_components < 1) throw ConfigError("clustering.max_components must be >= 1");
  if (!(mixture.weight_concentration > 0.0)) throw ConfigError("clustering.weight_concentration must be positive");
  if (mixture.max_iter < 1) throw ConfigError("clustering.max_iter must be >= 1");
  if (!(mixture.tol > 0.0)) throw ConfigError("clustering.tol must be positive");
  if (!(mixture.reg_covar >= 0.0)) throw ConfigError("clustering.reg_covar must be >= 0");
  if (mixture.covariance_prior_scale && !(*mixture.covariance_prior_scale > 0.0)) {
    throw ConfigError("clustering.covariance_prior_scale must be positive");
  }
  if (min_obs < 1) throw ConfigError("min_obs must be >= 1");
  if (!(hierarchy.lambda_context >= 0.0) || !(hierarchy.lambda_entity >= 0.0)) {
    throw ConfigError("hierarchy lambdas must be >= 0");
  }
  if (hierarchy.min_entity_records < 1) throw ConfigError("hierarchy.min_entity_records must be >= 1");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("retrieval alpha and beta must be >= 0");
  if (n_queries < 1) throw ConfigError("evaluation.n_queries must be >= 1");
  if (sweep_epsilons.size() < 2) throw ConfigError("evaluation.sweep_epsilons needs at least two values");
  for (double e : sweep_epsilons) {
    if (!(e > 0.0)) throw ConfigError("sweep epsilons must be positive");
  }
}

std::string PipelineConfig::artifact(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["paths"] = {{"edges", c.edges_path},
                {"truth", c.truth_path},
                {"predicate_embeddings", c.predicate_embeddings_path},
                {"out_dir", c.out_dir}};
  j["window"] = c.window ? nlohmann::ordered_json{c.window->start, c.window->end} : nlohmann::ordered_json(nullptr);
  j["generator"] = to_json(c.generator);
  j["extract"] = {{"epsilon", c.extract.default_epsilon},
                  {"epsilon_overrides", c.extract.epsilon},
                  {"min_duration", c.extract.min_duration},
                  {"metric", to_string(c.extract.metric)},
                  {"reset_clock", c.extract.reset_clock},
                  {"velocity_window", c.extract.velocity_window ? nlohmann::ordered_json(*c.extract.velocity_window)
                                                                : nlohmann::ordered_json(nullptr)}};
  j["clustering"] = {{"method", to_string(c.cluster_method)},
                     {"min_cluster_size", c.density.min_cluster_size},
                     {"min_samples", c.density.min_samples},
                     {"max_components", c.mixture.max_components},
                     {"weight_concentration", c.mixture.weight_concentration},
                     {"seed", c.mixture.seed},
                     {"max_iter", c.mixture.max_iter},
                     {"tol", c.mixture.tol},
                     {"reg_covar", c.mixture.reg_covar},
                     {"covariance_prior_scale", c.mixture.covariance_prior_scale
                                                    ? nlohmann::ordered_json(*c.mixture.covariance_prior_scale)
                                                    : nlohmann::ordered_json(nullptr)}};
  j["min_obs"] = c.min_obs;
  j["hierarchy"] = {{"lambda_context", c.hierarchy.lambda_context},
                    {"lambda_entity", c.hierarchy.lambda_entity},
                    {"min_entity_records", c.hierarchy.min_entity_records},
                    {"per_context_kappa", c.hierarchy.per_context_kappa}};
  j["retrieval"] = {{"alpha", c.alpha}, {"beta", c.beta}};
  j["evaluation"] = {{"n_queries", c.n_queries}, {"seed", c.query_seed}, {"sweep_epsilons", c.sweep_epsilons}};
  return j;
}

namespace {

void allow_only(const nlohmann::json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <class T>
void read(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

template <class T>
void read_optional(const nlohmann::json& obj, const char* key, std::optional<T>& out) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
  } else {
    out = obj.at(key).get<T>();
  }
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    allow_only(j, {"paths", "window", "generator", "extract", "clustering", "min_obs", "hierarchy", "retrieval",
                   "evaluation"},
               "");
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      allow_only(p, {"edges", "truth", "predicate_embeddings", "out_dir"}, "paths");
      read(p, "edges", c.edges_path);
      read(p, "truth", c.truth_path);
      read(p, "predicate_embeddings", c.predicate_embeddings_path);
      read(p, "out_dir", c.out_dir);
    }
    if (j.contains("window") && !j.at("window").is_null()) {
      const auto& w = j.at("window");
      if (!w.is_array() || w.size() != 2) throw ConfigError("window must be [start, end]");
      c.window = Window{w.at(0).get<double>(), w.at(1).get<double>()};
    }
    if (j.contains("generator")) c.generator = gen_config_from_json(j.at("generator"));
    if (j.contains("extract")) {
      const auto& e = j.at("extract");
      allow_only(e, {"epsilon", "epsilon_overrides", "min_duration", "metric", "reset_clock", "velocity_window"},
                 "extract");
      read(e, "epsilon", c.extract.default_epsilon);
      read(e, "epsilon_overrides", c.extract.epsilon);
      read(e, "min_duration", c.extract.min_duration);
      if (e.contains("metric")) c.extract.metric = metric_from_string(e.at("metric").get<std::string>());
      read(e, "reset_clock", c.extract.reset_clock);
      read_optional(e, "velocity_window", c.extract.velocity_window);
    }
    if (j.contains("clustering")) {
      const auto& k = j.at("clustering");
      allow_only(k, {"method", "min_cluster_size", "min_samples", "max_components", "weight_concentration", "seed",
                     "max_iter", "tol", "reg_covar", "covariance_prior_scale"},
                 "clustering");
      if (k.contains("method")) c.cluster_method = cluster_method_from_string(k.at("method").get<std::string>());
      read(k, "min_cluster_size", c.density.min_cluster_size);
      read(k, "min_samples", c.density.min_samples);
      read(k, "max_components", c.mixture.max_components);
      read(k, "weight_concentration", c.mixture.weight_concentration);
      read(k, "seed", c.mixture.seed);
      read(k, "max_iter", c.mixture.max_iter);
      read(k, "tol", c.mixture.tol);
      read(k, "reg_covar", c.mixture.reg_covar);
      read_optional(k, "covariance_prior_scale", c.mixture.covariance_prior_scale);
    }
    read(j, "min_obs", c.min_obs);
    if (j.contains("hierarchy")) {
      const auto& h = j.at("hierarchy");
      allow_only(h, {"lambda_context", "lambda_entity", "min_entity_records", "per_context_kappa"}, "hierarchy");
      read(h, "lambda_context", c.hierarchy.lambda_context);
      read(h, "lambda_entity", c.hierarchy.lambda_entity);
      read(h, "min_entity_records", c.hierarchy.min_entity_records);
      read(h, "per_context_kappa", c.hierarchy.per_context_kappa);
    }
    if (j.contains("retrieval")) {
      const auto& r = j.at("retrieval");
      allow_only(r, {"alpha", "beta"}, "retrieval");
      read(r, "alpha", c.alpha);
      read(r, "beta", c.beta);
    }
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      allow_only(e, {"n_queries", "seed", "sweep_epsilons"}, "evaluation");
      read(e, "n_queries", c.n_queries);
      read(e, "seed", c.query_seed);
      read(e, "sweep_epsilons", c.sweep_epsilons);
    }
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError(std::string("invalid config: ") + err.what());
  } catch (const DataError& err) {
    throw ConfigError(err.what());
  }
  c.hierarchy.min_obs = c.min_obs;
  c.hierarchy.min_duration = c.extract.min_duration;
  c.hierarchy.surface.min_duration = c.extract.min_duration;
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + err.what());
  }
  return pipeline_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Stage helpers

namespace {

std::string config_comment(const PipelineConfig& c) { return "config: " + to_json(c).dump(); }

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path, const std::string& producer) {
  if (!fs::exists(path)) throw MissingArtifact(path, producer);
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& err) {
    throw DataError("'" + path + "' is not valid JSON: " + err.what());
  }
}

std::optional<GroundTruth> load_truth_if_present(const PipelineConfig& c) {
  if (c.truth_path.empty() || !fs::exists(c.truth_path)) return std::nullopt;
  return load_ground_truth(c.truth_path);
}

// Window: config, else the generator window recorded with the truth file,
// else the span of the edges.
EdgeStore load_store(const PipelineConfig& c) {
  if (!fs::exists(c.edges_path)) throw MissingArtifact(c.edges_path, "generate");
  LoadOptions lo;
  lo.window = c.window;
  if (!lo.window) {
    if (const auto truth = load_truth_if_present(c)) lo.window = truth->window;
  }
  return load_edges(c.edges_path, lo);
}

std::vector<LifetimeRecord> load_records(const PipelineConfig& c, const EdgeStore& store) {
  const std::string path = c.artifact("lifetimes.csv");
  if (!fs::exists(path)) throw MissingArtifact(path, "extract");
  return read_lifetimes_csv(path, store);
}

std::map<std::string, std::vector<double>> load_predicate_embeddings(const PipelineConfig& c) {
  if (c.predicate_embeddings_path.empty() || !fs::exists(c.predicate_embeddings_path)) return {};
  const auto j = read_json(c.predicate_embeddings_path, "generate");
  try {
    return j.get<std::map<std::string, std::vector<double>>>();
  } catch (const nlohmann::json::exception& err) {
    throw DataError("malformed predicate embeddings: " + std::string(err.what()));
  }
}

ProfileSet profiles_for(const PipelineConfig& c, const EdgeStore& store, std::span<const LifetimeRecord> records) {
  const auto signals = predicate_signals(store, records, c.extract.metric, c.extract.velocity_window);
  return build_profiles(signals, store.window_or_throw().length(), c.min_obs, load_predicate_embeddings(c));
}

std::size_t count_event(std::span<const LifetimeRecord> rs, Event e) {
  return static_cast<std::size_t>(
      std::count_if(rs.begin(), rs.end(), [e](const LifetimeRecord& r) { return r.event == e; }));
}

std::pair<double, double> mean_covariates(std::span<const LifetimeRecord> rs) {
  if (rs.empty()) return {0.0, 0.0};
  double v = 0.0, s = 0.0;
  for (const auto& r : rs) {
    v += r.velocity;
    s += r.volatility;
  }
  const double n = static_cast<double>(rs.size());
  return {v / n, s / n};
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

StageOutcome run_generate(const PipelineConfig& c) {
  c.validate();
  const Generated g = generate(c.generator);
  ensure_parent(c.edges_path);
  write_edges(g.store, c.edges_path);
  StageOutcome out;
  out.written.push_back(c.edges_path);
  if (!c.truth_path.empty()) {
    auto truth = to_json(g.truth);
    truth["config"] = to_json(c);
    write_json(c.truth_path, truth);
    out.written.push_back(c.truth_path);
  }
  if (!c.predicate_embeddings_path.empty()) {
    nlohmann::ordered_json emb = g.truth.predicate_embeddings;
    write_json(c.predicate_embeddings_path, emb);
    out.written.push_back(c.predicate_embeddings_path);
  }
  out.notes.push_back(std::to_string(g.store.size()) + " edges, " + std::to_string(g.truth.n_entities) +
                      " entities, " + std::to_string(g.truth.supersessions.size()) + " planted supersessions");
  return out;
}

StageOutcome run_extract(const PipelineConfig& c) {
  c.validate();
  const EdgeStore store = load_store(c);
  const auto records = extract_lifetimes(store, c.extract);
  StageOutcome out;
  const std::string csv = c.artifact("lifetimes.csv");
  ensure_parent(csv);
  write_lifetimes_csv(records, csv, config_comment(c));
  out.written.push_back(csv);

  const auto table = predicate_signals(store, records, c.extract.metric, c.extract.velocity_window);
  nlohmann::ordered_json j;
  j["n_edges"] = store.size();
  j["n_records"] = records.size();
  j["n_superseded"] = count_event(records, Event::superseded);
  j["n_reinforcement"] = count_event(records, Event::reinforcement);
  j["n_censored"] = count_event(records, Event::censored);
  auto preds = nlohmann::ordered_json::object();
  for (const auto& [p, s] : table.signals) {
    preds[p] = {{"velocity", s.velocity},
                {"volatility", s.volatility},
                {"mean_lifetime", s.mean_lifetime ? nlohmann::ordered_json(*s.mean_lifetime)
                                                  : nlohmann::ordered_json(nullptr)},
                {"rho", s.rho},
                {"sup_rate", s.sup_rate},
                {"n_records", s.n_records},
                {"n_superseded", s.n_superseded},
                {"n_reinforcement", s.n_reinforcement},
                {"n_censored", s.n_censored},
                {"n_concepts", s.n_concepts}};
  }
  j["predicates"] = preds;
  j["skipped"] = table.skipped;
  j["config"] = to_json(c);
  write_json(c.artifact("signals.json"), j);
  out.written.push_back(c.artifact("signals.json"));
  out.notes.push_back(std::to_string(records.size()) + " lifetime records, " +
                      std::to_string(count_event(records, Event::superseded)) + " superseded");
  return out;
}

StageOutcome run_cluster(const PipelineConfig& c) {
  c.validate();
  const EdgeStore store = load_store(c);
  const auto records = load_records(c, store);
  const ProfileSet profiles = profiles_for(c, store, records);
  const ClusterModel model = c.cluster_method == ClusterMethod::density ? cluster_density(profiles, c.density)
                                                                        : cluster_dpmixture(profiles, c.mixture);
  StageOutcome out;
  out.converged = model.converged;
  write_cluster_csv(model, profiles, c.artifact("clusters.csv"), config_comment(c));
  out.written.push_back(c.artifact("clusters.csv"));

  auto summary = cluster_summary_json(model, profiles);
  if (model.n_clusters() >= 2) {
    std::vector<int> labels;
    for (const auto& p : profiles.profiles) labels.push_back(model.labels.at(p.predicate));
    try {
      summary["silhouette"] = silhouette(profiles.matrix(), profiles.profiles.size(), kProfileDim, labels);
    } catch (const DataError&) {
      summary["silhouette"] = nullptr;
    }
  }
  if (const auto truth = load_truth_if_present(c)) {
    const auto [a, b] = aligned_labels(model.labels, truth->predicate_cluster);
    summary["agreement"] = {{"ari", adjusted_rand_index(a, b)},
                            {"nmi", normalized_mutual_info(a, b)},
                            {"n_predicates", a.size()}};
  }
  if (model.all_noise) out.notes.push_back("every predicate was labelled noise");
  summary["config"] = to_json(c);
  write_json(c.artifact("clusters.json"), summary);
  out.written.push_back(c.artifact("clusters.json"));

  auto mj = to_json(model);
  mj["config"] = to_json(c);
  write_json(c.artifact("cluster_model.json"), mj);
  out.written.push_back(c.artifact("cluster_model.json"));
  out.notes.push_back(std::to_string(model.n_clusters()) + " clusters over " +
                      std::to_string(profiles.profiles.size()) + " predicates");
  if (!model.converged) out.notes.push_back("mixture did not converge");
  return out;
}

StageOutcome run_fit(const PipelineConfig& c) {
  c.validate();
  const EdgeStore store = load_store(c);
  const auto records = load_records(c, store);
  const ClusterModel clusters = cluster_model_from_json(read_json(c.artifact("cluster_model.json"), "cluster"));
  const ProfileSet profiles = profiles_for(c, store, records);
  const auto assignment = effective_assignment(clusters, profiles);
  const HierarchyModel model = fit_hierarchy(store, records, clusters, assignment, c.hierarchy);

  StageOutcome out;
  auto snapshot = to_json(model);
  snapshot["config"] = to_json(c);
  write_json(c.artifact("model.json"), snapshot);
  out.written.push_back(c.artifact("model.json"));

  std::map<int, std::vector<LifetimeRecord>> by_cluster;
  for (const auto& r : records) {
    auto it = model.predicate_cluster.find(r.predicate);
    if (it != model.predicate_cluster.end()) by_cluster[it->second].push_back(r);
  }
  FitOptions fo;
  fo.min_obs = c.min_obs;
  fo.min_duration = c.extract.min_duration;

  auto rows = nlohmann::ordered_json::array();
  std::vector<std::string> unconverged;
  for (const auto& [cid, node] : model.clusters) {
    const auto& rs = by_cluster[cid];
    const auto [mv, ms] = mean_covariates(rs);
    nlohmann::ordered_json row;
    row["cluster"] = cid;
    std::vector<std::string> members;
    for (const auto& [p, k] : model.predicate_cluster) {
      if (k == cid) members.push_back(p);
    }
    row["members"] = members;
    row["n_records"] = node.n_records;
    row["n_events"] = node.n_events;
    row["no_event"] = node.no_event;
    row["surface"] = {{"theta", node.theta},
                      {"kappa", node.kappa},
                      {"tau_at_mean_covariates", effective_tau(node, mv, ms)},
                      {"mean_velocity", mv},
                      {"mean_volatility", ms},
                      {"converged", node.converged}};
    if (!node.converged) unconverged.push_back("cluster " + std::to_string(cid));

    const SurvivalData data = survival_data(rs, c.extract.min_duration);
    const auto cmp = compare_aic(data, kAllFamilies, fo);
    auto fits = nlohmann::ordered_json::array();
    for (const auto& f : cmp.ranked) {
      fits.push_back(to_json(f));
      if (!f.converged) unconverged.push_back("cluster " + std::to_string(cid) + " " + to_string(f.family));
    }
    row["families"] = fits;
    auto failures = nlohmann::ordered_json::array();
    for (const auto& [fam, why] : cmp.failures) failures.push_back({{"family", to_string(fam)}, {"error", why}});
    row["family_failures"] = failures;
    for (const auto& f : cmp.ranked) {
      if (f.family != Family::lognormal) continue;
      const auto peak = lognormal_hazard_peak(f.mu, f.s);
      row["lognormal_hazard_peak"] = {{"t_peak", peak.t_peak}, {"hazard", peak.hazard_at_peak}};
    }

    auto ctx_rows = nlohmann::ordered_json::array();
    std::map<std::string, std::vector<LifetimeRecord>> by_ctx;
    for (const auto& r : rs) by_ctx[r.context].push_back(r);
    for (const auto& [key, p] : model.contexts) {
      if (key.first != cid) continue;
      const auto [cv, cs] = mean_covariates(by_ctx[key.second]);
      ctx_rows.push_back({{"context", key.second},
                          {"n_records", p.n_records},
                          {"n_events", p.n_events},
                          {"tau_at_context_mean", effective_tau(p, cv, cs)},
                          {"tau_at_cluster_mean", effective_tau(p, mv, ms)},
                          {"kappa", p.kappa},
                          {"tau_floor", p.tau_floor},
                          {"inherited", p.inherited},
                          {"converged", p.converged}});
      if (!p.converged) unconverged.push_back("context " + std::to_string(cid) + "/" + key.second);
    }
    row["contexts"] = ctx_rows;
    rows.push_back(std::move(row));
  }
  std::size_t ent_bad = 0;
  for (const auto& [key, p] : model.entities) ent_bad += !p.converged;
  if (ent_bad) unconverged.push_back(std::to_string(ent_bad) + " entity nodes");

  nlohmann::ordered_json report;
  report["clusters"] = rows;
  report["n_context_nodes"] = model.contexts.size();
  report["n_entity_nodes"] = model.entities.size();
  report["converged"] = unconverged.empty();
  report["unconverged"] = unconverged;
  report["config"] = to_json(c);
  write_json(c.artifact("fit_report.json"), report);
  out.written.push_back(c.artifact("fit_report.json"));
  out.converged = unconverged.empty();
  for (const auto& u : unconverged) out.notes.push_back("not converged: " + u);
  out.notes.push_back(std::to_string(model.clusters.size()) + " clusters, " + std::to_string(model.contexts.size()) +
                      " contexts, " + std::to_string(model.entities.size()) + " entities fitted");
  return out;
}

namespace {

HierarchyModel load_model(const PipelineConfig& c) {
  return hierarchy_from_json(read_json(c.artifact("model.json"), "fit"));
}

}  // namespace

StageOutcome run_evaluate(const PipelineConfig& c) {
  c.validate();
  const EdgeStore store = load_store(c);
  const HierarchyModel model = load_model(c);
  const auto records = load_records(c, store);
  Scorer scorer;
  scorer.model = &model;
  scorer.uniform = uniform_baseline(records);
  scorer.velocity_window = c.extract.velocity_window;
  const QuerySet queries = generate_queries(store, c.extract, c.n_queries, c.query_seed);
  BenchmarkOptions bo;
  bo.alpha = c.alpha;
  bo.beta = c.beta;
  BenchmarkReport report = run_benchmark(store, scorer, queries, bo);
  report.config = to_json(c);

  StageOutcome out;
  write_benchmark_csv(report, c.artifact("benchmark.csv"), config_comment(c));
  out.written.push_back(c.artifact("benchmark.csv"));
  auto j = to_json(report);
  j["uniform_baseline"] = {{"tau", scorer.uniform.tau}, {"half_life", scorer.uniform.half_life}};
  write_json(c.artifact("benchmark.json"), j);
  out.written.push_back(c.artifact("benchmark.json"));
  write_survival_tsv(model, c.artifact("curves.tsv"), 200, config_comment(c));
  out.written.push_back(c.artifact("curves.tsv"));
  if (queries.with_replacement) out.notes.push_back("queries sampled with replacement");
  return out;
}

StageOutcome run_sweep(const PipelineConfig& c) {
  c.validate();
  const EdgeStore store = load_store(c);
  SweepOptions so;
  so.epsilons = c.sweep_epsilons;
  so.extract = c.extract;
  so.method = c.cluster_method;
  so.density = c.density;
  so.mixture = c.mixture;
  so.min_obs = c.min_obs;
  if (const auto truth = load_truth_if_present(c)) so.truth = truth->predicate_cluster;
  const auto rows = threshold_sweep(store, so);

  StageOutcome out;
  nlohmann::ordered_json j;
  j["ari_reference"] = so.truth ? "truth" : "first_epsilon";
  j["rows"] = to_json(rows);
  j["config"] = to_json(c);
  write_json(c.artifact("sweep.json"), j);
  out.written.push_back(c.artifact("sweep.json"));

  const std::string csv = c.artifact("sweep.csv");
  std::ofstream f(csv);
  if (!f) throw DataError("cannot write '" + csv + "'");
  f << "# " << config_comment(c) << "\nepsilon,n_superseded,n_clusters,ari\n" << std::setprecision(10);
  for (const auto& r : rows) f << r.epsilon << ',' << r.n_superseded << ',' << r.n_clusters << ',' << r.ari << '\n';
  out.written.push_back(csv);
  return out;
}

TableSimilarity load_similarity_table(const std::string& path) {
  const auto j = read_json(path, "query");
  TableSimilarity t;
  try {
    allow_only(j, {"edges", "predicates", "fallback"}, "similarity table");
    if (j.contains("edges")) {
      for (const auto& [k, v] : j.at("edges").items()) t.by_edge[static_cast<EdgeId>(std::stoul(k))] = v.get<double>();
    }
    if (j.contains("predicates")) t.by_predicate = j.at("predicates").get<std::map<std::string, double>>();
    t.fallback = j.value("fallback", 0.0);
  } catch (const nlohmann::json::exception& err) {
    throw DataError("malformed similarity table: " + std::string(err.what()));
  } catch (const std::logic_error&) {
    throw DataError("similarity table edge keys must be edge ids");
  }
  auto bad = [](double x) { return !(x >= 0.0 && x <= 1.0); };
  for (const auto& [k, v] : t.by_edge) {
    if (bad(v)) throw DataError("similarity values must lie in [0, 1]");
  }
  for (const auto& [k, v] : t.by_predicate) {
    if (bad(v)) throw DataError("similarity values must lie in [0, 1]");
  }
  if (bad(t.fallback)) throw DataError("similarity values must lie in [0, 1]");
  return t;
}

nlohmann::ordered_json run_query(const PipelineConfig& c, const QueryRequest& req) {
  c.validate();
  if (req.predicate.empty()) throw ConfigError("query needs a predicate");
  const EdgeStore store = load_store(c);
  if (store.window() && req.t_q > store.window()->end) {
    throw ConfigError("query time lies past the end of the store window");
  }
  std::optional<HierarchyModel> model;
  Scorer scorer;
  scorer.velocity_window = c.extract.velocity_window;
  if (req.method == Method::level1 || req.method == Method::level12 || req.method == Method::level123) {
    model = load_model(c);
    scorer.model = &*model;
  }
  if (req.method == Method::uniform_exp || req.method == Method::uniform_halflife) {
    scorer.uniform = uniform_baseline(load_records(c, store));
  }
  std::optional<TableSimilarity> table;
  if (req.similarity_table) {
    table = load_similarity_table(*req.similarity_table);
    scorer.similarity = &*table;
  }
  Query q;
  q.subject = req.subject;
  q.predicate = req.predicate;
  q.t_q = req.t_q;
  q.alpha = c.alpha;
  q.beta = c.beta;
  q.method = req.method;
  RankedResult ranked = rank(store, q, scorer);
  if (req.top && ranked.items.size() > *req.top) ranked.items.resize(*req.top);
  auto j = to_json(ranked, store);
  j["query"] = {{"subject", req.subject ? nlohmann::ordered_json(*req.subject) : nlohmann::ordered_json(nullptr)},
                {"predicate", req.predicate},
                {"alpha", c.alpha},
                {"beta", c.beta}};
  j["config"] = to_json(c);
  return j;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::string fmt(double x, int prec = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << x;
  return s.str();
}

void table(std::ostream& os, const std::vector<std::string>& head, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(head.size());
  for (std::size_t i = 0; i < head.size(); ++i) w[i] = head[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i) w[i] = std::max(w[i], r[i].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      os << (i ? "  " : "") << std::setw(static_cast<int>(w[i])) << (i < r.size() ? r[i] : "");
    }
    os << '\n';
  };
  line(head);
  std::size_t total = 0;
  for (std::size_t x : w) total += x + 2;
  os << std::string(total > 2 ? total - 2 : 0, '-') << '\n';
  for (const auto& r : rows) line(r);
  os << '\n';
}

}  // namespace

StageOutcome run_report(const PipelineConfig& c, std::ostream& os) {
  c.validate();
  const auto clusters = read_json(c.artifact("clusters.json"), "cluster");
  const auto fit = read_json(c.artifact("fit_report.json"), "fit");
  std::ostringstream r;

  r << "Temporal clusters (" << clusters.at("method").get<std::string>() << ")\n\n";
  std::vector<std::vector<std::string>> rows;
  for (const auto& cl : clusters.at("clusters")) {
    const auto raw = cl.at("centroid_raw").get<std::vector<double>>();
    std::string members;
    for (const auto& m : cl.at("members")) members += (members.empty() ? "" : " ") + m.get<std::string>();
    rows.push_back({std::to_string(cl.at("cluster_id").get<int>()), std::to_string(cl.at("size").get<int>()),
                    fmt(raw[0]), fmt(raw[1]), fmt(std::exp(raw[2]), 1), fmt(raw[3]), fmt(raw[4]), members});
  }
  table(r, {"cluster", "n", "velocity", "volatility", "mean_life_d", "rho", "sup_rate", "predicates"}, rows);
  if (clusters.contains("agreement")) {
    r << "agreement with planted labels: ARI " << fmt(clusters["agreement"]["ari"].get<double>()) << ", NMI "
      << fmt(clusters["agreement"]["nmi"].get<double>()) << "\n";
  }
  if (clusters.contains("silhouette") && !clusters["silhouette"].is_null()) {
    r << "silhouette " << fmt(clusters["silhouette"].get<double>()) << "\n";
  }
  r << '\n';

  r << "Decay parameters (Weibull surface at cluster-mean covariates)\n\n";
  rows.clear();
  for (const auto& cl : fit.at("clusters")) {
    const auto& s = cl.at("surface");
    rows.push_back({std::to_string(cl.at("cluster").get<int>()), fmt(s.at("tau_at_mean_covariates").get<double>(), 1),
                    fmt(s.at("kappa").get<double>()), std::to_string(cl.at("n_records").get<std::size_t>()),
                    std::to_string(cl.at("n_events").get<std::size_t>()),
                    cl.at("no_event").get<bool>() ? "no events" : (s.at("converged").get<bool>() ? "" : "unconverged")});
  }
  table(r, {"cluster", "tau_d", "kappa", "records", "events", "note"}, rows);

  r << "Distribution comparison (AIC, lower is better)\n\n";
  rows.clear();
  for (const auto& cl : fit.at("clusters")) {
    std::map<std::string, double> aic;
    for (const auto& f : cl.at("families")) aic[f.at("family").get<std::string>()] = f.at("aic").get<double>();
    auto cell = [&](const char* fam) { return aic.contains(fam) ? fmt(aic[fam], 1) : std::string("n/a"); };
    std::string best = cl.at("families").empty() ? "n/a" : cl.at("families").at(0).at("family").get<std::string>();
    std::string peak = "n/a";
    if (cl.contains("lognormal_hazard_peak")) peak = fmt(cl["lognormal_hazard_peak"]["t_peak"].get<double>());
    rows.push_back({std::to_string(cl.at("cluster").get<int>()), cell("exponential"), cell("weibull"),
                    cell("lognormal"), best, peak});
  }
  table(r, {"cluster", "exponential", "weibull", "lognormal", "best", "lognormal_peak_d"}, rows);

  r << "Context shelf lives\n\n";
  rows.clear();
  for (const auto& cl : fit.at("clusters")) {
    for (const auto& x : cl.at("contexts")) {
      rows.push_back({std::to_string(cl.at("cluster").get<int>()), x.at("context").get<std::string>(),
                      fmt(x.at("tau_at_context_mean").get<double>(), 1), fmt(x.at("kappa").get<double>()),
                      fmt(x.at("tau_floor").get<double>(), 1), std::to_string(x.at("n_records").get<std::size_t>()),
                      x.at("inherited").get<bool>() ? "inherited" : ""});
    }
  }
  table(r, {"cluster", "context", "tau_d", "kappa", "floor_d", "records", "note"}, rows);

  if (fs::exists(c.artifact("benchmark.json"))) {
    const auto b = read_json(c.artifact("benchmark.json"), "evaluate");
    r << "Retrieval benchmark\n\n";
    rows.clear();
    for (const auto& m : b.at("methods")) {
      rows.push_back({m.at("method").get<std::string>(), fmt(m.at("ndcg@5").get<double>()),
                      fmt(m.at("ndcg@10").get<double>()), fmt(m.at("mrr").get<double>()),
                      fmt(m.at("p@5").get<double>()), fmt(m.at("p@10").get<double>())});
    }
    table(r, {"method", "ndcg@5", "ndcg@10", "mrr", "p@5", "p@10"}, rows);
  }
  if (fs::exists(c.artifact("sweep.json"))) {
    const auto s = read_json(c.artifact("sweep.json"), "sweep");
    r << "Threshold sensitivity\n\n";
    rows.clear();
    for (const auto& row : s.at("rows")) {
      rows.push_back({fmt(row.at("epsilon").get<double>(), 2), std::to_string(row.at("n_superseded").get<std::size_t>()),
                      std::to_string(row.at("n_clusters").get<std::size_t>()), fmt(row.at("ari").get<double>())});
    }
    table(r, {"epsilon", "superseded", "clusters", "ari"}, rows);
  }

  const std::string text = r.str();
  os << text;
  StageOutcome out;
  const std::string path = c.artifact("report.txt");
  ensure_parent(path);
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << text << "# " << config_comment(c) << '\n';
  out.written.push_back(path);
  return out;
}

}  // namespace shelflife
