#include "shelflife/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <random>

#include "shelflife/survival.hpp"

namespace shelflife {

std::set<EdgeId> current_edges(const EdgeStore& store, const std::string& subject, const std::string& predicate,
                               double t_q, const ExtractOptions& options) {
  const double eps = options.epsilon_for(predicate);
  std::set<EdgeId> run;
  const Edge* live = nullptr;
  for (const Edge* e : store.concept_history(subject, predicate)) {
    if (e->t > t_q) break;
    if (live && embed_distance(live->value, e->value, options.metric) <= eps) {
      run.insert(e->id);
      continue;
    }
    live = e;
    run = {e->id};
  }
  return run;
}

QuerySet generate_queries(const EdgeStore& store, const ExtractOptions& options, std::size_t n,
                          std::uint64_t seed) {
  if (n < 1) throw ConfigError("query count must be >= 1");
  if (store.empty()) throw DataError("cannot sample queries from an empty store");
  const Window w = store.window_or_throw();
  const double lo = w.start + 0.5 * w.length();

  // concepts ordered by first observation
  std::vector<std::pair<double, std::size_t>> first;
  const auto& keys = store.concepts();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    first.emplace_back(store.concept_history(keys[i].first, keys[i].second).front()->t, i);
  }
  std::sort(first.begin(), first.end());

  QuerySet out;
  out.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> when(lo, w.end);
  std::vector<bool> used(keys.size(), false);
  while (out.queries.size() < n) {
    const double t_q = when(rng);
    const auto n_elig = static_cast<std::size_t>(
        std::upper_bound(first.begin(), first.end(), std::make_pair(t_q, keys.size())) - first.begin());
    if (n_elig == 0) continue;
    std::size_t fresh = 0;
    for (std::size_t i = 0; i < n_elig; ++i) fresh += !used[first[i].second];
    std::size_t pick;
    if (fresh == 0) {
      out.with_replacement = true;
      pick = first[std::uniform_int_distribution<std::size_t>(0, n_elig - 1)(rng)].second;
    } else {
      std::size_t r = std::uniform_int_distribution<std::size_t>(0, fresh - 1)(rng);
      std::size_t i = 0;
      for (;; ++i) {
        if (used[first[i].second]) continue;
        if (r-- == 0) break;
      }
      pick = first[i].second;
      used[pick] = true;
    }
    TemporalQuery q;
    q.subject = keys[pick].first;
    q.predicate = keys[pick].second;
    q.t_q = t_q;
    q.relevant = current_edges(store, q.subject, q.predicate, t_q, options);
    out.queries.push_back(std::move(q));
  }
  return out;
}

RankMetrics metrics(std::span<const EdgeId> ranked, const std::set<EdgeId>& relevant, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  RankMetrics m;
  if (relevant.empty()) return m;
  double dcg = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!relevant.contains(ranked[i])) continue;
    if (m.rr == 0.0) m.rr = 1.0 / static_cast<double>(i + 1);
    if (i < k) {
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
      ++hits;
    }
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  m.ndcg = dcg / idcg;
  m.precision = static_cast<double>(hits) / static_cast<double>(k);
  return m;
}

RankMetrics metrics(const RankedResult& ranked, const std::set<EdgeId>& relevant, std::size_t k) {
  std::vector<EdgeId> ids;
  ids.reserve(ranked.items.size());
  for (const auto& it : ranked.items) ids.push_back(it.edge_id);
  return metrics(ids, relevant, k);
}

BenchmarkReport run_benchmark(const EdgeStore& store, const Scorer& scorer, const QuerySet& queries,
                              const BenchmarkOptions& options) {
  BenchmarkReport report;
  report.methods = options.methods;
  report.seed = queries.seed;
  report.with_replacement = queries.with_replacement;
  const auto& qs = queries.queries;

  for (Method m : options.methods) {
    // five metrics per query, reduced serially
    std::vector<std::array<double, 5>> per(qs.size());
    std::vector<std::exception_ptr> errors(qs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(qs.size()); ++i) {
      try {
        const auto& tq = qs[static_cast<std::size_t>(i)];
        Query q;
        q.subject = tq.subject;
        q.predicate = tq.predicate;
        q.t_q = tq.t_q;
        q.alpha = options.alpha;
        q.beta = options.beta;
        q.method = m;
        const auto ranked = rank(store, q, scorer);
        const auto m5 = metrics(ranked, tq.relevant, 5);
        const auto m10 = metrics(ranked, tq.relevant, 10);
        per[static_cast<std::size_t>(i)] = {m5.ndcg, m10.ndcg, m5.rr, m5.precision, m10.precision};
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    MethodMetrics mm;
    mm.n_queries = qs.size();
    for (std::size_t i = 0; i < qs.size(); ++i) {
      mm.ndcg5 += per[i][0];
      mm.ndcg10 += per[i][1];
      mm.mrr += per[i][2];
      mm.p5 += per[i][3];
      mm.p10 += per[i][4];
      mm.n_empty += qs[i].relevant.empty();
    }
    if (!qs.empty()) {
      const double n = static_cast<double>(qs.size());
      mm.ndcg5 /= n;
      mm.ndcg10 /= n;
      mm.mrr /= n;
      mm.p5 /= n;
      mm.p10 /= n;
    }
    report.results[m] = mm;
  }
  return report;
}

void write_benchmark_csv(const BenchmarkReport& report, const std::string& path, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "method,ndcg@5,ndcg@10,mrr,p@5,p@10,n_queries\n" << std::setprecision(10);
  for (Method m : report.methods) {
    const auto& r = report.results.at(m);
    out << to_string(m) << ',' << r.ndcg5 << ',' << r.ndcg10 << ',' << r.mrr << ',' << r.p5 << ',' << r.p10 << ','
        << r.n_queries << '\n';
  }
}

nlohmann::ordered_json to_json(const BenchmarkReport& report) {
  nlohmann::ordered_json j;
  j["seed"] = report.seed;
  j["sampled_with_replacement"] = report.with_replacement;
  auto rows = nlohmann::ordered_json::array();
  for (Method m : report.methods) {
    const auto& r = report.results.at(m);
    rows.push_back({{"method", to_string(m)},
                    {"ndcg@5", r.ndcg5},
                    {"ndcg@10", r.ndcg10},
                    {"mrr", r.mrr},
                    {"p@5", r.p5},
                    {"p@10", r.p10},
                    {"n_queries", r.n_queries},
                    {"n_empty_relevant", r.n_empty}});
  }
  j["methods"] = std::move(rows);
  j["config"] = report.config;
  return j;
}

void write_survival_tsv(const HierarchyModel& model, const std::string& path, std::size_t n_points,
                        const std::string& comment) {
  if (n_points < 2) throw ConfigError("need at least two curve points");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "cluster\tt\tS\n" << std::setprecision(10);
  const double t_max = std::max(model.window_length, 1.0);
  const double t_min = 1e-2;
  for (const auto& [c, p] : model.clusters) {
    auto tr = model.transforms.find(c);
    const double v = tr == model.transforms.end() ? 0.0 : tr->second.v_mean;
    const double s = tr == model.transforms.end() ? 0.0 : tr->second.s_mean;
    const double tau = effective_tau(p, v, s);
    out << c << "\t0\t1\n";
    for (std::size_t i = 0; i < n_points; ++i) {
      const double f = static_cast<double>(i) / static_cast<double>(n_points - 1);
      const double t = t_min * std::pow(t_max / t_min, f);
      out << c << '\t' << t << '\t' << weibull_sf(t, tau, p.kappa) << '\n';
    }
  }
}

std::vector<SweepRow> threshold_sweep(const EdgeStore& store, const SweepOptions& options) {
  if (options.epsilons.size() < 2) throw ConfigError("threshold sweep needs at least two epsilon values");
  const double window = store.window_or_throw().length();
  std::vector<SweepRow> rows;
  std::map<std::string, int> reference;
  for (double eps : options.epsilons) {
    ExtractOptions eo = options.extract;
    eo.epsilon.clear();
    eo.default_epsilon = eps;
    const auto records = extract_lifetimes(store, eo);
    const auto signals = predicate_signals(store, records, eo.metric, eo.velocity_window);
    const auto profiles = build_profiles(signals, window, options.min_obs);
    const ClusterModel model = options.method == ClusterMethod::density
                                   ? cluster_density(profiles, options.density)
                                   : cluster_dpmixture(profiles, options.mixture);
    SweepRow row;
    row.epsilon = eps;
    row.n_superseded = static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const auto& r) { return r.event == Event::superseded; }));
    row.n_clusters = model.n_clusters();
    if (rows.empty()) reference = model.labels;
    const auto& against = options.truth ? *options.truth : reference;
    const auto [a, b] = aligned_labels(model.labels, against);
    row.ari = adjusted_rand_index(a, b);

    std::map<int, std::vector<LifetimeRecord>> by_cluster;
    for (const auto& r : records) {
      auto it = model.labels.find(r.predicate);
      if (it != model.labels.end() && it->second >= 0) by_cluster[it->second].push_back(r);
    }
    for (std::size_t c = 0; c < model.n_clusters(); ++c) {
      const int id = static_cast<int>(c);
      row.cluster_sizes[id] = model.sizes[c];
      try {
        row.kappa[id] = fit_surface(by_cluster[id]).kappa;
      } catch (const FitError&) {
        row.kappa[id] = std::nullopt;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::ordered_json to_json(std::span<const SweepRow> rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["epsilon"] = r.epsilon;
    j["n_superseded"] = r.n_superseded;
    j["n_clusters"] = r.n_clusters;
    j["ari"] = r.ari;
    j["delta_n_clusters"] = static_cast<long>(r.n_clusters) - static_cast<long>(rows.front().n_clusters);
    j["delta_ari"] = r.ari - rows.front().ari;
    auto k = nlohmann::ordered_json::object();
    for (const auto& [c, v] : r.kappa) {
      k[std::to_string(c)] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    }
    j["kappa"] = std::move(k);
    auto sz = nlohmann::ordered_json::object();
    for (const auto& [c, n] : r.cluster_sizes) sz[std::to_string(c)] = n;
    j["cluster_sizes"] = std::move(sz);
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace shelflife
