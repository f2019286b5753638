#pragma once

// Temporal query sampling, ranking metrics and the retrieval benchmark.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shelflife/clustering.hpp"
#include "shelflife/hierarchy.hpp"
#include "shelflife/retrieval.hpp"
#include "shelflife/signals.hpp"

namespace shelflife {

struct TemporalQuery {
  std::string subject;
  std::string predicate;
  double t_q = 0.0;
  std::set<EdgeId> relevant;
};

struct QuerySet {
  std::vector<TemporalQuery> queries;
  bool with_replacement = false;  // fewer eligible concepts than queries
  std::uint64_t seed = 0;
};

/// Edges of the concept with t <= t_q whose value is still live at t_q.
std::set<EdgeId> current_edges(const EdgeStore& store, const std::string& subject, const std::string& predicate,
                               double t_q, const ExtractOptions& options = {});

/// t_q uniform over the second half of the window; the concept uniform over
/// those with an edge at or before t_q, distinct until exhausted.
QuerySet generate_queries(const EdgeStore& store, const ExtractOptions& options, std::size_t n = 200,
                          std::uint64_t seed = 42);

struct RankMetrics {
  double ndcg = 0.0;
  double precision = 0.0;
  double rr = 0.0;
};

/// Binary-gain NDCG@k with log2 discount, P@k and reciprocal rank over the
/// whole ranking. All zero when `relevant` is empty.
RankMetrics metrics(std::span<const EdgeId> ranked, const std::set<EdgeId>& relevant, std::size_t k);
RankMetrics metrics(const RankedResult& ranked, const std::set<EdgeId>& relevant, std::size_t k);

struct MethodMetrics {
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  double mrr = 0.0;
  double p5 = 0.0;
  double p10 = 0.0;
  std::size_t n_queries = 0;
  std::size_t n_empty = 0;  // queries with no relevant edge
};

struct BenchmarkReport {
  std::vector<Method> methods;
  std::map<Method, MethodMetrics> results;
  std::uint64_t seed = 0;
  bool with_replacement = false;
  nlohmann::ordered_json config;
};

struct BenchmarkOptions {
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  double alpha = 1.0;
  double beta = 1.0;
};

BenchmarkReport run_benchmark(const EdgeStore& store, const Scorer& scorer, const QuerySet& queries,
                              const BenchmarkOptions& options = {});

void write_benchmark_csv(const BenchmarkReport& report, const std::string& path, const std::string& comment = {});
nlohmann::ordered_json to_json(const BenchmarkReport& report);

/// Level-1 survival curves per cluster at the cluster's mean covariates:
/// columns cluster, t, S.
void write_survival_tsv(const HierarchyModel& model, const std::string& path, std::size_t n_points = 200,
                        const std::string& comment = {});

struct SweepOptions {
  std::vector<double> epsilons{0.1, 0.25, 0.3, 0.5, 0.75, 1.0};
  ExtractOptions extract;  // per-predicate overrides are dropped
  ClusterMethod method = ClusterMethod::density;
  DensityOptions density;
  MixtureOptions mixture;
  std::size_t min_obs = 5;
  std::optional<std::map<std::string, int>> truth;
};

struct SweepRow {
  double epsilon = 0.0;
  std::size_t n_superseded = 0;
  std::size_t n_clusters = 0;
  double ari = 0.0;  // against truth, or against the first row without it
  std::map<int, std::optional<double>> kappa;  // level-1 shape per cluster
  std::map<int, std::size_t> cluster_sizes;
};

/// Extract, cluster and level-1 fit for each epsilon. Needs at least two.
std::vector<SweepRow> threshold_sweep(const EdgeStore& store, const SweepOptions& options);

nlohmann::ordered_json to_json(std::span<const SweepRow> rows);

}  // namespace shelflife
