#pragma once

// Time-aware ranking: score = sim^alpha * freshness^beta over edges that
// exist at the query time.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shelflife/hierarchy.hpp"
#include "shelflife/kg.hpp"

namespace shelflife {

enum class Method { none, uniform_exp, uniform_halflife, level1, level12, level123 };
inline constexpr std::array<Method, 6> kAllMethods{Method::none,   Method::uniform_exp, Method::uniform_halflife,
                                                   Method::level1, Method::level12,     Method::level123};
const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct Query {
  std::optional<std::string> subject;  // restricts candidates and sim to one subject
  std::string predicate;
  std::optional<std::vector<double>> embedding;
  double t_q = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
  Method method = Method::level123;
};

class SimilarityBackend {
 public:
  virtual ~SimilarityBackend() = default;
  /// In [0, 1].
  virtual double similarity(const Edge& edge, const Query& query) const = 0;
};

/// 1 on predicate (and subject, when the query names one) match; else the
/// clamped cosine of the value embedding against the query embedding when
/// one is given; else 0.
double semantic_sim(const Edge& edge, const Query& query);

class ExactMatchSimilarity final : public SimilarityBackend {
 public:
  double similarity(const Edge& edge, const Query& query) const override { return semantic_sim(edge, query); }
};

/// Fixed similarities by edge id, then by predicate, then `fallback`.
class TableSimilarity final : public SimilarityBackend {
 public:
  std::map<EdgeId, double> by_edge;
  std::map<std::string, double> by_predicate;
  double fallback = 0.0;

  double similarity(const Edge& edge, const Query& query) const override;
};

/// Single-rate baselines: tau = mean event lifetime, half-life = median.
struct UniformBaseline {
  double tau = 1.0;
  double half_life = 1.0;
};

UniformBaseline uniform_baseline(std::span<const LifetimeRecord> records);

struct Scorer {
  const HierarchyModel* model = nullptr;  // required by level methods
  UniformBaseline uniform;
  const SimilarityBackend* similarity = nullptr;  // null: exact match
  std::optional<double> velocity_window;  // as used at extraction
};

struct ScoredEdge {
  EdgeId edge_id = 0;
  double t = 0.0;
  double score = 0.0;
  double sim = 0.0;
  double freshness = 1.0;
  double age = 0.0;
  std::optional<double> tau_eff;
  std::optional<double> kappa;
  std::optional<Level> level;
  std::optional<int> cluster;
};

struct RankedResult {
  double t_q = 0.0;
  Method method = Method::none;
  std::vector<ScoredEdge> items;  // score desc, then newer t, then lower id
};

struct Covariates {
  double velocity = 0.0;
  double volatility = 0.0;
  bool volatility_imputed = false;
};

/// Velocity and volatility of a concept from its edges with t <= t_q.
/// Volatility is left at 0 and flagged when fewer than two edges qualify.
Covariates covariates_at(const EdgeStore& store, const std::string& subject, const std::string& predicate, double t_q,
                         std::optional<double> velocity_window = std::nullopt);

/// Throws DataError when the edge was created after t_q.
ScoredEdge score_edge(const EdgeStore& store, const Edge& edge, const Query& query, const Scorer& scorer);

/// Throws ConfigError when t_q lies past the store window or a level
/// method is asked for without a model.
RankedResult rank(const EdgeStore& store, const Query& query, const Scorer& scorer);

nlohmann::ordered_json to_json(const RankedResult& result, const EdgeStore& store);

}  // namespace shelflife
