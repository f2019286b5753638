#pragma once

// Synthetic temporal knowledge graph with planted clusters, contexts and
// entities, plus the ground-truth event log.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "shelflife/kg.hpp"

namespace shelflife {

struct ContextSpec {
  std::string name;
  double tau_multiplier = 1.0;
};

struct ClusterSpec {
  std::string name;
  double tau_base = 1.0;  // days
  double kappa = 1.0;
  double velocity = 0.1;    // observations per day
  double volatility = 0.3;  // target mean jump scale
  std::vector<ContextSpec> contexts;
  // When set, each entity enters at window_end - U[lo, hi] days instead of
  // at window start. Keeps high-velocity clusters to a tractable size.
  std::optional<std::pair<double, double>> follow_up;
};

struct GenConfig {
  std::vector<ClusterSpec> clusters;
  std::size_t predicates_per_cluster = 5;
  std::size_t entities_min = 10;
  std::size_t entities_max = 30;
  double sigma_entity = 0.2;
  double window = 1826.0;  // days
  double epsilon = 0.3;
  std::size_t embed_dim = 8;
  std::uint64_t seed = 42;
  double jump_scale = 4.0;     // supersession jump mean = max(2 eps, volatility * jump_scale)
  double jitter_frac = 0.02;   // reinforcement perturbation radius as a fraction of eps
  double predicate_embedding_noise = 0.3;

  static GenConfig defaults();
  void validate() const;
};

nlohmann::ordered_json to_json(const GenConfig& config);
GenConfig gen_config_from_json(const nlohmann::json& j);

struct PlantedSupersession {
  std::string subject;
  std::string predicate;
  double t_start = 0.0;  // creation of the superseded value
  double t_end = 0.0;    // creation of the superseding value
};

struct PlantedConcept {
  std::string subject;
  std::string predicate;
  std::string context;
  int cluster = 0;
  double tau = 0.0;
  double kappa = 1.0;
};

struct GroundTruth {
  std::map<std::string, int> predicate_cluster;
  std::vector<std::string> cluster_names;
  std::map<std::string, std::vector<double>> predicate_embeddings;
  std::vector<PlantedSupersession> supersessions;
  std::vector<PlantedConcept> concepts;
  Window window;
  std::size_t n_edges = 0;
  std::size_t n_entities = 0;
};

nlohmann::ordered_json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

struct Generated {
  EdgeStore store;
  GroundTruth truth;
};

Generated generate(const GenConfig& config);

/// Writes the edges as JSONL and the ground truth as JSON.
void dump(const Generated& g, const std::string& edges_path, const std::string& truth_path);
GroundTruth load_ground_truth(const std::string& path);

}  // namespace shelflife
