#pragma once

// Cluster -> context -> entity tree of decay surfaces. Each level below the
// top is shrunk toward its parent; kappa is shared down a cluster's subtree.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "shelflife/clustering.hpp"
#include "shelflife/kg.hpp"
#include "shelflife/signals.hpp"
#include "shelflife/survival.hpp"

namespace shelflife {

enum class Level { cluster = 1, context = 2, entity = 3 };
const char* to_string(Level level);

struct NodeRef {
  Level level = Level::cluster;
  int cluster = 0;
  std::string context;
  std::string entity;

  bool operator==(const NodeRef&) const = default;
};

struct DecayParams {
  std::array<double, 4> theta{};      // raw (1, v, sigma, v*sigma) coefficients
  std::array<double, 4> theta_std{};  // in the cluster's standardized coordinates
  double kappa = 1.0;
  double tau_floor = 0.0;
  std::size_t n_records = 0;
  std::size_t n_events = 0;
  bool inherited = false;  // below threshold: copied from the parent
  bool no_event = false;   // cluster never superseded
  bool converged = true;
  std::optional<NodeRef> parent;
};

using ContextKey = std::pair<int, std::string>;
using EntityKey = std::tuple<int, std::string, std::string>;

struct HierarchyOptions {
  double lambda_context = 1.0;
  double lambda_entity = 1.0;
  std::size_t min_obs = 5;
  std::size_t min_entity_records = 10;
  // Refit kappa per context, shrunk toward the cluster kappa with weight
  // lambda_context on (log kappa_c - log kappa_k)^2.
  bool per_context_kappa = false;
  double min_duration = 1e-3;
  SurfaceOptions surface;
};

struct HierarchyModel {
  std::map<int, DecayParams> clusters;
  std::map<ContextKey, DecayParams> contexts;
  std::map<EntityKey, DecayParams> entities;
  std::map<int, CovariateTransform> transforms;
  std::map<std::string, int> predicate_cluster;  // noise already routed through cold start
  ClusterModel cluster_model;
  HierarchyOptions options;
  double window_length = 0.0;
};

/// Cluster per predicate with noise labels replaced by their cold-start
/// cluster. Predicates missing from `profiles` keep their label.
std::map<std::string, int> effective_assignment(const ClusterModel& model, const ProfileSet& profiles);

/// Throws DataError when `predicate_cluster` has no cluster at all.
HierarchyModel fit_hierarchy(const EdgeStore& store, std::span<const LifetimeRecord> records,
                             const ClusterModel& cluster_model, const std::map<std::string, int>& predicate_cluster,
                             const HierarchyOptions& options = {});

struct ColdStartHint {
  std::optional<Features> raw_features;
  std::optional<std::vector<double>> embedding;
};

struct Resolution {
  DecayParams params;
  Level level = Level::cluster;
  int cluster = 0;
  bool cold_start = false;
};

/// Deepest node available up to `max_level`. An unknown predicate goes
/// through cold start (profile, then embedding); with no hint it falls
/// back to the cluster holding the most records.
Resolution resolve_params(const HierarchyModel& model, const std::string& predicate,
                          const std::optional<std::string>& context = std::nullopt,
                          const std::optional<std::string>& entity = std::nullopt, Level max_level = Level::entity,
                          const ColdStartHint& hint = {});

/// Shelf life exp(theta . (1, v, sigma, v*sigma)) floored by tau_floor.
double effective_tau(const DecayParams& params, double v, double sigma);

nlohmann::ordered_json to_json(const HierarchyModel& model);
HierarchyModel hierarchy_from_json(const nlohmann::json& j);

}  // namespace shelflife
