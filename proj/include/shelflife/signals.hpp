#pragma once

// Velocity / volatility signals and survival-record extraction.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shelflife/kg.hpp"

namespace shelflife {

struct ConceptSignals {
  double velocity = 0.0;    // observations per day
  double volatility = 0.0;  // mean consecutive embedding distance
  std::size_t n_obs = 0;
  bool volatility_defined = false;  // false when n_obs < 2
};

/// Count of edges with t in [t - delta, t], divided by delta.
double compute_velocity(std::span<const Edge* const> history, double t, double delta);

/// Mean distance between consecutive values. Not time-normalized.
/// Returns 0 and clears `defined` when the history has fewer than 2 edges.
double compute_volatility(std::span<const Edge* const> history, Metric metric = Metric::euclidean,
                          bool* defined = nullptr);

/// Velocity over the trailing `velocity_window` days ending at the last
/// edge; without one, over the full observed span (at least one day).
/// Volatility is over the whole history.
ConceptSignals concept_signals(std::span<const Edge* const> history, Metric metric = Metric::euclidean,
                               std::optional<double> velocity_window = std::nullopt);

enum class Event { superseded, censored, reinforcement };

const char* to_string(Event event);
Event event_from_string(const std::string& s);

struct LifetimeRecord {
  EdgeId edge_id = 0;                   // the live edge the record belongs to
  std::optional<EdgeId> superseded_by;  // set for superseded records
  double duration = 0.0;                // days, > 0
  Event event = Event::censored;
  double velocity = 0.0;
  double volatility = 0.0;
  bool volatility_imputed = false;
  std::string subject;
  std::string predicate;
  std::string context;
  std::string entity;
  int cluster = -1;  // filled once predicates are clustered
};

struct ExtractOptions {
  double default_epsilon = 0.3;
  std::map<std::string, double> epsilon;  // per-predicate overrides
  double min_duration = 1e-3;
  // Alternative clock: reinforcement and terminal durations measured from
  // the latest observation of the live value instead of its creation.
  bool reset_clock = false;
  Metric metric = Metric::euclidean;
  std::optional<double> velocity_window;  // days; unset = full span

  double epsilon_for(const std::string& predicate) const;
};

/// Walks every concept in time order and emits reinforcement, superseded
/// and final censored records. Output is sorted by concept, then time.
std::vector<LifetimeRecord> extract_lifetimes(const EdgeStore& store, const ExtractOptions& options = {});

struct PredicateSignals {
  double velocity = 0.0;
  double volatility = 0.0;
  std::optional<double> mean_lifetime;  // mean superseded duration
  double rho = 0.0;       // superseded / (superseded + reinforcement)
  double sup_rate = 0.0;  // superseded / (superseded + censored)
  std::size_t n_records = 0;
  std::size_t n_superseded = 0;
  std::size_t n_reinforcement = 0;
  std::size_t n_censored = 0;
  std::size_t n_concepts = 0;
};

struct PredicateSignalTable {
  std::map<std::string, PredicateSignals> signals;
  std::vector<std::string> skipped;  // predicates present in the store with no records
};

PredicateSignalTable predicate_signals(const EdgeStore& store, std::span<const LifetimeRecord> records,
                                       Metric metric = Metric::euclidean,
                                       std::optional<double> velocity_window = std::nullopt);

/// CSV dump: edge_id,predicate,context,entity,duration_days,event,velocity,volatility
/// A non-empty `comment` goes on a leading '#' line.
void write_lifetimes_csv(std::span<const LifetimeRecord> records, const std::string& path,
                         const std::string& comment = {});
/// Reads the dump back; subjects come from the store. Lines starting with
/// '#' are skipped.
std::vector<LifetimeRecord> read_lifetimes_csv(const std::string& path, const EdgeStore& store);

}  // namespace shelflife
