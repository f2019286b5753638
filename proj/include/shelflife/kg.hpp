#pragma once

// Immutable temporal knowledge-graph store.
//
// Edges are (subject, predicate, value, t) facts with a value embedding.
// A concept is a (subject, predicate) pair; its history is the list of
// its edges ordered by (t, id).

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace shelflife {

/// Malformed or inconsistent input data. Carries the 1-based line number
/// when the problem was found while reading a file.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Invalid configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EdgeId = std::uint32_t;

enum class ValueKind { numeric, categorical, text };

const char* to_string(ValueKind kind);
ValueKind value_kind_from_string(const std::string& s);

struct Value {
  ValueKind kind = ValueKind::categorical;
  std::string raw;
  std::vector<double> embedding;
};

struct Edge {
  EdgeId id = 0;
  std::string subject;
  std::string predicate;
  Value value;
  double t = 0.0;  // days since corpus epoch
  std::string context;  // empty when the edge carries no context
  std::string entity;   // defaults to subject
};

struct Window {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
};

using ConceptKey = std::pair<std::string, std::string>;  // (subject, predicate)
using History = std::vector<const Edge*>;

enum class Metric { euclidean, cosine };

const char* to_string(Metric metric);
Metric metric_from_string(const std::string& s);

/// Distance between two value embeddings. Throws DataError on a dimension
/// mismatch. Cosine distance is 1 - cos(a, b); a zero vector is at distance
/// 0 from another zero vector and 1 from anything else.
double embed_distance(std::span<const double> a, std::span<const double> b,
                      Metric metric = Metric::euclidean);
double embed_distance(const Value& a, const Value& b, Metric metric = Metric::euclidean);

class EdgeStore {
 public:
  EdgeStore() = default;

  /// Builds the indices. Ids must be unique, timestamps finite and every
  /// embedding the same dimension. The window defaults to [min t, max t].
  explicit EdgeStore(std::vector<Edge> edges, std::optional<Window> window = std::nullopt);

  std::span<const Edge> edges() const { return edges_; }
  std::size_t size() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }
  std::size_t embedding_dim() const { return dim_; }

  /// Undefined for an empty store unless it was given explicitly.
  const std::optional<Window>& window() const { return window_; }
  Window window_or_throw() const;

  const Edge& edge(EdgeId id) const;
  bool contains(EdgeId id) const { return by_id_.contains(id); }

  /// Edges of (subject, predicate) sorted by (t, id); empty when unknown.
  History concept_history(const std::string& subject, const std::string& predicate) const;

  /// Every concept key, in sorted order.
  const std::vector<ConceptKey>& concepts() const { return concept_keys_; }
  /// Predicates in sorted order.
  std::vector<std::string> predicates() const;
  /// Concept keys for one predicate.
  std::vector<ConceptKey> concepts_of_predicate(const std::string& predicate) const;
  /// Indices into edges() of one subject's edges, sorted by (t, id).
  std::span<const std::size_t> subject_edges(const std::string& subject) const;

 private:
  std::vector<Edge> edges_;
  std::optional<Window> window_;
  std::size_t dim_ = 0;
  std::unordered_map<EdgeId, std::size_t> by_id_;
  std::map<ConceptKey, std::vector<std::size_t>> by_concept_;
  std::map<std::string, std::vector<std::size_t>> by_subject_;
  std::vector<ConceptKey> concept_keys_;
};

struct LoadOptions {
  std::optional<Window> window;
};

/// Reads the JSONL edge format. Edge ids are assigned in line order,
/// skipping blank lines.
EdgeStore load_edges(const std::string& path, const LoadOptions& options = {});

/// Writes the JSONL edge format in id order.
void write_edges(const EdgeStore& store, const std::string& path);

}  // namespace shelflife
