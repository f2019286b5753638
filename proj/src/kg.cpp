#include "shelflife/kg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace shelflife {

const char* to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::numeric: return "numeric";
    case ValueKind::categorical: return "categorical";
    case ValueKind::text: return "text";
  }
  return "categorical";
}

ValueKind value_kind_from_string(const std::string& s) {
  if (s == "numeric") return ValueKind::numeric;
  if (s == "categorical") return ValueKind::categorical;
  if (s == "text") return ValueKind::text;
  throw DataError("unknown value_kind '" + s + "'");
}

const char* to_string(Metric metric) {
  return metric == Metric::euclidean ? "euclidean" : "cosine";
}

Metric metric_from_string(const std::string& s) {
  if (s == "euclidean") return Metric::euclidean;
  if (s == "cosine") return Metric::cosine;
  throw ConfigError("unknown metric '" + s + "'");
}

double embed_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
  if (a.size() != b.size()) {
    throw DataError("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  if (metric == Metric::euclidean) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double cos = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
  return std::max(0.0, 1.0 - cos);
}

double embed_distance(const Value& a, const Value& b, Metric metric) {
  return embed_distance(a.embedding, b.embedding, metric);
}

EdgeStore::EdgeStore(std::vector<Edge> edges, std::optional<Window> window)
    : edges_(std::move(edges)), window_(window) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    Edge& e = edges_[i];
    if (!std::isfinite(e.t)) throw DataError("edge " + std::to_string(e.id) + ": non-finite timestamp");
    if (i == 0) dim_ = e.value.embedding.size();
    if (e.value.embedding.size() != dim_) {
      throw DataError("edge " + std::to_string(e.id) + ": embedding dimension " +
                      std::to_string(e.value.embedding.size()) + ", expected " + std::to_string(dim_));
    }
    for (double x : e.value.embedding) {
      if (!std::isfinite(x)) throw DataError("edge " + std::to_string(e.id) + ": non-finite embedding");
    }
    if (e.entity.empty()) e.entity = e.subject;
    if (!by_id_.emplace(e.id, i).second) {
      throw DataError("duplicate edge id " + std::to_string(e.id));
    }
    lo = std::min(lo, e.t);
    hi = std::max(hi, e.t);
    by_concept_[{e.subject, e.predicate}].push_back(i);
    by_subject_[e.subject].push_back(i);
  }
  if (!window_ && !edges_.empty()) window_ = Window{lo, hi};
  if (window_ && !edges_.empty() && (lo < window_->start || hi > window_->end)) {
    throw DataError("edge timestamps fall outside the observation window");
  }

  auto by_time = [this](std::size_t a, std::size_t b) {
    const Edge& ea = edges_[a];
    const Edge& eb = edges_[b];
    return ea.t != eb.t ? ea.t < eb.t : ea.id < eb.id;
  };
  concept_keys_.reserve(by_concept_.size());
  for (auto& [key, idx] : by_concept_) {
    std::sort(idx.begin(), idx.end(), by_time);
    concept_keys_.push_back(key);
  }
  for (auto& [subject, idx] : by_subject_) std::sort(idx.begin(), idx.end(), by_time);
}

Window EdgeStore::window_or_throw() const {
  if (!window_) throw DataError("observation window undefined for an empty store");
  return *window_;
}

const Edge& EdgeStore::edge(EdgeId id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw DataError("unknown edge id " + std::to_string(id));
  return edges_[it->second];
}

History EdgeStore::concept_history(const std::string& subject, const std::string& predicate) const {
  History out;
  auto it = by_concept_.find({subject, predicate});
  if (it == by_concept_.end()) return out;
  out.reserve(it->second.size());
  for (std::size_t i : it->second) out.push_back(&edges_[i]);
  return out;
}

std::vector<std::string> EdgeStore::predicates() const {
  std::vector<std::string> out;
  for (const auto& [subject, predicate] : concept_keys_) out.push_back(predicate);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<ConceptKey> EdgeStore::concepts_of_predicate(const std::string& predicate) const {
  std::vector<ConceptKey> out;
  for (const auto& key : concept_keys_) {
    if (key.second == predicate) out.push_back(key);
  }
  return out;
}

std::span<const std::size_t> EdgeStore::subject_edges(const std::string& subject) const {
  auto it = by_subject_.find(subject);
  if (it == by_subject_.end()) return {};
  return it->second;
}

namespace {

std::string read_string(const nlohmann::json& obj, const char* key, std::size_t line, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw DataError(std::string("missing key '") + key + "'", line);
    return {};
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number() || it->is_boolean()) return it->dump();
  throw DataError(std::string("key '") + key + "' must be a string", line);
}

}  // namespace

EdgeStore load_edges(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge file '" + path + "'");

  std::vector<Edge> edges;
  std::string text;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& err) {
      throw DataError(std::string("malformed JSON: ") + err.what(), line_no);
    }
    if (!obj.is_object()) throw DataError("expected a JSON object", line_no);

    Edge e;
    e.id = static_cast<EdgeId>(edges.size());
    e.subject = read_string(obj, "subject", line_no, true);
    e.predicate = read_string(obj, "predicate", line_no, true);
    try {
      e.value.kind = value_kind_from_string(read_string(obj, "value_kind", line_no, true));
    } catch (const DataError& err) {
      if (err.line()) throw;
      throw DataError(err.what(), line_no);
    }
    e.value.raw = read_string(obj, "value", line_no, true);
    e.context = read_string(obj, "context", line_no, false);
    e.entity = read_string(obj, "entity", line_no, false);
    if (e.entity.empty()) e.entity = e.subject;

    auto t = obj.find("t");
    if (t == obj.end() || !t->is_number()) throw DataError("missing or non-numeric 't'", line_no);
    e.t = t->get<double>();
    if (!std::isfinite(e.t)) throw DataError("non-finite timestamp", line_no);

    auto emb = obj.find("embedding");
    if (emb == obj.end() || !emb->is_array()) throw DataError("missing 'embedding' array", line_no);
    e.value.embedding.reserve(emb->size());
    for (const auto& x : *emb) {
      if (!x.is_number()) throw DataError("non-numeric embedding component", line_no);
      const double v = x.get<double>();
      if (!std::isfinite(v)) throw DataError("non-finite embedding component", line_no);
      e.value.embedding.push_back(v);
    }
    if (edges.empty()) dim = e.value.embedding.size();
    if (e.value.embedding.size() != dim) {
      throw DataError("embedding dimension " + std::to_string(e.value.embedding.size()) +
                          " differs from " + std::to_string(dim),
                      line_no);
    }
    edges.push_back(std::move(e));
  }
  return EdgeStore(std::move(edges), options.window);
}

void write_edges(const EdgeStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write edge file '" + path + "'");
  std::vector<const Edge*> ordered;
  ordered.reserve(store.size());
  for (const Edge& e : store.edges()) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(), [](const Edge* a, const Edge* b) { return a->id < b->id; });
  for (const Edge* e : ordered) {
    nlohmann::ordered_json obj;
    obj["subject"] = e->subject;
    obj["predicate"] = e->predicate;
    obj["value_kind"] = to_string(e->value.kind);
    obj["value"] = e->value.raw;
    obj["embedding"] = e->value.embedding;
    obj["t"] = e->t;
    if (!e->context.empty()) obj["context"] = e->context;
    if (e->entity != e->subject) obj["entity"] = e->entity;
    out << obj.dump() << '\n';
  }
  if (!out) throw DataError("failed writing edge file '" + path + "'");
}

}  // namespace shelflife
