#include "shelflife/signals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace shelflife {

double compute_velocity(std::span<const Edge* const> history, double t, double delta) {
  if (!(delta > 0.0)) throw ConfigError("velocity window must be positive");
  const double lo = t - delta;
  std::size_t count = 0;
  for (const Edge* e : history) {
    if (e->t >= lo && e->t <= t) ++count;
  }
  return static_cast<double>(count) / delta;
}

double compute_volatility(std::span<const Edge* const> history, Metric metric, bool* defined) {
  if (history.size() < 2) {
    if (defined) *defined = false;
    return 0.0;
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < history.size(); ++i) {
    total += embed_distance(history[i]->value, history[i + 1]->value, metric);
  }
  if (defined) *defined = true;
  return total / static_cast<double>(history.size() - 1);
}

ConceptSignals concept_signals(std::span<const Edge* const> history, Metric metric,
                               std::optional<double> velocity_window) {
  ConceptSignals s;
  s.n_obs = history.size();
  if (history.empty()) return s;
  const double first = history.front()->t;
  const double last = history.back()->t;
  s.velocity = compute_velocity(history, last, velocity_window.value_or(std::max(last - first, 1.0)));
  s.volatility = compute_volatility(history, metric, &s.volatility_defined);
  return s;
}

const char* to_string(Event event) {
  switch (event) {
    case Event::superseded: return "superseded";
    case Event::censored: return "censored";
    case Event::reinforcement: return "reinforcement";
  }
  return "censored";
}

Event event_from_string(const std::string& s) {
  if (s == "superseded") return Event::superseded;
  if (s == "censored") return Event::censored;
  if (s == "reinforcement") return Event::reinforcement;
  throw DataError("unknown event kind '" + s + "'");
}

double ExtractOptions::epsilon_for(const std::string& predicate) const {
  auto it = epsilon.find(predicate);
  return it == epsilon.end() ? default_epsilon : it->second;
}

namespace {

void validate(const ExtractOptions& options) {
  if (!(options.default_epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  for (const auto& [p, eps] : options.epsilon) {
    if (!(eps > 0.0)) throw ConfigError("epsilon for '" + p + "' must be positive");
  }
  if (!(options.min_duration > 0.0)) throw ConfigError("min_duration must be positive");
  if (options.velocity_window && !(*options.velocity_window > 0.0)) {
    throw ConfigError("velocity window must be positive");
  }
}

std::vector<LifetimeRecord> concept_records(const History& history, double t_now,
                                            const ExtractOptions& options) {
  std::vector<LifetimeRecord> out;
  if (history.empty()) return out;
  const ConceptSignals sig = concept_signals(history, options.metric, options.velocity_window);
  const double eps = options.epsilon_for(history.front()->predicate);

  auto make = [&](const Edge& live, Event event, double duration) {
    LifetimeRecord r;
    r.edge_id = live.id;
    r.event = event;
    r.duration = std::max(duration, options.min_duration);
    r.velocity = sig.velocity;
    r.volatility = sig.volatility;
    r.volatility_imputed = !sig.volatility_defined;
    r.subject = live.subject;
    r.predicate = live.predicate;
    r.context = live.context;
    r.entity = live.entity;
    return r;
  };

  const Edge* live = history.front();
  double clock = live->t;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const Edge* next = history[i];
    const double d = embed_distance(live->value, next->value, options.metric);
    const double start = options.reset_clock ? clock : live->t;
    if (d > eps) {
      LifetimeRecord r = make(*live, Event::superseded, next->t - start);
      r.superseded_by = next->id;
      out.push_back(std::move(r));
      live = next;
    } else {
      out.push_back(make(*live, Event::reinforcement, next->t - start));
    }
    clock = next->t;
  }
  const double start = options.reset_clock ? clock : live->t;
  out.push_back(make(*live, Event::censored, t_now - start));
  return out;
}

}  // namespace

std::vector<LifetimeRecord> extract_lifetimes(const EdgeStore& store, const ExtractOptions& options) {
  validate(options);
  if (store.empty()) return {};
  const double t_now = store.window_or_throw().end;
  const auto& keys = store.concepts();
  std::vector<std::vector<LifetimeRecord>> per_concept(keys.size());

#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(keys.size()); ++i) {
    const auto& [subject, predicate] = keys[static_cast<std::size_t>(i)];
    per_concept[static_cast<std::size_t>(i)] =
        concept_records(store.concept_history(subject, predicate), t_now, options);
  }

  // Concepts with a single observation have no volatility; impute the
  // predicate-level mean over concepts where it is defined.
  std::map<std::string, std::pair<double, std::size_t>> vol_sum;
  for (const auto& recs : per_concept) {
    if (recs.empty() || recs.front().volatility_imputed) continue;
    auto& acc = vol_sum[recs.front().predicate];
    acc.first += recs.front().volatility;
    acc.second += 1;
  }

  std::size_t total = 0;
  for (const auto& recs : per_concept) total += recs.size();
  std::vector<LifetimeRecord> out;
  out.reserve(total);
  for (auto& recs : per_concept) {
    for (auto& r : recs) {
      if (r.volatility_imputed) {
        auto it = vol_sum.find(r.predicate);
        r.volatility = it == vol_sum.end() ? 0.0 : it->second.first / static_cast<double>(it->second.second);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

PredicateSignalTable predicate_signals(const EdgeStore& store, std::span<const LifetimeRecord> records,
                                       Metric metric, std::optional<double> velocity_window) {
  if (velocity_window && !(*velocity_window > 0.0)) throw ConfigError("velocity window must be positive");
  PredicateSignalTable table;
  struct Acc {
    double vel = 0.0, vol = 0.0, life = 0.0;
    std::size_t n_concepts = 0, n_vol = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& [subject, predicate] : store.concepts()) {
    const History h = store.concept_history(subject, predicate);
    const ConceptSignals s = concept_signals(h, metric, velocity_window);
    Acc& a = acc[predicate];
    a.vel += s.velocity;
    a.n_concepts += 1;
    if (s.volatility_defined) {
      a.vol += s.volatility;
      a.n_vol += 1;
    }
  }
  for (const LifetimeRecord& r : records) {
    PredicateSignals& ps = table.signals[r.predicate];
    ps.n_records += 1;
    switch (r.event) {
      case Event::superseded:
        ps.n_superseded += 1;
        acc[r.predicate].life += r.duration;
        break;
      case Event::reinforcement: ps.n_reinforcement += 1; break;
      case Event::censored: ps.n_censored += 1; break;
    }
  }
  for (auto& [predicate, ps] : table.signals) {
    const Acc& a = acc[predicate];
    ps.n_concepts = a.n_concepts;
    ps.velocity = a.n_concepts ? a.vel / static_cast<double>(a.n_concepts) : 0.0;
    ps.volatility = a.n_vol ? a.vol / static_cast<double>(a.n_vol) : 0.0;
    if (ps.n_superseded) ps.mean_lifetime = a.life / static_cast<double>(ps.n_superseded);
    const std::size_t re_obs = ps.n_superseded + ps.n_reinforcement;
    ps.rho = re_obs ? static_cast<double>(ps.n_superseded) / static_cast<double>(re_obs) : 0.0;
    const std::size_t terminal = ps.n_superseded + ps.n_censored;
    ps.sup_rate = terminal ? static_cast<double>(ps.n_superseded) / static_cast<double>(terminal) : 0.0;
  }
  for (const auto& [predicate, a] : acc) {
    if (!table.signals.contains(predicate)) table.skipped.push_back(predicate);
  }
  return table;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("unterminated quoted field", line_no);
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw DataError("not a number: '" + s + "'", line_no);
  return v;
}

}  // namespace

void write_lifetimes_csv(std::span<const LifetimeRecord> records, const std::string& path,
                         const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "edge_id,predicate,context,entity,duration_days,event,velocity,volatility\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : records) {
    out << r.edge_id << ',' << csv_field(r.predicate) << ',' << csv_field(r.context) << ',' << csv_field(r.entity)
        << ',' << r.duration << ',' << to_string(r.event) << ',' << r.velocity << ',' << r.volatility << '\n';
  }
}

std::vector<LifetimeRecord> read_lifetimes_csv(const std::string& path, const EdgeStore& store) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::vector<LifetimeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != "edge_id,predicate,context,entity,duration_days,event,velocity,volatility") {
        throw DataError("unexpected lifetimes header", line_no);
      }
      header = true;
      continue;
    }
    const auto f = split_csv(line, line_no);
    if (f.size() != 8) throw DataError("expected 8 fields, got " + std::to_string(f.size()), line_no);
    LifetimeRecord r;
    const double id = parse_double(f[0], line_no);
    if (!(id >= 0.0) || id != std::floor(id) || !store.contains(static_cast<EdgeId>(id))) {
      throw DataError("unknown edge id '" + f[0] + "'", line_no);
    }
    r.edge_id = static_cast<EdgeId>(id);
    const Edge& e = store.edge(r.edge_id);
    r.subject = e.subject;
    r.predicate = f[1];
    r.context = f[2];
    r.entity = f[3];
    r.duration = parse_double(f[4], line_no);
    r.event = event_from_string(f[5]);
    r.velocity = parse_double(f[6], line_no);
    r.volatility = parse_double(f[7], line_no);
    if (!(r.duration > 0.0)) throw DataError("duration must be positive", line_no);
    out.push_back(std::move(r));
  }
  if (!header) throw DataError("'" + path + "' has no lifetimes header");
  return out;
}

}  // namespace shelflife
