#include "shelflife/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <boost/math/special_functions/digamma.hpp>

#include "shelflife/kernels.hpp"

namespace shelflife {

Features Standardization::apply(const Features& raw) const {
  Features z{};
  for (std::size_t k = 0; k < kProfileDim; ++k) z[k] = sd[k] > 0.0 ? (raw[k] - mean[k]) / sd[k] : 0.0;
  return z;
}

std::vector<double> ProfileSet::matrix() const {
  std::vector<double> m;
  m.reserve(profiles.size() * kProfileDim);
  for (const auto& p : profiles) m.insert(m.end(), p.z.begin(), p.z.end());
  return m;
}

Features raw_features(const PredicateSignals& s, double window_length) {
  const double life = s.mean_lifetime.value_or(window_length);
  return {s.velocity, s.volatility, std::log(std::max(life, 1e-9)), s.rho, s.sup_rate};
}

ProfileSet build_profiles(const PredicateSignalTable& signals, double window_length, std::size_t min_obs,
                          const std::map<std::string, std::vector<double>>& embeddings) {
  if (min_obs < 1) throw ConfigError("min_obs must be >= 1");
  if (!(window_length > 0.0)) throw ConfigError("window length must be positive");
  ProfileSet set;
  for (const auto& [predicate, s] : signals.signals) {
    if (s.n_records < min_obs) {
      set.excluded.push_back(predicate);
      continue;
    }
    PredicateProfile p;
    p.predicate = predicate;
    p.raw = raw_features(s, window_length);
    if (auto it = embeddings.find(predicate); it != embeddings.end()) p.embedding = it->second;
    set.profiles.push_back(std::move(p));
  }
  if (set.profiles.size() < 2) {
    throw DataError("need at least 2 predicates with >= " + std::to_string(min_obs) + " records to cluster, got " +
                    std::to_string(set.profiles.size()));
  }
  const double n = static_cast<double>(set.profiles.size());
  auto& st = set.standardization;
  for (std::size_t k = 0; k < kProfileDim; ++k) {
    double m = 0.0;
    for (const auto& p : set.profiles) m += p.raw[k];
    m /= n;
    double v = 0.0;
    for (const auto& p : set.profiles) v += (p.raw[k] - m) * (p.raw[k] - m);
    const double sd = std::sqrt(v / n);
    st.mean[k] = m;
    st.sd[k] = sd > 1e-12 * (1.0 + std::abs(m)) ? sd : 0.0;
  }
  for (auto& p : set.profiles) p.z = st.apply(p.raw);
  return set;
}

const char* to_string(ClusterMethod m) {
  return m == ClusterMethod::density ? "density" : "dpmixture";
}

ClusterMethod cluster_method_from_string(const std::string& s) {
  if (s == "density" || s == "hdbscan") return ClusterMethod::density;
  if (s == "dpmixture" || s == "dpgmm") return ClusterMethod::dpmixture;
  throw ConfigError("unknown clustering method '" + s + "'");
}

namespace {

// Renumbers labels 0..K-1 by first appearance; -1 stays noise.
std::vector<int> canonical(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size(), -1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    auto [it, inserted] = remap.emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

struct UnionFind {
  std::vector<std::size_t> parent, size;
  explicit UnionFind(std::size_t n) : parent(n), size(n, 1) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
};

struct CondensedEdge {
  std::size_t parent;
  std::size_t child;
  double lambda;
  std::size_t size;
};

}  // namespace

std::vector<int> density_labels(std::span<const double> points, std::size_t n, std::size_t d,
                                const DensityOptions& options) {
  if (options.min_cluster_size < 2) throw ConfigError("min_cluster_size must be >= 2");
  if (options.min_samples < 1) throw ConfigError("min_samples must be >= 1");
  if (n < options.min_cluster_size) {
    throw DataError("density clustering needs at least min_cluster_size points");
  }
  std::vector<double> dist(n * n);
  if (n >= 512) kernels::pairwise_euclidean_parallel(points, n, d, dist);
  else kernels::pairwise_euclidean_serial(points, n, d, dist);

  // core distance: min_samples-th nearest other point
  std::vector<double> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(dist.begin() + static_cast<std::ptrdiff_t>(i * n),
                            dist.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    const std::size_t k = std::min(options.min_samples, n - 1);
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    core[i] = row[k];
  }
  auto mreach = [&](std::size_t i, std::size_t j) { return std::max({core[i], core[j], dist[i * n + j]}); };

  // Prim's MST on the mutual-reachability graph.
  struct MstEdge {
    std::size_t a, b;
    double w;
  };
  std::vector<MstEdge> mst;
  mst.reserve(n - 1);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::vector<bool> in_tree(n, false);
  std::size_t cur = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double w = mreach(cur, j);
      if (w < best[j]) {
        best[j] = w;
        from[j] = cur;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    mst.push_back({from[next], next, best[next]});
    cur = next;
  }
  std::stable_sort(mst.begin(), mst.end(), [](const MstEdge& a, const MstEdge& b) { return a.w < b.w; });

  // Single-linkage dendrogram: internal node n + k joins two components.
  struct Node {
    std::size_t left, right;
    double dist;
    std::size_t size;
  };
  std::vector<Node> nodes;
  nodes.reserve(n);
  UnionFind uf(2 * n);
  std::vector<std::size_t> comp_node(2 * n);
  std::iota(comp_node.begin(), comp_node.end(), 0);
  auto node_size = [&](std::size_t id) { return id < n ? std::size_t{1} : nodes[id - n].size; };
  for (const auto& e : mst) {
    const std::size_t ra = uf.find(e.a), rb = uf.find(e.b);
    const std::size_t na = comp_node[ra], nb = comp_node[rb];
    const std::size_t id = n + nodes.size();
    nodes.push_back({na, nb, e.w, node_size(na) + node_size(nb)});
    uf.parent[ra] = rb;
    comp_node[rb] = id;
  }
  if (n == 1) return {0};

  // Condense the tree against min_cluster_size.
  const std::size_t mcs = options.min_cluster_size;
  const std::size_t root = 2 * n - 2;
  auto lambda_of = [](double dv) { return dv > 0.0 ? std::min(1.0 / dv, 1e12) : 1e12; };
  std::vector<CondensedEdge> condensed;
  std::vector<std::size_t> relabel(2 * n - 1, 0);
  std::size_t next_label = n;
  relabel[root] = next_label++;

  auto leaves_of = [&](std::size_t id, std::vector<std::size_t>& out) {
    std::vector<std::size_t> stack{id};
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      if (x < n) out.push_back(x);
      else {
        stack.push_back(nodes[x - n].left);
        stack.push_back(nodes[x - n].right);
      }
    }
  };

  std::vector<std::size_t> queue{root};
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const std::size_t id = queue[qi];
    if (id < n) continue;
    const Node& nd = nodes[id - n];
    const double lam = lambda_of(nd.dist);
    const std::size_t ls = node_size(nd.left), rs = node_size(nd.right);
    const std::size_t parent = relabel[id];
    auto fall_out = [&](std::size_t child) {
      std::vector<std::size_t> pts;
      leaves_of(child, pts);
      std::sort(pts.begin(), pts.end());
      for (std::size_t p : pts) condensed.push_back({parent, p, lam, 1});
    };
    if (ls >= mcs && rs >= mcs) {
      relabel[nd.left] = next_label++;
      condensed.push_back({parent, relabel[nd.left], lam, ls});
      relabel[nd.right] = next_label++;
      condensed.push_back({parent, relabel[nd.right], lam, rs});
      queue.push_back(nd.left);
      queue.push_back(nd.right);
    } else if (ls < mcs && rs < mcs) {
      fall_out(nd.left);
      fall_out(nd.right);
    } else if (ls < mcs) {
      fall_out(nd.left);
      relabel[nd.right] = parent;
      queue.push_back(nd.right);
    } else {
      fall_out(nd.right);
      relabel[nd.left] = parent;
      queue.push_back(nd.left);
    }
  }

  const std::size_t n_clusters = next_label - n;
  if (n_clusters == 1) return std::vector<int>(n, 0);  // no split survives: one cluster

  // Stability and excess-of-mass selection.
  std::vector<double> birth(n_clusters, 0.0);
  std::vector<double> stability(n_clusters, 0.0);
  std::vector<std::vector<std::size_t>> children(n_clusters);
  for (const auto& e : condensed) {
    if (e.child >= n) {
      birth[e.child - n] = e.lambda;
      children[e.parent - n].push_back(e.child - n);
    }
  }
  for (const auto& e : condensed) {
    stability[e.parent - n] += (e.lambda - birth[e.parent - n]) * static_cast<double>(e.size);
  }
  std::vector<bool> selected(n_clusters, false);
  for (std::size_t c = n_clusters; c-- > 1;) {
    double child_sum = 0.0;
    for (std::size_t ch : children[c]) child_sum += stability[ch];
    if (children[c].empty() || stability[c] >= child_sum) {
      selected[c] = true;
      std::vector<std::size_t> stack(children[c].begin(), children[c].end());
      while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        selected[x] = false;
        stack.insert(stack.end(), children[x].begin(), children[x].end());
      }
    } else {
      stability[c] = child_sum;
    }
  }

  std::vector<std::size_t> cluster_parent(n_clusters, 0);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    for (std::size_t ch : children[c]) cluster_parent[ch] = c;
  }
  std::vector<int> labels(n, -1);
  for (const auto& e : condensed) {
    if (e.child >= n) continue;
    std::size_t c = e.parent - n;
    while (c != 0 && !selected[c]) c = cluster_parent[c];
    if (c != 0) labels[e.child] = static_cast<int>(c);
  }
  return canonical(labels);
}

// ---------------------------------------------------------------------------
// Variational Dirichlet-process mixture, diagonal covariances

namespace {

std::vector<int> kmeans_init(std::span<const double> x, std::size_t n, std::size_t d, std::size_t k,
                             std::mt19937_64& rng) {
  std::vector<double> centers;
  centers.reserve(k * d);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  const std::size_t c0 = first(rng);
  centers.insert(centers.end(), x.begin() + static_cast<std::ptrdiff_t>(c0 * d),
                 x.begin() + static_cast<std::ptrdiff_t>((c0 + 1) * d));
  auto sq = [&](std::size_t i, std::size_t c) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = x[i * d + j] - centers[c * d + j];
      s += t * t;
    }
    return s;
  };
  std::vector<double> dmin(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dmin[i] = std::min(dmin[i], sq(i, c - 1));
      total += dmin[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      for (pick = 0; pick + 1 < n; ++pick) {
        acc += dmin[pick];
        if (acc >= r) break;
      }
    } else {
      pick = first(rng);
    }
    centers.insert(centers.end(), x.begin() + static_cast<std::ptrdiff_t>(pick * d),
                   x.begin() + static_cast<std::ptrdiff_t>((pick + 1) * d));
  }
  std::vector<int> label(n, 0);
  for (int it = 0; it < 300; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq(i, 0);
      for (std::size_t c = 1; c < k; ++c) {
        const double v = sq(i, c);
        if (v < bd) {
          bd = v;
          best = static_cast<int>(c);
        }
      }
      changed = changed || best != label[i];
      label[i] = best;
    }
    std::vector<double> sum(k * d, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      cnt[static_cast<std::size_t>(label[i])] += 1;
      for (std::size_t j = 0; j < d; ++j) sum[static_cast<std::size_t>(label[i]) * d + j] += x[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (cnt[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) centers[c * d + j] = sum[c * d + j] / static_cast<double>(cnt[c]);
    }
    if (!changed && it > 0) break;  // first pass always recomputes centers
  }
  return label;
}

}  // namespace

MixtureResult mixture_labels(std::span<const double> x, std::size_t n, std::size_t d,
                             const MixtureOptions& options) {
  if (n < 2) throw DataError("mixture clustering needs at least 2 points");
  if (options.max_components < 1) throw ConfigError("max_components must be >= 1");
  if (!(options.weight_concentration > 0.0)) throw ConfigError("weight_concentration must be positive");
  using boost::math::digamma;
  const std::size_t K = std::min(options.max_components, n);
  const double dd = static_cast<double>(d);

  // Priors from the data.
  std::vector<double> mean0(d, 0.0), cov0(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean0[j] += x[i * d + j];
  }
  for (double& m : mean0) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) cov0[j] += (x[i * d + j] - mean0[j]) * (x[i * d + j] - mean0[j]);
  }
  // Prior scale var / K^(2/d) as in Fraley & Raftery's regularized mixtures;
  // the unscaled data variance makes every component as wide as the data.
  const double prior_scale =
      options.covariance_prior_scale.value_or(std::pow(static_cast<double>(options.max_components), -2.0 / dd));
  for (double& c : cov0) c = std::max(prior_scale * c / static_cast<double>(n - 1), options.reg_covar);
  const double beta0 = 1.0, nu0 = dd, gamma0 = options.weight_concentration;

  std::mt19937_64 rng(options.seed);
  const std::vector<int> init = kmeans_init(x, n, d, K, rng);
  std::vector<double> resp(n * K, 0.0);
  for (std::size_t i = 0; i < n; ++i) resp[i * K + static_cast<std::size_t>(init[i])] = 1.0;

  std::vector<double> nk(K), a(K), b(K), beta(K), nu(K), means(K * d), cov(K * d);
  auto m_step = [&]() {
    for (std::size_t k = 0; k < K; ++k) {
      nk[k] = 10.0 * std::numeric_limits<double>::epsilon();
      for (std::size_t i = 0; i < n; ++i) nk[k] += resp[i * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> xk(d, 0.0), sk(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) xk[j] += resp[i * K + k] * x[i * d + j];
      }
      for (double& v : xk) v /= nk[k];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          const double t = x[i * d + j] - xk[j];
          sk[j] += resp[i * K + k] * t * t;
        }
      }
      for (double& v : sk) v = v / nk[k] + options.reg_covar;
      beta[k] = beta0 + nk[k];
      nu[k] = nu0 + nk[k];
      for (std::size_t j = 0; j < d; ++j) {
        means[k * d + j] = (beta0 * mean0[j] + nk[k] * xk[j]) / beta[k];
        const double diff = xk[j] - mean0[j];
        cov[k * d + j] = (cov0[j] + nk[k] * (sk[j] + beta0 / beta[k] * diff * diff)) / nu[k];
      }
    }
    double tail = 0.0;
    for (std::size_t k = K; k-- > 0;) {
      a[k] = 1.0 + nk[k];
      b[k] = gamma0 + tail;
      tail += nk[k];
    }
  };

  std::vector<double> log_w(K);
  auto log_resp = [&](std::vector<double>& lr) {
    double cum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double ab = digamma(a[k] + b[k]);
      log_w[k] = digamma(a[k]) - ab + cum;
      cum += digamma(b[k]) - ab;
    }
    constexpr double kLog2Pi = 1.8378770664093454836;
    lr.assign(n * K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      double log_det = 0.0;
      for (std::size_t j = 0; j < d; ++j) log_det += -0.5 * std::log(cov[k * d + j]);
      double log_lambda = dd * std::log(2.0);
      for (std::size_t j = 0; j < d; ++j) log_lambda += digamma(0.5 * (nu[k] - static_cast<double>(j)));
      const double extra = -0.5 * dd * std::log(nu[k]) + 0.5 * (log_lambda - dd / beta[k]);
      for (std::size_t i = 0; i < n; ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double t = x[i * d + j] - means[k * d + j];
          q += t * t / cov[k * d + j];
        }
        lr[i * K + k] = -0.5 * (dd * kLog2Pi + q) + log_det + extra + log_w[k];
      }
    }
  };

  MixtureResult res;
  std::vector<double> lr;
  m_step();
  for (int it = 0; it < options.max_iter; ++it) {
    res.iterations = it + 1;
    log_resp(lr);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, lr[i * K + k]);
      double z = 0.0;
      for (std::size_t k = 0; k < K; ++k) z += std::exp(lr[i * K + k] - mx);
      for (std::size_t k = 0; k < K; ++k) {
        const double r = std::exp(lr[i * K + k] - mx) / z;
        change = std::max(change, std::abs(r - resp[i * K + k]));
        resp[i * K + k] = r;
      }
    }
    m_step();
    if (change < options.tol) {
      res.converged = true;
      break;
    }
  }

  // Expected stick-breaking weights; drop the negligible components.
  std::vector<double> weight(K);
  double remain = 1.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double v = a[k] / (a[k] + b[k]);
    weight[k] = remain * v;
    remain *= 1.0 - v;
  }
  const double cutoff = 1.0 / (10.0 * static_cast<double>(options.max_components));
  std::vector<bool> keep(K);
  bool any = false;
  for (std::size_t k = 0; k < K; ++k) {
    keep[k] = weight[k] >= cutoff;
    any = any || keep[k];
  }
  if (!any) keep[static_cast<std::size_t>(std::max_element(weight.begin(), weight.end()) - weight.begin())] = true;

  log_resp(lr);
  std::vector<int> raw(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      if (keep[k] && lr[i * K + k] > best) {
        best = lr[i * K + k];
        raw[i] = static_cast<int>(k);
      }
    }
  }
  std::map<int, int> remap;
  res.labels.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = remap.emplace(raw[i], static_cast<int>(remap.size()));
    if (inserted) res.weights.push_back(weight[static_cast<std::size_t>(raw[i])]);
    res.labels[i] = it->second;
  }
  return res;
}

namespace {

ClusterModel assemble(ClusterMethod method, const ProfileSet& set, const std::vector<int>& labels) {
  ClusterModel model;
  model.method = method;
  model.standardization = set.standardization;
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  model.centroids.assign(static_cast<std::size_t>(k), Features{});
  model.sizes.assign(static_cast<std::size_t>(k), 0);
  std::map<int, std::pair<std::vector<double>, std::size_t>> emb;
  for (std::size_t i = 0; i < set.profiles.size(); ++i) {
    const auto& p = set.profiles[i];
    model.labels[p.predicate] = labels[i];
    if (labels[i] < 0) continue;
    const auto c = static_cast<std::size_t>(labels[i]);
    model.sizes[c] += 1;
    for (std::size_t j = 0; j < kProfileDim; ++j) model.centroids[c][j] += p.z[j];
    if (p.embedding) {
      auto& [sum, cnt] = emb[labels[i]];
      if (sum.empty()) sum.assign(p.embedding->size(), 0.0);
      if (sum.size() == p.embedding->size()) {
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += (*p.embedding)[j];
        cnt += 1;
      }
    }
  }
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    for (double& v : model.centroids[c]) v /= static_cast<double>(model.sizes[c]);
  }
  for (auto& [c, acc] : emb) {
    for (double& v : acc.first) v /= static_cast<double>(acc.second);
    model.embedding_centroids[c] = std::move(acc.first);
  }
  model.all_noise = model.centroids.empty();
  return model;
}

}  // namespace

ClusterModel cluster_density(const ProfileSet& profiles, const DensityOptions& options) {
  const auto m = profiles.matrix();
  return assemble(ClusterMethod::density, profiles,
                  density_labels(m, profiles.profiles.size(), kProfileDim, options));
}

ClusterModel cluster_dpmixture(const ProfileSet& profiles, const MixtureOptions& options) {
  const auto m = profiles.matrix();
  const auto res = mixture_labels(m, profiles.profiles.size(), kProfileDim, options);
  ClusterModel model = assemble(ClusterMethod::dpmixture, profiles, res.labels);
  model.converged = res.converged;
  return model;
}

// ---------------------------------------------------------------------------
// Agreement metrics

namespace {

struct Contingency {
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows, cols;
  double n = 0.0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DataError("label vectors differ in length");
  Contingency c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.cells[{a[i], b[i]}] += 1.0;
    c.rows[a[i]] += 1.0;
    c.cols[b[i]] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  if (c.n == 0.0) return 1.0;
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : c.cells) sum_ij += comb2(v);
  for (const auto& [k, v] : c.rows) sum_a += comb2(v);
  for (const auto& [k, v] : c.cols) sum_b += comb2(v);
  const double expected = sum_a * sum_b / comb2(c.n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) {
    // Both partitions trivial (all one cluster or all singletons).
    return c.rows.size() == c.cols.size() && c.cells.size() == c.rows.size() ? 1.0 : 0.0;
  }
  return (sum_ij - expected) / (max_index - expected);
}

double normalized_mutual_info(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  if (c.n == 0.0) return 1.0;
  auto entropy = [&](const std::map<int, double>& m) {
    double h = 0.0;
    for (const auto& [k, v] : m) h -= v / c.n * std::log(v / c.n);
    return h;
  };
  const double ha = entropy(c.rows), hb = entropy(c.cols);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  double mi = 0.0;
  for (const auto& [key, v] : c.cells) {
    mi += v / c.n * std::log(v * c.n / (c.rows.at(key.first) * c.cols.at(key.second)));
  }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

double silhouette(std::span<const double> points, std::size_t n, std::size_t d, std::span<const int> labels) {
  if (labels.size() != n) throw DataError("label vector length differs from point count");
  std::set<int> ids;
  for (int l : labels) {
    if (l >= 0) ids.insert(l);
  }
  if (ids.size() < 2) throw DataError("silhouette needs at least 2 clusters");
  std::vector<double> dist(n * n);
  kernels::pairwise_euclidean_serial(points, n, d, dist);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    std::map<int, std::pair<double, std::size_t>> per;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || labels[j] < 0) continue;
      auto& acc = per[labels[j]];
      acc.first += dist[i * n + j];
      acc.second += 1;
    }
    ++count;
    auto own = per.find(labels[i]);
    if (own == per.end()) continue;  // singleton cluster scores 0
    const double ai = own->second.first / static_cast<double>(own->second.second);
    double bi = std::numeric_limits<double>::infinity();
    for (const auto& [l, acc] : per) {
      if (l != labels[i]) bi = std::min(bi, acc.first / static_cast<double>(acc.second));
    }
    const double m = std::max(ai, bi);
    if (m > 0.0) total += (bi - ai) / m;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------
// Cold start

int assign_cold_start(const ClusterModel& model, const Features& raw) {
  if (model.centroids.empty()) throw DataError("cluster model has no clusters");
  const Features z = model.standardization.apply(raw);
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < kProfileDim; ++j) s += (z[j] - model.centroids[c][j]) * (z[j] - model.centroids[c][j]);
    if (s < bd) {
      bd = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

int assign_cold_start_embedding(const ClusterModel& model, std::span<const double> embedding) {
  if (model.centroids.empty()) throw DataError("cluster model has no clusters");
  if (model.embedding_centroids.empty()) throw DataError("cluster model carries no predicate embeddings");
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (const auto& [c, centroid] : model.embedding_centroids) {
    const double s = embed_distance(centroid, embedding, Metric::euclidean);
    if (s < bd) {
      bd = s;
      best = c;
    }
  }
  return best;
}

int assign_cold_start(const ClusterModel& model, const std::optional<Features>& raw,
                      const std::optional<std::vector<double>>& embedding) {
  if (raw) return assign_cold_start(model, *raw);
  if (embedding) return assign_cold_start_embedding(model, *embedding);
  if (model.centroids.empty()) throw DataError("cluster model has no clusters");
  return 0;
}

std::pair<std::vector<int>, std::vector<int>> aligned_labels(const std::map<std::string, int>& a,
                                                             const std::map<std::string, int>& b) {
  std::pair<std::vector<int>, std::vector<int>> out;
  for (const auto& [p, la] : a) {
    auto it = b.find(p);
    if (it == b.end()) continue;
    out.first.push_back(la);
    out.second.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

void write_cluster_csv(const ClusterModel& model, const ProfileSet& profiles, const std::string& path,
                       const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "predicate,cluster_id";
  for (const char* f : kFeatureNames) out << ',' << f;
  out << '\n' << std::setprecision(10);
  for (const auto& p : profiles.profiles) {
    auto it = model.labels.find(p.predicate);
    out << p.predicate << ',' << (it == model.labels.end() ? -1 : it->second);
    for (double v : p.raw) out << ',' << v;
    out << '\n';
  }
}

nlohmann::ordered_json cluster_summary_json(const ClusterModel& model, const ProfileSet& profiles) {
  nlohmann::ordered_json j;
  j["method"] = to_string(model.method);
  j["n_clusters"] = model.n_clusters();
  j["converged"] = model.converged;
  j["all_noise"] = model.all_noise;
  nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < model.n_clusters(); ++c) {
    nlohmann::ordered_json cj;
    cj["cluster_id"] = c;
    cj["size"] = model.sizes[c];
    cj["centroid_standardized"] = model.centroids[c];
    Features raw{};
    for (std::size_t k = 0; k < kProfileDim; ++k) {
      raw[k] = model.standardization.mean[k] + model.centroids[c][k] * model.standardization.sd[k];
    }
    cj["centroid_raw"] = raw;
    std::vector<std::string> members;
    for (const auto& [p, l] : model.labels) {
      if (l == static_cast<int>(c)) members.push_back(p);
    }
    cj["members"] = members;
    cj["interpretation"] = "";
    clusters.push_back(cj);
  }
  j["clusters"] = clusters;
  std::vector<std::string> noise;
  for (const auto& [p, l] : model.labels) {
    if (l < 0) noise.push_back(p);
  }
  j["noise"] = noise;
  j["excluded"] = profiles.excluded;
  j["feature_names"] = kFeatureNames;
  return j;
}

nlohmann::ordered_json to_json(const ClusterModel& model) {
  nlohmann::ordered_json j;
  j["method"] = to_string(model.method);
  j["labels"] = model.labels;
  j["centroids"] = model.centroids;
  j["sizes"] = model.sizes;
  nlohmann::ordered_json emb = nlohmann::ordered_json::object();
  for (const auto& [c, v] : model.embedding_centroids) emb[std::to_string(c)] = v;
  j["embedding_centroids"] = emb;
  j["standardization"] = {{"mean", model.standardization.mean}, {"sd", model.standardization.sd}};
  j["converged"] = model.converged;
  j["all_noise"] = model.all_noise;
  return j;
}

ClusterModel cluster_model_from_json(const nlohmann::json& j) {
  try {
    ClusterModel m;
    m.method = cluster_method_from_string(j.at("method").get<std::string>());
    m.labels = j.at("labels").get<std::map<std::string, int>>();
    m.centroids = j.at("centroids").get<std::vector<Features>>();
    m.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    for (const auto& [k, v] : j.at("embedding_centroids").items()) {
      m.embedding_centroids[std::stoi(k)] = v.get<std::vector<double>>();
    }
    m.standardization.mean = j.at("standardization").at("mean").get<Features>();
    m.standardization.sd = j.at("standardization").at("sd").get<Features>();
    m.converged = j.value("converged", true);
    m.all_noise = j.value("all_noise", false);
    return m;
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("malformed cluster model: ") + err.what());
  }
}

}  // namespace shelflife
