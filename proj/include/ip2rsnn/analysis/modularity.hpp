#pragma once

// Multilayer (temporal) community structure of correlation networks:
// layer construction, modularity, a generalized Louvain optimizer and the
// summary statistics computed from a partition.

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ip2rsnn/analysis/stats.hpp"
#include "ip2rsnn/rng.hpp"
#include "ip2rsnn/snn.hpp"

namespace ip2rsnn::analysis {

// Layers share a node set; consecutive layers are coupled node-to-itself with
// weight `coupling` in both directions.
struct LayeredNetwork {
  std::vector<Mat> adjacency;
  std::vector<double> gamma;
  double coupling = 1.0;

  std::size_t n_layers() const { return adjacency.size(); }
  std::size_t n_nodes() const { return adjacency.empty() ? 0 : static_cast<std::size_t>(adjacency.front().rows()); }

  void validate() const {
    if (adjacency.empty()) throw std::invalid_argument("layered network has no layers");
    if (gamma.size() != adjacency.size()) throw std::invalid_argument("one resolution per layer required");
    if (coupling < 0.0) throw std::invalid_argument("inter-layer coupling must be >= 0");
    const auto n = adjacency.front().rows();
    for (std::size_t l = 0; l < adjacency.size(); ++l) {
      const auto& a = adjacency[l];
      if (a.rows() != n || a.cols() != n) throw ShapeError("layer adjacency must be square and equally sized");
      if (n > 0 && (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("layer adjacency must be symmetric");
      if (gamma[l] <= 0.0) throw std::invalid_argument("resolution must be > 0");
    }
  }

  // 2 mu: total intra-layer strength plus total inter-layer coupling.
  double two_mu() const {
    double s = 0.0;
    for (const auto& a : adjacency) s += a.sum();
    return s + coupling * 2.0 * static_cast<double>(n_nodes()) * static_cast<double>(n_layers() - 1);
  }

  // Supra-modularity matrix; supra index = layer * n_nodes + node.
  Mat supra_matrix() const {
    validate();
    const auto n = static_cast<Eigen::Index>(n_nodes());
    const auto L = static_cast<Eigen::Index>(n_layers());
    Mat b = Mat::Zero(n * L, n * L);
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto& a = adjacency[static_cast<std::size_t>(l)];
      const Vec k = a.rowwise().sum();
      const double two_m = k.sum();
      auto blk = b.block(l * n, l * n, n, n);
      blk = a;
      if (two_m > 0.0) blk -= gamma[static_cast<std::size_t>(l)] * (k * k.transpose()) / two_m;
      if (l + 1 < L)
        for (Eigen::Index i = 0; i < n; ++i) {
          b(l * n + i, (l + 1) * n + i) += coupling;
          b((l + 1) * n + i, l * n + i) += coupling;
        }
    }
    return b;
  }
};

struct LayerOptions {
  bool clip_negative = true;
  double gamma = 1.0;
  double coupling = 1.0;
};

// Sliding-window Pearson correlation layers of a time x neuron activity
// matrix. Self-loops are removed; zero-variance neurons get no edges.
inline LayeredNetwork build_layers(const Mat& activity, std::size_t window, std::size_t stride,
                                   const LayerOptions& opt = {}) {
  const auto T = static_cast<std::size_t>(activity.rows());
  if (window < 2 || stride == 0) throw std::invalid_argument("build_layers: window >= 2 and stride >= 1 required");
  if (window > T) throw std::invalid_argument("build_layers: window longer than the recording");
  LayeredNetwork net;
  net.coupling = opt.coupling;
  const std::size_t L = (T - window) / stride + 1;
  for (std::size_t l = 0; l < L; ++l) {
    const auto c = correlation_matrix(activity.middleRows(static_cast<Eigen::Index>(l * stride),
                                                          static_cast<Eigen::Index>(window)));
    Mat a = c.r;
    a.diagonal().setZero();
    if (opt.clip_negative) a = a.cwiseMax(0.0);
    net.adjacency.push_back(std::move(a));
    net.gamma.push_back(opt.gamma);
  }
  net.validate();
  return net;
}

struct CommunityAssignment {
  std::size_t n_nodes = 0;
  std::size_t n_layers = 0;
  std::vector<int> labels;  // layer-major

  int operator()(std::size_t node, std::size_t layer) const { return labels[layer * n_nodes + node]; }

  void validate() const {
    if (labels.size() != n_nodes * n_layers) throw ShapeError("assignment size mismatch");
    for (int g : labels)
      if (g < 0) throw std::invalid_argument("community labels must be nonnegative");
  }

  static CommunityAssignment uniform(std::size_t n, std::size_t L, int label = 0) {
    return {n, L, std::vector<int>(n * L, label)};
  }

  static CommunityAssignment singletons(std::size_t n, std::size_t L) {
    CommunityAssignment a{n, L, std::vector<int>(n * L)};
    std::iota(a.labels.begin(), a.labels.end(), 0);
    return a;
  }
};

// Relabels to 0,1,2,... in order of first appearance.
inline std::vector<int> canonical_labels(const std::vector<int>& g) {
  std::map<int, int> remap;
  std::vector<int> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto it = remap.try_emplace(g[i], static_cast<int>(remap.size())).first;
    out[i] = it->second;
  }
  return out;
}

namespace detail {

inline double partition_score(const Mat& b, const std::vector<int>& g) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      if (g[static_cast<std::size_t>(i)] == g[static_cast<std::size_t>(j)]) s += b(i, j);
  return s;
}

// Greedy single-node moves on symmetric B until no move improves the score.
// Returns true if anything moved.
inline bool local_moves(const Mat& b, std::vector<int>& g, Rng& rng) {
  const auto n = static_cast<std::size_t>(b.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  // Labels are always below n.
  std::vector<double> link(n);
  std::vector<bool> used(n);
  bool any = false;
  for (bool moved = true; moved;) {
    moved = false;
    for (auto i : order) {
      std::fill(link.begin(), link.end(), 0.0);
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) link[static_cast<std::size_t>(g[j])] += b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const int from = g[i];
      int best = from;
      double best_gain = 0.0;
      // Moving to an empty community is scored as link 0.
      int empty = -1;
      std::fill(used.begin(), used.end(), false);
      for (std::size_t j = 0; j < n; ++j) used[static_cast<std::size_t>(g[j])] = true;
      for (std::size_t c = 0; c < link.size(); ++c) {
        if (!used[c] || (c == static_cast<std::size_t>(from))) {
          if (!used[c] && empty < 0) empty = static_cast<int>(c);
          continue;
        }
        const double gain = link[c] - link[static_cast<std::size_t>(from)];
        if (gain > best_gain + 1e-13) {
          best_gain = gain;
          best = static_cast<int>(c);
        }
      }
      if (empty >= 0 && -link[static_cast<std::size_t>(from)] > best_gain + 1e-13) best = empty;
      if (best != from) {
        g[i] = best;
        moved = any = true;
      }
    }
  }
  return any;
}

inline std::vector<int> louvain_once(const Mat& b0, Rng& rng) {
  const auto n0 = static_cast<std::size_t>(b0.rows());
  std::vector<int> membership(n0);
  std::iota(membership.begin(), membership.end(), 0);
  Mat b = b0;
  for (;;) {
    std::vector<int> g(static_cast<std::size_t>(b.rows()));
    std::iota(g.begin(), g.end(), 0);
    local_moves(b, g, rng);
    g = canonical_labels(g);
    const int k = *std::max_element(g.begin(), g.end()) + 1;
    for (auto& m : membership) m = g[static_cast<std::size_t>(m)];
    if (k == b.rows()) break;
    Mat p = Mat::Zero(b.rows(), k);
    for (std::size_t i = 0; i < g.size(); ++i) p(static_cast<Eigen::Index>(i), g[i]) = 1.0;
    b = p.transpose() * b * p;
  }
  return membership;
}

}  // namespace detail

inline double modularity_Q(const LayeredNetwork& net, const CommunityAssignment& a) {
  a.validate();
  if (a.n_nodes != net.n_nodes() || a.n_layers != net.n_layers()) throw ShapeError("assignment does not match network");
  const double two_mu = net.two_mu();
  if (two_mu <= 0.0) return 0.0;
  return detail::partition_score(net.supra_matrix(), a.labels) / two_mu;
}

struct LouvainOptions {
  std::size_t restarts = 16;
};

// Generalized Louvain with seeded restarts; each restart alternates the
// aggregation pass with node-level refinement until neither improves. The
// result never scores below the all-singletons or all-in-one partitions.
inline CommunityAssignment louvain_optimize(const LayeredNetwork& net, std::uint64_t seed,
                                            const LouvainOptions& opt = {}) {
  const Mat b = net.supra_matrix();
  const auto n = net.n_nodes();
  const auto L = net.n_layers();
  std::vector<int> best = CommunityAssignment::singletons(n, L).labels;
  double best_score = detail::partition_score(b, best);
  {
    const auto one = CommunityAssignment::uniform(n, L).labels;
    const double s = detail::partition_score(b, one);
    if (s > best_score) best = one, best_score = s;
  }
  for (std::size_t r = 0; r < std::max<std::size_t>(1, opt.restarts); ++r) {
    Rng rng(derive_seed(seed, {r}));
    auto g = detail::louvain_once(b, rng);
    double score = detail::partition_score(b, g);
    for (int pass = 0; pass < 32; ++pass) {
      if (!detail::local_moves(b, g, rng)) break;
      g = canonical_labels(g);
      // Re-aggregate from the refined partition.
      const int k = *std::max_element(g.begin(), g.end()) + 1;
      Mat p = Mat::Zero(b.rows(), k);
      for (std::size_t i = 0; i < g.size(); ++i) p(static_cast<Eigen::Index>(i), g[i]) = 1.0;
      const auto coarse = detail::louvain_once(p.transpose() * b * p, rng);
      for (auto& x : g) x = coarse[static_cast<std::size_t>(x)];
      const double s = detail::partition_score(b, g);
      if (s <= score + 1e-13) {
        score = std::max(score, s);
        break;
      }
      score = s;
    }
    score = detail::partition_score(b, g);
    if (score > best_score + 1e-13) best = g, best_score = score;
  }
  return {n, L, canonical_labels(best)};
}

struct CommunityCounts {
  std::vector<std::size_t> per_layer;
  double mean = 0.0;
};

inline CommunityCounts community_count(const CommunityAssignment& a) {
  a.validate();
  CommunityCounts c;
  for (std::size_t l = 0; l < a.n_layers; ++l) {
    std::vector<int> layer(a.labels.begin() + static_cast<std::ptrdiff_t>(l * a.n_nodes),
                           a.labels.begin() + static_cast<std::ptrdiff_t>((l + 1) * a.n_nodes));
    std::sort(layer.begin(), layer.end());
    c.per_layer.push_back(static_cast<std::size_t>(std::unique(layer.begin(), layer.end()) - layer.begin()));
  }
  if (!c.per_layer.empty())
    c.mean = std::accumulate(c.per_layer.begin(), c.per_layer.end(), 0.0) / static_cast<double>(c.per_layer.size());
  return c;
}

struct Stationarity {
  std::map<int, double> per_community;  // only communities spanning >= 2 layers
  std::vector<int> excluded;            // present in a single layer
  double mean = 0.0;
};

// For each community, the mean Pearson correlation of its membership
// indicator over consecutive layers from its first to its last appearance.
// Two constant indicators correlate 1 if equal and 0 otherwise.
inline Stationarity stationarity(const CommunityAssignment& a) {
  a.validate();
  std::map<int, std::pair<std::size_t, std::size_t>> span;
  for (std::size_t l = 0; l < a.n_layers; ++l)
    for (std::size_t i = 0; i < a.n_nodes; ++i) {
      const int g = a(i, l);
      auto [it, fresh] = span.try_emplace(g, l, l);
      if (!fresh) it->second.second = l;
    }
  auto indicator = [&](int g, std::size_t l) {
    Vec v(static_cast<Eigen::Index>(a.n_nodes));
    for (std::size_t i = 0; i < a.n_nodes; ++i) v[static_cast<Eigen::Index>(i)] = a(i, l) == g ? 1.0 : 0.0;
    return v;
  };
  Stationarity s;
  for (const auto& [g, lr] : span) {
    if (lr.first == lr.second) {
      s.excluded.push_back(g);
      continue;
    }
    double acc = 0.0;
    for (std::size_t l = lr.first; l < lr.second; ++l) {
      const Vec x = indicator(g, l);
      const Vec y = indicator(g, l + 1);
      const auto r = pearson(x, y);
      acc += r ? *r : (x == y ? 1.0 : 0.0);
    }
    s.per_community[g] = acc / static_cast<double>(lr.second - lr.first);
  }
  if (!s.per_community.empty()) {
    for (const auto& kv : s.per_community) s.mean += kv.second;
    s.mean /= static_cast<double>(s.per_community.size());
  }
  return s;
}

inline Mat allegiance_matrix(const CommunityAssignment& a) {
  a.validate();
  const auto n = static_cast<Eigen::Index>(a.n_nodes);
  Mat m = Mat::Zero(n, n);
  if (a.n_layers == 0) return m;
  for (std::size_t l = 0; l < a.n_layers; ++l)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (a(static_cast<std::size_t>(i), l) == a(static_cast<std::size_t>(j), l)) m(i, j) += 1.0;
  return m / static_cast<double>(a.n_layers);
}

struct ModularityReport {
  double q = 0.0;
  CommunityAssignment assignment;
  CommunityCounts counts;
  Stationarity stationarity;
  Mat allegiance;
};

inline ModularityReport analyze_modularity(const LayeredNetwork& net, std::uint64_t seed,
                                           const LouvainOptions& opt = {}) {
  ModularityReport r;
  r.assignment = louvain_optimize(net, seed, opt);
  r.q = modularity_Q(net, r.assignment);
  r.counts = community_count(r.assignment);
  r.stationarity = stationarity(r.assignment);
  r.allegiance = allegiance_matrix(r.assignment);
  return r;
}

}  // namespace ip2rsnn::analysis
