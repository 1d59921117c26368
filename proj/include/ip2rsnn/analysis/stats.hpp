#pragma once

// Membrane-potential moments and pairwise correlations, plus the median split
// of tasks by a per-task metric.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ip2rsnn/snn.hpp"

namespace ip2rsnn::analysis {

// Pearson correlation of two columns; nullopt when either has zero variance.
inline std::optional<double> pearson(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const Vec da = a.array() - a.mean();
  const Vec db = b.array() - b.mean();
  const double sa = da.squaredNorm();
  const double sb = db.squaredNorm();
  if (sa == 0.0 || sb == 0.0) return std::nullopt;
  return da.dot(db) / std::sqrt(sa * sb);
}

// Columns are variables. Undefined entries (zero variance) are 0 and flagged
// in `defined`; the diagonal of a non-constant column is 1.
struct CorrelationMatrix {
  Mat r;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> defined;
};

inline CorrelationMatrix correlation_matrix(const Mat& x) {
  const auto n = x.cols();
  CorrelationMatrix c;
  c.r = Mat::Zero(n, n);
  c.defined.setConstant(n, n, false);
  if (x.rows() < 2) return c;
  Mat centered = x.rowwise() - x.colwise().mean();
  const Vec ss = centered.colwise().squaredNorm().transpose();
  const Mat cov = centered.transpose() * centered;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (ss[i] == 0.0 || ss[j] == 0.0) continue;
      c.r(i, j) = std::clamp(cov(i, j) / std::sqrt(ss[i] * ss[j]), -1.0, 1.0);
      c.defined(i, j) = true;
    }
  for (Eigen::Index i = 0; i < n; ++i)
    if (c.defined(i, i)) c.r(i, i) = 1.0;
  return c;
}

struct MembraneStats {
  double mean_v = 0.0;
  double var_v = 0.0;
  double mean_corr = 0.0;
  double var_corr = 0.0;
  std::size_t pairs_used = 0;
  std::size_t pairs_excluded = 0;
};

// Moments over every (time, neuron) entry of every matrix; correlations over
// time (trials concatenated) for each unordered neuron pair.
inline MembraneStats membrane_stats(const std::vector<Mat>& v_per_trial) {
  if (v_per_trial.empty()) throw std::invalid_argument("membrane_stats: no recordings");
  const auto n = v_per_trial.front().cols();
  Eigen::Index rows = 0;
  for (const auto& v : v_per_trial) {
    if (v.cols() != n) throw ShapeError("membrane_stats: neuron count differs between trials");
    rows += v.rows();
  }
  Mat all(rows, n);
  Eigen::Index at = 0;
  for (const auto& v : v_per_trial) {
    all.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  MembraneStats s;
  s.mean_v = all.mean();
  s.var_v = (all.array() - s.mean_v).square().mean();
  const auto c = correlation_matrix(all);
  std::vector<double> vals;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (c.defined(i, j))
        vals.push_back(c.r(i, j));
      else
        ++s.pairs_excluded;
    }
  s.pairs_used = vals.size();
  if (!vals.empty()) {
    s.mean_corr = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    double acc = 0.0;
    for (double x : vals) acc += (x - s.mean_corr) * (x - s.mean_corr);
    s.var_corr = acc / static_cast<double>(vals.size());
  }
  return s;
}

inline double median(std::vector<double> x) {
  if (x.empty()) throw std::invalid_argument("median of empty set");
  std::sort(x.begin(), x.end());
  const auto m = x.size() / 2;
  return x.size() % 2 ? x[m] : 0.5 * (x[m - 1] + x[m]);
}

struct MedianSplit {
  std::vector<std::size_t> lower_tasks, upper_tasks;  // positions in the input series
  std::vector<double> lower_speeds, upper_speeds;
  double lower_median = 0.0;
  double upper_median = 0.0;
};

// Sort tasks by metric (stable on ties) and cut at the median; with an odd
// count the middle task joins the lower group.
inline MedianSplit split_by_metric(const std::vector<double>& metric, const std::vector<double>& speeds) {
  if (metric.size() != speeds.size()) throw std::invalid_argument("split_by_metric: length mismatch");
  if (metric.size() < 2) throw std::invalid_argument("split_by_metric: need at least two tasks");
  std::vector<std::size_t> order(metric.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return metric[a] < metric[b]; });
  const auto cut = (metric.size() + 1) / 2;
  MedianSplit s;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = order[k];
    if (k < cut) {
      s.lower_tasks.push_back(i);
      s.lower_speeds.push_back(speeds[i]);
    } else {
      s.upper_tasks.push_back(i);
      s.upper_speeds.push_back(speeds[i]);
    }
  }
  s.lower_median = median(s.lower_speeds);
  s.upper_median = median(s.upper_speeds);
  return s;
}

}  // namespace ip2rsnn::analysis
