#pragma once

// PCA of delay-period activity pooled over tasks, and the drift of each
// task's centroid through the leading components.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ip2rsnn/analysis/stats.hpp"
#include "ip2rsnn/snn.hpp"

namespace ip2rsnn::analysis {

struct PcaEmbedding {
  Vec mean;                   // feature mean of the pooled data
  Mat basis;                  // N x k, orthonormal columns, by decreasing variance
  Vec explained_variance;     // k
  Mat task_means;             // n_tasks x k centroids
  std::vector<double> steps;  // distance between consecutive centroids, top-2 plane
  double median_step = 0.0;
  double centroid_variance = 0.0;  // summed over the k components
};

// `per_task` holds, for each task, the delay-period samples (rows) x neurons.
inline PcaEmbedding pca_delay(const std::vector<Mat>& per_task, std::size_t n_components) {
  if (per_task.empty()) throw std::invalid_argument("pca_delay: no tasks");
  const auto n = per_task.front().cols();
  if (n_components == 0 || static_cast<Eigen::Index>(n_components) > n)
    throw std::invalid_argument("pca_delay: n_components must be in [1, n_neurons]");
  Eigen::Index rows = 0;
  for (const auto& x : per_task) {
    if (x.cols() != n) throw ShapeError("pca_delay: neuron count differs between tasks");
    if (x.rows() == 0) throw std::invalid_argument("pca_delay: task without delay samples");
    rows += x.rows();
  }
  Mat all(rows, n);
  Eigen::Index at = 0;
  for (const auto& x : per_task) {
    all.middleRows(at, x.rows()) = x;
    at += x.rows();
  }
  PcaEmbedding e;
  e.mean = all.colwise().mean().transpose();
  const Mat centered = all.rowwise() - e.mean.transpose();
  const Mat cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(rows - 1, 1));
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  const auto k = static_cast<Eigen::Index>(n_components);
  // Eigenvalues come in increasing order.
  e.basis = es.eigenvectors().rightCols(k).rowwise().reverse();
  e.explained_variance = es.eigenvalues().tail(k).reverse().cwiseMax(0.0);
  // Fix the sign of each component: largest-magnitude loading positive.
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index idx;
    e.basis.col(c).cwiseAbs().maxCoeff(&idx);
    if (e.basis(idx, c) < 0) e.basis.col(c) *= -1.0;
  }

  e.task_means.resize(static_cast<Eigen::Index>(per_task.size()), k);
  for (std::size_t t = 0; t < per_task.size(); ++t) {
    const Vec centroid = per_task[t].colwise().mean().transpose() - e.mean;
    e.task_means.row(static_cast<Eigen::Index>(t)) = (e.basis.transpose() * centroid).transpose();
  }
  const auto plane = std::min<Eigen::Index>(2, k);
  for (Eigen::Index t = 1; t < e.task_means.rows(); ++t)
    e.steps.push_back((e.task_means.row(t).head(plane) - e.task_means.row(t - 1).head(plane)).norm());
  if (!e.steps.empty()) e.median_step = median(e.steps);
  const Mat dm = e.task_means.rowwise() - e.task_means.colwise().mean();
  e.centroid_variance = dm.squaredNorm() / static_cast<double>(e.task_means.rows());
  return e;
}

// Delay-period rows of a time x neuron matrix.
inline Mat delay_rows(const Mat& x, std::size_t stimulus_steps, std::size_t delay_steps) {
  if (static_cast<std::size_t>(x.rows()) < stimulus_steps + delay_steps)
    throw ShapeError("recording shorter than stimulus + delay");
  return x.middleRows(static_cast<Eigen::Index>(stimulus_steps), static_cast<Eigen::Index>(delay_steps));
}

}  // namespace ip2rsnn::analysis
