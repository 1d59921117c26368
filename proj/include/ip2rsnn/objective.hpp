#pragma once

// Composite task loss:
//   total = base + l_h * |mean(h^2) - sigma_h^2| + l_in * mean(W_in^2)
//         + l_rec * mean(W_rec^2) + l_out * mean(W_out^2)
// where h is the spike trace pooled over units, timesteps and trials.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ip2rsnn/snn.hpp"
#include "ip2rsnn/tasks.hpp"

namespace ip2rsnn {

struct LossWeights {
  double lambda_h = 0.0005;
  double lambda_in = 0.001;
  double lambda_rec = 0.0001;
  double lambda_out = 0.1;

  void validate() const {
    if (!(lambda_h >= 0 && lambda_in >= 0 && lambda_rec >= 0 && lambda_out >= 0))
      throw std::invalid_argument("loss weights must be >= 0");
  }
};

enum class TrialReduction { mean, sum };

struct HomeostaticTarget {
  double sigma_h_sq = 0.0;
};

struct LossBreakdown {
  double base = 0.0;
  double homeostatic = 0.0;
  double reg_in = 0.0;
  double reg_rec = 0.0;
  double reg_out = 0.0;
  double total = 0.0;
};

inline void check_loss_shapes(const Mat& y, const Mat& target, LossKind kind,
                              const PeriodSchedule& sch) {
  require_shape(y.rows() == target.rows() && y.cols() == target.cols(), "output vs target");
  if (kind == LossKind::ce)
    require_shape(static_cast<std::size_t>(y.rows()) == sch.total() && y.cols() >= 2,
                  "CE needs schedule-length outputs with fixation plus response channels");
}

namespace detail {

inline Vec softmax(const Eigen::Ref<const Vec>& z) {
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

inline double log_sum_exp(const Eigen::Ref<const Vec>& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

}  // namespace detail

// Per-trial base loss. MSE averages over every timestep and channel. CE is
// softmax cross-entropy on the response channels over the response period
// plus MSE on the fixation channel over stimulus and delay.
inline double base_loss(const Mat& y, const Mat& target, LossKind kind,
                        const PeriodSchedule& sch) {
  check_loss_shapes(y, target, kind, sch);
  if (kind == LossKind::mse) return (y - target).squaredNorm() / static_cast<double>(y.size());
  const auto rb = static_cast<Eigen::Index>(sch.response_begin());
  const auto nr = static_cast<Eigen::Index>(sch.response_steps);
  const auto nresp = y.cols() - 1;
  double ce = 0.0;
  for (Eigen::Index t = rb; t < rb + nr; ++t) {
    const Vec z = y.row(t).tail(nresp).transpose();
    const Vec p = target.row(t).tail(nresp).transpose();
    ce += p.sum() * detail::log_sum_exp(z) - p.dot(z);
  }
  ce /= static_cast<double>(nr);
  const double fix = (y.col(0).head(rb) - target.col(0).head(rb)).squaredNorm() /
                     static_cast<double>(rb);
  return ce + fix;
}

inline double base_loss(const TrialRecording& rec, const Mat& target, LossKind kind,
                        const PeriodSchedule& sch) {
  return base_loss(rec.y, target, kind, sch);
}

// d base_loss / d y, same shape as y.
inline Mat base_loss_grad(const Mat& y, const Mat& target, LossKind kind,
                          const PeriodSchedule& sch) {
  check_loss_shapes(y, target, kind, sch);
  if (kind == LossKind::mse) return 2.0 * (y - target) / static_cast<double>(y.size());
  Mat g = Mat::Zero(y.rows(), y.cols());
  const auto rb = static_cast<Eigen::Index>(sch.response_begin());
  const auto nr = static_cast<Eigen::Index>(sch.response_steps);
  const auto nresp = y.cols() - 1;
  for (Eigen::Index t = rb; t < rb + nr; ++t) {
    const Vec z = y.row(t).tail(nresp).transpose();
    const Vec p = target.row(t).tail(nresp).transpose();
    g.row(t).tail(nresp) = ((p.sum() * detail::softmax(z) - p) / static_cast<double>(nr)).transpose();
  }
  g.col(0).head(rb) = 2.0 * (y.col(0).head(rb) - target.col(0).head(rb)) / static_cast<double>(rb);
  return g;
}

// mean(h^2) pooled over every matrix in `activity`.
inline double mean_square_activity(std::span<const Mat> activity) {
  double s = 0.0;
  double n = 0.0;
  for (const auto& h : activity) {
    s += h.squaredNorm();
    n += static_cast<double>(h.size());
  }
  if (n == 0.0) throw std::invalid_argument("empty hidden activity");
  return s / n;
}

inline double homeostatic_loss(std::span<const Mat> activity, const HomeostaticTarget& target) {
  return std::abs(mean_square_activity(activity) - target.sigma_h_sq);
}

inline double homeostatic_loss(const Mat& activity, const HomeostaticTarget& target) {
  return homeostatic_loss(std::span<const Mat>(&activity, 1), target);
}

inline double weight_regularizer(const Mat& w) {
  if (w.size() == 0) return 0.0;
  return w.squaredNorm() / static_cast<double>(w.size());
}

// Branch-split matrices are normalised by the dense (neuron x afferent) count,
// so a point network and its dendritic equivalent carry the same penalty.
inline double weight_regularizer(std::span<const Mat> branches) {
  if (branches.empty() || branches.front().size() == 0) return 0.0;
  double s = 0.0;
  for (const auto& w : branches) s += w.squaredNorm();
  return s / static_cast<double>(branches.front().size());
}

struct LossTerms {
  double base = 0.0;
  double homeostatic = 0.0;
  double reg_in = 0.0;
  double reg_rec = 0.0;
  double reg_out = 0.0;
};

inline LossBreakdown total_loss(const LossTerms& t, const LossWeights& w) {
  LossBreakdown b{t.base, t.homeostatic, t.reg_in, t.reg_rec, t.reg_out, 0.0};
  b.total = t.base + w.lambda_h * t.homeostatic + w.lambda_in * t.reg_in +
            w.lambda_rec * t.reg_rec + w.lambda_out * t.reg_out;
  return b;
}

// New target = mean(h^2) of the previous task's final iteration.
inline HomeostaticTarget update_homeostatic_target(const HomeostaticTarget&,
                                                   std::span<const Mat> last_task_activity) {
  return {mean_square_activity(last_task_activity)};
}

struct ObjectiveConfig {
  LossWeights weights;
  TrialReduction reduction = TrialReduction::mean;
};

// Loss of a whole task given one recording per trial.
inline LossBreakdown task_loss(std::span<const TrialRecording> recs, const TaskInstance& task,
                               const NetworkWeights& w, const ObjectiveConfig& obj,
                               const HomeostaticTarget& target) {
  require_shape(recs.size() == task.trials.size() && !recs.empty(), "recordings vs trials");
  LossTerms terms;
  std::vector<Mat> traces;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    terms.base += base_loss(recs[k].y, task.trials[k].target, task.loss, task.schedule);
    traces.push_back(recs[k].trace);
  }
  if (obj.reduction == TrialReduction::mean) terms.base /= static_cast<double>(recs.size());
  terms.homeostatic = homeostatic_loss(std::span<const Mat>(traces), target);
  terms.reg_in = weight_regularizer(std::span<const Mat>(w.w_in));
  terms.reg_rec = weight_regularizer(std::span<const Mat>(w.w_rec));
  terms.reg_out = weight_regularizer(w.w_out);
  return total_loss(terms, obj.weights);
}

}  // namespace ip2rsnn
