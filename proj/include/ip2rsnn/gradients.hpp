#pragma once

// Backpropagation through time over the recorded trial, specialised to the
// update equations in snn.hpp, plus a central-difference oracle.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ip2rsnn/objective.hpp"
#include "ip2rsnn/optimizer.hpp"
#include "ip2rsnn/snn.hpp"
#include "ip2rsnn/tasks.hpp"

namespace ip2rsnn {

class GradientError : public std::runtime_error {
 public:
  GradientError(const std::string& param, const std::string& what)
      : std::runtime_error(what), param_(param) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

// Triangular pseudo-derivative max(0, 1 - |v - theta| / width) / width.
inline double surrogate_spike_derivative(double v, double theta, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("surrogate width must be > 0");
  return std::max(0.0, 1.0 - std::abs(v - theta) / width) / width;
}

inline Vec surrogate_spike_derivative(const Vec& v, const Vec& theta, double width) {
  require_shape(v.size() == theta.size(), "potential and threshold");
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out[i] = surrogate_spike_derivative(v[i], theta[i], width);
  return out;
}

inline void check_finite(const GradientSet& g) {
  for_each_grad(g, [](const std::string& name, const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(p[i]))
        throw GradientError(name, "non-finite gradient in parameter " + name + " at index " +
                                      std::to_string(i));
  });
}

// Gradients of a scalar loss through one recorded trial, given the loss's
// direct sensitivities to the readout (`dy`, steps x out_dim) and to the spike
// trace (`dtrace`, steps x N; may be empty). Weight regularizers are not
// included here.
inline GradientSet backward_trial(const TrialRecording& rec, const Mat& input, const Mat& dy,
                                  const Mat& dtrace, const ModelParams& params,
                                  const NetworkConfig& config, const DifferentiationMode& mode) {
  mode.validate();
  const auto& w = params.weights;
  const auto& props = params.props;
  const auto T = rec.v.rows();
  const auto N = static_cast<Eigen::Index>(config.n_neurons);
  const auto nb = w.n_branches();
  const bool dendritic = config.n_dendrites > 0;
  const bool smooth = mode.kind == DifferentiationMode::Kind::smooth;
  const bool reset_grad = smooth || mode.reset == DifferentiationMode::Reset::pass_through;
  const double alpha = config.alpha;
  const bool inside = config.noise_placement == NoisePlacement::inside;

  require_shape(input.rows() == T && input.cols() == static_cast<Eigen::Index>(w.input_dim()),
                "input vs recording");
  require_shape(dy.rows() == T && dy.cols() == static_cast<Eigen::Index>(w.output_dim()),
                "dy vs recording");
  require_shape(dtrace.size() == 0 || (dtrace.rows() == T && dtrace.cols() == N),
                "dtrace vs recording");
  require_shape(rec.v.cols() == N && rec.branch_input.size() == nb, "recording layout");

  GradientSet g = GradientSet::zeros_like(params);
  const Vec& b = props.tau_s;
  const Mat& tau_d = props.tau_d;
  const Mat w_out_t = w.w_out.transpose();
  std::vector<Mat> w_rec_t;
  for (const auto& m : w.w_rec) w_rec_t.push_back(m.transpose());

  // Per-step adjoints of each branch input, collected for the outer products.
  std::vector<Mat> g_inp(nb, Mat::Zero(T, N));

  Vec gu_n = Vec::Zero(N), gm_n = Vec::Zero(N), gm_drive_n = Vec::Zero(N);
  Mat gvd_n = Mat::Zero(N, static_cast<Eigen::Index>(config.n_dendrites));
  Vec gm(N), gv(N), gs(N), gu(N), ds(N), gdrive(N);

  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto u = rec.v_pre.row(t).transpose();
    const auto s = rec.spikes_raw.row(t).transpose();

    gm = w_out_t * dy.row(t).transpose() + alpha * gm_n + gm_drive_n;
    if (dtrace.size() != 0) gm += dtrace.row(t).transpose();

    gv = b.cwiseProduct(gu_n);
    gs = (1.0 - alpha) * rec.keep.cwiseProduct(gm_n);
    if (reset_grad) gs.array() += gv.array() * (config.v_reset - u.array());

    for (Eigen::Index i = 0; i < N; ++i) {
      ds[i] = smooth ? s[i] * (1.0 - s[i]) / mode.surrogate_width
                     : surrogate_spike_derivative(u[i], props.theta[i], mode.surrogate_width);
    }
    gu = gv.cwiseProduct((1.0 - s.array()).matrix()) + gs.cwiseProduct(ds);
    g.d_theta -= gs.cwiseProduct(ds);

    const Vec v_prev = t > 0 ? Vec(rec.v.row(t - 1).transpose()) : Vec::Constant(N, config.v_reset);
    const auto drive = rec.drive.row(t).transpose();
    if (inside)
      g.d_tau_s.array() += gu.array() * (v_prev.array() - drive.array() - rec.noise.row(t).transpose().array());
    else
      g.d_tau_s.array() += gu.array() * (v_prev.array() - drive.array());
    gdrive = (1.0 - b.array()).matrix().cwiseProduct(gu);

    Vec gm_drive = Vec::Zero(N);
    if (dendritic) {
      for (std::size_t d = 0; d < nb; ++d) {
        const auto di = static_cast<Eigen::Index>(d);
        const Vec gvd = gdrive + tau_d.col(di).cwiseProduct(gvd_n.col(di));
        const Vec vd_prev = t > 0 ? Vec(rec.v_d[d].row(t - 1).transpose()) : Vec::Zero(N);
        g.d_tau_d.col(di).array() +=
            gvd.array() * (vd_prev.array() - rec.branch_input[d].row(t).transpose().array());
        const Vec gi = (1.0 - tau_d.col(di).array()).matrix().cwiseProduct(gvd);
        g_inp[d].row(t) = gi.transpose();
        gm_drive += w_rec_t[d] * gi;
        gvd_n.col(di) = gvd;
      }
    } else {
      g_inp[0].row(t) = gdrive.transpose();
      gm_drive = w_rec_t[0] * gdrive;
    }

    gu_n = gu;
    gm_n = gm;
    gm_drive_n = gm_drive;
  }

  // S_mem(t-1) rows: zero at t = 0.
  Mat trace_prev = Mat::Zero(T, N);
  if (T > 1) trace_prev.bottomRows(T - 1) = rec.trace.topRows(T - 1);
  for (std::size_t d = 0; d < nb; ++d) {
    // Entries a branch does not own are not parameters.
    g.d_w_in[d] = (g_inp[d].transpose() * input).cwiseProduct(w.in_mask[d]);
    g.d_w_rec[d] = (g_inp[d].transpose() * trace_prev).cwiseProduct(w.rec_mask[d]);
  }
  g.d_w_out = dy.transpose() * rec.trace;
  return g;
}

struct TaskEvaluation {
  LossBreakdown loss;
  std::vector<TrialRecording> recordings;
};

struct TaskGradient {
  LossBreakdown loss;
  GradientSet grads;
  std::vector<TrialRecording> recordings;
};

// Forward pass over all trials. Trial k draws its noise from derive_seed(noise_seed, {k}).
inline TaskEvaluation evaluate_task(const ModelParams& params, const NetworkConfig& config,
                                    const TaskInstance& task, const ObjectiveConfig& obj,
                                    const HomeostaticTarget& target, ForwardOptions opts) {
  TaskEvaluation ev;
  const auto base_seed = opts.noise_seed;
  for (std::size_t k = 0; k < task.trials.size(); ++k) {
    opts.noise_seed = derive_seed(base_seed, {k});
    ev.recordings.push_back(
        forward_trial(params.weights, params.props, config, task.trials[k].input, opts));
    ev.recordings.back().task_index = task.task_index;
    ev.recordings.back().trial_index = k;
  }
  ev.loss = task_loss(ev.recordings, task, params.weights, obj, target);
  return ev;
}

// Loss and full gradient of the task loss (base, homeostatic and weight terms).
// Returned gradients are unmasked; see mask_gradients.
inline TaskGradient task_gradients(const ModelParams& params, const NetworkConfig& config,
                                   const TaskInstance& task, const ObjectiveConfig& obj,
                                   const HomeostaticTarget& target, const ForwardOptions& opts) {
  auto ev = evaluate_task(params, config, task, obj, target, opts);
  TaskGradient out;
  out.loss = ev.loss;
  out.grads = GradientSet::zeros_like(params);

  const double trial_factor =
      obj.reduction == TrialReduction::mean ? 1.0 / static_cast<double>(task.trials.size()) : 1.0;
  std::vector<Mat> traces;
  for (const auto& r : ev.recordings) traces.push_back(r.trace);
  double count = 0.0;
  for (const auto& h : traces) count += static_cast<double>(h.size());
  const double diff = mean_square_activity(traces) - target.sigma_h_sq;
  const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  const double h_factor = obj.weights.lambda_h * sign * 2.0 / count;

  for (std::size_t k = 0; k < ev.recordings.size(); ++k) {
    const auto& rec = ev.recordings[k];
    const auto& trial = task.trials[k];
    const Mat dy = trial_factor * base_loss_grad(rec.y, trial.target, task.loss, task.schedule);
    const Mat dtrace = h_factor * rec.trace;
    out.grads += backward_trial(rec, trial.input, dy, dtrace, params, config, opts.mode);
  }

  const auto& w = params.weights;
  const double n_in = static_cast<double>(w.w_in.front().size());
  const double n_rec = static_cast<double>(w.w_rec.front().size());
  for (std::size_t d = 0; d < w.n_branches(); ++d) {
    if (n_in > 0) out.grads.d_w_in[d] += obj.weights.lambda_in * 2.0 / n_in * w.w_in[d];
    out.grads.d_w_rec[d] += obj.weights.lambda_rec * 2.0 / n_rec * w.w_rec[d];
  }
  out.grads.d_w_out +=
      obj.weights.lambda_out * 2.0 / static_cast<double>(w.w_out.size()) * w.w_out;
  check_finite(out.grads);
  out.recordings = std::move(ev.recordings);
  return out;
}

// Central differences (f(x + h) - f(x - h)) / 2h for a plain vector function.
inline std::vector<double> finite_difference(
    const std::function<double(std::span<const double>)>& f, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central differences over every free coordinate of every parameter tensor.
// Weights on branches that do not own the afferent are not parameters and get
// 0. The loss function must pin its own noise seed so both evaluations see the
// same noise.
inline GradientSet finite_difference_oracle(const std::function<double(const ModelParams&)>& loss,
                                            const ModelParams& params, double h) {
  ModelParams p = params;
  GradientSet g = GradientSet::zeros_like(p);
  std::vector<double*> gptr;
  for_each_grad(g, [&](const std::string&, double* q, std::size_t) { gptr.push_back(q); });
  std::vector<const double*> owner;
  for (const auto& m : p.weights.in_mask) owner.push_back(m.data());
  for (const auto& m : p.weights.rec_mask) owner.push_back(m.data());
  std::size_t k = 0;
  for_each_param(p, [&](const std::string&, double* x, std::size_t n) {
    const double* own = k < owner.size() ? owner[k] : nullptr;
    double* out = gptr[k++];
    for (std::size_t i = 0; i < n; ++i) {
      if (own && own[i] == 0.0) continue;
      const double x0 = x[i];
      x[i] = x0 + h;
      const double fp = loss(p);
      x[i] = x0 - h;
      const double fm = loss(p);
      x[i] = x0;
      out[i] = (fp - fm) / (2.0 * h);
    }
  });
  return g;
}

}  // namespace ip2rsnn
