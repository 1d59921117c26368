#pragma once

// Discrete-time recurrent spiking network with optional two-branch dendrites.
//
// One step of the state machine, in this order:
//   noise      N(t)   = (1 - a_n) N(t-1) + sqrt(2 a_n) A z
//   dendrites  Vd(t)  = tau_d Vd(t-1) + (1 - tau_d) (W_in,d x(t) + W_rec,d S_mem(t-1))
//   soma       V(t)   = tau_s V(t-1) + (1 - tau_s) drive(t) + N(t)
//   spike      S(t)   = [V(t) >= theta], V(t) <- V_reset where S(t) = 1
//   trace      S_mem(t) = alpha S_mem(t-1) + (1 - alpha) S(t-1)
//   readout    y(t)   = W_out S_mem(t)
// drive(t) is sum_d Vd(t) with dendrites, W_in x(t) + W_rec S_mem(t-1) without.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ip2rsnn/rng.hpp"

namespace ip2rsnn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError("shape mismatch: " + what);
}

enum class NoisePlacement {
  outside,  // V = tau_s V + (1 - tau_s) drive + N
  inside,   // V = tau_s V + (1 - tau_s) (drive + N)
};

// How the spike nonlinearity is treated. `surrogate` emits hard 0/1 spikes and
// backpropagates a triangular pseudo-derivative; `smooth` replaces the step by a
// logistic function in both passes, so its gradients are exact and can be
// checked against finite differences.
struct DifferentiationMode {
  enum class Kind { surrogate, smooth };
  enum class Reset { detach, pass_through };

  Kind kind = Kind::surrogate;
  double surrogate_width = 1.0;
  // Only consulted in surrogate mode; smooth mode always differentiates the reset.
  Reset reset = Reset::detach;

  void validate() const {
    if (!(surrogate_width > 0.0)) throw std::invalid_argument("surrogate_width must be > 0");
  }
  static DifferentiationMode smooth(double width = 1.0) {
    return {Kind::smooth, width, Reset::pass_through};
  }
};

struct NetworkConfig {
  std::size_t n_neurons = 256;
  std::size_t n_dendrites = 2;  // 0 selects the point-soma update
  double dt_ms = 10.0;
  double alpha = 0.01;
  double alpha_noise = 0.5;
  double a_noise = 0.05;
  double v_reset = 0.0;
  bool noise_enabled = true;
  std::uint64_t rng_seed = 0;
  NoisePlacement noise_placement = NoisePlacement::outside;

  std::size_t n_branches() const { return n_dendrites == 0 ? 1 : n_dendrites; }

  void validate() const {
    if (n_neurons == 0) throw std::invalid_argument("n_neurons must be > 0");
    if (!(dt_ms > 0.0)) throw std::invalid_argument("dt_ms must be > 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
    if (!(alpha_noise > 0.0 && alpha_noise <= 1.0))
      throw std::invalid_argument("alpha_noise must lie in (0, 1]");
    if (!(a_noise >= 0.0)) throw std::invalid_argument("a_noise must be >= 0");
    if (!std::isfinite(v_reset)) throw std::invalid_argument("v_reset must be finite");
  }
};

// Input, recurrent and output weights. The input and recurrent matrices are
// stored per branch; each (neuron, afferent) pair is owned by exactly one branch
// and `in_mask` / `rec_mask` record that ownership. Point-soma networks hold a
// single branch with all-ones masks.
struct NetworkWeights {
  std::vector<Mat> w_in;      // per branch, N x in_dim
  std::vector<Mat> w_rec;     // per branch, N x N
  Mat w_out;                  // out_dim x N
  std::vector<Mat> in_mask;   // per branch, entries in {0, 1}
  std::vector<Mat> rec_mask;  // per branch, entries in {0, 1}

  std::size_t n_branches() const { return w_in.size(); }
  std::size_t n_neurons() const { return w_out.cols(); }
  std::size_t input_dim() const { return w_in.empty() ? 0 : w_in.front().cols(); }
  std::size_t output_dim() const { return w_out.rows(); }

  void validate() const {
    const auto nb = w_in.size();
    require_shape(nb > 0, "at least one branch");
    require_shape(w_rec.size() == nb && in_mask.size() == nb && rec_mask.size() == nb,
                  "branch count of weights and masks");
    const auto n = static_cast<Eigen::Index>(n_neurons());
    const auto in = static_cast<Eigen::Index>(input_dim());
    Mat in_cover = Mat::Zero(n, in);
    Mat rec_cover = Mat::Zero(n, n);
    for (std::size_t d = 0; d < nb; ++d) {
      require_shape(w_in[d].rows() == n && w_in[d].cols() == in, "w_in branch dims");
      require_shape(w_rec[d].rows() == n && w_rec[d].cols() == n, "w_rec branch dims");
      require_shape(in_mask[d].rows() == n && in_mask[d].cols() == in, "in_mask dims");
      require_shape(rec_mask[d].rows() == n && rec_mask[d].cols() == n, "rec_mask dims");
      in_cover += in_mask[d];
      rec_cover += rec_mask[d];
      if ((w_in[d].array() * (1.0 - in_mask[d].array())).abs().maxCoeff() > 0.0 ||
          (w_rec[d].array() * (1.0 - rec_mask[d].array())).abs().maxCoeff() > 0.0)
        throw std::invalid_argument("weight present on a branch that does not own the afferent");
    }
    if ((in_cover.array() != 1.0).any() || (rec_cover.array() != 1.0).any())
      throw std::invalid_argument("every afferent must be owned by exactly one branch");
  }

  // Sum over branches; the connectivity a point neuron would see.
  Mat dense_in() const {
    Mat m = w_in.front();
    for (std::size_t d = 1; d < w_in.size(); ++d) m += w_in[d];
    return m;
  }
  Mat dense_rec() const {
    Mat m = w_rec.front();
    for (std::size_t d = 1; d < w_rec.size(); ++d) m += w_rec[d];
    return m;
  }
};

struct IntrinsicProperties {
  Mat tau_d;  // N x n_dendrites (zero columns in point mode)
  Vec tau_s;  // N
  Vec theta;  // N

  std::size_t n_neurons() const { return tau_s.size(); }

  void validate() const {
    require_shape(theta.size() == tau_s.size(), "theta and tau_s length");
    require_shape(tau_d.rows() == tau_s.size() || tau_d.size() == 0, "tau_d rows");
    auto in_unit = [](const auto& a) {
      return a.size() == 0 || ((a.array() >= 0.0).all() && (a.array() <= 1.0).all());
    };
    if (!in_unit(tau_d) || !in_unit(tau_s))
      throw std::invalid_argument("decay factors must lie in [0, 1]");
    if (!theta.allFinite()) throw std::invalid_argument("thresholds must be finite");
  }

  friend bool operator==(const IntrinsicProperties& a, const IntrinsicProperties& b) {
    return a.tau_d.rows() == b.tau_d.rows() && a.tau_d.cols() == b.tau_d.cols() &&
           a.tau_d == b.tau_d && a.tau_s.size() == b.tau_s.size() && a.tau_s == b.tau_s &&
           a.theta.size() == b.theta.size() && a.theta == b.theta;
  }
};

struct NeuronState {
  Vec v;       // somatic potential (after reset)
  Mat v_d;     // N x n_dendrites
  Vec noise;   // N(t)
  Vec spikes;  // S_spike(t), after silencing
  Vec trace;   // S_mem(t)
};

struct TrialRecording {
  std::size_t task_index = 0;
  std::size_t trial_index = 0;

  // Every matrix below is steps x N (y is steps x out_dim); row t is timestep t.
  Mat v;           // after reset
  Mat v_pre;       // before reset
  Mat spikes_raw;  // threshold output, before silencing
  Mat spikes;      // what the rest of the network sees
  Mat trace;
  Mat y;
  Mat noise;
  Mat drive;
  std::vector<Mat> v_d;           // per branch (dendritic mode only)
  std::vector<Mat> branch_input;  // per branch, W_in,d x(t) + W_rec,d S_mem(t-1)
  Vec keep;                       // 1 for intact neurons, 0 for silenced ones

  std::size_t steps() const { return static_cast<std::size_t>(v.rows()); }
};

inline NeuronState init_state(const NetworkConfig& config) {
  const auto n = static_cast<Eigen::Index>(config.n_neurons);
  NeuronState s;
  s.v = Vec::Constant(n, config.v_reset);
  s.v_d = Mat::Zero(n, static_cast<Eigen::Index>(config.n_dendrites));
  s.noise = Vec::Zero(n);
  s.spikes = Vec::Zero(n);
  s.trace = Vec::Zero(n);
  return s;
}

inline Vec noise_step(const Vec& noise, const Vec& z, const NetworkConfig& config) {
  require_shape(noise.size() == z.size(), "noise and draws");
  return (1.0 - config.alpha_noise) * noise +
         std::sqrt(2.0 * config.alpha_noise) * config.a_noise * z;
}

// Per-branch input W_in,d x + W_rec,d S_mem(t-1), one column per branch.
inline Mat branch_inputs(const Vec& x_in, const Vec& trace_prev, const NetworkWeights& w) {
  require_shape(x_in.size() == static_cast<Eigen::Index>(w.input_dim()), "input width");
  require_shape(trace_prev.size() == static_cast<Eigen::Index>(w.n_neurons()), "trace width");
  Mat out(static_cast<Eigen::Index>(w.n_neurons()), static_cast<Eigen::Index>(w.n_branches()));
  for (std::size_t d = 0; d < w.n_branches(); ++d)
    out.col(static_cast<Eigen::Index>(d)) = w.w_in[d] * x_in + w.w_rec[d] * trace_prev;
  return out;
}

// Returns the new dendritic potentials (N x n_dendrites); their row sums are the
// somatic drive.
inline Mat dendrite_step(const Mat& v_d, const Vec& x_in, const Vec& trace_prev,
                         const NetworkWeights& w, const IntrinsicProperties& props,
                         const NetworkConfig& config) {
  if (config.n_dendrites == 0) throw std::invalid_argument("dendrite_step needs n_dendrites > 0");
  require_shape(w.n_branches() == config.n_dendrites, "weight branches vs n_dendrites");
  require_shape(v_d.rows() == props.tau_d.rows() && v_d.cols() == props.tau_d.cols() &&
                    v_d.cols() == static_cast<Eigen::Index>(config.n_dendrites),
                "dendritic state vs tau_d");
  const Mat inp = branch_inputs(x_in, trace_prev, w);
  require_shape(inp.rows() == v_d.rows(), "neuron count");
  return (props.tau_d.array() * v_d.array() + (1.0 - props.tau_d.array()) * inp.array()).matrix();
}

inline Vec point_drive(const Vec& x_in, const Vec& trace_prev, const NetworkWeights& w) {
  return branch_inputs(x_in, trace_prev, w).rowwise().sum();
}

inline Vec soma_step(const Vec& v, const Vec& drive, const Vec& noise,
                     const IntrinsicProperties& props, const NetworkConfig& config) {
  require_shape(v.size() == drive.size() && v.size() == noise.size() &&
                    v.size() == props.tau_s.size(),
                "soma vectors");
  const auto b = props.tau_s.array();
  if (config.noise_placement == NoisePlacement::inside)
    return (b * v.array() + (1.0 - b) * (drive.array() + noise.array())).matrix();
  return (b * v.array() + (1.0 - b) * drive.array() + noise.array()).matrix();
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Hard threshold with reset (surrogate mode) or the logistic relaxation with a
// soft reset V <- V + s (V_reset - V) (smooth mode).
inline std::pair<Vec, Vec> spike_and_reset(const Vec& v, const IntrinsicProperties& props,
                                           const NetworkConfig& config,
                                           const DifferentiationMode& mode = {}) {
  require_shape(v.size() == props.theta.size(), "potential and threshold");
  Vec s(v.size());
  Vec after(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (mode.kind == DifferentiationMode::Kind::smooth) {
      s[i] = logistic((v[i] - props.theta[i]) / mode.surrogate_width);
      after[i] = v[i] + s[i] * (config.v_reset - v[i]);
    } else {
      s[i] = v[i] >= props.theta[i] ? 1.0 : 0.0;
      after[i] = s[i] > 0.0 ? config.v_reset : v[i];
    }
  }
  return {std::move(s), std::move(after)};
}

inline Vec trace_step(const Vec& trace, const Vec& spikes_prev, const NetworkConfig& config) {
  require_shape(trace.size() == spikes_prev.size(), "trace and spikes");
  return config.alpha * trace + (1.0 - config.alpha) * spikes_prev;
}

inline Vec readout(const Vec& trace, const NetworkWeights& w) {
  require_shape(trace.size() == w.w_out.cols(), "trace width vs w_out");
  return w.w_out * trace;
}

struct ForwardOptions {
  DifferentiationMode mode{};
  std::uint64_t noise_seed = 0;
  std::optional<bool> noise_enabled;  // overrides config.noise_enabled when set
  std::optional<Vec> silenced;        // 1 marks a neuron whose spikes are clamped to 0
};

// Stateful stepper over one trial. Not thread-safe; one instance per thread.
class Simulator {
 public:
  Simulator(const NetworkWeights& w, const IntrinsicProperties& props,
            const NetworkConfig& config, const ForwardOptions& opts)
      : w_(w), props_(props), config_(config), mode_(opts.mode),
        noise_on_(opts.noise_enabled.value_or(config.noise_enabled)),
        rng_(opts.noise_seed), state_(init_state(config)) {
    config_.validate();
    mode_.validate();
    w_.validate();
    props_.validate();
    const auto n = static_cast<Eigen::Index>(config_.n_neurons);
    require_shape(static_cast<Eigen::Index>(w_.n_neurons()) == n, "weights vs n_neurons");
    require_shape(props_.tau_s.size() == n, "properties vs n_neurons");
    require_shape(w_.n_branches() == config_.n_branches(), "weight branches vs n_dendrites");
    require_shape(props_.tau_d.cols() == static_cast<Eigen::Index>(config_.n_dendrites),
                  "tau_d columns vs n_dendrites");
    keep_ = Vec::Ones(n);
    if (opts.silenced) {
      require_shape(opts.silenced->size() == n, "silencing mask");
      keep_ = (1.0 - opts.silenced->array()).matrix();
    }
  }

  const NeuronState& state() const { return state_; }
  const Vec& keep() const { return keep_; }

  struct StepTrace {
    Vec v_pre, spikes_raw, drive;
    Mat branch_input;
  };

  StepTrace step(const Vec& x) {
    const auto n = static_cast<Eigen::Index>(config_.n_neurons);
    Vec z = Vec::Zero(n);
    if (noise_on_)
      for (Eigen::Index i = 0; i < n; ++i) z[i] = rng_.normal();
    state_.noise = noise_step(state_.noise, z, config_);

    StepTrace out;
    out.branch_input = branch_inputs(x, state_.trace, w_);
    if (config_.n_dendrites > 0) {
      state_.v_d = (props_.tau_d.array() * state_.v_d.array() +
                    (1.0 - props_.tau_d.array()) * out.branch_input.array())
                       .matrix();
      out.drive = state_.v_d.rowwise().sum();
    } else {
      out.drive = out.branch_input.rowwise().sum();
    }
    out.v_pre = soma_step(state_.v, out.drive, state_.noise, props_, config_);
    auto [s, after] = spike_and_reset(out.v_pre, props_, config_, mode_);
    out.spikes_raw = s;
    state_.v = std::move(after);

    const Vec spikes_prev = state_.spikes;
    state_.spikes = (s.array() * keep_.array()).matrix();
    state_.trace = trace_step(state_.trace, spikes_prev, config_);
    return out;
  }

  Vec output() const { return readout(state_.trace, w_); }

 private:
  const NetworkWeights& w_;
  const IntrinsicProperties& props_;
  NetworkConfig config_;
  DifferentiationMode mode_;
  bool noise_on_;
  Rng rng_;
  NeuronState state_;
  Vec keep_;
};

// Runs one trial; `input` is steps x in_dim.
inline TrialRecording forward_trial(const NetworkWeights& w, const IntrinsicProperties& props,
                                    const NetworkConfig& config, const Mat& input,
                                    const ForwardOptions& opts = {}) {
  require_shape(input.cols() == static_cast<Eigen::Index>(w.input_dim()), "input width");
  Simulator sim(w, props, config, opts);
  const auto steps = input.rows();
  const auto n = static_cast<Eigen::Index>(config.n_neurons);
  const auto nb = w.n_branches();

  TrialRecording rec;
  rec.v.resize(steps, n);
  rec.v_pre.resize(steps, n);
  rec.spikes_raw.resize(steps, n);
  rec.spikes.resize(steps, n);
  rec.trace.resize(steps, n);
  rec.noise.resize(steps, n);
  rec.drive.resize(steps, n);
  rec.y.resize(steps, static_cast<Eigen::Index>(w.output_dim()));
  rec.branch_input.assign(nb, Mat(steps, n));
  if (config.n_dendrites > 0) rec.v_d.assign(config.n_dendrites, Mat(steps, n));
  rec.keep = sim.keep();

  for (Eigen::Index t = 0; t < steps; ++t) {
    auto st = sim.step(input.row(t).transpose());
    const auto& s = sim.state();
    rec.v.row(t) = s.v.transpose();
    rec.v_pre.row(t) = st.v_pre.transpose();
    rec.spikes_raw.row(t) = st.spikes_raw.transpose();
    rec.spikes.row(t) = s.spikes.transpose();
    rec.trace.row(t) = s.trace.transpose();
    rec.noise.row(t) = s.noise.transpose();
    rec.drive.row(t) = st.drive.transpose();
    rec.y.row(t) = sim.output().transpose();
    for (std::size_t d = 0; d < nb; ++d)
      rec.branch_input[d].row(t) = st.branch_input.col(static_cast<Eigen::Index>(d)).transpose();
    for (std::size_t d = 0; d < config.n_dendrites; ++d)
      rec.v_d[d].row(t) = s.v_d.col(static_cast<Eigen::Index>(d)).transpose();
  }
  return rec;
}

struct WeightInit {
  double in_scale = 1.0;   // std of W_in entries times sqrt(in_dim)
  double rec_scale = 0.5;  // std of W_rec entries times sqrt(N)
  double out_scale = 0.1;  // std of W_out entries times sqrt(N)
};

// Gaussian weights; each (neuron, afferent) pair is placed on one branch chosen
// uniformly at random.
inline NetworkWeights init_weights(const NetworkConfig& config, std::size_t in_dim,
                                   std::size_t out_dim, std::uint64_t seed,
                                   const WeightInit& scales = {}) {
  const auto n = static_cast<Eigen::Index>(config.n_neurons);
  const auto in = static_cast<Eigen::Index>(in_dim);
  const auto nb = config.n_branches();
  Rng rng(seed);
  NetworkWeights w;
  w.w_in.assign(nb, Mat::Zero(n, in));
  w.w_rec.assign(nb, Mat::Zero(n, n));
  w.in_mask.assign(nb, Mat::Zero(n, in));
  w.rec_mask.assign(nb, Mat::Zero(n, n));
  const double sin = in_dim ? scales.in_scale / std::sqrt(static_cast<double>(in_dim)) : 0.0;
  const double srec = scales.rec_scale / std::sqrt(static_cast<double>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < in; ++j) {
      const auto d = rng.below(nb);
      w.in_mask[d](i, j) = 1.0;
      w.w_in[d](i, j) = sin * rng.normal();
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto d = rng.below(nb);
      w.rec_mask[d](i, j) = 1.0;
      w.w_rec[d](i, j) = i == j ? 0.0 : srec * rng.normal();
    }
  }
  w.w_out.resize(static_cast<Eigen::Index>(out_dim), n);
  const double sout = scales.out_scale / std::sqrt(static_cast<double>(n));
  for (Eigen::Index r = 0; r < w.w_out.rows(); ++r)
    for (Eigen::Index c = 0; c < n; ++c) w.w_out(r, c) = sout * rng.normal();
  return w;
}

}  // namespace ip2rsnn
