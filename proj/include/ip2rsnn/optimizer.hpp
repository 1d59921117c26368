#pragma once

// Parameter/gradient layout and the Adam optimizer.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ip2rsnn/snn.hpp"

namespace ip2rsnn {

struct ModelParams {
  NetworkWeights weights;
  IntrinsicProperties props;
};

struct GradientSet {
  std::vector<Mat> d_w_in;
  std::vector<Mat> d_w_rec;
  Mat d_w_out;
  Mat d_tau_d;
  Vec d_tau_s;
  Vec d_theta;

  static GradientSet zeros_like(const ModelParams& p) {
    GradientSet g;
    for (const auto& m : p.weights.w_in) g.d_w_in.push_back(Mat::Zero(m.rows(), m.cols()));
    for (const auto& m : p.weights.w_rec) g.d_w_rec.push_back(Mat::Zero(m.rows(), m.cols()));
    g.d_w_out = Mat::Zero(p.weights.w_out.rows(), p.weights.w_out.cols());
    g.d_tau_d = Mat::Zero(p.props.tau_d.rows(), p.props.tau_d.cols());
    g.d_tau_s = Vec::Zero(p.props.tau_s.size());
    g.d_theta = Vec::Zero(p.props.theta.size());
    return g;
  }

  GradientSet& operator+=(const GradientSet& o) {
    require_shape(d_w_in.size() == o.d_w_in.size(), "gradient branch count");
    for (std::size_t d = 0; d < d_w_in.size(); ++d) {
      d_w_in[d] += o.d_w_in[d];
      d_w_rec[d] += o.d_w_rec[d];
    }
    d_w_out += o.d_w_out;
    d_tau_d += o.d_tau_d;
    d_tau_s += o.d_tau_s;
    d_theta += o.d_theta;
    return *this;
  }
};

// Visits every parameter tensor with a stable name, in checkpoint order.
template <typename Params, typename Fn>
void for_each_param(Params& p, Fn&& fn) {
  for (std::size_t d = 0; d < p.weights.w_in.size(); ++d)
    fn("w_in." + std::to_string(d), p.weights.w_in[d].data(), p.weights.w_in[d].size());
  for (std::size_t d = 0; d < p.weights.w_rec.size(); ++d)
    fn("w_rec." + std::to_string(d), p.weights.w_rec[d].data(), p.weights.w_rec[d].size());
  fn(std::string("w_out"), p.weights.w_out.data(), p.weights.w_out.size());
  fn(std::string("tau_d"), p.props.tau_d.data(), p.props.tau_d.size());
  fn(std::string("tau_s"), p.props.tau_s.data(), p.props.tau_s.size());
  fn(std::string("theta"), p.props.theta.data(), p.props.theta.size());
}

// Same order and names as for_each_param.
template <typename Grads, typename Fn>
void for_each_grad(Grads& g, Fn&& fn) {
  for (std::size_t d = 0; d < g.d_w_in.size(); ++d)
    fn("w_in." + std::to_string(d), g.d_w_in[d].data(), g.d_w_in[d].size());
  for (std::size_t d = 0; d < g.d_w_rec.size(); ++d)
    fn("w_rec." + std::to_string(d), g.d_w_rec[d].data(), g.d_w_rec[d].size());
  fn(std::string("w_out"), g.d_w_out.data(), g.d_w_out.size());
  fn(std::string("tau_d"), g.d_tau_d.data(), g.d_tau_d.size());
  fn(std::string("tau_s"), g.d_tau_s.data(), g.d_tau_s.size());
  fn(std::string("theta"), g.d_theta.data(), g.d_theta.size());
}

// Parameter group a tensor name belongs to: "w_in", "w_rec", "w_out",
// "tau_d", "tau_s" or "theta".
inline std::string param_group(const std::string& name) {
  return name.substr(0, name.find('.'));
}

struct AdamState {
  double lr = 0.01;
  double beta1 = 0.1;
  double beta2 = 0.3;
  double eps = 1e-8;
  bool plain_gradient = false;              // p -= lr * g, no moments
  std::map<std::string, double> group_lr;   // per-group override of lr
  std::uint64_t step_count = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;

  void validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("Adam betas must lie in [0, 1)");
    if (!(lr >= 0.0) || !(eps > 0.0)) throw std::invalid_argument("Adam lr/eps invalid");
  }

  double rate_for(const std::string& name) const {
    auto it = group_lr.find(param_group(name));
    return it == group_lr.end() ? lr : it->second;
  }

  // Applies one update to a single tensor using the current step_count, which
  // the caller has already advanced.
  void update(const std::string& name, double* p, const double* g, std::size_t n) {
    const double rate = rate_for(name);
    if (plain_gradient) {
      for (std::size_t i = 0; i < n; ++i) p[i] -= rate * g[i];
      return;
    }
    auto& mm = m[name];
    auto& vv = v[name];
    if (mm.size() != n) mm.assign(n, 0.0);
    if (vv.size() != n) vv.assign(n, 0.0);
    const double t = static_cast<double>(step_count);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
      mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = mm[i] / c1;
      const double vhat = vv[i] / c2;
      p[i] -= rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

// One optimizer step over every parameter tensor.
inline void adam_step(AdamState& state, const GradientSet& grads, ModelParams& params) {
  state.validate();
  ++state.step_count;
  std::vector<const double*> gptr;
  std::vector<std::size_t> gsize;
  for_each_grad(grads, [&](const std::string&, const double* g, std::size_t n) {
    gptr.push_back(g);
    gsize.push_back(n);
  });
  std::size_t k = 0;
  for_each_param(params, [&](const std::string& name, double* p, std::size_t n) {
    if (k >= gptr.size() || gsize[k] != n) throw ShapeError("shape mismatch: gradient layout");
    state.update(name, p, gptr[k], n);
    ++k;
  });
  if (k != gptr.size()) throw ShapeError("shape mismatch: gradient layout");
}

}  // namespace ip2rsnn
