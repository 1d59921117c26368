#pragma once

// Bi-level intrinsic plasticity. The outer level picks, once per task family,
// which property groups (dendritic decay, somatic decay, threshold) come from
// the trainable bank and which from the frozen bank. The inner level updates
// only the trainable groups.

#include <algorithm>
#include <cctype>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ip2rsnn/optimizer.hpp"
#include "ip2rsnn/rng.hpp"
#include "ip2rsnn/snn.hpp"

namespace ip2rsnn {

enum class TaskFamily { dms, cd_dms, gng_dr_2, gng_dr_4 };

inline std::string_view family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::dms: return "DMS";
    case TaskFamily::cd_dms: return "CD-DMS";
    case TaskFamily::gng_dr_2: return "GNG-DR-2";
    case TaskFamily::gng_dr_4: return "GNG-DR-4";
  }
  return "?";
}

inline TaskFamily parse_family(std::string_view s) {
  std::string u;
  for (char c : s) u += c == '_' ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "DMS") return TaskFamily::dms;
  if (u == "CD-DMS" || u == "CDDMS") return TaskFamily::cd_dms;
  if (u == "GNG-DR-2" || u == "GNGDR2") return TaskFamily::gng_dr_2;
  if (u == "GNG-DR-4" || u == "GNGDR4") return TaskFamily::gng_dr_4;
  throw std::invalid_argument("unknown task family: " + std::string(s));
}

struct LearningMask {
  bool tau_d = false;  // m1
  bool tau_s = false;  // m2
  bool theta = false;  // m3

  static LearningMask from_array(const std::array<int, 3>& m) {
    for (int v : m)
      if (v != 0 && v != 1) throw std::invalid_argument("learning mask entries must be 0 or 1");
    return {m[0] == 1, m[1] == 1, m[2] == 1};
  }
  std::array<int, 3> to_array() const { return {tau_d, tau_s, theta}; }
  std::string str() const {
    return "[" + std::to_string(int(tau_d)) + "," + std::to_string(int(tau_s)) + "," +
           std::to_string(int(theta)) + "]";
  }
  friend bool operator==(const LearningMask&, const LearningMask&) = default;
};

inline LearningMask mask_for_family(TaskFamily f) {
  switch (f) {
    case TaskFamily::dms: return {true, false, false};
    case TaskFamily::cd_dms: return {true, false, true};
    case TaskFamily::gng_dr_2: return {true, true, false};
    case TaskFamily::gng_dr_4: return {true, true, true};
  }
  throw std::invalid_argument("unknown task family");
}

inline LearningMask mask_for_family(std::string_view family) {
  return mask_for_family(parse_family(family));
}

// Explicit override vectors (randomized-mask ablations) pass through unchanged.
inline LearningMask mask_for_family(const std::array<int, 3>& override_mask) {
  return LearningMask::from_array(override_mask);
}

struct CandidateProperties {
  IntrinsicProperties learnable_bank;
  IntrinsicProperties fixed_bank;
};

struct ConfiguredProperties {
  IntrinsicProperties props;
  LearningMask mask;
  std::string provenance;
};

inline ConfiguredProperties configure(const CandidateProperties& c, const LearningMask& m,
                                      std::string provenance = {}) {
  ConfiguredProperties out;
  out.props.tau_d = m.tau_d ? c.learnable_bank.tau_d : c.fixed_bank.tau_d;
  out.props.tau_s = m.tau_s ? c.learnable_bank.tau_s : c.fixed_bank.tau_s;
  out.props.theta = m.theta ? c.learnable_bank.theta : c.fixed_bank.theta;
  out.mask = m;
  out.provenance = std::move(provenance);
  return out;
}

// Frozen bank: tau_d = 0, tau_s ~ U(0.9, 0.999), theta = 1.
inline IntrinsicProperties default_fixed_bank(const NetworkConfig& config, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(config.n_neurons);
  Rng rng(derive_seed(seed, {0xF1ED}));
  IntrinsicProperties p;
  p.tau_d = Mat::Zero(n, static_cast<Eigen::Index>(config.n_dendrites));
  p.tau_s.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) p.tau_s[i] = rng.uniform(0.9, 0.999);
  p.theta = Vec::Ones(n);
  return p;
}

// Trainable bank: decay factors ~ U(0.9, 0.999), theta = 1 +- U(0.05).
inline IntrinsicProperties default_learnable_bank(const NetworkConfig& config,
                                                  std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(config.n_neurons);
  const auto nd = static_cast<Eigen::Index>(config.n_dendrites);
  Rng rng(derive_seed(seed, {0x1EA2}));
  IntrinsicProperties p;
  p.tau_d.resize(n, nd);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index d = 0; d < nd; ++d) p.tau_d(i, d) = rng.uniform(0.9, 0.999);
  p.tau_s.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) p.tau_s[i] = rng.uniform(0.9, 0.999);
  p.theta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) p.theta[i] = 1.0 + rng.uniform(-0.05, 0.05);
  return p;
}

inline CandidateProperties default_candidates(const NetworkConfig& config, std::uint64_t seed) {
  return {default_learnable_bank(config, seed), default_fixed_bank(config, seed)};
}

inline void clamp_decay_factors(IntrinsicProperties& p) {
  p.tau_d = p.tau_d.cwiseMax(0.0).cwiseMin(1.0);
  p.tau_s = p.tau_s.cwiseMax(0.0).cwiseMin(1.0);
}

// Zeroes gradient entries that must not move: groups drawn from the frozen bank
// and weights on branches that do not own the afferent.
inline void mask_gradients(GradientSet& g, const NetworkWeights& w, const LearningMask& m) {
  for (std::size_t d = 0; d < g.d_w_in.size(); ++d) {
    g.d_w_in[d].array() *= w.in_mask[d].array();
    g.d_w_rec[d].array() *= w.rec_mask[d].array();
  }
  if (!m.tau_d) g.d_tau_d.setZero();
  if (!m.tau_s) g.d_tau_s.setZero();
  if (!m.theta) g.d_theta.setZero();
}

// Updates the learnable groups of `props` from `grads` using the optimizer's
// current step_count (the caller advances it once per step), then projects
// decay factors back onto [0, 1]. Frozen groups are not touched.
inline void update_properties(IntrinsicProperties& p, const LearningMask& mask,
                              const GradientSet& grads, AdamState& opt) {
  require_shape(grads.d_tau_d.rows() == p.tau_d.rows() && grads.d_tau_d.cols() == p.tau_d.cols() &&
                    grads.d_tau_s.size() == p.tau_s.size() &&
                    grads.d_theta.size() == p.theta.size(),
                "gradient layout vs properties");
  if (mask.tau_d) {
    opt.update("tau_d", p.tau_d.data(), grads.d_tau_d.data(), p.tau_d.size());
    p.tau_d = p.tau_d.cwiseMax(0.0).cwiseMin(1.0);
  }
  if (mask.tau_s) {
    opt.update("tau_s", p.tau_s.data(), grads.d_tau_s.data(), p.tau_s.size());
    p.tau_s = p.tau_s.cwiseMax(0.0).cwiseMin(1.0);
  }
  if (mask.theta) opt.update("theta", p.theta.data(), grads.d_theta.data(), p.theta.size());
}

// Standalone property step: advances the optimizer and updates the learnable groups.
inline ConfiguredProperties apply_update(ConfiguredProperties configured,
                                         const GradientSet& grads, AdamState& opt) {
  opt.validate();
  ++opt.step_count;
  update_properties(configured.props, configured.mask, grads, opt);
  return configured;
}

// Full training step: masks the gradients, then updates weights and the
// learnable property groups.
inline void training_step(ModelParams& params, const LearningMask& mask, GradientSet grads,
                          AdamState& opt) {
  opt.validate();
  auto& w = params.weights;
  mask_gradients(grads, w, mask);
  ++opt.step_count;
  for (std::size_t d = 0; d < w.w_in.size(); ++d) {
    opt.update("w_in." + std::to_string(d), w.w_in[d].data(), grads.d_w_in[d].data(),
               w.w_in[d].size());
    opt.update("w_rec." + std::to_string(d), w.w_rec[d].data(), grads.d_w_rec[d].data(),
               w.w_rec[d].size());
  }
  opt.update("w_out", w.w_out.data(), grads.d_w_out.data(), w.w_out.size());
  update_properties(params.props, mask, grads, opt);
}

}  // namespace ip2rsnn
