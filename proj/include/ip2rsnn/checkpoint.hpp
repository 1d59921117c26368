#pragma once

// A trainable model and its lossless checkpoint form.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "ip2rsnn/config.hpp"
#include "ip2rsnn/objective.hpp"
#include "ip2rsnn/optimizer.hpp"
#include "ip2rsnn/plasticity.hpp"
#include "ip2rsnn/snn.hpp"
#include "ip2rsnn/tensor_io.hpp"

namespace ip2rsnn {

struct Model {
  NetworkConfig config;
  ModelParams params;
  LearningMask mask;
  CandidateProperties candidates;
  AdamState optimizer;
  HomeostaticTarget target;
  std::string provenance;
};

// Fresh model: seeded weights, default candidate banks, properties configured
// once from the experiment's mask.
inline Model make_model(const ExperimentConfig& cfg) {
  Model m;
  m.config = cfg.resolved_network();
  const auto spec = TaskFamilySpec::of(cfg.family);
  m.params.weights = init_weights(m.config, spec.input_dim(), spec.output_dim(),
                                  derive_seed(cfg.seed, {0x3E16}), cfg.init);
  m.candidates = default_candidates(m.config, derive_seed(cfg.seed, {0xBA4C}));
  m.mask = cfg.learning_mask();
  m.provenance = std::string(family_name(cfg.family));
  m.params.props = configure(m.candidates, m.mask, m.provenance).props;
  m.optimizer = cfg.optimizer;
  m.optimizer.step_count = 0;
  m.optimizer.m.clear();
  m.optimizer.v.clear();
  return m;
}

// Exact text form of a double (hex float).
inline std::string exact(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

inline double parse_exact(const std::string& s) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw IoError("not a number: " + s);
  return x;
}

namespace detail {

inline void put_props(TensorArchive& a, const std::string& prefix, const IntrinsicProperties& p) {
  a.put(prefix + "tau_d", p.tau_d);
  a.put(prefix + "tau_s", p.tau_s);
  a.put(prefix + "theta", p.theta);
}

inline IntrinsicProperties get_props(const TensorArchive& a, const std::string& prefix) {
  IntrinsicProperties p;
  p.tau_d = a.get(prefix + "tau_d");
  p.tau_s = a.get_vector(prefix + "tau_s");
  p.theta = a.get_vector(prefix + "theta");
  return p;
}

}  // namespace detail

inline TensorArchive to_archive(const Model& m) {
  TensorArchive a;
  const auto& c = m.config;
  a.set_meta("kind", "checkpoint");
  a.set_meta("n_neurons", std::to_string(c.n_neurons));
  a.set_meta("n_dendrites", std::to_string(c.n_dendrites));
  a.set_meta("dt_ms", exact(c.dt_ms));
  a.set_meta("alpha", exact(c.alpha));
  a.set_meta("alpha_noise", exact(c.alpha_noise));
  a.set_meta("a_noise", exact(c.a_noise));
  a.set_meta("v_reset", exact(c.v_reset));
  a.set_meta("noise_enabled", c.noise_enabled ? "1" : "0");
  a.set_meta("noise_placement", c.noise_placement == NoisePlacement::inside ? "inside" : "outside");
  a.set_meta("rng_seed", std::to_string(c.rng_seed));
  a.set_meta("mask", m.mask.str());
  a.set_meta("provenance", m.provenance.empty() ? "-" : m.provenance);
  a.set_meta("sigma_h_sq", exact(m.target.sigma_h_sq));
  const auto& o = m.optimizer;
  a.set_meta("adam.lr", exact(o.lr));
  a.set_meta("adam.beta1", exact(o.beta1));
  a.set_meta("adam.beta2", exact(o.beta2));
  a.set_meta("adam.eps", exact(o.eps));
  a.set_meta("adam.plain_gradient", o.plain_gradient ? "1" : "0");
  a.set_meta("adam.step_count", std::to_string(o.step_count));
  for (const auto& [g, lr] : o.group_lr) a.set_meta("adam.group_lr." + g, exact(lr));

  const auto& w = m.params.weights;
  a.set_meta("branches", std::to_string(w.n_branches()));
  for (std::size_t d = 0; d < w.n_branches(); ++d) {
    const auto k = std::to_string(d);
    a.put("w_in." + k, w.w_in[d]);
    a.put("w_rec." + k, w.w_rec[d]);
    a.put("in_mask." + k, w.in_mask[d]);
    a.put("rec_mask." + k, w.rec_mask[d]);
  }
  a.put("w_out", w.w_out);
  detail::put_props(a, "", m.params.props);
  detail::put_props(a, "learnable.", m.candidates.learnable_bank);
  detail::put_props(a, "fixed.", m.candidates.fixed_bank);
  for (const auto& [name, mom] : o.m)
    a.put("adam.m." + name, Vec(Eigen::Map<const Vec>(mom.data(), static_cast<Eigen::Index>(mom.size()))));
  for (const auto& [name, mom] : o.v)
    a.put("adam.v." + name, Vec(Eigen::Map<const Vec>(mom.data(), static_cast<Eigen::Index>(mom.size()))));
  return a;
}

inline Model from_archive(const TensorArchive& a) {
  if (!a.has_meta("kind") || a.meta("kind") != "checkpoint") throw IoError("not a checkpoint archive");
  Model m;
  auto& c = m.config;
  c.n_neurons = std::stoull(a.meta("n_neurons"));
  c.n_dendrites = std::stoull(a.meta("n_dendrites"));
  c.dt_ms = parse_exact(a.meta("dt_ms"));
  c.alpha = parse_exact(a.meta("alpha"));
  c.alpha_noise = parse_exact(a.meta("alpha_noise"));
  c.a_noise = parse_exact(a.meta("a_noise"));
  c.v_reset = parse_exact(a.meta("v_reset"));
  c.noise_enabled = a.meta("noise_enabled") == "1";
  c.noise_placement = a.meta("noise_placement") == "inside" ? NoisePlacement::inside : NoisePlacement::outside;
  c.rng_seed = std::stoull(a.meta("rng_seed"));
  const auto ms = a.meta("mask");
  if (ms.size() != 7) throw IoError("malformed mask: " + ms);
  m.mask = LearningMask::from_array({ms[1] - '0', ms[3] - '0', ms[5] - '0'});
  m.provenance = a.meta("provenance") == "-" ? "" : a.meta("provenance");
  m.target.sigma_h_sq = parse_exact(a.meta("sigma_h_sq"));
  auto& o = m.optimizer;
  o.lr = parse_exact(a.meta("adam.lr"));
  o.beta1 = parse_exact(a.meta("adam.beta1"));
  o.beta2 = parse_exact(a.meta("adam.beta2"));
  o.eps = parse_exact(a.meta("adam.eps"));
  o.plain_gradient = a.meta("adam.plain_gradient") == "1";
  o.step_count = std::stoull(a.meta("adam.step_count"));
  for (const auto& [k, v] : a.all_meta())
    if (k.rfind("adam.group_lr.", 0) == 0) o.group_lr[k.substr(14)] = parse_exact(v);

  auto& w = m.params.weights;
  const auto nb = std::stoull(a.meta("branches"));
  for (std::size_t d = 0; d < nb; ++d) {
    const auto k = std::to_string(d);
    w.w_in.push_back(a.get("w_in." + k));
    w.w_rec.push_back(a.get("w_rec." + k));
    w.in_mask.push_back(a.get("in_mask." + k));
    w.rec_mask.push_back(a.get("rec_mask." + k));
  }
  w.w_out = a.get("w_out");
  m.params.props = detail::get_props(a, "");
  m.candidates.learnable_bank = detail::get_props(a, "learnable.");
  m.candidates.fixed_bank = detail::get_props(a, "fixed.");
  for (const auto& name : a.tensor_names()) {
    auto to_std = [&](const std::string& n) {
      const Vec v = a.get_vector(n);
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    if (name.rfind("adam.m.", 0) == 0) o.m[name.substr(7)] = to_std(name);
    if (name.rfind("adam.v.", 0) == 0) o.v[name.substr(7)] = to_std(name);
  }
  c.validate();
  w.validate();
  m.params.props.validate();
  return m;
}

}  // namespace ip2rsnn
