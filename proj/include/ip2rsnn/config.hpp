#pragma once

// Experiment configuration, read from a JSON document. Every field except
// `l2l.convergence_threshold` has a default; see configs/ for examples.

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ip2rsnn/gradients.hpp"
#include "ip2rsnn/objective.hpp"
#include "ip2rsnn/optimizer.hpp"
#include "ip2rsnn/plasticity.hpp"
#include "ip2rsnn/snn.hpp"
#include "ip2rsnn/tasks.hpp"

namespace ip2rsnn {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& msg)
      : std::invalid_argument(key + ": " + msg), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class Variant { ip2, vanilla, random_mask };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::ip2: return "ip2";
    case Variant::vanilla: return "vanilla";
    case Variant::random_mask: return "random-mask";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "ip2") return Variant::ip2;
  if (s == "vanilla") return Variant::vanilla;
  if (s == "random-mask" || s == "random_mask") return Variant::random_mask;
  throw ConfigError("variant", "unknown variant '" + s + "' (ip2, vanilla, random-mask)");
}

// Loss below which a task counts as learned (0.006 for GNG-DR-4, else 0.005).
inline double default_convergence_threshold(TaskFamily f) {
  return f == TaskFamily::gng_dr_4 ? 0.006 : 0.005;
}

struct ExperimentConfig {
  TaskFamily family = TaskFamily::dms;
  Variant variant = Variant::ip2;
  std::array<int, 3> mask{1, 0, 0};  // used by random-mask

  std::size_t n_tasks = 1000;
  std::size_t max_iters = 5000;
  std::size_t min_iters = 50;
  double convergence_threshold = 0.005;
  std::size_t early_stop_failures = 3;
  std::uint64_t seed = 0;

  NetworkConfig network;
  bool auto_dendrites = true;  // two branches iff tau_d is learnable
  WeightInit init;
  AdamState optimizer;
  ObjectiveConfig objective;
  DifferentiationMode mode;
  bool eval_noise = false;

  std::string output_dir;
  std::size_t checkpoint_every = 100;
  std::size_t record_every = 1;

  LearningMask learning_mask() const {
    switch (variant) {
      case Variant::ip2: return mask_for_family(family);
      case Variant::vanilla: return {};
      case Variant::random_mask: return mask_for_family(mask);
    }
    return {};
  }

  // Network config with the dendrite count resolved against the mask.
  NetworkConfig resolved_network() const {
    NetworkConfig c = network;
    if (auto_dendrites) c.n_dendrites = learning_mask().tau_d ? 2 : 0;
    c.rng_seed = seed;
    return c;
  }

  PeriodSchedule schedule() const { return PeriodSchedule::from_dt(network.dt_ms); }

  void validate() const {
    auto pos = [](double x, const char* key) {
      if (!(x > 0.0)) throw ConfigError(key, "must be > 0");
    };
    pos(convergence_threshold, "l2l.convergence_threshold");
    if (n_tasks == 0) throw ConfigError("l2l.n_tasks", "must be > 0");
    if (max_iters == 0) throw ConfigError("l2l.max_iters", "must be > 0");
    if (min_iters > max_iters) throw ConfigError("l2l.min_iters", "must be <= l2l.max_iters");
    if (early_stop_failures == 0) throw ConfigError("l2l.early_stop_failures", "must be > 0");
    if (checkpoint_every == 0) throw ConfigError("output.checkpoint_every", "must be > 0");
    try {
      network.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("network", e.what());
    }
    if (!auto_dendrites && network.n_dendrites == 0 && learning_mask().tau_d)
      throw ConfigError("network.n_dendrites", "tau_d is learnable but the network has no dendrites");
    try {
      optimizer.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("optimizer", e.what());
    }
    try {
      objective.weights.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("loss", e.what());
    }
    pos(mode.surrogate_width, "gradient.surrogate_width");
    try {
      (void)schedule();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("network.dt_ms", e.what());
    }
    (void)learning_mask();
  }
};

namespace detail {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* name, const std::string& path, T& out) {
  if (!j.contains(name)) return;
  try {
    out = j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + name, "wrong type");
  }
}

inline const json& section(const json& j, const char* name, const std::string& path) {
  static const json empty = json::object();
  if (!j.contains(name)) return empty;
  if (!j.at(name).is_object()) throw ConfigError(path + name, "must be an object");
  return j.at(name);
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  using detail::section;
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  ExperimentConfig c;

  std::string family = "DMS";
  read(j, "family", "", family);
  try {
    c.family = parse_family(family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("family", e.what());
  }
  std::string variant = "ip2";
  read(j, "variant", "", variant);
  c.variant = parse_variant(variant);
  read(j, "mask", "", c.mask);
  try {
    (void)LearningMask::from_array(c.mask);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("mask", e.what());
  }
  read(j, "seed", "", c.seed);

  const auto& l2l = section(j, "l2l", "");
  if (!l2l.contains("convergence_threshold"))
    throw ConfigError("l2l.convergence_threshold", "missing required key");
  read(l2l, "convergence_threshold", "l2l.", c.convergence_threshold);
  read(l2l, "n_tasks", "l2l.", c.n_tasks);
  read(l2l, "max_iters", "l2l.", c.max_iters);
  read(l2l, "min_iters", "l2l.", c.min_iters);
  read(l2l, "early_stop_failures", "l2l.", c.early_stop_failures);

  const auto& net = section(j, "network", "");
  read(net, "n_neurons", "network.", c.network.n_neurons);
  if (net.contains("n_dendrites")) {
    if (net.at("n_dendrites").is_string() && net.at("n_dendrites").get<std::string>() == "auto") {
      c.auto_dendrites = true;
    } else {
      read(net, "n_dendrites", "network.", c.network.n_dendrites);
      c.auto_dendrites = false;
    }
  }
  read(net, "dt_ms", "network.", c.network.dt_ms);
  read(net, "alpha", "network.", c.network.alpha);
  read(net, "alpha_noise", "network.", c.network.alpha_noise);
  read(net, "a_noise", "network.", c.network.a_noise);
  read(net, "v_reset", "network.", c.network.v_reset);
  read(net, "noise_enabled", "network.", c.network.noise_enabled);
  read(net, "eval_noise", "network.", c.eval_noise);
  std::string placement = "outside";
  read(net, "noise_placement", "network.", placement);
  if (placement == "outside") c.network.noise_placement = NoisePlacement::outside;
  else if (placement == "inside") c.network.noise_placement = NoisePlacement::inside;
  else throw ConfigError("network.noise_placement", "must be 'outside' or 'inside'");

  const auto& init = section(j, "init", "");
  read(init, "in_scale", "init.", c.init.in_scale);
  read(init, "rec_scale", "init.", c.init.rec_scale);
  read(init, "out_scale", "init.", c.init.out_scale);

  const auto& opt = section(j, "optimizer", "");
  read(opt, "lr", "optimizer.", c.optimizer.lr);
  read(opt, "beta1", "optimizer.", c.optimizer.beta1);
  read(opt, "beta2", "optimizer.", c.optimizer.beta2);
  read(opt, "eps", "optimizer.", c.optimizer.eps);
  read(opt, "plain_gradient", "optimizer.", c.optimizer.plain_gradient);
  read(opt, "group_lr", "optimizer.", c.optimizer.group_lr);

  const auto& loss = section(j, "loss", "");
  read(loss, "lambda_h", "loss.", c.objective.weights.lambda_h);
  read(loss, "lambda_in", "loss.", c.objective.weights.lambda_in);
  read(loss, "lambda_rec", "loss.", c.objective.weights.lambda_rec);
  read(loss, "lambda_out", "loss.", c.objective.weights.lambda_out);
  std::string reduction = "mean";
  read(loss, "trial_reduction", "loss.", reduction);
  if (reduction == "mean") c.objective.reduction = TrialReduction::mean;
  else if (reduction == "sum") c.objective.reduction = TrialReduction::sum;
  else throw ConfigError("loss.trial_reduction", "must be 'mean' or 'sum'");

  const auto& grad = section(j, "gradient", "");
  std::string mode = "surrogate";
  read(grad, "mode", "gradient.", mode);
  if (mode == "surrogate") c.mode.kind = DifferentiationMode::Kind::surrogate;
  else if (mode == "smooth") c.mode.kind = DifferentiationMode::Kind::smooth;
  else throw ConfigError("gradient.mode", "must be 'surrogate' or 'smooth'");
  read(grad, "surrogate_width", "gradient.", c.mode.surrogate_width);
  std::string reset = "detach";
  read(grad, "reset", "gradient.", reset);
  if (reset == "detach") c.mode.reset = DifferentiationMode::Reset::detach;
  else if (reset == "pass_through") c.mode.reset = DifferentiationMode::Reset::pass_through;
  else throw ConfigError("gradient.reset", "must be 'detach' or 'pass_through'");

  const auto& out = section(j, "output", "");
  read(out, "dir", "output.", c.output_dir);
  read(out, "checkpoint_every", "output.", c.checkpoint_every);
  read(out, "record_every", "output.", c.record_every);

  c.validate();
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

// Canonical JSON form of a config; parse_config(to_json(c)) reproduces c.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["family"] = std::string(family_name(c.family));
  j["variant"] = variant_name(c.variant);
  j["mask"] = c.mask;
  j["seed"] = c.seed;
  j["l2l"] = {{"n_tasks", c.n_tasks},
              {"max_iters", c.max_iters},
              {"min_iters", c.min_iters},
              {"convergence_threshold", c.convergence_threshold},
              {"early_stop_failures", c.early_stop_failures}};
  nlohmann::json net = {{"n_neurons", c.network.n_neurons},
                        {"dt_ms", c.network.dt_ms},
                        {"alpha", c.network.alpha},
                        {"alpha_noise", c.network.alpha_noise},
                        {"a_noise", c.network.a_noise},
                        {"v_reset", c.network.v_reset},
                        {"noise_enabled", c.network.noise_enabled},
                        {"eval_noise", c.eval_noise},
                        {"noise_placement",
                         c.network.noise_placement == NoisePlacement::inside ? "inside" : "outside"}};
  if (c.auto_dendrites) net["n_dendrites"] = "auto";
  else net["n_dendrites"] = c.network.n_dendrites;
  j["network"] = net;
  j["init"] = {{"in_scale", c.init.in_scale}, {"rec_scale", c.init.rec_scale}, {"out_scale", c.init.out_scale}};
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"plain_gradient", c.optimizer.plain_gradient},
                    {"group_lr", c.optimizer.group_lr}};
  j["loss"] = {{"lambda_h", c.objective.weights.lambda_h},
               {"lambda_in", c.objective.weights.lambda_in},
               {"lambda_rec", c.objective.weights.lambda_rec},
               {"lambda_out", c.objective.weights.lambda_out},
               {"trial_reduction", c.objective.reduction == TrialReduction::sum ? "sum" : "mean"}};
  j["gradient"] = {{"mode", c.mode.kind == DifferentiationMode::Kind::smooth ? "smooth" : "surrogate"},
                   {"surrogate_width", c.mode.surrogate_width},
                   {"reset", c.mode.reset == DifferentiationMode::Reset::pass_through ? "pass_through" : "detach"}};
  j["output"] = {{"dir", c.output_dir}, {"checkpoint_every", c.checkpoint_every}, {"record_every", c.record_every}};
  return j;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("--config", "cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace ip2rsnn
