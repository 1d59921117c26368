#pragma once

// Property-binned lesion study: silence one group of neurons at a time,
// measure the current task's loss and how fast the next task is learned.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ip2rsnn/harness.hpp"

namespace ip2rsnn::analysis {

enum class PropertyId { tau_d, tau_s, theta };

inline const char* property_name(PropertyId p) {
  switch (p) {
    case PropertyId::tau_d: return "tau_d";
    case PropertyId::tau_s: return "tau_s";
    case PropertyId::theta: return "theta";
  }
  return "?";
}

inline PropertyId parse_property(const std::string& s) {
  if (s == "tau_d") return PropertyId::tau_d;
  if (s == "tau_s") return PropertyId::tau_s;
  if (s == "theta") return PropertyId::theta;
  throw std::invalid_argument("unknown property: " + s);
}

struct PropertyBins {
  static constexpr std::size_t kBins = 10;
  PropertyId property = PropertyId::tau_s;
  Vec normalized;
  std::vector<std::vector<std::size_t>> groups;  // kBins neuron-index lists
  bool degenerate = false;                       // zero range: everything in bin 0
};

// Per-neuron value of a property. Dendritic decay is averaged over branches.
inline Vec property_values(const IntrinsicProperties& props, PropertyId p) {
  switch (p) {
    case PropertyId::tau_d:
      if (props.tau_d.cols() == 0) throw std::invalid_argument("tau_d binning needs dendritic neurons");
      return props.tau_d.rowwise().mean();
    case PropertyId::tau_s: return props.tau_s;
    case PropertyId::theta: return props.theta;
  }
  return {};
}

inline PropertyBins bin_values(const Vec& values, PropertyId p = PropertyId::tau_s) {
  if (values.size() == 0) throw std::invalid_argument("bin_values: no neurons");
  PropertyBins b;
  b.property = p;
  b.groups.assign(PropertyBins::kBins, {});
  const double lo = values.minCoeff();
  const double range = values.maxCoeff() - lo;
  if (range == 0.0) {
    b.degenerate = true;
    b.normalized = Vec::Zero(values.size());
  } else {
    b.normalized = ((values.array() - lo) / range).matrix();
  }
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    auto k = static_cast<std::size_t>(b.normalized[i] * static_cast<double>(PropertyBins::kBins));
    k = std::min(k, PropertyBins::kBins - 1);
    b.groups[k].push_back(static_cast<std::size_t>(i));
  }
  return b;
}

inline PropertyBins bin_neurons(const IntrinsicProperties& props, PropertyId p) {
  return bin_values(property_values(props, p), p);
}

inline Vec silencing_mask(std::size_t n, const std::vector<std::size_t>& group) {
  Vec s = Vec::Zero(static_cast<Eigen::Index>(n));
  for (auto i : group) {
    if (i >= n) throw std::out_of_range("lesion group index out of range");
    s[static_cast<Eigen::Index>(i)] = 1.0;
  }
  return s;
}

struct LesionRow {
  std::size_t bin = 0;
  std::size_t group_size = 0;
  double current_task_loss = 0.0;
  std::size_t next_task_iterations = 0;
  bool next_task_converged = false;
};

struct LesionReport {
  PropertyId property = PropertyId::tau_s;
  bool degenerate = false;
  double baseline_loss = 0.0;
  std::size_t baseline_next_iterations = 0;
  bool baseline_next_converged = false;
  std::vector<LesionRow> rows;
};

// `model` is left untouched; every bin starts from a fresh copy.
inline LesionReport lesion_eval(const Model& model, const PropertyBins& bins,
                                const TaskInstance& current_task, const TaskInstance& next_task,
                                const ExperimentConfig& cfg, bool train_next = true) {
  LesionReport rep;
  rep.property = bins.property;
  rep.degenerate = bins.degenerate;
  rep.baseline_loss = evaluate_model(model, current_task, cfg).loss.total;
  if (train_next) {
    Model copy = model;
    const auto r = run_inner_task(copy, next_task, cfg);
    rep.baseline_next_iterations = r.outcome.iterations_used;
    rep.baseline_next_converged = r.outcome.converged;
  }
  for (std::size_t k = 0; k < bins.groups.size(); ++k) {
    LesionRow row;
    row.bin = k;
    row.group_size = bins.groups[k].size();
    const Vec s = silencing_mask(model.config.n_neurons, bins.groups[k]);
    row.current_task_loss = evaluate_model(model, current_task, cfg, s).loss.total;
    if (train_next) {
      Model copy = model;
      InnerTaskOptions opts;
      opts.silenced = s;
      const auto r = run_inner_task(copy, next_task, cfg, opts);
      row.next_task_iterations = r.outcome.iterations_used;
      row.next_task_converged = r.outcome.converged;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace ip2rsnn::analysis
