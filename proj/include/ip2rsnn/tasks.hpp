#pragma once

// Seeded generators for the four task families. Every trial has a stimulus,
// delay and response period (500 / 1000 / 500 ms).
//
// Channel layout, both for inputs and targets: channel 0 is fixation. Inputs
// then carry the stimulus channels and, for CD-DMS, one context channel last.
// Targets carry the response channels after fixation.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ip2rsnn/plasticity.hpp"
#include "ip2rsnn/rng.hpp"
#include "ip2rsnn/snn.hpp"

namespace ip2rsnn {

enum class LossKind { ce, mse };

inline std::string_view loss_kind_name(LossKind k) { return k == LossKind::ce ? "CE" : "MSE"; }

struct PeriodSchedule {
  std::size_t stimulus_steps = 50;
  std::size_t delay_steps = 100;
  std::size_t response_steps = 50;

  std::size_t total() const { return stimulus_steps + delay_steps + response_steps; }
  std::size_t response_begin() const { return stimulus_steps + delay_steps; }

  enum class Period { stimulus, delay, response };
  Period period_of(std::size_t t) const {
    if (t < stimulus_steps) return Period::stimulus;
    if (t < response_begin()) return Period::delay;
    return Period::response;
  }

  static PeriodSchedule from_dt(double dt_ms, double stimulus_ms = 500.0, double delay_ms = 1000.0,
                                double response_ms = 500.0) {
    if (!(dt_ms > 0.0)) throw std::invalid_argument("dt_ms must be > 0");
    auto steps = [dt_ms](double ms) {
      const double s = ms / dt_ms;
      const auto r = static_cast<std::size_t>(std::llround(s));
      if (r == 0 || std::abs(s - static_cast<double>(r)) > 1e-9)
        throw std::invalid_argument("period of " + std::to_string(ms) +
                                    " ms is not a positive multiple of dt");
      return r;
    };
    return {steps(stimulus_ms), steps(delay_ms), steps(response_ms)};
  }
};

struct TaskFamilySpec {
  TaskFamily family = TaskFamily::dms;
  std::size_t stimulus_dim = 10;
  std::size_t fixation_dim = 1;
  std::size_t context_dim = 0;
  std::size_t response_dim = 2;
  LossKind loss = LossKind::ce;
  std::size_t trials_per_task = 2;

  std::size_t input_dim() const { return fixation_dim + stimulus_dim + context_dim; }
  std::size_t output_dim() const { return fixation_dim + response_dim; }

  static TaskFamilySpec of(TaskFamily f) {
    switch (f) {
      case TaskFamily::dms: return {f, 10, 1, 0, 2, LossKind::ce, 2};
      case TaskFamily::cd_dms: return {f, 10, 1, 1, 2, LossKind::ce, 4};
      case TaskFamily::gng_dr_2: return {f, 2, 1, 0, 2, LossKind::mse, 2};
      case TaskFamily::gng_dr_4: return {f, 4, 1, 0, 4, LossKind::mse, 2};
    }
    throw std::invalid_argument("unknown task family");
  }
};

struct Trial {
  Mat input;   // steps x input_dim
  Mat target;  // steps x output_dim
  int prototype = 0;
  int cue = -1;    // CD-DMS context bit, -1 elsewhere
  int label = -1;  // categorical label for choice tasks
  bool go = false; // GNG-DR only
};

struct TaskInstance {
  TaskFamily family = TaskFamily::dms;
  std::size_t task_index = 0;
  std::uint64_t seed = 0;
  PeriodSchedule schedule;
  LossKind loss = LossKind::ce;
  std::vector<Trial> trials;
};

// Stimulus vector for prototype `proto` of task `task_index`; entries ~ U(0, 1).
inline Vec stimulus_sampler(TaskFamily family, std::size_t task_index, std::size_t proto,
                            std::uint64_t seed, std::size_t dim) {
  Rng rng(derive_seed(seed, {0x5713, static_cast<std::uint64_t>(family), task_index, proto}));
  Vec v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = rng.uniform();
  return v;
}

namespace detail {

inline Trial blank_trial(const TaskFamilySpec& spec, const PeriodSchedule& sch) {
  const auto T = static_cast<Eigen::Index>(sch.total());
  Trial tr;
  tr.input = Mat::Zero(T, static_cast<Eigen::Index>(spec.input_dim()));
  tr.target = Mat::Zero(T, static_cast<Eigen::Index>(spec.output_dim()));
  const auto fix_end = static_cast<Eigen::Index>(sch.response_begin());
  tr.input.col(0).head(fix_end).setOnes();
  tr.target.col(0).head(fix_end).setOnes();
  return tr;
}

inline void put_stimulus(Trial& tr, const PeriodSchedule& sch, const Vec& stim) {
  const auto ns = static_cast<Eigen::Index>(sch.stimulus_steps);
  for (Eigen::Index t = 0; t < ns; ++t) tr.input.block(t, 1, 1, stim.size()) = stim.transpose();
}

inline void put_response(Trial& tr, const PeriodSchedule& sch, const Vec& resp) {
  const auto b = static_cast<Eigen::Index>(sch.response_begin());
  const auto nr = static_cast<Eigen::Index>(sch.response_steps);
  for (Eigen::Index t = b; t < b + nr; ++t) tr.target.block(t, 1, 1, resp.size()) = resp.transpose();
}

inline Vec one_hot(std::size_t n, int k) {
  Vec v = Vec::Zero(static_cast<Eigen::Index>(n));
  v[k] = 1.0;
  return v;
}

}  // namespace detail

inline TaskInstance gen_dms(std::size_t task_index, const TaskFamilySpec& spec,
                            const PeriodSchedule& sch, std::uint64_t seed) {
  TaskInstance task{TaskFamily::dms, task_index, seed, sch, spec.loss, {}};
  for (int proto = 0; proto < 2; ++proto) {
    Trial tr = detail::blank_trial(spec, sch);
    detail::put_stimulus(tr, sch, stimulus_sampler(spec.family, task_index, proto, seed, spec.stimulus_dim));
    tr.prototype = proto;
    tr.label = proto;
    detail::put_response(tr, sch, detail::one_hot(spec.response_dim, tr.label));
    task.trials.push_back(std::move(tr));
  }
  return task;
}

inline TaskInstance gen_cddms(std::size_t task_index, const TaskFamilySpec& spec,
                              const PeriodSchedule& sch, std::uint64_t seed) {
  if (spec.context_dim != 1) throw std::invalid_argument("CD-DMS needs one context channel");
  TaskInstance task{TaskFamily::cd_dms, task_index, seed, sch, spec.loss, {}};
  const auto ctx = static_cast<Eigen::Index>(spec.fixation_dim + spec.stimulus_dim);
  const auto ns = static_cast<Eigen::Index>(sch.stimulus_steps);
  for (int cue = 0; cue < 2; ++cue) {
    for (int proto = 0; proto < 2; ++proto) {
      Trial tr = detail::blank_trial(spec, sch);
      detail::put_stimulus(tr, sch, stimulus_sampler(spec.family, task_index, proto, seed, spec.stimulus_dim));
      tr.input.col(ctx).head(ns).setConstant(static_cast<double>(cue));
      tr.prototype = proto;
      tr.cue = cue;
      tr.label = proto ^ cue;
      detail::put_response(tr, sch, detail::one_hot(spec.response_dim, tr.label));
      task.trials.push_back(std::move(tr));
    }
  }
  return task;
}

// Prototype 0 is the go stimulus (reproduce it), prototype 1 the no-go stimulus
// (stay near zero).
inline TaskInstance gen_gngdr(std::size_t task_index, const TaskFamilySpec& spec,
                              const PeriodSchedule& sch, std::uint64_t seed) {
  if (spec.stimulus_dim != spec.response_dim)
    throw std::invalid_argument("GNG-DR needs matching stimulus and response widths");
  TaskInstance task{spec.family, task_index, seed, sch, spec.loss, {}};
  for (int proto = 0; proto < 2; ++proto) {
    Trial tr = detail::blank_trial(spec, sch);
    const Vec stim = stimulus_sampler(spec.family, task_index, proto, seed, spec.stimulus_dim);
    detail::put_stimulus(tr, sch, stim);
    tr.prototype = proto;
    tr.go = proto == 0;
    if (tr.go) detail::put_response(tr, sch, stim);
    task.trials.push_back(std::move(tr));
  }
  return task;
}

inline TaskInstance generate_task(TaskFamily family, std::size_t task_index,
                                  const PeriodSchedule& sch, std::uint64_t seed) {
  const auto spec = TaskFamilySpec::of(family);
  switch (family) {
    case TaskFamily::dms: return gen_dms(task_index, spec, sch, seed);
    case TaskFamily::cd_dms: return gen_cddms(task_index, spec, sch, seed);
    case TaskFamily::gng_dr_2:
    case TaskFamily::gng_dr_4: return gen_gngdr(task_index, spec, sch, seed);
  }
  throw std::invalid_argument("unknown task family");
}

}  // namespace ip2rsnn
