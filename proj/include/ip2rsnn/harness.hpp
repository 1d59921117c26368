#pragma once

// Learning-to-learn harness. The outer loop fixes the learning mask once; the
// inner loop trains the same model on a sequence of freshly generated tasks,
// carrying weights, learnable properties and optimizer state from task to task.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ip2rsnn/checkpoint.hpp"
#include "ip2rsnn/config.hpp"
#include "ip2rsnn/gradients.hpp"
#include "ip2rsnn/manifest.hpp"
#include "ip2rsnn/plasticity.hpp"
#include "ip2rsnn/tasks.hpp"
#include "ip2rsnn/tensor_io.hpp"

namespace ip2rsnn {

struct TaskOutcome {
  std::size_t task_index = 0;
  bool converged = false;
  std::size_t iterations_used = 0;
  double final_loss = 0.0;
  double wall_time = 0.0;  // seconds; not part of any persisted comparison
  std::string diagnostic;
};

struct L2LMetrics {
  std::size_t tasks_run = 0;
  std::size_t failure_count = 0;
  std::vector<std::size_t> adaptation_task;   // task index of each converged task
  std::vector<std::size_t> adaptation_speed;  // its iteration count
  std::map<std::size_t, std::optional<double>> final_efficiency;  // k -> value
};

inline const std::vector<std::size_t>& final_efficiency_windows() {
  static const std::vector<std::size_t> ks{50, 100, 150, 200};
  return ks;
}

// Failure count, adaptation-speed series and final efficiency. Final efficiency
// for window k is the mean iteration count of the converged tasks among the
// last k tasks; it is absent when fewer than k tasks ran or none of them converged.
inline L2LMetrics compute_metrics(const std::vector<TaskOutcome>& outcomes,
                                  const std::vector<std::size_t>& windows = final_efficiency_windows()) {
  if (outcomes.empty()) throw std::invalid_argument("compute_metrics: no task outcomes");
  L2LMetrics m;
  m.tasks_run = outcomes.size();
  for (const auto& o : outcomes) {
    if (!o.converged) {
      ++m.failure_count;
      continue;
    }
    m.adaptation_task.push_back(o.task_index);
    m.adaptation_speed.push_back(o.iterations_used);
  }
  for (std::size_t k : windows) {
    if (k == 0 || outcomes.size() < k) {
      m.final_efficiency[k] = std::nullopt;
      continue;
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (auto it = outcomes.end() - static_cast<std::ptrdiff_t>(k); it != outcomes.end(); ++it)
      if (it->converged) {
        sum += static_cast<double>(it->iterations_used);
        ++n;
      }
    m.final_efficiency[k] = n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
  }
  return m;
}

struct InnerTaskOptions {
  std::optional<Vec> silenced;  // lesioned neurons stay silent during training
};

struct InnerTaskResult {
  TaskOutcome outcome;
  double final_activity = 0.0;  // mean(h^2) of the last iteration
};

// Trains `model` on `task` until the training loss drops below the threshold
// at or after min_iters, or max_iters is reached. The iteration that declares
// convergence does not update the model.
inline InnerTaskResult run_inner_task(Model& model, const TaskInstance& task,
                                      const ExperimentConfig& cfg,
                                      const InnerTaskOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  InnerTaskResult res;
  auto& out = res.outcome;
  out.task_index = task.task_index;
  ForwardOptions fwd;
  fwd.mode = cfg.mode;
  fwd.silenced = opts.silenced;
  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    fwd.noise_seed = derive_seed(cfg.seed, {0x7A5C, task.task_index, iter});
    TaskGradient tg;
    try {
      tg = task_gradients(model.params, model.config, task, cfg.objective, model.target, fwd);
    } catch (const GradientError& e) {
      out.iterations_used = iter;
      out.final_loss = std::numeric_limits<double>::quiet_NaN();
      out.diagnostic = e.what();
      break;
    }
    const double loss = tg.loss.total;
    out.iterations_used = iter;
    out.final_loss = loss;
    std::vector<Mat> traces;
    for (const auto& r : tg.recordings) traces.push_back(r.trace);
    res.final_activity = mean_square_activity(traces);
    if (!std::isfinite(loss)) {
      out.diagnostic = "non-finite training loss at iteration " + std::to_string(iter);
      break;
    }
    if (loss < cfg.convergence_threshold && iter >= cfg.min_iters) {
      out.converged = true;
      break;
    }
    if (iter == cfg.max_iters) break;
    training_step(model.params, model.mask, std::move(tg.grads), model.optimizer);
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// Noise-free (unless configured) pass over every trial, used for recordings
// and lesion evaluation.
inline TaskEvaluation evaluate_model(const Model& model, const TaskInstance& task,
                                     const ExperimentConfig& cfg,
                                     const std::optional<Vec>& silenced = std::nullopt) {
  ForwardOptions fwd;
  fwd.mode = cfg.mode;
  fwd.noise_enabled = cfg.eval_noise;
  fwd.noise_seed = derive_seed(cfg.seed, {0xE7A1, task.task_index});
  fwd.silenced = silenced;
  return evaluate_task(model.params, model.config, task, cfg.objective, model.target, fwd);
}

inline TaskInstance task_for(const ExperimentConfig& cfg, std::size_t task_index) {
  return generate_task(cfg.family, task_index, cfg.schedule(), derive_seed(cfg.seed, {0x7A5C}));
}

struct RunLog {
  std::vector<TaskOutcome> outcomes;
  std::vector<std::string> events;
  LearningMask mask;
  bool early_stopped = false;
};

struct RunHooks {
  std::function<void(const Model&, std::size_t task_index)> on_task_begin;
  std::function<void(const Model&, const TaskOutcome&)> on_task_end;
};

namespace detail {

inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string task_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task_%05zu.ip2t", i);
  return buf;
}

}  // namespace detail

inline TensorArchive recording_archive(const TaskEvaluation& ev, const TaskInstance& task) {
  TensorArchive a;
  a.set_meta("kind", "recording");
  a.set_meta("task_index", std::to_string(task.task_index));
  a.set_meta("trials", std::to_string(ev.recordings.size()));
  a.set_meta("stimulus_steps", std::to_string(task.schedule.stimulus_steps));
  a.set_meta("delay_steps", std::to_string(task.schedule.delay_steps));
  a.set_meta("response_steps", std::to_string(task.schedule.response_steps));
  a.set_meta("loss_total", exact(ev.loss.total));
  for (std::size_t k = 0; k < ev.recordings.size(); ++k) {
    const auto p = "trial" + std::to_string(k) + ".";
    const auto& r = ev.recordings[k];
    a.put(p + "v", r.v);
    a.put(p + "trace", r.trace);
    a.put(p + "spikes", r.spikes);
    a.put(p + "y", r.y);
  }
  return a;
}

inline TensorArchive task_archive(const TaskInstance& task) {
  TensorArchive a;
  a.set_meta("kind", "task");
  a.set_meta("family", std::string(family_name(task.family)));
  a.set_meta("task_index", std::to_string(task.task_index));
  a.set_meta("seed", std::to_string(task.seed));
  a.set_meta("loss", std::string(loss_kind_name(task.loss)));
  a.set_meta("stimulus_steps", std::to_string(task.schedule.stimulus_steps));
  a.set_meta("delay_steps", std::to_string(task.schedule.delay_steps));
  a.set_meta("response_steps", std::to_string(task.schedule.response_steps));
  a.set_meta("trials", std::to_string(task.trials.size()));
  for (std::size_t k = 0; k < task.trials.size(); ++k) {
    const auto p = "trial" + std::to_string(k) + ".";
    a.put(p + "input", task.trials[k].input);
    a.put(p + "target", task.trials[k].target);
    a.set_meta(p + "label", std::to_string(task.trials[k].label));
    a.set_meta(p + "cue", std::to_string(task.trials[k].cue));
    a.set_meta(p + "go", task.trials[k].go ? "1" : "0");
  }
  return a;
}

// Checkpoints are always written for the last two tasks that ran (the lesion
// analysis needs the penultimate one) and every `checkpoint_every` tasks.
inline std::pair<L2LMetrics, RunLog> run_family(const ExperimentConfig& cfg,
                                                const RunHooks& hooks = {}) {
  cfg.validate();
  namespace fs = std::filesystem;
  const bool persist = !cfg.output_dir.empty();
  const fs::path root(cfg.output_dir);
  RunManifest manifest;
  manifest.seed = cfg.seed;
  manifest.started = utc_timestamp();
  if (persist) {
    try {
      fs::create_directories(root / "checkpoints");
      fs::create_directories(root / "recordings");
    } catch (const fs::filesystem_error& e) {
      throw IoError("cannot create run directory " + root.string() + ": " + e.what());
    }
    const std::string text = to_json(cfg).dump(2) + "\n";
    write_atomic(root / manifest.config_file, text);
    manifest.config_hash = sha256_hex(text);
  }

  Model model = make_model(cfg);
  RunLog log;
  log.mask = model.mask;
  auto event = [&](std::string line) { log.events.push_back(std::move(line)); };
  event("start family=" + std::string(family_name(cfg.family)) + " variant=" +
        variant_name(cfg.variant) + " mask=" + model.mask.str() + " n_dendrites=" +
        std::to_string(model.config.n_dendrites) + " seed=" + std::to_string(cfg.seed));

  std::optional<Model> previous;
  std::size_t consecutive_failures = 0;
  for (std::size_t i = 0; i < cfg.n_tasks; ++i) {
    const TaskInstance task = task_for(cfg, i);
    if (hooks.on_task_begin) hooks.on_task_begin(model, i);
    if (persist) previous = model;
    auto res = run_inner_task(model, task, cfg);
    const auto& o = res.outcome;
    log.outcomes.push_back(o);
    event("task " + std::to_string(i) + (o.converged ? " converged" : " failed") +
          " iterations=" + std::to_string(o.iterations_used) +
          " loss=" + detail::fmt_double(o.final_loss) +
          (o.diagnostic.empty() ? "" : " diagnostic=\"" + o.diagnostic + "\""));
    model.target.sigma_h_sq = res.final_activity;
    if (hooks.on_task_end) hooks.on_task_end(model, o);

    if (persist) {
      if ((i + 1) % cfg.checkpoint_every == 0 || i + 1 == cfg.n_tasks)
        to_archive(model).save(root / "checkpoints" / detail::task_file(i));
      if (cfg.record_every > 0 && i % cfg.record_every == 0) {
        auto rec = recording_archive(evaluate_model(model, task, cfg), task);
        rec.save(root / "recordings" / detail::task_file(i));
      }
    }

    consecutive_failures = o.converged ? 0 : consecutive_failures + 1;
    if (consecutive_failures >= cfg.early_stop_failures) {
      log.early_stopped = true;
      event("early stop after " + std::to_string(consecutive_failures) + " consecutive failures");
      break;
    }
  }

  if (persist) {
    // The last two tasks always have checkpoints.
    const std::size_t last = log.outcomes.size() - 1;
    if (!fs::exists(root / "checkpoints" / detail::task_file(last)))
      to_archive(model).save(root / "checkpoints" / detail::task_file(last));
    if (last > 0 && previous && !fs::exists(root / "checkpoints" / detail::task_file(last - 1)))
      to_archive(*previous).save(root / "checkpoints" / detail::task_file(last - 1));
  }

  auto metrics = compute_metrics(log.outcomes);
  event("end tasks=" + std::to_string(metrics.tasks_run) +
        " failures=" + std::to_string(metrics.failure_count));

  if (persist) {
    std::ofstream csv(root / "metrics.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (root / "metrics.csv").string());
    csv << "task_index,converged,iterations,final_loss\n";
    for (const auto& o : log.outcomes)
      csv << o.task_index << ',' << (o.converged ? 1 : 0) << ',' << o.iterations_used << ','
          << detail::fmt_double(o.final_loss) << '\n';
    std::ofstream ev(root / "events.log", std::ios::trunc);
    if (!ev) throw IoError("cannot write " + (root / "events.log").string());
    for (const auto& e : log.events) ev << e << '\n';
    std::ofstream timing(root / "timing.csv", std::ios::trunc);
    timing << "task_index,wall_time_s\n";
    for (const auto& o : log.outcomes) timing << o.task_index << ',' << o.wall_time << '\n';
    timing.close();
    manifest.finished = utc_timestamp();
    manifest.artifacts = artifact_inventory(root);
    write_manifest(root, manifest);
  }
  return {std::move(metrics), std::move(log)};
}

struct AblationRow {
  LearningMask mask;
  L2LMetrics metrics;
};

// Runs one family per mask with shared seeds (random-mask variant), using up to
// `workers` threads. Rows are sorted by failure count, then final efficiency
// over the last 200 tasks (absent values last), then mask order.
inline std::vector<AblationRow> run_ablation_grid(const ExperimentConfig& base,
                                                  const std::vector<LearningMask>& masks,
                                                  std::size_t workers = 1) {
  std::vector<AblationRow> rows(masks.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto work = [&] {
    for (std::size_t k = next++; k < masks.size(); k = next++) {
      try {
        ExperimentConfig cfg = base;
        cfg.variant = Variant::random_mask;
        cfg.mask = masks[k].to_array();
        if (!base.output_dir.empty()) {
          auto s = masks[k].str();
          std::string tag = "mask-";
          for (char ch : s)
            if (ch == '0' || ch == '1') tag += ch;
          cfg.output_dir = (std::filesystem::path(base.output_dir) / tag).string();
        }
        rows[k] = {masks[k], run_family(cfg).first};
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::max<std::size_t>(1, workers); ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);

  std::stable_sort(rows.begin(), rows.end(), [](const AblationRow& a, const AblationRow& b) {
    if (a.metrics.failure_count != b.metrics.failure_count)
      return a.metrics.failure_count < b.metrics.failure_count;
    auto fe200 = [](const L2LMetrics& m) {
      const auto it = m.final_efficiency.find(200);
      return it != m.final_efficiency.end() && it->second ? *it->second : std::numeric_limits<double>::infinity();
    };
    return fe200(a.metrics) < fe200(b.metrics);
  });
  return rows;
}

inline std::string ablation_table_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "mask,tasks_run,failure_count,final_efficiency_50,final_efficiency_100,"
        "final_efficiency_150,final_efficiency_200\n";
  for (const auto& r : rows) {
    const auto a = r.mask.to_array();
    os << a[0] << a[1] << a[2] << ',' << r.metrics.tasks_run << ',' << r.metrics.failure_count;
    for (std::size_t k : final_efficiency_windows()) {
      os << ',';
      auto it = r.metrics.final_efficiency.find(k);
      if (it != r.metrics.final_efficiency.end() && it->second) os << detail::fmt_double(*it->second);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ip2rsnn
