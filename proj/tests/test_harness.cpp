#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ip2rsnn/harness.hpp"

using namespace ip2rsnn;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(TaskFamily fam = TaskFamily::gng_dr_2) {
  ExperimentConfig c;
  c.family = fam;
  c.seed = 3;
  c.network.n_neurons = 8;
  c.network.dt_ms = 100.0;  // 5 / 10 / 5 steps
  c.n_tasks = 4;
  c.max_iters = 30;
  c.min_iters = 5;
  c.convergence_threshold = 1.0;  // loose: tasks converge soon after min_iters
  c.early_stop_failures = 100;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ip2rsnn_test_harness_" + name);
  fs::remove_all(d);
  return d;
}

TaskOutcome outcome(std::size_t i, bool ok, std::size_t iters) {
  TaskOutcome o;
  o.task_index = i;
  o.converged = ok;
  o.iterations_used = iters;
  return o;
}

}  // namespace

TEST(Metrics, FinalEfficiencySkipsFailures) {
  const std::vector<TaskOutcome> v{outcome(0, false, 5000), outcome(1, true, 100), outcome(2, true, 200)};
  const auto m = compute_metrics(v, {2, 3, 4});
  EXPECT_EQ(m.failure_count, 1u);
  EXPECT_EQ(m.adaptation_task, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(m.adaptation_speed, (std::vector<std::size_t>{100, 200}));
  EXPECT_EQ(*m.final_efficiency.at(2), 150.0);
  EXPECT_EQ(*m.final_efficiency.at(3), 150.0);
  EXPECT_FALSE(m.final_efficiency.at(4).has_value());
}

TEST(Metrics, AllFailedWindowIsAbsent) {
  const auto m = compute_metrics({outcome(0, true, 10), outcome(1, false, 9)}, {1});
  EXPECT_FALSE(m.final_efficiency.at(1).has_value());
}

TEST(Metrics, EmptyThrows) { EXPECT_THROW(compute_metrics({}), std::invalid_argument); }

TEST(InnerTask, MinItersFloor) {
  auto c = tiny();
  c.convergence_threshold = 1e9;
  c.min_iters = 50;
  c.max_iters = 100;
  auto m = make_model(c);
  const auto r = run_inner_task(m, task_for(c, 0), c);
  EXPECT_TRUE(r.outcome.converged);
  EXPECT_EQ(r.outcome.iterations_used, 50u);
}

TEST(InnerTask, MaxItersIsFailure) {
  auto c = tiny();
  c.convergence_threshold = 1e-12;
  c.max_iters = 7;
  auto m = make_model(c);
  const auto r = run_inner_task(m, task_for(c, 0), c);
  EXPECT_FALSE(r.outcome.converged);
  EXPECT_EQ(r.outcome.iterations_used, 7u);
  EXPECT_EQ(m.optimizer.step_count, 6u);  // the final evaluation does not update
  EXPECT_GE(r.final_activity, 0.0);
}

TEST(RunFamily, EarlyStopAfterConsecutiveFailures) {
  auto c = tiny();
  c.convergence_threshold = 1e-12;
  c.max_iters = 2;
  c.min_iters = 1;
  c.n_tasks = 10;
  c.early_stop_failures = 3;
  const auto [m, log] = run_family(c);
  EXPECT_TRUE(log.early_stopped);
  EXPECT_EQ(m.tasks_run, 3u);
  EXPECT_EQ(m.failure_count, 3u);
}

TEST(RunFamily, VanillaUsesEmptyMaskAndPointNeurons) {
  auto c = tiny(TaskFamily::gng_dr_4);
  c.variant = Variant::vanilla;
  c.n_tasks = 1;
  const auto [m, log] = run_family(c);
  EXPECT_EQ(log.mask, LearningMask{});
  EXPECT_NE(log.events.front().find("n_dendrites=0"), std::string::npos);
}

TEST(RunFamily, ParametersCarryAcrossTasks) {
  auto c = tiny();
  std::vector<ModelParams> ends, begins;
  RunHooks h;
  h.on_task_begin = [&](const Model& m, std::size_t) { begins.push_back(m.params); };
  h.on_task_end = [&](const Model& m, const TaskOutcome&) { ends.push_back(m.params); };
  run_family(c, h);
  ASSERT_EQ(begins.size(), c.n_tasks);
  for (std::size_t i = 1; i < begins.size(); ++i) {
    EXPECT_EQ(begins[i].weights.w_out, ends[i - 1].weights.w_out);
    EXPECT_EQ(begins[i].props, ends[i - 1].props);
  }
  EXPECT_NE(begins[0].weights.w_out, ends[0].weights.w_out);
}

TEST(RunFamily, ArtifactsAndDeterminism) {
  auto c = tiny();
  c.checkpoint_every = 2;
  const auto a = temp_dir("a"), b = temp_dir("b");
  c.output_dir = a.string();
  run_family(c);
  c.output_dir = b.string();
  run_family(c);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  for (const char* f : {"config.json", "events.log", "timing.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(a / f)) << f;
  for (std::size_t i : {1u, 2u, 3u}) EXPECT_TRUE(fs::exists(a / "checkpoints" / detail::task_file(i)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(fs::exists(a / "recordings" / detail::task_file(i)));
  EXPECT_TRUE(manifest_hash_valid(a));
  EXPECT_EQ(read_manifest(a).artifacts, artifact_inventory(a));
  const auto rec = TensorArchive::load(a / "recordings" / detail::task_file(0));
  EXPECT_EQ(rec.meta("kind"), "recording");
  EXPECT_TRUE(rec.has("trial0.trace"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Ablation, EightMasksSortedAndConsistent) {
  auto c = tiny();
  c.n_tasks = 3;
  std::vector<LearningMask> masks;
  for (int b = 0; b < 8; ++b) masks.push_back(LearningMask::from_array({(b >> 2) & 1, (b >> 1) & 1, b & 1}));
  const auto rows = run_ablation_grid(c, masks, 2);
  ASSERT_EQ(rows.size(), 8u);
  for (std::size_t i = 1; i < rows.size(); ++i)
    EXPECT_LE(rows[i - 1].metrics.failure_count, rows[i].metrics.failure_count);
  const auto ip2 = run_family(c).first;
  bool found = false;
  for (const auto& r : rows)
    if (r.mask == mask_for_family(c.family)) {
      found = true;
      EXPECT_EQ(r.metrics.adaptation_speed, ip2.adaptation_speed);
      EXPECT_EQ(r.metrics.failure_count, ip2.failure_count);
    }
  EXPECT_TRUE(found);
  const auto csv = ablation_table_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
}
