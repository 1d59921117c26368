// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "ip2rsnn/ip2rsnn.hpp"
#include "ip2rsnn/testing/checks.hpp"

using namespace ip2rsnn;
namespace fs = std::filesystem;
namespace chk = ip2rsnn::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ip2rsnn_acceptance_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool bits_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

Verdict gradients() {
  const auto t0 = Clock::now();
  const auto r = chk::gradient_check();  // 20 seeds, 8 neurons, 30 steps, h = 1e-5
  const double t = seconds_since(t0);
  return {r.pass && t < 60.0, r.detail + ", " + fmt(t, 3) + " s"};
}

Verdict noise() {
  const auto r = chk::noise_variance_check();
  return {r.pass, r.detail + " (tolerance 2%)"};
}

Verdict masks() {
  const std::pair<TaskFamily, std::array<int, 3>> table[] = {{TaskFamily::dms, {1, 0, 0}},
                                                             {TaskFamily::cd_dms, {1, 0, 1}},
                                                             {TaskFamily::gng_dr_2, {1, 1, 0}},
                                                             {TaskFamily::gng_dr_4, {1, 1, 1}}};
  int ok_fam = 0;
  for (const auto& [f, m] : table) ok_fam += mask_for_family(f).to_array() == m;
  NetworkConfig c;
  c.n_neurons = 16;
  c.n_dendrites = 2;
  const auto cand = default_candidates(c, 42);
  int ok_mask = 0;
  for (int b = 0; b < 8; ++b) {
    const auto m = LearningMask::from_array({(b >> 2) & 1, (b >> 1) & 1, b & 1});
    const auto p = configure(cand, m).props;
    ok_mask += p.tau_d == (m.tau_d ? cand.learnable_bank.tau_d : cand.fixed_bank.tau_d) &&
               p.tau_s == (m.tau_s ? cand.learnable_bank.tau_s : cand.fixed_bank.tau_s) &&
               p.theta == (m.theta ? cand.learnable_bank.theta : cand.fixed_bank.theta);
  }
  return {ok_fam == 4 && ok_mask == 8,
          std::to_string(ok_fam) + "/4 family masks, " + std::to_string(ok_mask) + "/8 configured masks"};
}

Verdict generators() {
  const auto t0 = Clock::now();
  const auto r = chk::generator_check(100);
  const double t = seconds_since(t0);
  return {r.pass && t < 10.0, r.detail + ", " + fmt(t, 3) + " s"};
}

Verdict modularity() {
  using namespace analysis;
  const auto r = chk::modularity_oracle_check(24, 1e-9);
  const auto clique = chk::two_clique_graph();
  const double q = modularity_Q(clique, louvain_optimize(clique, 1));
  const auto constant = CommunityAssignment{4, 3, {0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1}};
  const double st = stationarity(constant).mean;
  const auto counts = community_count(CommunityAssignment{4, 2, {0, 0, 1, 1, 0, 1, 2, 3}});
  const bool counts_ok = counts.per_layer == std::vector<std::size_t>{2, 4} && counts.mean == 3.0;
  return {r.pass && std::abs(q - 0.5) <= 1e-9 && st == 1.0 && counts_ok,
          r.detail + ", two-clique Q " + fmt(q, 12) + ", constant stationarity " + fmt(st) +
              ", counts " + (counts_ok ? "exact" : "wrong")};
}

double median_speed(const std::vector<TaskOutcome>& v, std::size_t lo, std::size_t hi, bool& any) {
  std::vector<double> s;
  for (const auto& o : v)
    if (o.task_index >= lo && o.task_index < hi && o.converged) s.push_back(static_cast<double>(o.iterations_used));
  any = !s.empty();
  return any ? analysis::median(s) : 0.0;
}

Verdict l2l_trend() {
  const auto t0 = Clock::now();
  ExperimentConfig c;
  c.family = TaskFamily::gng_dr_2;
  c.network.n_neurons = 64;
  c.network.dt_ms = 20.0;
  c.convergence_threshold = 0.01;
  c.n_tasks = 60;
  int faster = 0;
  bool vanilla_ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    c.seed = seed;
    c.variant = Variant::ip2;
    const auto [ip2, ip2_log] = run_family(c);
    c.variant = Variant::vanilla;
    const auto van = run_family(c).first;
    bool a = false, b = false;
    const double first = median_speed(ip2_log.outcomes, 0, 10, a);
    const double last = median_speed(ip2_log.outcomes, 50, 60, b);
    const bool improved = a && b && last < first;
    faster += improved;
    vanilla_ok &= van.failure_count >= ip2.failure_count;
    detail += " seed " + std::to_string(seed) + ": median " + (a ? fmt(first) : "n/a") + " -> " +
              (b ? fmt(last) : "n/a") + ", failures ip2 " + std::to_string(ip2.failure_count) + " vanilla " +
              std::to_string(van.failure_count) + ";";
  }
  const double t = seconds_since(t0);
  return {faster >= 2 && vanilla_ok && t <= 45.0 * 60.0,
          std::to_string(faster) + "/3 seeds faster," + detail + " " + fmt(t, 4) + " s"};
}

ExperimentConfig small_run_config() {
  ExperimentConfig c;
  c.family = TaskFamily::gng_dr_2;
  c.seed = 11;
  c.network.n_neurons = 16;
  c.network.dt_ms = 50.0;
  c.n_tasks = 5;
  c.max_iters = 200;
  c.min_iters = 10;
  c.convergence_threshold = 0.05;
  return c;
}

Verdict lesion() {
  using namespace analysis;
  auto c = small_run_config();
  Model m = make_model(c);
  run_inner_task(m, task_for(c, 0), c);
  m.target.sigma_h_sq = 0.01;
  const auto cur = task_for(c, 0), next = task_for(c, 1);

  PropertyBins empty;
  empty.groups.assign(PropertyBins::kBins, {});
  for (std::size_t i = 0; i < c.network.n_neurons; ++i) empty.groups[9].push_back(i);
  const auto rep = lesion_eval(m, empty, cur, next, c, false);
  bool noop = true;
  for (std::size_t k = 0; k < 9; ++k) noop &= rep.rows[k].current_task_loss == rep.baseline_loss;

  double base = 0.0;
  for (const auto& tr : cur.trials)
    base += base_loss(Mat::Zero(tr.target.rows(), tr.target.cols()), tr.target, cur.loss, cur.schedule);
  base /= static_cast<double>(cur.trials.size());
  const auto& w = c.objective.weights;
  const auto& W = m.params.weights;
  const double closed = base + w.lambda_h * m.target.sigma_h_sq +
                        w.lambda_in * weight_regularizer(std::span<const Mat>(W.w_in)) +
                        w.lambda_rec * weight_regularizer(std::span<const Mat>(W.w_rec)) +
                        w.lambda_out * weight_regularizer(W.w_out);
  const double err = std::abs(rep.rows[9].current_task_loss - closed);

  bool ten = true;
  for (auto p : {PropertyId::tau_d, PropertyId::tau_s, PropertyId::theta}) {
    const auto r = lesion_eval(m, bin_neurons(m.params.props, p), cur, next, c, false);
    ten &= r.rows.size() == 10;
  }
  return {noop && err <= 1e-12 && ten, std::string("empty bins ") + (noop ? "bit-exact" : "differ") +
                                          ", all-neuron lesion error " + fmt(err, 3) + ", " +
                                          (ten ? "10 rows per property" : "wrong row count")};
}

Verdict persistence() {
  auto c = small_run_config();
  const auto dir = scratch_dir("persist");
  c.output_dir = dir.string();
  c.n_tasks = 2;
  run_family(c);
  const bool hash_ok = manifest_hash_valid(dir);
  const auto ck = dir / "checkpoints" / detail::task_file(1);
  const Model m = from_archive(TensorArchive::load(ck));
  to_archive(m).save(dir / "resaved.ip2t");
  const Model m2 = from_archive(TensorArchive::load(dir / "resaved.ip2t"));
  const auto task = task_for(c, 1);
  ForwardOptions f;
  f.noise_seed = 5;
  bool same = slurp(ck) == slurp(dir / "resaved.ip2t");
  for (const auto& tr : task.trials) {
    const auto a = forward_trial(m.params.weights, m.params.props, m.config, tr.input, f);
    const auto b = forward_trial(m2.params.weights, m2.params.props, m2.config, tr.input, f);
    same &= bits_equal(a.y, b.y) && bits_equal(a.v, b.v) && bits_equal(a.trace, b.trace);
  }
  fs::remove_all(dir);
  return {hash_ok && same, std::string("forward ") + (same ? "bit-exact" : "differs") + ", manifest hash " +
                               (hash_ok ? "valid" : "invalid")};
}

Verdict determinism() {
  auto c = small_run_config();
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  c.output_dir = a.string();
  run_family(c);
  c.output_dir = b.string();
  run_family(c);
  const auto ma = slurp(a / "metrics.csv"), mb = slurp(b / "metrics.csv");
  fs::remove_all(a);
  fs::remove_all(b);
  return {!ma.empty() && ma == mb, ma == mb ? "metrics.csv identical" : "metrics.csv differs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"gradient correctness", gradients},    {"noise process", noise},
      {"mask/configuration", masks},          {"task generators", generators},
      {"modularity oracle", modularity},      {"desk-scale L2L trend", l2l_trend},
      {"lesion harness", lesion},             {"persistence", persistence},
      {"end-to-end determinism", determinism}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  int failed = 0;
  for (int k = 0; k < 9; ++k) {
    if (!only.empty() && !only.count(k + 1)) continue;
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << (k + 1) << " " << criteria[k].first << ": " << v.detail
              << std::endl;
  }
  return failed ? 1 : 0;
}
