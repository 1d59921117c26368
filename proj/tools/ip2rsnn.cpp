// ip2rsnn: train, ablate, analyze and self-check from one binary.
//
// Exit codes: 0 success, 1 runtime failure or failed check, 2 usage/config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ip2rsnn/ip2rsnn.hpp"
#include "ip2rsnn/testing/checks.hpp"

namespace fs = std::filesystem;
using namespace ip2rsnn;

namespace {

constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::array<int, 3> parse_mask_arg(const std::string& s) {
  std::array<int, 3> m{};
  std::size_t k = 0;
  for (char c : s) {
    if (c == '0' || c == '1') {
      if (k == 3) throw ConfigError("--mask", "expects three bits, e.g. 1,0,1");
      m[k++] = c - '0';
    } else if (c != ',' && c != '[' && c != ']' && c != ' ') {
      throw ConfigError("--mask", "expects three bits, e.g. 1,0,1");
    }
  }
  if (k != 3) throw ConfigError("--mask", "expects three bits, e.g. 1,0,1");
  return m;
}

// Output directory: explicit flag, else the config's, else <root>/<family>-<seed>.
// IP2RSNN_OUTPUT_ROOT replaces the default root "out" and prefixes relative paths.
std::string resolve_output(const ExperimentConfig& c, const std::string& flag) {
  const char* env = std::getenv("IP2RSNN_OUTPUT_ROOT");
  const bool has_env = env && *env;
  fs::path p = !flag.empty() ? fs::path(flag) : fs::path(c.output_dir);
  const bool named = !p.empty();
  if (!named) p = lower(std::string(family_name(c.family))) + "-" + std::to_string(c.seed);
  if (p.is_relative() && (has_env || !named)) p = (has_env ? fs::path(env) : fs::path("out")) / p;
  return p.string();
}

struct TrainArgs {
  std::string config;
  std::string family;
  std::string variant;
  std::string mask;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_tasks;
  std::string output;
  bool dry_run = false;
};

ExperimentConfig load_config(const TrainArgs& a) {
  ExperimentConfig c = parse_config_text(read_text_file(a.config));
  if (!a.family.empty()) {
    try {
      c.family = parse_family(a.family);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("--family", e.what());
    }
  }
  if (!a.variant.empty()) c.variant = parse_variant(a.variant);
  if (!a.mask.empty()) {
    c.mask = parse_mask_arg(a.mask);
    if (a.variant.empty()) c.variant = Variant::random_mask;
  }
  if (a.seed) c.seed = *a.seed;
  if (a.n_tasks) c.n_tasks = *a.n_tasks;
  c.output_dir = resolve_output(c, a.output);
  c.validate();
  return c;
}

void print_metrics(const L2LMetrics& m, const RunLog& log, const std::string& dir) {
  std::cout << "mask " << log.mask.str() << "\n"
            << "tasks_run " << m.tasks_run << (log.early_stopped ? " (early stop)" : "") << "\n"
            << "failure_count " << m.failure_count << "\n";
  for (const auto& [k, v] : m.final_efficiency) {
    std::cout << "final_efficiency_" << k << " ";
    if (v) std::cout << *v;
    else std::cout << "n/a";
    std::cout << "\n";
  }
  std::cout << "run_dir " << dir << "\n";
}

int cmd_train(const TrainArgs& a) {
  const auto c = load_config(a);
  if (a.dry_run) {
    std::cout << "config ok: family=" << family_name(c.family) << " variant=" << variant_name(c.variant)
              << " mask=" << c.learning_mask().str() << " tasks=" << c.n_tasks << " output=" << c.output_dir << "\n";
    return 0;
  }
  RunHooks hooks;
  hooks.on_task_end = [](const Model&, const TaskOutcome& o) {
    std::clog << "task " << o.task_index << (o.converged ? " converged" : " failed") << " after "
              << o.iterations_used << " iterations (loss " << o.final_loss << ")\n";
  };
  const auto [m, log] = run_family(c, hooks);
  print_metrics(m, log, c.output_dir);
  return 0;
}

int cmd_ablate(const TrainArgs& a, const std::string& masks_arg, std::size_t workers) {
  auto c = load_config(a);
  std::vector<LearningMask> masks;
  if (masks_arg == "all") {
    for (int b = 0; b < 8; ++b) masks.push_back(LearningMask::from_array({(b >> 2) & 1, (b >> 1) & 1, b & 1}));
  } else {
    std::stringstream ss(masks_arg);
    std::string item;
    while (std::getline(ss, item, ';')) masks.push_back(LearningMask::from_array(parse_mask_arg(item)));
  }
  if (masks.empty()) throw ConfigError("--masks", "no masks given");
  if (a.dry_run) {
    std::cout << "config ok: " << masks.size() << " masks, output=" << c.output_dir << "\n";
    return 0;
  }
  const auto rows = run_ablation_grid(c, masks, workers);
  const auto table = ablation_table_csv(rows);
  fs::create_directories(c.output_dir);
  write_atomic(fs::path(c.output_dir) / "ablation.csv", table);
  std::cout << table;
  return 0;
}

// ---- analysis over a run directory ----

struct RunDir {
  fs::path dir;
  ExperimentConfig config;
  std::string hash;
  std::vector<TaskOutcome> outcomes;

  fs::path checkpoint(std::size_t i) const { return dir / "checkpoints" / detail::task_file(i); }
  fs::path recording(std::size_t i) const { return dir / "recordings" / detail::task_file(i); }
};

[[noreturn]] void missing(const fs::path& dir, const std::vector<std::string>& need) {
  std::ostringstream os;
  os << "run directory " << dir.string() << " is missing required artifacts:";
  for (const auto& n : need) os << "\n  " << n;
  throw IoError(os.str());
}

std::vector<TaskOutcome> read_metrics_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string());
  std::string line;
  std::getline(is, line);
  std::vector<TaskOutcome> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& x : f) std::getline(ss, x, ',');
    TaskOutcome o;
    o.task_index = std::stoull(f[0]);
    o.converged = f[1] == "1";
    o.iterations_used = std::stoull(f[2]);
    o.final_loss = std::strtod(f[3].c_str(), nullptr);
    out.push_back(o);
  }
  return out;
}

RunDir open_run(const fs::path& dir) {
  std::vector<std::string> need;
  for (const char* f : {"config.json", "metrics.csv"})
    if (!fs::exists(dir / f)) need.push_back(f);
  if (!need.empty()) missing(dir, need);
  RunDir r;
  r.dir = dir;
  const std::string text = read_bytes(dir / "config.json");
  r.config = parse_config_text(text);
  r.hash = sha256_hex(text);
  if (fs::exists(dir / "manifest.json") && read_manifest(dir).config_hash != r.hash)
    std::clog << "warning: config.json does not match the manifest hash\n";
  r.outcomes = read_metrics_csv(dir / "metrics.csv");
  if (r.outcomes.empty()) throw IoError("no tasks recorded in " + (dir / "metrics.csv").string());
  return r;
}

std::vector<std::size_t> recorded_tasks(const RunDir& r) {
  std::vector<std::size_t> out;
  for (const auto& o : r.outcomes)
    if (fs::exists(r.recording(o.task_index))) out.push_back(o.task_index);
  if (out.empty()) missing(r.dir, {"recordings/task_NNNNN.ip2t (set output.record_every > 0)"});
  return out;
}

std::vector<Mat> trial_tensors(const TensorArchive& a, const std::string& what) {
  std::vector<Mat> out;
  const auto n = std::stoull(a.meta("trials"));
  for (std::size_t k = 0; k < n; ++k) out.push_back(a.get("trial" + std::to_string(k) + "." + what));
  return out;
}

std::string num(double x) { return detail::fmt_double(x); }

void write_csv(const fs::path& p, const std::string& hash, const std::string& body) {
  write_atomic(p, "# config_sha256 " + hash + "\n" + body);
  std::cout << "wrote " << p.string() << "\n";
}

fs::path analysis_dir(const RunDir& r) {
  const auto d = r.dir / "analysis";
  fs::create_directories(d);
  return d;
}

int cmd_lesion(const fs::path& run, const std::string& prop_arg, std::optional<std::size_t> task_arg, bool train) {
  const auto r = open_run(run);
  if (r.outcomes.size() < 2 && !task_arg) throw IoError("lesion analysis needs at least two tasks");
  const std::size_t cur = task_arg ? *task_arg : r.outcomes.size() - 2;  // penultimate task
  if (!fs::exists(r.checkpoint(cur))) missing(r.dir, {"checkpoints/" + detail::task_file(cur)});
  const Model model = from_archive(TensorArchive::load(r.checkpoint(cur)));
  const auto current = task_for(r.config, cur);
  const auto next = task_for(r.config, cur + 1);
  std::vector<analysis::PropertyId> props;
  if (prop_arg == "all") {
    if (model.config.n_dendrites > 0) props.push_back(analysis::PropertyId::tau_d);
    props.push_back(analysis::PropertyId::tau_s);
    props.push_back(analysis::PropertyId::theta);
  } else {
    props.push_back(analysis::parse_property(prop_arg));
  }
  std::ostringstream os;
  os << "property,bin,group_size,current_task_loss,next_task_iterations,next_task_converged,degenerate,"
        "baseline_loss,baseline_next_iterations\n";
  for (auto p : props) {
    const auto bins = analysis::bin_neurons(model.params.props, p);
    if (bins.degenerate)
      std::clog << "warning: " << analysis::property_name(p) << " is constant over neurons; all in bin 0\n";
    const auto rep = analysis::lesion_eval(model, bins, current, next, r.config, train);
    for (const auto& row : rep.rows)
      os << analysis::property_name(p) << ',' << row.bin << ',' << row.group_size << ','
         << num(row.current_task_loss) << ',' << (train ? std::to_string(row.next_task_iterations) : "") << ','
         << (train ? (row.next_task_converged ? "1" : "0") : "") << ',' << (rep.degenerate ? 1 : 0) << ','
         << num(rep.baseline_loss) << ',' << (train ? std::to_string(rep.baseline_next_iterations) : "") << '\n';
  }
  write_csv(analysis_dir(r) / ("lesion_task" + std::to_string(cur) + "_" + prop_arg + ".csv"), r.hash, os.str());
  return 0;
}

int cmd_stats(const fs::path& run) {
  const auto r = open_run(run);
  std::ostringstream os;
  os << "task_index,mean_v,var_v,mean_corr,var_corr,pairs_used,pairs_excluded,converged,iterations\n";
  std::map<std::string, std::vector<double>> series;
  std::vector<double> speeds;
  for (auto i : recorded_tasks(r)) {
    const auto a = TensorArchive::load(r.recording(i));
    const auto s = analysis::membrane_stats(trial_tensors(a, "v"));
    const auto& o = r.outcomes[i];
    os << i << ',' << num(s.mean_v) << ',' << num(s.var_v) << ',' << num(s.mean_corr) << ',' << num(s.var_corr)
       << ',' << s.pairs_used << ',' << s.pairs_excluded << ',' << (o.converged ? 1 : 0) << ','
       << o.iterations_used << '\n';
    if (!o.converged) continue;
    series["mean_v"].push_back(s.mean_v);
    series["var_v"].push_back(s.var_v);
    series["mean_corr"].push_back(s.mean_corr);
    series["var_corr"].push_back(s.var_corr);
    speeds.push_back(static_cast<double>(o.iterations_used));
  }
  const auto dir = analysis_dir(r);
  write_csv(dir / "membrane_stats.csv", r.hash, os.str());
  if (speeds.size() >= 2) {
    std::ostringstream sp;
    sp << "metric,lower_n,lower_median_iterations,upper_n,upper_median_iterations\n";
    for (const auto& [name, x] : series) {
      const auto s = analysis::split_by_metric(x, speeds);
      sp << name << ',' << s.lower_speeds.size() << ',' << num(s.lower_median) << ',' << s.upper_speeds.size()
         << ',' << num(s.upper_median) << '\n';
    }
    write_csv(dir / "metric_split.csv", r.hash, sp.str());
  }
  return 0;
}

int cmd_modularity(const fs::path& run, std::optional<std::size_t> window, std::optional<std::size_t> stride,
                   std::uint64_t seed, bool all_tasks, bool keep_negative) {
  const auto r = open_run(run);
  auto tasks = recorded_tasks(r);
  if (!all_tasks) tasks = {tasks.back()};
  const double dt = r.config.network.dt_ms;
  const auto win = window.value_or(static_cast<std::size_t>(std::llround(500.0 / dt)));
  const auto str = stride.value_or(win);
  analysis::LayerOptions lo;
  lo.clip_negative = !keep_negative;
  std::ostringstream os;
  os << "task_index,trial,layers,Q,mean_communities,mean_stationarity,communities_excluded\n";
  const auto dir = analysis_dir(r);
  for (auto i : tasks) {
    const auto a = TensorArchive::load(r.recording(i));
    const auto vs = trial_tensors(a, "v");
    Mat allegiance;
    for (std::size_t k = 0; k < vs.size(); ++k) {
      const auto net = analysis::build_layers(vs[k], win, str, lo);
      const auto rep = analysis::analyze_modularity(net, derive_seed(seed, {i, k}));
      os << i << ',' << k << ',' << net.n_layers() << ',' << num(rep.q) << ',' << num(rep.counts.mean) << ','
         << num(rep.stationarity.mean) << ',' << rep.stationarity.excluded.size() << '\n';
      allegiance = k == 0 ? rep.allegiance : Mat(allegiance + rep.allegiance);
    }
    allegiance /= static_cast<double>(vs.size());
    TensorArchive t;
    t.set_meta("kind", "allegiance");
    t.set_meta("config_sha256", r.hash);
    t.set_meta("task_index", std::to_string(i));
    t.set_meta("window_steps", std::to_string(win));
    t.set_meta("stride_steps", std::to_string(str));
    t.put("allegiance", allegiance);
    const auto p = dir / ("allegiance_" + detail::task_file(i));
    t.save(p);
    std::cout << "wrote " << p.string() << "\n";
  }
  write_csv(dir / "modularity.csv", r.hash, os.str());
  return 0;
}

int cmd_pca(const fs::path& run, const std::string& signal, std::size_t components) {
  const auto r = open_run(run);
  if (signal != "trace" && signal != "v") throw UsageError("--signal must be 'trace' or 'v'");
  const auto tasks = recorded_tasks(r);
  std::vector<Mat> per_task;
  for (auto i : tasks) {
    const auto a = TensorArchive::load(r.recording(i));
    const auto st = std::stoull(a.meta("stimulus_steps"));
    const auto dl = std::stoull(a.meta("delay_steps"));
    std::vector<Mat> rows;
    Eigen::Index n = 0;
    for (const auto& x : trial_tensors(a, signal)) {
      rows.push_back(analysis::delay_rows(x, st, dl));
      n += rows.back().rows();
    }
    Mat all(n, rows.front().cols());
    Eigen::Index at = 0;
    for (const auto& x : rows) {
      all.middleRows(at, x.rows()) = x;
      at += x.rows();
    }
    per_task.push_back(std::move(all));
  }
  const auto e = analysis::pca_delay(per_task, components);
  std::ostringstream os;
  os << "task_index";
  for (std::size_t c = 0; c < components; ++c) os << ",pc" << c + 1;
  os << ",step_from_previous\n";
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    os << tasks[t];
    for (Eigen::Index c = 0; c < e.task_means.cols(); ++c) os << ',' << num(e.task_means(static_cast<Eigen::Index>(t), c));
    os << ',' << (t ? num(e.steps[t - 1]) : "") << '\n';
  }
  const auto dir = analysis_dir(r);
  write_csv(dir / "pca_tasks.csv", r.hash, os.str());
  std::ostringstream sm;
  sm << "signal,tasks,median_step,centroid_variance";
  for (std::size_t c = 0; c < components; ++c) sm << ",explained_variance_pc" << c + 1;
  sm << '\n' << signal << ',' << tasks.size() << ',' << num(e.median_step) << ',' << num(e.centroid_variance);
  for (Eigen::Index c = 0; c < e.explained_variance.size(); ++c) sm << ',' << num(e.explained_variance[c]);
  sm << '\n';
  write_csv(dir / "pca_summary.csv", r.hash, sm.str());
  TensorArchive t;
  t.set_meta("kind", "pca_basis");
  t.set_meta("config_sha256", r.hash);
  t.set_meta("signal", signal);
  t.put("basis", e.basis);
  t.put("mean", e.mean);
  t.save(dir / "pca_basis.ip2t");
  return 0;
}

int cmd_selftest(bool fast, const std::string& fault) {
  if (!fault.empty() && fault != "gradient") throw UsageError("--inject-fault supports only 'gradient'");
  using namespace ip2rsnn::testing;
  std::vector<CheckResult> results;
  GradientCheckOptions g;
  g.seeds = fast ? 4 : 20;
  if (fault == "gradient") g.fault_scale = 1.01;
  results.push_back(gradient_check(g));
  results.push_back(modularity_oracle_check(fast ? 8 : 24));
  results.push_back(generator_check(fast ? 10 : 100));
  if (!fast) results.push_back(noise_variance_check());
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    ok &= r.pass;
  }
  if (fast) std::cout << "SKIP noise-variance  (Monte-Carlo, omitted with --fast)\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent spiking networks with learnable intrinsic properties: training and analysis"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto add_train_opts = [&](CLI::App* sub) {
    sub->add_option("--config", ta.config, "JSON experiment config")->required();
    sub->add_option("--family", ta.family, "DMS | CD-DMS | GNG-DR-2 | GNG-DR-4");
    sub->add_option("--variant", ta.variant, "ip2 | vanilla | random_mask");
    sub->add_option("--seed", ta.seed, "root seed");
    sub->add_option("--n-tasks", ta.n_tasks, "number of sequential tasks");
    sub->add_option("--output", ta.output, "run directory");
    sub->add_flag("--dry-run", ta.dry_run, "validate the config and exit");
  };
  auto* train = app.add_subcommand("train", "run one task family");
  add_train_opts(train);
  train->add_option("--mask", ta.mask, "learning mask override, e.g. 1,0,1");

  std::string masks = "all";
  std::size_t workers = 1;
  auto* ablate = app.add_subcommand("ablate", "run one family per learning mask");
  add_train_opts(ablate);
  ablate->add_option("--masks", masks, "'all' or masks separated by ';', e.g. '1,0,0;0,1,1'");
  ablate->add_option("--workers", workers, "parallel runs")->check(CLI::PositiveNumber);

  auto* analyze = app.add_subcommand("analyze", "post-hoc analyses of a run directory");
  analyze->require_subcommand(1);
  std::string run;
  auto* lesion = analyze->add_subcommand("lesion", "property-binned lesion study");
  auto* stats = analyze->add_subcommand("stats", "membrane-potential statistics per task");
  auto* modularity = analyze->add_subcommand("modularity", "multilayer community structure");
  auto* pca = analyze->add_subcommand("pca", "PCA of delay-period activity");
  for (auto* s : {lesion, stats, modularity, pca}) s->add_option("--run", run, "run directory")->required();
  std::string prop = "all";
  std::optional<std::size_t> lesion_task;
  bool no_train = false;
  lesion->add_option("--property", prop, "tau_d | tau_s | theta | all");
  lesion->add_option("--task", lesion_task, "task whose checkpoint is lesioned (default: penultimate)");
  lesion->add_flag("--no-train", no_train, "skip training on the next task");
  std::optional<std::size_t> window, stride;
  std::uint64_t mod_seed = 1;
  bool all_tasks = false, keep_negative = false;
  modularity->add_option("--window", window, "window length in steps (default 500 ms)");
  modularity->add_option("--stride", stride, "window stride in steps (default: window)");
  modularity->add_option("--seed", mod_seed, "optimizer seed");
  modularity->add_flag("--all-tasks", all_tasks, "every recorded task instead of the last");
  modularity->add_flag("--keep-negative", keep_negative, "do not clip negative correlations");
  std::string signal = "trace";
  std::size_t components = 3;
  pca->add_option("--signal", signal, "trace | v");
  pca->add_option("--components", components, "number of components")->check(CLI::PositiveNumber);

  bool fast = false;
  std::string fault;
  auto* selftest = app.add_subcommand("selftest", "gradient, oracle and generator checks");
  selftest->add_flag("--fast", fast, "skip Monte-Carlo checks, fewer seeds");
  selftest->add_option("--inject-fault", fault, "corrupt a component to exercise failure reporting (gradient)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*ablate) return cmd_ablate(ta, masks, workers);
    if (*lesion) return cmd_lesion(run, prop, lesion_task, !no_train);
    if (*stats) return cmd_stats(run);
    if (*modularity) return cmd_modularity(run, window, stride, mod_seed, all_tasks, keep_negative);
    if (*pca) return cmd_pca(run, signal, components);
    if (*selftest) return cmd_selftest(fast, fault);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
