#include "xeml/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "xeml/checkpoint.hpp"
#include "xeml/dataset.hpp"
#include "xeml/errors.hpp"
#include "xeml/eval.hpp"
#include "xeml/kernels.hpp"
#include "xeml/run_config.hpp"
#include "xeml/train.hpp"

namespace fs = std::filesystem;

namespace xeml::cli {

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  int threads = 0;
  long long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args, const std::string& default_out) {
  args.out = default_out;
  cmd->add_option("-c,--config", args.config, "key=value run configuration file");
  cmd->add_option("-s,--set", args.sets, "override one config key (key=value), repeatable");
  cmd->add_option("-o,--out", args.out, "run directory")->capture_default_str();
  cmd->add_option("--threads", args.threads, "evaluation workers (fallback: XEML_THREADS)");
  cmd->add_option("--seed", args.seed, "master seed");
}

RunConfig resolve(const CommonArgs& args) {
  RunConfig cfg = args.config.empty() ? RunConfig{} : RunConfig::load(args.config);
  for (const auto& s : args.sets) cfg.assign(s);
  if (args.threads > 0) {
    cfg.set("threads", std::to_string(args.threads));
  } else if (const char* env = std::getenv("XEML_THREADS"); env != nullptr && *env != '\0') {
    cfg.set("threads", env);
  }
  if (args.seed >= 0) cfg.set("seed", std::to_string(args.seed));
  return cfg;
}

// Collects the files written into a run directory and records their hashes.
class RunDir {
 public:
  explicit RunDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  const fs::path& path() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write " + (dir_ / name).string());
    out << content;
    out.close();
    record(name);
  }

  void record(const std::string& name) { files_.push_back(name); }

  void record_matching(const std::string& prefix, const std::string& ext) {
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(dir_)) {
      const std::string n = e.path().filename().string();
      if (e.is_regular_file() && n.rfind(prefix, 0) == 0 && e.path().extension() == ext) found.push_back(n);
    }
    std::sort(found.begin(), found.end());
    for (auto& n : found) record(n);
  }

  void finish() const {
    std::ofstream out(dir_ / "hashes.txt", std::ios::trunc);
    for (const auto& f : files_) out << hex64(file_hash(dir_ / f)) << "  " << f << '\n';
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

void note(const std::string& msg) { std::cerr << "xeml: " << msg << '\n'; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

TrainProgress progress_printer(int total) {
  return [total, acc = 0.0, loss = 0.0, n = 0](const TrainRecord& r) mutable {
    acc += r.accuracy;
    loss += r.loss;
    ++n;
    if ((r.episode + 1) % 100 == 0 || r.episode + 1 == total) {
      note("episode " + std::to_string(r.episode + 1) + "/" + std::to_string(total) + " loss " +
           fixed(loss / n) + " acc " + fixed(acc / n));
      acc = loss = 0.0;
      n = 0;
    }
  };
}

std::string describe(const EvalReport& r) {
  return fixed(r.mean_acc) + " +- " + fixed(r.ci95_half_width) + " (95% CI, z=1.96, " +
         std::to_string(r.runs) + " runs, " +
         (r.norm_stats == ops::NormStats::batch ? "batch" : "running") + " norm stats)";
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << "runs=" << r.runs << '\n'
     << "mean_acc=" << r.mean_acc << '\n'
     << "ci95_half_width=" << r.ci95_half_width << '\n'
     << "ci_method=1.96*sample_std/sqrt(runs)\n"
     << "ways=" << r.spec.n_way << '\n'
     << "shots=" << r.spec.k_shot << '\n'
     << "queries=" << r.spec.m_query << '\n'
     << "mode=" << mode_name(r.spec.mode) << '\n'
     << "norm_stats=" << (r.norm_stats == ops::NormStats::batch ? "batch" : "running") << '\n'
     << "checkpoint=" << r.checkpoint_id << '\n'
     << "seed=" << r.seed << '\n';
  return os.str();
}

// --- synth -------------------------------------------------------------

struct SynthArgs {
  int domains = 4;
  int classes = 10;
  int per_class = 60;
  int size = 64;
  long long seed = 7;
  std::string out = "data";
};

int cmd_synth(const SynthArgs& a) {
  if (a.seed < 0) throw ConfigError("--seed must be >= 0");
  const MultiDomainDataset ds =
      generate_synthetic(a.domains, a.classes, a.per_class, a.size, static_cast<std::uint64_t>(a.seed));
  write_image_tree(ds, a.out);
  std::cout << "wrote " << ds.image_count() << " images (" << a.domains << " domains x " << a.classes
            << " classes x " << a.per_class << ") to " << a.out << '\n';
  return 0;
}

// --- train -------------------------------------------------------------

int cmd_train(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  const EncoderConfig enc = cfg.encoder();
  TrainConfig tc = cfg.train();
  const PreparedData data = prepare_data(cfg);
  validate_spec(data.sources, tc.spec);

  RunDir run(args.out);
  run.write("config.resolved", cfg.resolved());
  tc.checkpoint_dir = run.path();
  note("training Conv-" + std::to_string(enc.depth) + " (" + std::to_string(enc.channels) +
       " channels) on " + data.description + ", " + std::to_string(data.sources.domains.size()) +
       " source domains, mode " + std::string(mode_name(tc.spec.mode)));
  TrainResult result;
  try {
    result = train(data.sources, enc, tc, progress_printer(tc.episodes));
  } catch (const TrainingAborted&) {
    if (fs::exists(run.path() / "abort.txt")) run.record("abort.txt");
    if (fs::exists(run.path() / "abort.xeml")) run.record("abort.xeml");
    run.finish();
    throw;
  }
  result.log.write_csv(run.path() / "train_log.csv");
  run.record("train_log.csv");
  if (!result.log.validation.empty()) {
    std::ostringstream v;
    v << "episode,val_acc\n";
    for (const auto& r : result.log.validation) v << r.episode << ',' << r.mean_accuracy << '\n';
    run.write("validation.csv", v.str());
  }
  run.record_matching("ckpt_", ".xeml");
  run.record("final.xeml");
  run.finish();
  std::cout << "checkpoint " << (run.path() / "final.xeml").string() << " "
            << hex64(file_hash(run.path() / "final.xeml")) << '\n';
  return 0;
}

// --- eval --------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  int ways = 0, shots = 0, queries = 0, runs = 0;
  std::string norm;
};

int cmd_eval(const CommonArgs& args, const EvalArgs& e) {
  RunConfig cfg = resolve(args);
  if (e.ways > 0) cfg.set("eval.ways", std::to_string(e.ways));
  if (e.shots > 0) cfg.set("eval.shots", std::to_string(e.shots));
  if (e.queries > 0) cfg.set("eval.queries", std::to_string(e.queries));
  if (e.runs > 0) cfg.set("eval.runs", std::to_string(e.runs));
  if (!e.norm.empty()) cfg.set("eval.norm", e.norm);
  if (!fs::is_regular_file(e.checkpoint)) {
    throw ConfigError("checkpoint file '" + e.checkpoint + "' does not exist");
  }
  const Checkpoint ck = load_checkpoint(e.checkpoint);
  cfg.set("encoder.depth", std::to_string(ck.config.depth));
  cfg.set("encoder.channels", std::to_string(ck.config.channels));
  cfg.set("data.image_size", std::to_string(ck.config.input_size));
  const EpisodeSpec spec = cfg.eval_spec();
  EvalOptions opts = cfg.eval_options();
  opts.checkpoint_id = hex64(file_hash(e.checkpoint));
  const PreparedData data = prepare_data(cfg);
  if (opts.runs == 1) note("warning: runs=1, the confidence interval is reported as 0");

  RunDir run(args.out);
  run.write("config.resolved", cfg.resolved() + "checkpoint=" + e.checkpoint + "\n");
  const EvalReport report = evaluate(ck.params, ck.config, data.target, spec, opts);
  std::ostringstream csv;
  csv.precision(9);
  csv << "model,mean_acc,ci95,runs,seed\n"
      << opts.checkpoint_id << ',' << report.mean_acc << ',' << report.ci95_half_width << ','
      << report.runs << ',' << report.seed << '\n';
  run.write("eval.csv", csv.str());
  run.write("episodes.csv", episodes_csv(report));
  run.write("report.txt", report_text(report));
  run.finish();
  std::cout << "target accuracy " << describe(report) << '\n';
  return 0;
}

// --- sweep -------------------------------------------------------------

struct SweepArgs {
  std::string depths;
  std::string modes;
  int ways = 0, shots = 0, queries = 0, runs = 0, episodes = 0;
};

std::vector<int> parse_depths(const std::string& text) {
  std::vector<int> out;
  auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("--depths: bad depth '" + s + "'");
  };
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dots = item.find("..");
    if (dots != std::string::npos) {
      const int lo = to_int(item.substr(0, dots)), hi = to_int(item.substr(dots + 2));
      if (lo > hi) throw ConfigError("--depths: empty range '" + item + "'");
      for (int d = lo; d <= hi; ++d) out.push_back(d);
    } else {
      out.push_back(to_int(item));
    }
  }
  if (out.empty()) throw ConfigError("--depths: empty depth list");
  for (int d : out) {
    if (d < 1 || d > kMaxEncoderDepth) {
      throw ConfigError("--depths: depth " + std::to_string(d) + " outside [1," +
                        std::to_string(kMaxEncoderDepth) + "]");
    }
  }
  return out;
}

unsigned parse_modes(const std::string& text) {
  unsigned out = 0;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const EpisodeMode m = parse_mode(item);
    switch (m) {
      case EpisodeMode::cross_domain: out |= static_cast<unsigned>(ModeSet::cross); break;
      case EpisodeMode::same_domain: out |= static_cast<unsigned>(ModeSet::same); break;
      case EpisodeMode::single_domain: out |= static_cast<unsigned>(ModeSet::single); break;
      case EpisodeMode::target_eval: throw ConfigError("--modes: target_eval is not a training mode");
    }
  }
  if (out == 0) throw ConfigError("--modes: empty mode list");
  return out;
}

int cmd_sweep(const CommonArgs& args, const SweepArgs& s, bool depths_given, bool modes_given) {
  if (depths_given == modes_given) throw ConfigError("sweep needs exactly one of --depths or --modes");
  RunConfig cfg = resolve(args);
  if (s.ways > 0) {
    cfg.set("episode.ways", std::to_string(s.ways));
    cfg.set("eval.ways", std::to_string(s.ways));
  }
  if (s.shots > 0) {
    cfg.set("episode.shots", std::to_string(s.shots));
    cfg.set("eval.shots", std::to_string(s.shots));
  }
  if (s.queries > 0) {
    cfg.set("episode.queries", std::to_string(s.queries));
    cfg.set("eval.queries", std::to_string(s.queries));
  }
  if (s.runs > 0) cfg.set("eval.runs", std::to_string(s.runs));
  if (s.episodes > 0) cfg.set("train.episodes", std::to_string(s.episodes));

  const std::vector<int> depths = depths_given ? parse_depths(s.depths) : std::vector<int>{};
  const unsigned modes = modes_given ? parse_modes(s.modes) : 0;
  const EncoderConfig enc = cfg.encoder();
  TrainConfig tc = cfg.train();
  const EpisodeSpec spec = cfg.eval_spec();
  const EvalOptions opts = cfg.eval_options();
  const PreparedData data = prepare_data(cfg);

  RunDir run(args.out);
  run.write("config.resolved", cfg.resolved() + (depths_given ? "sweep.depths=" + s.depths
                                                               : "sweep.modes=" + s.modes) + "\n");
  tc.checkpoint_dir = run.path() / "models";
  auto stage = [](const std::string& msg) { note(msg); };

  if (depths_given) {
    const auto entries = depth_sweep(data.sources, data.target, enc, tc, spec, opts, depths, stage);
    run.write("sweep.csv", sweep_csv(entries));
    run.write("sweep_plot.dat", sweep_plot_data(entries));
    for (const auto& e : entries) {
      run.write("episodes_depth" + std::to_string(e.depth) + ".csv", episodes_csv(e.report));
      std::cout << "Conv-" << e.depth << ": " << describe(e.report) << '\n';
    }
  } else {
    const auto entries = compare_modes(data.sources, data.target, enc, tc, spec, opts, modes, stage);
    run.write("modes.csv", modes_csv(entries));
    for (const auto& e : entries) {
      run.write("episodes_" + e.label + ".csv", episodes_csv(e.report));
      std::cout << e.label << ": " << describe(e.report) << '\n';
    }
  }
  run.finish();
  return 0;
}

// --- report ------------------------------------------------------------

int cmd_report(const std::string& dir) {
  const fs::path root(dir);
  const fs::path hashes = root / "hashes.txt";
  if (!fs::is_regular_file(hashes)) throw ConfigError("run directory '" + dir + "' has no hashes.txt");
  std::ifstream in(hashes);
  std::string line;
  int bad = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep == std::string::npos) throw IngestionError("malformed line in " + hashes.string() + ": " + line);
    const std::string want = line.substr(0, sep), name = line.substr(sep + 2);
    const fs::path f = root / name;
    const std::string have = fs::is_regular_file(f) ? hex64(file_hash(f)) : "missing";
    const bool ok = have == want;
    bad += ok ? 0 : 1;
    std::cout << (ok ? "ok       " : "MISMATCH ") << name << '\n';
  }
  for (const char* table : {"sweep.csv", "modes.csv", "eval.csv"}) {
    if (!fs::is_regular_file(root / table)) continue;
    std::ifstream t(root / table);
    std::cout << '\n' << table << ":\n" << t.rdbuf();
  }
  if (bad > 0) {
    note(std::to_string(bad) + " artifact(s) do not match their recorded hash");
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Cross-domain episodic meta-learning with prototypical networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "xeml 1.0 (kernels: " + std::string(kernels::active().name) + ")");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate the synthetic multi-domain benchmark as a PPM tree");
  synth->add_option("--domains", synth_args.domains, "number of rendering styles")->capture_default_str();
  synth->add_option("--classes", synth_args.classes, "number of shape classes (<= 10)")->capture_default_str();
  synth->add_option("--per-class", synth_args.per_class, "images per (domain, class)")->capture_default_str();
  synth->add_option("--size", synth_args.size, "image side in pixels")->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "generator seed")->capture_default_str();
  synth->add_option("-o,--out", synth_args.out, "output directory")->capture_default_str();

  CommonArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "episodic meta-training on the source domains");
  add_common(train_cmd, train_args, "runs/train");

  CommonArgs eval_args;
  EvalArgs eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "meta-test a checkpoint on the held-out domain");
  add_common(eval_cmd, eval_args, "runs/eval");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--ways", eval_opts.ways, "classes per episode");
  eval_cmd->add_option("--shots", eval_opts.shots, "support examples per class");
  eval_cmd->add_option("--queries", eval_opts.queries, "query examples per class");
  eval_cmd->add_option("--runs", eval_opts.runs, "evaluation episodes");
  eval_cmd->add_option("--norm", eval_opts.norm, "batchnorm statistics at test time: batch or running");

  CommonArgs sweep_args;
  SweepArgs sweep_opts;
  auto* sweep_cmd = app.add_subcommand("sweep", "depth sweep or sampling-mode comparison");
  add_common(sweep_cmd, sweep_args, "runs/sweep");
  auto* depths_opt = sweep_cmd->add_option("--depths", sweep_opts.depths, "encoder depths, e.g. 1,2,3 or 1..6");
  auto* modes_opt = sweep_cmd->add_option("--modes", sweep_opts.modes, "training modes, e.g. cross,same,single");
  sweep_cmd->add_option("--ways", sweep_opts.ways, "classes per episode (train and eval)");
  sweep_cmd->add_option("--shots", sweep_opts.shots, "support examples per class (train and eval)");
  sweep_cmd->add_option("--queries", sweep_opts.queries, "query examples per class (train and eval)");
  sweep_cmd->add_option("--runs", sweep_opts.runs, "evaluation episodes per model");
  sweep_cmd->add_option("--episodes", sweep_opts.episodes, "training episodes per model");

  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "verify a run directory and print its result tables");
  report_cmd->add_option("dir", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_args);
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args, eval_opts);
    if (*sweep_cmd) return cmd_sweep(sweep_args, sweep_opts, depths_opt->count() > 0, modes_opt->count() > 0);
    if (*report_cmd) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    note("config error: " + std::string(e.what()));
    return kExitUsage;
  } catch (const ModeError& e) {
    note("config error: " + std::string(e.what()));
    return kExitUsage;
  } catch (const SamplingError& e) {
    note("config error: " + std::string(e.what()));
    return kExitUsage;
  } catch (const CheckpointError& e) {
    note("bad checkpoint: " + std::string(e.what()));
    return kExitUsage;
  } catch (const HomogeneityError& e) {
    note("dataset error: " + std::string(e.what()));
    return kExitUsage;
  } catch (const TrainingAborted& e) {
    note("training aborted: " + std::string(e.what()));
    return kExitRuntime;
  } catch (const std::exception& e) {
    note("error: " + std::string(e.what()));
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace xeml::cli
