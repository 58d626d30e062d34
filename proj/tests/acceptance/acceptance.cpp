// Acceptance checks, one per criterion. Usage: acceptance [--criterion N]...
// Prints one PASS/FAIL line per criterion; exit status is 0 only if all pass.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "reference.hpp"
#include "xeml/checkpoint.hpp"
#include "xeml/dataset.hpp"
#include "xeml/errors.hpp"
#include "xeml/eval.hpp"
#include "xeml/ppm.hpp"
#include "xeml/protonet.hpp"
#include "xeml/run_config.hpp"
#include "xeml/sampler.hpp"
#include "xeml/train.hpp"

using namespace xeml;
using xeml::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << std::fixed << v;
  return os.str();
}

void log(const std::string& line) { std::cerr << "  " << line << std::endl; }

int run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(XEML_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> data_lines(const std::string& text, bool skip_header) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (first && skip_header) {
      first = false;
      continue;
    }
    first = false;
    out.push_back(line);
  }
  return out;
}

// ---------------------------------------------------------------------------

Verdict gradient_oracle() {
  const EncoderConfig cfg{2, 8, 16, 3};
  ParamStore params = build_encoder(cfg, 101);
  std::mt19937_64 rng(202);
  const int n_way = 3, k = 2, m = 2;
  Episode ep;
  for (int n = 0; n < n_way; ++n) ep.class_map.push_back(n);
  for (int n = 0; n < n_way; ++n)
    for (int i = 0; i < k; ++i) ep.support.push_back({xeml::testing::random_tensor({3, 16, 16}, rng, 0, 1), n, i});
  for (int n = 0; n < n_way; ++n)
    for (int i = 0; i < m; ++i) ep.query.push_back({xeml::testing::random_tensor({3, 16, 16}, rng, 0, 1), n, k + i});

  Tape tape;
  const EpisodeResult r = episode_loss(params, cfg, ep, tape);
  backward(r.loss);

  const auto images = xeml::testing::to_double(ep.batch());
  const auto s_labels = ep.support_labels(), q_labels = ep.query_labels();
  xeml::testing::RefNet net = xeml::testing::reference_net(params, cfg);

  // Flat index over every parameter scalar: (block, field, offset).
  struct Coord {
    std::size_t param;
    std::size_t offset;
  };
  std::vector<Coord> all;
  for (std::size_t pi = 0; pi < params.params().size(); ++pi)
    for (std::size_t o = 0; o < params.params()[pi].tensor.numel(); ++o) all.push_back({pi, o});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(200);

  // Counts coordinates whose analytic gradient agrees with the central
  // difference of the double-precision oracle at step h.
  auto agreement = [&](double h, double* worst) {
    int good = 0;
    *worst = 0.0;
    for (const Coord& c : all) {
      const auto& entry = params.params()[c.param];
      auto& blk = net[c.param / 4];
      const std::string& path = entry.path;
      std::vector<double>& field = path.ends_with("conv.weight") ? blk.weight
                                   : path.ends_with("conv.bias") ? blk.bias
                                   : path.ends_with("bn.gamma")  ? blk.gamma
                                                                 : blk.beta;
      const double orig = field[c.offset];
      field[c.offset] = orig + h;
      const double up = xeml::testing::reference_episode_loss(net, images, 3, 16, s_labels, q_labels, n_way);
      field[c.offset] = orig - h;
      const double down = xeml::testing::reference_episode_loss(net, images, 3, 16, s_labels, q_labels, n_way);
      field[c.offset] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = entry.tensor.grad()[c.offset];
      const double rel = std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
      *worst = std::max(*worst, rel);
      if (rel < 1e-2) ++good;
    }
    return good;
  };
  double worst = 0.0, worst_small = 0.0;
  const int good = agreement(1e-2, &worst);
  const int good_small = agreement(1e-4, &worst_small);
  return {good >= 198, std::to_string(good) + "/200 coordinates within 1e-2 relative error at h=1e-2 (worst " +
                           fmt(worst, 4) + "); at h=1e-4: " + std::to_string(good_small) + "/200 (worst " +
                           fmt(worst_small, 4) + ")"};
}

Verdict prototype_distance_oracles() {
  std::mt19937_64 rng(303);
  double proto_err = 0.0, dist_err = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    std::uniform_int_distribution<int> pick_n(2, 10), pick_k(1, 10), pick_d(1, 64), pick_q(1, 40);
    const int n = pick_n(rng), k = pick_k(rng);
    const auto d = static_cast<std::size_t>(pick_d(rng));
    std::vector<int> labels;
    for (int i = 0; i < k; ++i)
      for (int c = 0; c < n; ++c) labels.push_back(c);
    std::shuffle(labels.begin(), labels.end(), rng);
    const Tensor emb = xeml::testing::random_tensor({labels.size(), d}, rng);
    const PrototypeSet ps = compute_prototypes(emb, labels, n);
    for (int c = 0; c < n; ++c)
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < labels.size(); ++r)
          if (labels[r] == c) s += emb[r * d + j];
        proto_err = std::max(proto_err, std::fabs(ps.matrix[static_cast<std::size_t>(c) * d + j] - s / k));
      }
  }
  for (int inst = 0; inst < 100; ++inst) {
    std::uniform_int_distribution<int> pick(1, 40), pick_d(1, 64);
    const auto nq = static_cast<std::size_t>(pick(rng)), np = static_cast<std::size_t>(pick(rng));
    const auto d = static_cast<std::size_t>(pick_d(rng));
    const Tensor q = xeml::testing::random_tensor({nq, d}, rng), p = xeml::testing::random_tensor({np, d}, rng);
    const Tensor out = ops::pairwise_sq_dist(q, p);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < np; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) s += std::pow(static_cast<double>(q[i * d + t]) - p[j * d + t], 2);
        dist_err = std::max(dist_err, std::fabs(out[i * np + j] - s));
      }
  }
  return {proto_err <= 1e-6 && dist_err <= 1e-5,
          "prototype max abs error " + fmt(proto_err * 1e9, 3) + "e-9, distance max abs error " +
              fmt(dist_err * 1e6, 3) + "e-6"};
}

Verdict sampler_invariants() {
  const auto ds = generate_synthetic(3, 10, 20, 8, 7);
  const EpisodeSpec spec{3, 5, 16, EpisodeMode::cross_domain, 0};
  const int total = 10000;
  int same = 0, unbalanced = 0, overlap = 0;
  std::map<std::pair<int, int>, int> pairs;
  for (int i = 0; i < total; ++i) {
    Rng rng = make_stream(7, StreamSalt::train_episode, static_cast<std::uint64_t>(i));
    const Episode ep = sample_episode(ds, spec, rng);
    if (ep.support_domain == ep.query_domain) ++same;
    ++pairs[{ep.support_domain, ep.query_domain}];
    std::vector<int> sc(3, 0), qc(3, 0);
    for (const auto& it : ep.support) ++sc[static_cast<std::size_t>(it.label)];
    for (const auto& it : ep.query) ++qc[static_cast<std::size_t>(it.label)];
    for (int n = 0; n < 3; ++n)
      if (sc[static_cast<std::size_t>(n)] != 5 || qc[static_cast<std::size_t>(n)] != 16) ++unbalanced;
    if (std::set<int>(ep.class_map.begin(), ep.class_map.end()).size() != 3) ++overlap;
  }
  const double p = 1.0 / 6.0, sigma = std::sqrt(p * (1 - p) / total);
  double worst_z = 0.0;
  bool all_pairs = pairs.size() == 6;
  for (const auto& [pair, count] : pairs) {
    if (pair.first == pair.second) all_pairs = false;
    worst_z = std::max(worst_z, std::fabs(count / static_cast<double>(total) - p) / sigma);
  }
  const bool pass = same == 0 && unbalanced == 0 && overlap == 0 && all_pairs && worst_z <= 3.0;
  return {pass, std::to_string(same) + " same-domain episodes, " + std::to_string(unbalanced) +
                    " unbalanced, 6 ordered pairs seen: " + (all_pairs ? "yes" : "no") +
                    ", worst pair deviation " + fmt(worst_z, 2) + " sigma"};
}

Verdict chance_level() {
  // Label-independent images: any accuracy above chance would be a leak.
  const auto target = xeml::testing::noise_dataset(1, 10, 21, 64, 404);
  const EncoderConfig cfg{4, 64, 64, 3};
  const ParamStore p = build_encoder(cfg, 7);
  EvalOptions o;
  o.runs = 200;
  o.seed = 7;
  const EvalReport r = evaluate(p, cfg, target, {5, 5, 16, EpisodeMode::target_eval, 0}, o);
  return {r.mean_acc >= 0.15 && r.mean_acc <= 0.25,
          "untrained Conv-4 5-way mean accuracy " + fmt(r.mean_acc) + " +- " + fmt(r.ci95_half_width)};
}

Verdict learnability() {
  const RunConfig cfg;  // defaults are the learnability configuration
  const PreparedData data = prepare_data(cfg);
  log("data: " + data.description + ", " + std::to_string(data.sources.class_names.size()) + " base / " +
      std::to_string(data.target.class_names.size()) + " held-out classes");
  const EncoderConfig enc = cfg.encoder();
  TrainConfig tc = cfg.train();
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult tr = train(data.sources, enc, tc, [](const TrainRecord& r) {
    if ((r.episode + 1) % 250 == 0) log("episode " + std::to_string(r.episode + 1) + " loss " + fmt(r.loss));
  });
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  EvalOptions o = cfg.eval_options();
  o.runs = 300;
  const EvalReport r = evaluate(tr.params, enc, data.target, cfg.eval_spec(), o);
  return {r.mean_acc > 0.70, "held-out domain 3-way 5-shot accuracy " + fmt(r.mean_acc) + " +- " +
                                 fmt(r.ci95_half_width) + " over 300 episodes (training " + fmt(minutes, 1) +
                                 " min)"};
}

Verdict mode_ordering() {
  int cross_ge_same = 0, cross_gt_single = 0;
  std::string detail;
  for (std::uint64_t seed : {7u, 11u, 13u}) {
    RunConfig cfg;
    cfg.assign("data.image_size=32");
    cfg.assign("encoder.channels=32");
    cfg.assign("train.episodes=600");
    cfg.assign("train.lr=0.001");
    cfg.assign("seed=" + std::to_string(seed));
    const PreparedData data = prepare_data(cfg);
    EvalOptions o = cfg.eval_options();
    o.runs = 300;
    const auto entries = compare_modes(data.sources, data.target, cfg.encoder(), cfg.train(), cfg.eval_spec(), o, 7,
                                       [](const std::string& s) { log(s); });
    double cross = 0, same = 0, best_single = 0;
    for (const auto& e : entries) {
      if (e.label == "cross_domain") cross = e.report.mean_acc;
      else if (e.label == "same_domain") same = e.report.mean_acc;
      else best_single = std::max(best_single, e.report.mean_acc);
    }
    if (cross >= same) ++cross_ge_same;
    if (cross > best_single) ++cross_gt_single;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": cross " + fmt(cross) +
              " same " + fmt(same) + " best-single " + fmt(best_single);
    log(detail);
  }
  return {cross_ge_same >= 2 && cross_gt_single >= 2,
          "cross>=same in " + std::to_string(cross_ge_same) + "/3, cross>best single in " +
              std::to_string(cross_gt_single) + "/3 (" + detail + ")"};
}

Verdict depth_sweep_execution() {
  TempDir dir("accept_sweep");
  const fs::path out = dir / "sweep";
  const std::string args =
      "sweep --depths 1..6 --ways 3 --shots 5 --queries 16 --runs 100 --episodes 30"
      " -s data.image_size=16 -s encoder.channels=8 -s synth.per_class=30 -o " + out.string();
  const int code = run_cli(args, dir / "sweep_log.txt");
  if (code != 0) return {false, "sweep exited with " + std::to_string(code) + ": " + read_text(dir / "sweep_log.txt")};
  const auto rows = data_lines(read_text(out / "sweep.csv"), true);
  const auto plot = data_lines(read_text(out / "sweep_plot.dat"), false);
  std::set<int> depths;
  for (const auto& row : rows) depths.insert(std::stoi(row.substr(0, row.find(','))));
  std::vector<std::string> digests;
  bool paired = true;
  for (int d = 1; d <= 6; ++d) {
    const auto episodes = data_lines(read_text(out / ("episodes_depth" + std::to_string(d) + ".csv")), true);
    std::string column;
    for (const auto& e : episodes) column += e.substr(e.rfind(',') + 1) + ";";
    if (episodes.size() != 100) paired = false;
    digests.push_back(column);
  }
  for (const auto& d : digests) paired = paired && d == digests[0];
  const int verify = run_cli("report " + out.string(), dir / "report_log.txt");
  const bool pass = rows.size() == 6 && depths == std::set<int>{1, 2, 3, 4, 5, 6} && plot.size() == 6 && paired &&
                    verify == 0;
  std::string accs;
  for (const auto& row : rows) accs += (accs.empty() ? "" : " ") + row.substr(0, row.find(',', row.find(',') + 1));
  return {pass, std::to_string(rows.size()) + " reports, " + std::to_string(plot.size()) + " plot points, paired: " +
                    (paired ? "yes" : "no") + ", hashes verified: " + (verify == 0 ? "yes" : "no") + " [" + accs + "]"};
}

Verdict statistics_contract() {
  const std::vector<double> two{0.5, 0.7};
  const AccuracySummary s = summarize(two);
  const bool ci_ok = std::fabs(s.mean - 0.6) < 1e-12 && std::fabs(s.ci95_half_width - 0.196) < 1e-12;

  TempDir dir("accept_stats");
  const fs::path data = dir / "data";
  std::string common = " -s data.root=" + data.string() +
                       " -s data.image_size=16 -s encoder.channels=8 -s train.episodes=25 -s split.novel_classes=0";
  bool ran = run_cli("synth --domains 4 --classes 5 --per-class 25 --size 16 -o " + data.string(), dir / "s.txt") == 0;
  ran = ran && run_cli("train" + common + " -o " + (dir / "a").string(), dir / "a.txt") == 0;
  ran = ran && run_cli("train" + common + " -o " + (dir / "b").string(), dir / "b.txt") == 0;
  if (!ran) return {false, "CLI runs failed: " + read_text(dir / "a.txt")};
  const std::uint64_t ha = file_hash(dir / "a" / "final.xeml"), hb = file_hash(dir / "b" / "final.xeml");
  const bool identical = ha == hb;

  const int eval_code = run_cli("eval --checkpoint " + (dir / "a" / "final.xeml").string() + common +
                                    " --runs 20 -o " + (dir / "e").string(),
                                dir / "e.txt");
  const bool unchanged_file = file_hash(dir / "a" / "final.xeml") == ha;
  const Checkpoint ck = load_checkpoint(dir / "a" / "final.xeml");
  const auto before = fnv1a64(serialize_checkpoint(ck.config, ck.params));
  RunConfig cfg;
  cfg.assign("data.root=" + data.string());
  cfg.assign("data.image_size=16");
  cfg.assign("split.novel_classes=0");
  const PreparedData pd = prepare_data(cfg);
  EvalOptions o;
  o.runs = 20;
  evaluate(ck.params, ck.config, pd.target, cfg.eval_spec(), o);
  const bool unchanged_memory = fnv1a64(serialize_checkpoint(ck.config, ck.params)) == before;

  const bool pass = ci_ok && identical && eval_code == 0 && unchanged_file && unchanged_memory;
  return {pass, "CI {0.5,0.7} -> " + fmt(s.mean, 6) + " +- " + fmt(s.ci95_half_width, 6) +
                    ", same-seed checkpoints identical: " + (identical ? "yes" : "no") +
                    ", eval left checkpoint unchanged: " + (unchanged_file && unchanged_memory ? "yes" : "no")};
}

Verdict format_round_trips() {
  TempDir dir("accept_formats");
  std::mt19937_64 rng(909);
  int ckpt_ok = 0, ppm_ok = 0;
  for (int i = 0; i < 10; ++i) {
    const EncoderConfig cfg{1 + i % 4, 2 + i, 8 + i, 3};
    ParamStore p = build_encoder(cfg, static_cast<std::uint64_t>(i));
    std::normal_distribution<float> g(0.0f, 3.0f);
    for (auto* list : {&p.params(), &p.buffers()})
      for (auto& e : *list)
        for (float& v : e.tensor.mutable_data()) v = g(rng);
    const fs::path path = dir / ("m" + std::to_string(i) + ".xeml");
    save_checkpoint(path, cfg, p);
    const Checkpoint back = load_checkpoint(path);
    if (back.config == cfg && back.params.identical_to(p)) ++ckpt_ok;

    std::uniform_int_distribution<int> level(0, 255), extent(1, 40);
    const auto h = static_cast<std::size_t>(extent(rng)), w = static_cast<std::size_t>(extent(rng));
    std::vector<float> px(3 * h * w);
    for (float& v : px) v = static_cast<float>(level(rng)) / 255.0f;
    const Tensor img = Tensor::from({3, h, w}, px);
    const fs::path ppm = dir / ("i" + std::to_string(i) + ".ppm");
    write_ppm(ppm, img);
    const Tensor rd = read_ppm(ppm);
    const auto a = img.data(), b = rd.data();
    if (rd.shape() == img.shape() && std::equal(a.begin(), a.end(), b.begin())) ++ppm_ok;
  }

  const fs::path tree = dir / "tree";
  write_image_tree(xeml::testing::noise_dataset(3, 4, 2, 4, 5), tree);
  fs::remove(tree / "manifest.txt");
  fs::rename(tree / "d1" / "c3", tree / "d1" / "c9");
  std::string named;
  try {
    load_image_tree(tree, 4);
  } catch (const HomogeneityError& e) {
    named = e.what();
  }
  const bool rejected = named.find("c3") != std::string::npos && named.find("c9") != std::string::npos;
  return {ckpt_ok == 10 && ppm_ok == 10 && rejected,
          std::to_string(ckpt_ok) + "/10 checkpoints and " + std::to_string(ppm_ok) +
              "/10 PPM images bit-exact; homogeneity error: " + (named.empty() ? "none" : named)};
}

const std::vector<std::pair<std::string, std::function<Verdict()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Verdict()>>> list{
      {"gradient oracle", gradient_oracle},
      {"prototype/distance oracles", prototype_distance_oracles},
      {"sampler invariants", sampler_invariants},
      {"chance-level sanity", chance_level},
      {"learnability", learnability},
      {"sampling-mode ordering", mode_ordering},
      {"depth-sweep execution", depth_sweep_execution},
      {"statistics contract", statistics_contract},
      {"format round-trips", format_round_trips},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  if (selected.empty())
    for (int n = 1; n <= static_cast<int>(criteria().size()); ++n) selected.push_back(n);

  int failures = 0;
  for (int n : selected) {
    if (n < 1 || n > static_cast<int>(criteria().size())) {
      std::cerr << "no criterion " << n << "\n";
      return 2;
    }
    const auto& [name, check] = criteria()[static_cast<std::size_t>(n - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << n << " (" << name << "): " << (v.pass ? "PASS" : "FAIL") << " - " << v.detail
              << " [" << fmt(secs, 1) << " s]" << std::endl;
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
