#include "xeml/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "xeml/errors.hpp"

namespace xeml {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::defaults() {
  static const std::vector<std::pair<std::string, std::string>> table{
      {"data.root", ""},
      {"data.image_size", "64"},
      {"synth.domains", "4"},
      {"synth.classes", "10"},
      {"synth.per_class", "60"},
      {"synth.seed", "7"},
      {"holdout_domain", "3"},
      {"split.novel_classes", "auto"},
      {"encoder.depth", "4"},
      {"encoder.channels", "64"},
      {"episode.ways", "3"},
      {"episode.shots", "5"},
      {"episode.queries", "16"},
      {"episode.mode", "cross_domain"},
      {"episode.domain", "0"},
      {"train.episodes", "2000"},
      {"train.lr", "0.0005"},
      {"train.checkpoint_every", "0"},
      {"train.eval_every", "0"},
      {"train.eval_episodes", "20"},
      {"eval.ways", "3"},
      {"eval.shots", "5"},
      {"eval.queries", "16"},
      {"eval.runs", "600"},
      {"eval.norm", "batch"},
      {"seed", "7"},
      {"threads", "1"},
  };
  return table;
}

RunConfig::RunConfig() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::assign(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      cfg.assign(line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

long long RunConfig::integer(const std::string& key) const {
  const std::string& v = str(key);
  try {
    std::size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = str(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size() && std::isfinite(out)) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << '=' << v << '\n';
  return os.str();
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig c;
  c.depth = static_cast<int>(integer("encoder.depth"));
  c.channels = static_cast<int>(integer("encoder.channels"));
  c.input_size = static_cast<int>(integer("data.image_size"));
  c.input_channels = 3;
  if (c.channels < 1) throw ConfigError("encoder.channels must be >= 1");
  if (c.input_size < 1) throw ConfigError("data.image_size must be >= 1");
  c.validate();
  return c;
}

EpisodeSpec RunConfig::train_spec() const {
  EpisodeSpec s;
  s.n_way = static_cast<int>(integer("episode.ways"));
  s.k_shot = static_cast<int>(integer("episode.shots"));
  s.m_query = static_cast<int>(integer("episode.queries"));
  s.mode = parse_mode(str("episode.mode"));
  s.domain = static_cast<int>(integer("episode.domain"));
  if (s.mode == EpisodeMode::target_eval) throw ConfigError("episode.mode: target_eval is for meta-test only");
  return s;
}

EpisodeSpec RunConfig::eval_spec() const {
  EpisodeSpec s;
  s.n_way = static_cast<int>(integer("eval.ways"));
  s.k_shot = static_cast<int>(integer("eval.shots"));
  s.m_query = static_cast<int>(integer("eval.queries"));
  s.mode = EpisodeMode::target_eval;
  return s;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.episodes = static_cast<int>(integer("train.episodes"));
  t.lr = static_cast<float>(real("train.lr"));
  t.spec = train_spec();
  t.seed = static_cast<std::uint64_t>(integer("seed"));
  t.checkpoint_every = static_cast<int>(integer("train.checkpoint_every"));
  t.eval_every = static_cast<int>(integer("train.eval_every"));
  t.eval_episodes = static_cast<int>(integer("train.eval_episodes"));
  t.validate();
  return t;
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.runs = static_cast<int>(integer("eval.runs"));
  o.seed = static_cast<std::uint64_t>(integer("seed"));
  o.threads = static_cast<int>(integer("threads"));
  const std::string& norm = str("eval.norm");
  if (norm == "batch") {
    o.norm_stats = ops::NormStats::batch;
  } else if (norm == "running") {
    o.norm_stats = ops::NormStats::running;
  } else {
    throw ConfigError("eval.norm: expected batch or running, got '" + norm + "'");
  }
  if (o.runs < 1) throw ConfigError("eval.runs must be >= 1");
  if (o.threads < 1) throw ConfigError("threads must be >= 1");
  return o;
}

int auto_novel_classes(int total_classes, int n_way) {
  const int want = std::max(n_way, static_cast<int>(std::ceil(0.3 * total_classes)));
  return total_classes - want >= n_way ? want : 0;
}

PreparedData prepare_data(const RunConfig& config) {
  const int size = static_cast<int>(config.integer("data.image_size"));
  PreparedData out;
  MultiDomainDataset all;
  const std::string& root = config.str("data.root");
  if (!root.empty()) {
    if (!std::filesystem::is_directory(root)) {
      throw ConfigError("data.root: dataset directory '" + root + "' does not exist");
    }
    all = load_image_tree(root, size);
    out.description = "image tree " + root;
  } else {
    all = generate_synthetic(static_cast<int>(config.integer("synth.domains")),
                             static_cast<int>(config.integer("synth.classes")),
                             static_cast<int>(config.integer("synth.per_class")), size,
                             static_cast<std::uint64_t>(config.integer("synth.seed")));
    out.description = "synthetic benchmark (seed " + config.str("synth.seed") + ")";
  }
  auto [sources, target] = hold_out(all, static_cast<int>(config.integer("holdout_domain")));

  const std::string& split = config.str("split.novel_classes");
  const int total = static_cast<int>(all.class_names.size());
  const int ways = static_cast<int>(std::max(config.integer("episode.ways"), config.integer("eval.ways")));
  const int novel = split == "auto" ? auto_novel_classes(total, ways)
                                    : static_cast<int>(config.integer("split.novel_classes"));
  if (novel > 0) {
    sources = split_classes(sources, novel).first;
    target = split_classes(target, novel).second;
  }
  out.sources = std::move(sources);
  out.target = std::move(target);
  return out;
}

}  // namespace xeml
