#include "manifold_ot/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "manifold_ot/errors.hpp"

namespace manifold_ot {

namespace {

constexpr std::array<std::pair<ExperimentId, std::string_view>, 8> kNames{{
    {ExperimentId::OtS1Gaussians, "ot-s1-gaussians"},
    {ExperimentId::OtS1Mixture, "ot-s1-mixture"},
    {ExperimentId::OtSE2, "ot-se2"},
    {ExperimentId::FilterS1Static, "filter-s1-static"},
    {ExperimentId::FilterS1Dynamic, "filter-s1-dynamic"},
    {ExperimentId::FilterSE2, "filter-se2"},
    {ExperimentId::OtSO3, "ot-so3"},
    {ExperimentId::FilterSO3, "filter-so3"},
}};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

double parse_number(std::string_view tok) {
  if (tok == "pi") return kPi;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ConfigError("not a number: '" + std::string(tok) + "'");
  return v;
}

// Factors separated by * or /, each a literal or `pi`; a leading - negates.
double parse_real(std::string_view text) {
  std::string_view s = trim(text);
  double sign = 1.0;
  if (!s.empty() && s.front() == '-') {
    sign = -1.0;
    s.remove_prefix(1);
  }
  if (s.empty()) throw ConfigError("empty value");
  double value = 1.0;
  char op = '*';
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find_first_of("*/", pos);
    const double f = parse_number(trim(s.substr(pos, next == std::string_view::npos ? s.npos : next - pos)));
    value = op == '*' ? value * f : value / f;
    if (next == std::string_view::npos) break;
    op = s[next];
    pos = next + 1;
  }
  if (!std::isfinite(value)) throw ConfigError("value is not finite");
  return sign * value;
}

long long parse_integer(std::string_view text) {
  const std::string_view s = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError("not an integer: '" + std::string(s) + "'");
  return v;
}

int parse_int(std::string_view text) {
  const long long v = parse_integer(text);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError("integer out of range");
  return static_cast<int>(v);
}

std::uint64_t parse_u64(std::string_view text) {
  const long long v = parse_integer(text);
  if (v < 0) throw ConfigError("expected a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(std::string_view text) {
  const std::string_view s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("not a boolean: '" + std::string(s) + "'");
}

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  std::string_view s = trim(text);
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(parse_int(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

VelocitySetup parse_setup(std::string_view text) {
  const std::string_view s = trim(text);
  if (s == "known") return VelocitySetup::Known;
  if (s == "unknown") return VelocitySetup::Unknown;
  if (s == "both") return VelocitySetup::Both;
  throw ConfigError("velocity_setup must be known, unknown or both");
}

std::string_view setup_name(VelocitySetup s) {
  switch (s) {
    case VelocitySetup::Known: return "known";
    case VelocitySetup::Unknown: return "unknown";
    case VelocitySetup::Both: return "both";
  }
  return "both";
}

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table{
      {"seed", [](ExperimentConfig& c, std::string_view v) { c.seed = parse_u64(v); }},
      {"out", [](ExperimentConfig& c, std::string_view v) { c.out_dir = std::string(trim(v)); }},
      {"batch_size", [](ExperimentConfig& c, std::string_view v) { c.train.batch_size = parse_int(v); }},
      {"lr", [](ExperimentConfig& c, std::string_view v) { c.train.lr = parse_real(v); }},
      {"inner_min_iters", [](ExperimentConfig& c, std::string_view v) { c.train.inner_min_iters = parse_int(v); }},
      {"outer_max_iters", [](ExperimentConfig& c, std::string_view v) { c.train.outer_max_iters = parse_int(v); }},
      {"block_count", [](ExperimentConfig& c, std::string_view v) { c.train.block_count = parse_int(v); }},
      {"block_width", [](ExperimentConfig& c, std::string_view v) { c.train.block_width = parse_int(v); }},
      {"log_every", [](ExperimentConfig& c, std::string_view v) { c.train.log_every = parse_int(v); }},
      {"final_lr_ratio", [](ExperimentConfig& c, std::string_view v) { c.train.final_lr_ratio = parse_real(v); }},
      {"anneal_start", [](ExperimentConfig& c, std::string_view v) { c.train.anneal_start = parse_real(v); }},
      {"train_samples", [](ExperimentConfig& c, std::string_view v) { c.train_samples = parse_int(v); }},
      {"eval_samples", [](ExperimentConfig& c, std::string_view v) { c.eval_samples = parse_int(v); }},
      {"kde_kappa", [](ExperimentConfig& c, std::string_view v) { c.kde_kappa = parse_real(v); }},
      {"kde_grid", [](ExperimentConfig& c, std::string_view v) { c.kde_grid = parse_int(v); }},
      {"mixture_stddev", [](ExperimentConfig& c, std::string_view v) { c.mixture_stddev = parse_real(v); }},
      {"ell", [](ExperimentConfig& c, std::string_view v) { c.ell = parse_real(v); }},
      {"obs_noise", [](ExperimentConfig& c, std::string_view v) { c.obs_noise = parse_real(v); }},
      {"velocity", [](ExperimentConfig& c, std::string_view v) { c.velocity = parse_real(v); }},
      {"process_noise", [](ExperimentConfig& c, std::string_view v) { c.process_noise = parse_real(v); }},
      {"initial_truth", [](ExperimentConfig& c, std::string_view v) { c.initial_truth = parse_real(v); }},
      {"velocity_setup", [](ExperimentConfig& c, std::string_view v) { c.velocity_setup = parse_setup(v); }},
      {"particles", [](ExperimentConfig& c, std::string_view v) { c.particles = parse_int(v); }},
      {"steps", [](ExperimentConfig& c, std::string_view v) { c.steps = parse_int(v); }},
      {"warm_outer_iters", [](ExperimentConfig& c, std::string_view v) { c.warm_outer_iters = parse_int(v); }},
      {"seeds",
       [](ExperimentConfig& c, std::string_view v) {
         const auto [a, b] = parse_seed_range(v);
         c.seed_first = a;
         c.seed_last = b;
       }},
      {"snapshot_steps", [](ExperimentConfig& c, std::string_view v) { c.snapshot_steps = parse_int_list(v); }},
      {"truth_theta", [](ExperimentConfig& c, std::string_view v) { c.truth_theta = parse_real(v); }},
      {"truth_x", [](ExperimentConfig& c, std::string_view v) { c.truth_x = parse_real(v); }},
      {"noiseless_observation",
       [](ExperimentConfig& c, std::string_view v) { c.noiseless_observation = parse_bool(v); }},
      {"histogram_bins", [](ExperimentConfig& c, std::string_view v) { c.histogram_bins = parse_int(v); }},
  };
  return table;
}

struct Entry {
  int line;
  std::string key;
  std::string value;
};

}  // namespace

std::string_view experiment_name(ExperimentId id) {
  for (const auto& [k, name] : kNames)
    if (k == id) return name;
  return "unknown";
}

ExperimentId experiment_from_name(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

ManifoldId experiment_manifold(ExperimentId id) {
  switch (id) {
    case ExperimentId::OtSE2:
    case ExperimentId::FilterSE2: return ManifoldId::SE2;
    case ExperimentId::OtSO3:
    case ExperimentId::FilterSO3: return ManifoldId::SO3;
    default: return ManifoldId::Circle;
  }
}

bool is_transport_experiment(ExperimentId id) {
  return id == ExperimentId::OtS1Gaussians || id == ExperimentId::OtS1Mixture || id == ExperimentId::OtSE2 ||
         id == ExperimentId::OtSO3;
}

ExperimentConfig default_config(ExperimentId id) {
  ExperimentConfig c;
  c.experiment = id;
  if (experiment_manifold(id) == ManifoldId::Circle) {
    c.train.block_count = 1;
    c.train.outer_max_iters = 3000;
  } else {
    c.train.block_count = 2;
    c.train.outer_max_iters = 8000;
  }
  // A decaying learning rate tail cuts the minibatch noise a constant rate leaves
  // in the map. The split antipodal map and single-observation S1 posteriors
  // also need a wider net.
  if (id != ExperimentId::FilterS1Dynamic) c.train.final_lr_ratio = 0.1;
  if (id == ExperimentId::OtS1Gaussians) c.train.block_count = 2;
  if (id == ExperimentId::FilterS1Static) {
    c.train.block_count = 2;
    c.train.outer_max_iters = 6000;
  }
  if (id == ExperimentId::FilterSO3) c.truth_theta = kPi / 4;
  return c;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(std::string_view text) {
  const std::string_view s = trim(text);
  const auto dots = s.find("..");
  if (dots == std::string_view::npos) {
    const std::uint64_t v = parse_u64(s);
    return {v, v};
  }
  const std::uint64_t a = parse_u64(s.substr(0, dots));
  const std::uint64_t b = parse_u64(s.substr(dots + 2));
  if (a > b) throw ConfigError("seed range " + std::string(s) + " is empty");
  return {a, b};
}

ExperimentConfig parse_config(std::string_view text, std::optional<ExperimentId> experiment) {
  std::vector<Entry> entries;
  std::optional<ExperimentId> from_text;
  int text_line = 0;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected `key = value`");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) fail(line_no, "missing key");
    if (value.empty()) fail(line_no, "missing value for '" + key + "'");
    if (key == "experiment") {
      try {
        from_text = experiment_from_name(value);
      } catch (const ConfigError& e) {
        fail(line_no, e.what());
      }
      text_line = line_no;
      continue;
    }
    if (!setters().contains(key)) fail(line_no, "unknown key '" + key + "'");
    entries.push_back({line_no, key, value});
  }
  if (experiment && from_text && *experiment != *from_text)
    fail(text_line, "experiment '" + std::string(experiment_name(*from_text)) + "' conflicts with '" +
                        std::string(experiment_name(*experiment)) + "'");
  const std::optional<ExperimentId> id = experiment ? experiment : from_text;
  if (!id) throw ConfigError("line " + std::to_string(line_no) + ": missing experiment id");

  ExperimentConfig cfg = default_config(*id);
  for (const auto& e : entries) {
    try {
      setters().at(e.key)(cfg, e.value);
      validate(cfg);
    } catch (const ConfigError& err) {
      fail(e.line, e.key + ": " + err.what());
    }
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentId> experiment) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), experiment);
}

void validate(const ExperimentConfig& c) {
  validate(c.train);
  if (c.train.block_count > 2) throw ConfigError("block_count must be 1 or 2");
  if (c.train_samples < c.train.batch_size) throw ConfigError("train_samples must be at least batch_size");
  if (c.eval_samples < 1 || c.eval_samples > 1000000) throw ConfigError("eval_samples must lie in [1, 1e6]");
  if (!(c.kde_kappa > 0.0)) throw ConfigError("kde_kappa must be positive");
  if (c.kde_grid < 8) throw ConfigError("kde_grid must be at least 8");
  if (!(c.mixture_stddev > 0.0)) throw ConfigError("mixture_stddev must be positive");
  if (!(c.ell * c.ell < 1.0)) throw ConfigError("ell^2 < 1 required");
  if (!(c.obs_noise > 0.0)) throw ConfigError("obs_noise must be positive");
  if (!std::isfinite(c.velocity)) throw ConfigError("velocity must be finite");
  if (!(c.process_noise >= 0.0)) throw ConfigError("process_noise must be non-negative");
  if (!std::isfinite(c.initial_truth)) throw ConfigError("initial_truth must be finite");
  if (c.particles < 2) throw ConfigError("particles must be at least 2");
  if (c.steps < 0) throw ConfigError("steps must be non-negative");
  if (c.warm_outer_iters < 1) throw ConfigError("warm_outer_iters must be positive");
  if (c.seed_first > c.seed_last) throw ConfigError("seed range is empty");
  for (int s : c.snapshot_steps)
    if (s < 0) throw ConfigError("snapshot steps must be non-negative");
  if (!std::isfinite(c.truth_theta)) throw ConfigError("truth_theta must be finite");
  if (!(c.truth_x >= -1.0 && c.truth_x <= 1.0)) throw ConfigError("truth_x must lie in [-1, 1]");
  if (c.histogram_bins < 1) throw ConfigError("histogram_bins must be positive");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json train = {{"batch_size", c.train.batch_size},       {"lr", c.train.lr},
                          {"inner_min_iters", c.train.inner_min_iters}, {"outer_max_iters", c.train.outer_max_iters},
                          {"block_count", c.train.block_count},     {"block_width", c.train.block_width},
                          {"log_every", c.train.log_every},         {"final_lr_ratio", c.train.final_lr_ratio},
                          {"anneal_start", c.train.anneal_start}};
  return {{"experiment", experiment_name(c.experiment)},
          {"seed", c.seed},
          {"out", c.out_dir.string()},
          {"train", train},
          {"train_samples", c.train_samples},
          {"eval_samples", c.eval_samples},
          {"kde_kappa", c.kde_kappa},
          {"kde_grid", c.kde_grid},
          {"mixture_stddev", c.mixture_stddev},
          {"ell", c.ell},
          {"obs_noise", c.obs_noise},
          {"velocity", c.velocity},
          {"process_noise", c.process_noise},
          {"initial_truth", c.initial_truth},
          {"velocity_setup", setup_name(c.velocity_setup)},
          {"particles", c.particles},
          {"steps", c.steps},
          {"warm_outer_iters", c.warm_outer_iters},
          {"seeds", {c.seed_first, c.seed_last}},
          {"snapshot_steps", c.snapshot_steps},
          {"truth_theta", c.truth_theta},
          {"truth_x", c.truth_x},
          {"noiseless_observation", c.noiseless_observation},
          {"histogram_bins", c.histogram_bins}};
}

}  // namespace manifold_ot
