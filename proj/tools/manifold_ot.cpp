// manifold-ot: experiment runner and self-test entry point.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <thread>

#include "manifold_ot/config.hpp"
#include "manifold_ot/errors.hpp"
#include "manifold_ot/experiments.hpp"
#include "oracles.hpp"

namespace mot = manifold_ot;

namespace {

int report(const mot::ExperimentOutcome& o, const std::filesystem::path& dir) {
  if (o.exit_code != mot::kExitOk) {
    std::cerr << dir.string() << ": " << o.message << '\n';
  } else {
    std::cout << dir.string() << ": wrote " << o.files.size() << " files + manifest.json\n";
    std::cout << "  metrics " << o.metrics.dump() << '\n';
  }
  return o.exit_code;
}

int run(const std::string& experiment, const std::optional<std::string>& config_file,
        const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out,
        std::optional<std::string> seeds) {
  try {
    const mot::ExperimentId id = mot::experiment_from_name(experiment);
    mot::ExperimentConfig cfg = config_file ? mot::load_config(*config_file, id) : mot::parse_config("", id);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out_dir = *out;
    if (seeds && id == mot::ExperimentId::FilterS1Dynamic) {
      // Filter seeds are the independent simulations averaged inside one run.
      std::tie(cfg.seed_first, cfg.seed_last) = mot::parse_seed_range(*seeds);
      seeds.reset();
    }
    mot::validate(cfg);
    if (!seeds || id == mot::ExperimentId::FilterS1Dynamic) return report(mot::run_experiment(cfg), cfg.out_dir);

    const auto [first, last] = mot::parse_seed_range(*seeds);
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    int status = mot::kExitOk;
    const auto outcomes = mot::run_experiment_seeds(cfg, first, last, workers);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const int s = report(outcomes[i], cfg.out_dir / ("seed-" + std::to_string(first + i)));
      if (status == mot::kExitOk) status = s;
    }
    return status;
  } catch (const mot::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return mot::kExitConfigError;
  }
}

int selftest() {
  mot::Rng rng(20240601);
  int failures = 0;
  auto show = [&](const std::vector<mot::oracle::CheckResult>& results) {
    for (const auto& r : results) {
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
      failures += r.passed ? 0 : 1;
    }
  };
  show(mot::oracle::geometry_suite(1000, rng));
  show(mot::oracle::gradient_suite(100, rng));
  show(mot::oracle::evaluation_suite(rng));
  std::cout << (failures == 0 ? "selftest passed\n" : "selftest failed\n");
  return failures == 0 ? mot::kExitOk : mot::kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural optimal transport and filtering on S1, SE(2) and SO(3)"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  std::string experiment;
  std::optional<std::string> config_file, out, seeds;
  std::optional<std::uint64_t> seed;
  run_cmd->add_option("experiment", experiment,
                      "ot-s1-gaussians | ot-s1-mixture | ot-se2 | ot-so3 | filter-s1-static | "
                      "filter-s1-dynamic | filter-se2 | filter-so3")
      ->required();
  run_cmd->add_option("--config", config_file, "key = value configuration file");
  run_cmd->add_option("--seed", seed, "base seed");
  run_cmd->add_option("--out", out, "output directory");
  run_cmd->add_option("--seeds", seeds, "seed range A..B (filter seeds for filter-s1-dynamic, else one run per seed)");

  app.add_subcommand("selftest", "Run the oracle and invariant suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mot::kExitConfigError;
  }
  if (*run_cmd) return run(experiment, config_file, seed, out, seeds);
  return selftest();
}
