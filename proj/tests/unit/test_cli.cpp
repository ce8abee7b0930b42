#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "manifold_ot/config.hpp"
#include "manifold_ot/errors.hpp"
#include "manifold_ot/evaluation.hpp"
#include "manifold_ot/experiments.hpp"

using namespace manifold_ot;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("manifold_ot_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string error_of(std::string_view text, std::optional<ExperimentId> id = ExperimentId::OtS1Gaussians) {
  try {
    (void)parse_config(text, id);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

int cli(const std::string& args) {
  const std::string cmd = std::string(MANIFOLD_OT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Smallest budgets that still exercise every writer of an experiment.
ExperimentConfig tiny(ExperimentId id, const fs::path& out) {
  ExperimentConfig c = default_config(id);
  c.out_dir = out;
  c.seed = 7;
  c.train.outer_max_iters = 20;
  c.train_samples = 200;
  c.eval_samples = 64;
  c.particles = 64;
  c.steps = 3;
  c.warm_outer_iters = 5;
  c.seed_first = 0;
  c.seed_last = 1;
  c.snapshot_steps = {1, 3};
  return c;
}

std::vector<std::pair<std::string, std::string>> csv_files(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") out.emplace_back(e.path().filename().string(), read_file(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> column(const std::string& csv, double t) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (std::stod(line.substr(0, comma)) == t) out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace

TEST_CASE("empty config takes the defaults") {
  const ExperimentConfig c = parse_config("", ExperimentId::OtS1Gaussians);
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.lr == 1e-3);
  CHECK(c.train.inner_min_iters == 10);
  CHECK(c.train.block_count == 2);
  CHECK(c.train.outer_max_iters == 3000);
  CHECK(c.train.final_lr_ratio == 0.1);
  const ExperimentConfig mix = parse_config("", ExperimentId::OtS1Mixture);
  CHECK(mix.train.block_count == 1);
  CHECK(parse_config("", ExperimentId::FilterS1Dynamic).train.final_lr_ratio == 1.0);
  CHECK(c.train_samples == 10000);
  const ExperimentConfig so3 = parse_config("", ExperimentId::OtSO3);
  CHECK(so3.train.block_count == 2);
  CHECK(so3.train.outer_max_iters == 8000);
  CHECK(parse_config("", ExperimentId::FilterSO3).truth_theta == doctest::Approx(kPi / 4));
}

TEST_CASE("experiment names round trip") {
  for (const char* name : {"ot-s1-gaussians", "ot-s1-mixture", "ot-se2", "filter-s1-static", "filter-s1-dynamic",
                           "filter-se2", "ot-so3", "filter-so3"})
    CHECK(experiment_name(experiment_from_name(name)) == name);
  CHECK_THROWS_AS((void)experiment_from_name("ot-s2"), ConfigError);
}

TEST_CASE("values, comments and expressions") {
  const ExperimentConfig c = parse_config(
      "# transport run\n"
      "experiment = filter-s1-dynamic\n"
      "velocity = 2*pi/100   # per step\n"
      "initial_truth = -pi/4\n"
      "lr = 5e-4\n"
      "seeds = 3..5\n"
      "snapshot_steps = 1, 5, 9\n"
      "noiseless_observation = false\n"
      "velocity_setup = unknown\n"
      "out = results/run one\n",
      std::nullopt);
  CHECK(c.experiment == ExperimentId::FilterS1Dynamic);
  CHECK(c.velocity == doctest::Approx(kTwoPi / 100));
  CHECK(c.initial_truth == doctest::Approx(-kPi / 4));
  CHECK(c.train.lr == 5e-4);
  CHECK(c.seed_first == 3);
  CHECK(c.seed_last == 5);
  CHECK(c.snapshot_steps == std::vector<int>{1, 5, 9});
  CHECK_FALSE(c.noiseless_observation);
  CHECK(c.velocity_setup == VelocitySetup::Unknown);
  CHECK(c.out_dir == fs::path("results/run one"));
}

TEST_CASE("config errors carry line numbers") {
  CHECK(error_of("seed = 1\nell = 1.5\n").find("line 2") != std::string::npos);
  CHECK(error_of("ell = 1.5").find("ell") != std::string::npos);
  CHECK(error_of("\n\nbogus = 3\n").find("line 3") != std::string::npos);
  CHECK(error_of("lr = fast\n").find("line 1") != std::string::npos);
  CHECK(error_of("batch_size\n").find("line 1") != std::string::npos);
  CHECK(error_of("batch_size = 0\n").find("line 1") != std::string::npos);
  CHECK(error_of("seeds = 5..2\n").find("line 1") != std::string::npos);
  CHECK(error_of("seed = 1\n", std::nullopt).find("missing experiment id") != std::string::npos);
  CHECK_FALSE(error_of("experiment = ot-se2\n", ExperimentId::OtSO3).empty());
  CHECK(error_of("experiment = ot-se2\n", ExperimentId::OtSE2).empty());
  CHECK(error_of("final_lr_ratio = 0\n").find("line 1") != std::string::npos);
}

TEST_CASE("config echo includes every training field") {
  const auto j = to_json(parse_config("final_lr_ratio = 0.2\nanneal_start = 0.3\n", ExperimentId::OtSE2));
  CHECK(j.at("train").at("final_lr_ratio").get<double>() == 0.2);
  CHECK(j.at("train").at("anneal_start").get<double>() == 0.3);
  CHECK(j.at("experiment").get<std::string>() == "ot-se2");
}

TEST_CASE("content hash is FNV-1a") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
  CHECK(content_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("every experiment is reproducible and lists its files") {
  for (ExperimentId id : {ExperimentId::OtS1Gaussians, ExperimentId::OtS1Mixture, ExperimentId::OtSE2,
                          ExperimentId::OtSO3, ExperimentId::FilterS1Static, ExperimentId::FilterSE2,
                          ExperimentId::FilterSO3, ExperimentId::FilterS1Dynamic}) {
    const std::string name(experiment_name(id));
    INFO(name);
    const fs::path a = scratch(name + "_a"), b = scratch(name + "_b");
    const ExperimentOutcome ra = run_experiment(tiny(id, a));
    const ExperimentOutcome rb = run_experiment(tiny(id, b));
    REQUIRE(ra.exit_code == kExitOk);
    REQUIRE(rb.exit_code == kExitOk);
    const auto ca = csv_files(a), cb = csv_files(b);
    CHECK(!ca.empty());
    CHECK(ca == cb);

    const auto manifest = nlohmann::json::parse(read_file(a / "manifest.json"));
    CHECK(manifest.at("experiment").get<std::string>() == name);
    std::size_t listed_csv = 0;
    for (const auto& f : manifest.at("files")) {
      const std::string bytes = read_file(a / f.at("name").get<std::string>());
      CHECK(f.at("bytes").get<std::size_t>() == bytes.size());
      CHECK(f.at("fnv1a64").get<std::string>() == content_hash(bytes));
      if (f.at("name").get<std::string>().ends_with(".csv")) ++listed_csv;
    }
    CHECK(listed_csv == ca.size());
    if (is_transport_experiment(id)) {
      const std::string samples = read_file(a / "samples.csv");
      const std::string header = samples.substr(0, samples.find('\n'));
      switch (experiment_manifold(id)) {
        case ManifoldId::Circle: CHECK(header == "t,theta"); break;
        case ManifoldId::SE2: CHECK(header == "t,x,y,theta"); break;
        case ManifoldId::SO3: CHECK(header == "t,r11,r12,r13,r21,r22,r23,r31,r32,r33"); break;
      }
      for (double t : kTrajectoryTimes) CHECK(column(samples, t).size() == 64);
    }
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST_CASE("different seeds give different outputs") {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  ExperimentConfig ca = tiny(ExperimentId::OtS1Gaussians, a), cb = tiny(ExperimentId::OtS1Gaussians, b);
  cb.seed = 8;
  REQUIRE(run_experiment(ca).exit_code == kExitOk);
  REQUIRE(run_experiment(cb).exit_code == kExitOk);
  CHECK(read_file(a / "samples.csv") != read_file(b / "samples.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("failures map to exit codes") {
  const fs::path dir = scratch("errors");
  ExperimentConfig bad = tiny(ExperimentId::FilterS1Static, dir);
  bad.ell = 1.5;
  const ExperimentOutcome r = run_experiment(bad);
  CHECK(r.exit_code == kExitConfigError);
  CHECK(r.message.find("ell") != std::string::npos);

  ExperimentConfig diverge = tiny(ExperimentId::OtS1Gaussians, dir);
  diverge.train.lr = 1e200;
  diverge.train.outer_max_iters = 200;
  CHECK(run_experiment(diverge).exit_code == kExitNumericalError);
  fs::remove_all(dir);
}

TEST_CASE("seed fan-out writes one directory per seed") {
  const fs::path dir = scratch("fanout");
  const auto outcomes = run_experiment_seeds(tiny(ExperimentId::OtS1Gaussians, dir), 2, 4, 2);
  REQUIRE(outcomes.size() == 3);
  for (std::uint64_t s = 2; s <= 4; ++s) {
    CHECK(outcomes[s - 2].exit_code == kExitOk);
    CHECK(fs::exists(dir / ("seed-" + std::to_string(s)) / "manifest.json"));
  }
  ExperimentConfig single = tiny(ExperimentId::OtS1Gaussians, scratch("fanout_single"));
  single.seed = 3;
  REQUIRE(run_experiment(single).exit_code == kExitOk);
  CHECK(read_file(single.out_dir / "samples.csv") == read_file(dir / "seed-3" / "samples.csv"));
  fs::remove_all(dir);
  fs::remove_all(single.out_dir);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("binary");
  fs::create_directories(dir);
  const fs::path cfg = dir / "run.cfg";
  std::ofstream(cfg) << "outer_max_iters = 20\ntrain_samples = 200\neval_samples = 32\n";
  const fs::path bad = dir / "bad.cfg";
  std::ofstream(bad) << "ell = 1.5\n";
  CHECK(cli("run ot-s1-gaussians --config " + cfg.string() + " --seed 7 --out " + (dir / "ok").string()) == 0);
  CHECK(fs::exists(dir / "ok" / "manifest.json"));
  CHECK(cli("run ot-s1-gaussians --config " + cfg.string() + " --seeds 1..2 --out " + (dir / "many").string()) == 0);
  CHECK(fs::exists(dir / "many" / "seed-2" / "samples.csv"));
  CHECK(cli("run no-such-experiment") == 2);
  CHECK(cli("run filter-s1-static --config " + bad.string() + " --out " + (dir / "bad").string()) == 2);
  CHECK(cli("run ot-s1-gaussians --config " + (dir / "missing.cfg").string()) == 2);
  CHECK(cli("run ot-s1-gaussians --seeds 4..1 --out " + (dir / "x").string()) == 2);
  CHECK(cli("--bogus-flag") == 2);
  fs::remove_all(dir);
}

TEST_CASE("trajectory end points reproduce the source and target") {
  // Full default budget: the t = 0 and t = 1 sample KDEs match fresh source and target samples.
  const fs::path dir = scratch("kde");
  ExperimentConfig c = default_config(ExperimentId::OtS1Gaussians);
  c.out_dir = dir;
  c.eval_samples = 10000;
  const ExperimentOutcome r = run_experiment(c);
  REQUIRE(r.exit_code == kExitOk);
  const std::string samples = read_file(dir / "samples.csv");
  Rng rng(99);
  const auto src = eval::angles_of(sample(CircleModGaussian{0.0, 1.0}, 10000, rng));
  const auto tgt = eval::angles_of(sample(CircleModGaussian{kPi, 1.0}, 10000, rng));
  const auto k0 = eval::circular_kde(column(samples, 0.0), c.kde_kappa, c.kde_grid);
  const auto k1 = eval::circular_kde(column(samples, 1.0), c.kde_kappa, c.kde_grid);
  CHECK(eval::sup_distance(k0, eval::circular_kde(src, c.kde_kappa, c.kde_grid)) < 0.1);
  CHECK(eval::sup_distance(k1, eval::circular_kde(tgt, c.kde_kappa, c.kde_grid)) < 0.1);
  fs::remove_all(dir);
}

TEST_CASE("static circle posterior is bimodal at the quadrature modes") {
  const fs::path dir = scratch("static");
  ExperimentConfig c = default_config(ExperimentId::FilterS1Static);
  c.out_dir = dir;
  const ExperimentOutcome r = run_experiment(c);
  REQUIRE(r.exit_code == kExitOk);
  const std::string samples = read_file(dir / "samples.csv");
  const auto post = column(samples, 1.0);
  const auto kde = eval::circular_kde(post, c.kde_kappa, c.kde_grid);
  CHECK(eval::bimodality(kde));
  const ObservationModel obs{CircleWall{c.ell}, c.obs_noise};
  const auto oracle = eval::bayes_quadrature_circle(obs, Eigen::VectorXd::Constant(1, wall_distance(c.ell, c.truth_theta)));
  const auto want = eval::find_modes(oracle), got = eval::find_modes(kde);
  REQUIRE(want.size() == 2);
  REQUIRE(got.size() == 2);
  for (double w : want) {
    double best = 10.0;
    for (double g : got) best = std::min(best, std::abs(wrap_signed(g - w)));
    CHECK(best < 0.15);
  }
  fs::remove_all(dir);
}
