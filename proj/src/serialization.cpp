#include "manifold_ot/serialization.hpp"

#include <fstream>

#include "manifold_ot/errors.hpp"

namespace manifold_ot {

ManifoldId manifold_from_name(const std::string& name) {
  for (ManifoldId m : {ManifoldId::Circle, ManifoldId::SE2, ManifoldId::SO3})
    if (manifold_name(m) == name) return m;
  throw ContractError("unknown manifold '" + name + "'");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size},   {"lr", cfg.lr},
          {"inner_min_iters", cfg.inner_min_iters}, {"outer_max_iters", cfg.outer_max_iters},
          {"seed", cfg.seed},               {"block_count", cfg.block_count},
          {"block_width", cfg.block_width}, {"log_every", cfg.log_every},
          {"final_lr_ratio", cfg.final_lr_ratio}, {"anneal_start", cfg.anneal_start}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.inner_min_iters = j.at("inner_min_iters").get<int>();
  cfg.outer_max_iters = j.at("outer_max_iters").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.block_count = j.at("block_count").get<int>();
  cfg.block_width = j.at("block_width").get<int>();
  cfg.log_every = j.at("log_every").get<int>();
  cfg.final_lr_ratio = j.value("final_lr_ratio", 1.0);
  cfg.anneal_start = j.value("anneal_start", 0.5);
  return cfg;
}

std::vector<LossRecord> trace_from_json(const nlohmann::json& j) {
  std::vector<LossRecord> out;
  for (const auto& e : j) out.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
  return out;
}

nlohmann::json solution_manifest(ManifoldId m, int obs_dim, const TrainConfig& cfg,
                                 const std::vector<LossRecord>& trace) {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& r : trace) t.push_back({r.iteration, r.value});
  return {{"manifold", std::string(manifold_name(m))},
          {"obs_dim", obs_dim},
          {"config", to_json(cfg)},
          {"final_loss", trace.empty() ? 0.0 : trace.back().value},
          {"trace", t}};
}

std::vector<std::string> save_pair(const PotentialField& nets, nlohmann::json manifest,
                                   const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const std::string phi = prefix + "_potential.ckpt";
  const std::string field = prefix + "_field.ckpt";
  const std::string man = prefix + "_manifest.json";
  nn::save_checkpoint(dir / phi, nets.potential);
  nn::save_checkpoint(dir / field, nets.field);
  manifest["potential_checkpoint"] = phi;
  manifest["field_checkpoint"] = field;
  std::ofstream out(dir / man);
  if (!out) throw std::runtime_error("cannot write " + (dir / man).string());
  out << manifest.dump(2) << '\n';
  return {phi, field, man};
}

nlohmann::json load_pair(PotentialField& nets, const std::filesystem::path& dir, const std::string& prefix) {
  std::ifstream in(dir / (prefix + "_manifest.json"));
  if (!in) throw std::runtime_error("cannot open manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  nets.potential = nn::load_checkpoint(dir / manifest.at("potential_checkpoint").get<std::string>());
  nets.field = nn::load_checkpoint(dir / manifest.at("field_checkpoint").get<std::string>());
  return manifest;
}

}  // namespace manifold_ot
