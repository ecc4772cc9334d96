#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "thoughtcraft/acrl.hpp"
#include "thoughtcraft/experiments.hpp"

#ifndef THOUGHTCRAFT_DATA_DIR
#define THOUGHTCRAFT_DATA_DIR "data"
#endif

namespace tc = thoughtcraft;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

bool is_config_error(tc::Errc e) {
  switch (e) {
    case tc::Errc::ConfigInvalid:
    case tc::Errc::FileMissing:
    case tc::Errc::MalformedRecord:
    case tc::Errc::DanglingReference:
    case tc::Errc::DependencyCycle:
    case tc::Errc::NoBase:
    case tc::Errc::MultipleBases:
    case tc::Errc::UnknownFeature:
    case tc::Errc::SchemaMismatch:
    case tc::Errc::DifficultyOutOfRange:
    case tc::Errc::InvalidCount:
      return true;
    default:
      return false;
  }
}

int cmd_run(const std::filesystem::path& config_path) {
  const tc::ExperimentConfig cfg = tc::load_experiment(config_path);
  const auto out = tc::run_experiment(cfg);
  std::cerr << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& profile_path,
                 const std::filesystem::path& catalog, int difficulty, int games, std::uint64_t seed, int Z) {
  const tc::TechTree tree = tc::load_specs(catalog);
  const tc::FidelityProfile profile = tc::load_profile(profile_path);
  if (difficulty < profile.min_difficulty || difficulty > profile.max_difficulty)
    throw tc::Error(tc::Errc::DifficultyOutOfRange, "difficulty " + std::to_string(difficulty) +
                                                        " outside the profile's range");
  const tc::PolicyNet net = tc::load_checkpoint(checkpoint);
  tc::Rules rules(tree, profile);
  tc::FeatureSchema schema(profile.feature_schema, rules);
  const auto ladder = tc::difficulty_table(Z);
  const tc::EvalResult r =
      tc::evaluate(net, rules, schema, tc::rung_for(ladder, difficulty), difficulty, games, seed);
  nlohmann::json j = {{"checkpoint", checkpoint.string()},
                      {"profile", std::string(tc::fidelity_name(profile.name))},
                      {"difficulty", difficulty},
                      {"games", games},
                      {"seed", seed},
                      {"win_rate", r.win_rate},
                      {"wins", r.wins},
                      {"losses", r.losses},
                      {"draws", r.draws},
                      {"mean_episode_length", r.mean_episode_length}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b, double threshold,
                const std::string& out) {
  const nlohmann::json rep = tc::compare_runs(a, b, threshold);
  if (out.empty()) {
    std::cout << rep.dump(2) << "\n";
  } else {
    std::ofstream f(out);
    if (!f) throw tc::Error(tc::Errc::EnvironmentFailure, "cannot write '" + out + "'");
    f << rep.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thoughtcraft: curriculum training in a cheap strategy game, transfer to a richer one"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment described by a JSON config");
  std::string config_path;
  run->add_option("config", config_path, "experiment config")->required();

  auto* eval = app.add_subcommand("evaluate", "greedy evaluation of a checkpoint");
  std::string checkpoint, profile, catalog = std::string(THOUGHTCRAFT_DATA_DIR) + "/catalog.json";
  int difficulty = 7, games = 100, Z = 7;
  std::uint64_t seed = 0;
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--profile", profile)->required();
  eval->add_option("--difficulty", difficulty)->required();
  eval->add_option("--games", games)->capture_default_str();
  eval->add_option("--seed", seed)->capture_default_str();
  eval->add_option("--catalog", catalog)->capture_default_str();
  eval->add_option("--ladder-size", Z, "number of rungs in the opponent ladder")->capture_default_str();

  auto* cmp = app.add_subcommand("compare", "time-to-threshold comparison of two run directories");
  std::string dir_a, dir_b, out;
  double threshold = 0.9;
  cmp->add_option("dirA", dir_a)->required();
  cmp->add_option("dirB", dir_b)->required();
  cmp->add_option("--threshold", threshold)->capture_default_str();
  cmp->add_option("-o,--output", out, "write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*eval) return cmd_evaluate(checkpoint, profile, catalog, difficulty, games, seed, Z);
    if (*cmp) return cmd_compare(dir_a, dir_b, threshold, out);
  } catch (const tc::Error& e) {
    std::cerr << "thoughtcraft: " << e.what() << "\n";
    return is_config_error(e.code()) ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "thoughtcraft: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
