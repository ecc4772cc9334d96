#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "thoughtcraft/error.hpp"
#include "thoughtcraft/techtree.hpp"

namespace thoughtcraft {

// Shared macro-action vocabulary. The ordering is part of the policy's output
// layout and must never change between the two games.
enum class MacroAction : std::uint8_t {
  NoOp,
  BuildWorker,
  BuildSupply,
  BuildProducer1,
  BuildProducer2,
  BuildTech,
  TrainSoldier1,
  TrainSoldier2,
  TrainSoldier3,
  Attack,
  Retreat,
};

inline constexpr std::size_t kNumActions = 11;

inline constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "NoOp",       "BuildWorker",   "BuildSupply",   "BuildProducer1", "BuildProducer2", "BuildTech",
    "TrainSoldier1", "TrainSoldier2", "TrainSoldier3", "Attack",      "Retreat"};

constexpr std::string_view action_name(MacroAction a) { return kActionNames[static_cast<std::size_t>(a)]; }

inline std::optional<MacroAction> action_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kNumActions; ++i)
    if (kActionNames[i] == s) return static_cast<MacroAction>(i);
  return std::nullopt;
}

/// Actions that enqueue production of a catalog entry.
constexpr bool is_production(MacroAction a) {
  return a != MacroAction::NoOp && a != MacroAction::Attack && a != MacroAction::Retreat;
}

using ActionMask = std::array<bool, kNumActions>;

enum class Fidelity : std::uint8_t { Thought, Target };

constexpr std::string_view fidelity_name(Fidelity f) { return f == Fidelity::Thought ? "thought" : "target"; }

/// Rule parameters distinguishing the cheap deterministic game from the
/// richer stochastic one. Everything here is data loaded from JSON.
struct FidelityProfile {
  Fidelity name = Fidelity::Thought;
  int max_steps = 128;
  double mineral_income_per_worker_per_step = 1.0;
  double gas_income_per_worker_per_step = 0.25;
  double bonus_damage_scale = 1.0;
  double combat_noise = 0.0;
  double income_offset = 0.0;
  double damage_offset = 0.0;
  int combat_rounds_cap = 50;
  // Economy sub-steps simulated per macro step (per-worker mining jitter).
  int ticks_per_step = 1;
  int min_difficulty = 1;
  int max_difficulty = 7;
  double starting_minerals = 50.0;
  double starting_gas = 0.0;
  int starting_workers = 8;
  std::vector<std::string> feature_schema;
  std::map<std::string, double> normalizers;
  // MacroAction name -> catalog id, for production actions.
  std::map<std::string, std::string> action_bindings;

  double effective_income_scale() const { return name == Fidelity::Target ? 1.0 + income_offset : 1.0; }
  double effective_damage_scale() const { return name == Fidelity::Target ? 1.0 + damage_offset : 1.0; }

  bool operator==(const FidelityProfile&) const = default;
};

namespace detail {

template <typename T>
T profile_get(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::ConfigInvalid, std::string("profile: missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigInvalid, std::string("profile: field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline void validate(const FidelityProfile& p) {
  auto fail = [](const std::string& m) { throw Error(Errc::ConfigInvalid, "profile: " + m); };
  if (p.max_steps < 1) fail("max_steps must be >= 1");
  if (!(p.mineral_income_per_worker_per_step > 0)) fail("mineral income must be > 0");
  if (p.gas_income_per_worker_per_step < 0) fail("gas income must be >= 0");
  if (p.bonus_damage_scale < 0) fail("bonus_damage_scale must be >= 0");
  if (p.combat_noise < 0 || p.combat_noise > 0.5) fail("combat_noise must lie in [0, 0.5]");
  if (p.name == Fidelity::Thought && p.combat_noise != 0.0) fail("thought profile must be deterministic (combat_noise = 0)");
  if (p.combat_rounds_cap < 1) fail("combat_rounds_cap must be >= 1");
  if (p.ticks_per_step < 1) fail("ticks_per_step must be >= 1");
  if (p.min_difficulty < 1 || p.max_difficulty < p.min_difficulty) fail("bad difficulty range");
  if (p.starting_minerals < 0 || p.starting_gas < 0 || p.starting_workers < 0) fail("starting resources must be >= 0");
  if (p.income_offset <= -1.0 || p.damage_offset <= -1.0) fail("offsets must be > -1");
  std::set<std::string> seen;
  for (const auto& f : p.feature_schema)
    if (!seen.insert(f).second) fail("duplicate feature '" + f + "'");
  for (const auto& [a, id] : p.action_bindings) {
    auto act = action_from_name(a);
    if (!act || !is_production(*act)) fail("action_bindings key '" + a + "' is not a production action");
  }
}

inline FidelityProfile parse_profile(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ConfigInvalid, "profile must be a JSON object");
  static const std::set<std::string> kFields = {
      "name", "max_steps", "mineral_income_per_worker_per_step", "gas_income_per_worker_per_step",
      "bonus_damage_scale", "combat_noise", "income_offset", "damage_offset", "combat_rounds_cap",
      "ticks_per_step", "min_difficulty", "max_difficulty", "starting_minerals", "starting_gas",
      "starting_workers", "feature_schema", "normalizers", "action_bindings"};
  for (const auto& [k, _] : j.items())
    if (!kFields.count(k)) throw Error(Errc::ConfigInvalid, "profile: unknown field '" + k + "'");
  using detail::profile_get;
  FidelityProfile p;
  auto name = profile_get<std::string>(j, "name");
  if (name == "thought") p.name = Fidelity::Thought;
  else if (name == "target") p.name = Fidelity::Target;
  else throw Error(Errc::ConfigInvalid, "profile: name must be 'thought' or 'target'");
  p.max_steps = profile_get<int>(j, "max_steps");
  p.mineral_income_per_worker_per_step = profile_get<double>(j, "mineral_income_per_worker_per_step");
  p.gas_income_per_worker_per_step = profile_get<double>(j, "gas_income_per_worker_per_step");
  p.bonus_damage_scale = profile_get<double>(j, "bonus_damage_scale");
  p.combat_noise = profile_get<double>(j, "combat_noise");
  p.income_offset = profile_get<double>(j, "income_offset");
  p.damage_offset = profile_get<double>(j, "damage_offset");
  p.combat_rounds_cap = profile_get<int>(j, "combat_rounds_cap");
  p.ticks_per_step = profile_get<int>(j, "ticks_per_step");
  p.min_difficulty = profile_get<int>(j, "min_difficulty");
  p.max_difficulty = profile_get<int>(j, "max_difficulty");
  p.starting_minerals = profile_get<double>(j, "starting_minerals");
  p.starting_gas = profile_get<double>(j, "starting_gas");
  p.starting_workers = profile_get<int>(j, "starting_workers");
  p.feature_schema = profile_get<std::vector<std::string>>(j, "feature_schema");
  p.normalizers = profile_get<std::map<std::string, double>>(j, "normalizers");
  p.action_bindings = profile_get<std::map<std::string, std::string>>(j, "action_bindings");
  validate(p);
  return p;
}

inline nlohmann::json to_json(const FidelityProfile& p) {
  return {{"name", fidelity_name(p.name)},
          {"max_steps", p.max_steps},
          {"mineral_income_per_worker_per_step", p.mineral_income_per_worker_per_step},
          {"gas_income_per_worker_per_step", p.gas_income_per_worker_per_step},
          {"bonus_damage_scale", p.bonus_damage_scale},
          {"combat_noise", p.combat_noise},
          {"income_offset", p.income_offset},
          {"damage_offset", p.damage_offset},
          {"combat_rounds_cap", p.combat_rounds_cap},
          {"ticks_per_step", p.ticks_per_step},
          {"min_difficulty", p.min_difficulty},
          {"max_difficulty", p.max_difficulty},
          {"starting_minerals", p.starting_minerals},
          {"starting_gas", p.starting_gas},
          {"starting_workers", p.starting_workers},
          {"feature_schema", p.feature_schema},
          {"normalizers", p.normalizers},
          {"action_bindings", p.action_bindings}};
}

inline FidelityProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileMissing, "cannot open profile '" + path.string() + "'");
  try {
    return parse_profile(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ConfigInvalid, "profile '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// Invariants that relate the two profiles to each other.
inline void validate_pair(const FidelityProfile& thought, const FidelityProfile& target) {
  if (thought.name != Fidelity::Thought || target.name != Fidelity::Target)
    throw Error(Errc::ConfigInvalid, "profile pair must be (thought, target)");
  if (thought.max_steps > target.max_steps)
    throw Error(Errc::ConfigInvalid, "thought max_steps must not exceed target max_steps");
  std::set<std::string> tgt(target.feature_schema.begin(), target.feature_schema.end());
  for (const auto& f : thought.feature_schema)
    if (!tgt.count(f)) throw Error(Errc::SchemaMismatch, "thought feature '" + f + "' missing from target schema");
  if (thought.action_bindings != target.action_bindings)
    throw Error(Errc::SchemaMismatch, "both games must bind macro actions to the same catalog entries");
}

}  // namespace thoughtcraft
