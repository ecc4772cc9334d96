#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "thoughtcraft/error.hpp"
#include "thoughtcraft/game.hpp"
#include "thoughtcraft/rng.hpp"

namespace thoughtcraft {

/// One rung of the scripted-opponent ladder.
struct DifficultyProfile {
  int level = 1;
  double income_multiplier = 1.0;
  int attack_step = 128;
  int target_army_size = 1;
  bool rebuilds = false;
  int max_producers = 1;
  int army_cap = 1;
  // Probability that the script takes its turn at all; lower rungs hesitate.
  double activity = 1.0;

  bool operator==(const DifficultyProfile&) const = default;
};

/// Endpoints of the ladder. Each rung interpolates linearly between the
/// easiest and the hardest values; the defaults were tuned so that every rung
/// beats the one below it in scripted head-to-head play.
struct LadderShape {
  double attack_easy = 74, attack_hard = 74;
  double army_easy = 7.6, army_hard = 11.6;
  double activity_easy = 0.51, activity_hard = 0.74;
  double cap_easy = 1.48, cap_hard = 8.23;
  double producers_hard = 3.12;
  double income_hard = 1.4;
};

inline std::vector<DifficultyProfile> difficulty_table(int Z, const LadderShape& shape = {}) {
  if (Z < 1) throw Error(Errc::InvalidZ, "Z must be >= 1, got " + std::to_string(Z));
  auto lerp = [](double a, double b, double x) { return a + (b - a) * x; };
  auto round = [](double v) { return static_cast<int>(std::lround(v)); };
  std::vector<DifficultyProfile> table;
  table.reserve(static_cast<std::size_t>(Z));
  for (int d = 1; d <= Z; ++d) {
    const double x = Z == 1 ? 0.0 : static_cast<double>(d - 1) / (Z - 1);
    DifficultyProfile p;
    p.level = d;
    p.income_multiplier = lerp(1.0, shape.income_hard, x);
    p.attack_step = round(lerp(shape.attack_easy, shape.attack_hard, x));
    p.target_army_size = std::max(1, round(lerp(shape.army_easy, shape.army_hard, x)));
    p.rebuilds = x >= 0.5;
    p.max_producers = std::max(1, round(lerp(1.0, shape.producers_hard, x)));
    p.army_cap = std::max(0, round(lerp(shape.cap_easy, shape.cap_hard, x)));
    p.activity = lerp(shape.activity_easy, shape.activity_hard, x);
    table.push_back(p);
  }
  return table;
}

inline nlohmann::json to_json(const DifficultyProfile& p) {
  return {{"level", p.level},
          {"income_multiplier", p.income_multiplier},
          {"attack_step", p.attack_step},
          {"target_army_size", p.target_army_size},
          {"rebuilds", p.rebuilds},
          {"max_producers", p.max_producers},
          {"activity", p.activity},
          {"army_cap", p.army_cap}};
}

inline nlohmann::json to_json(const std::vector<DifficultyProfile>& table) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : table) j.push_back(to_json(p));
  return j;
}

inline DifficultyProfile difficulty_from_json(const nlohmann::json& j) {
  DifficultyProfile p;
  p.level = j.at("level").get<int>();
  p.income_multiplier = j.at("income_multiplier").get<double>();
  p.attack_step = j.at("attack_step").get<int>();
  p.target_army_size = j.at("target_army_size").get<int>();
  p.rebuilds = j.at("rebuilds").get<bool>();
  p.max_producers = j.at("max_producers").get<int>();
  p.activity = j.at("activity").get<double>();
  p.army_cap = j.at("army_cap").get<int>();
  return p;
}

/// Priority script: supply headroom, then workers, then producers, then
/// soldiers, then the attack decision. Every returned action is legal for
/// `who`; otherwise NoOp.
inline MacroAction opponent_action(const GameState& s, const Rules& rules, const DifficultyProfile& prof, Rng& rng,
                                   Player who = Player::Opponent) {
  if (s.done) throw Error(Errc::EpisodeFinished, "opponent_action on a finished episode");
  const PlayerState& me = s.player(who);
  const TechTree& tree = rules.tree();
  const ActionMask legal = legal_actions(s, rules, who);
  auto ok = [&](MacroAction a) { return legal[static_cast<std::size_t>(a)]; };
  auto queued = [&](int unit) {
    int n = 0;
    for (const auto& q : me.queue) n += q.unit == unit;
    return n;
  };

  // A single draw per call keeps the stream aligned regardless of the branch taken.
  const double roll = rng.uniform();
  if (roll >= prof.activity) return MacroAction::NoOp;

  const int supply_unit = rules.unit_for(MacroAction::BuildSupply);
  const int pending_supply = queued(supply_unit) * tree.spec(supply_unit).supply_provided;
  if (supply_free(me) + pending_supply < 2 && ok(MacroAction::BuildSupply)) return MacroAction::BuildSupply;

  const int worker = rules.worker_index();
  if (me.owned[static_cast<std::size_t>(worker)] + queued(worker) < 8 && ok(MacroAction::BuildWorker))
    return MacroAction::BuildWorker;

  const int producer = rules.unit_for(MacroAction::BuildProducer1);
  const int producers = prof.rebuilds ? me.owned[static_cast<std::size_t>(producer)] + queued(producer)
                                      : me.produced[static_cast<std::size_t>(producer)] + queued(producer);
  if (producers < prof.max_producers && ok(MacroAction::BuildProducer1)) return MacroAction::BuildProducer1;

  // With several soldier tiers available the script spreads its production.
  MacroAction soldiers[3] = {MacroAction::TrainSoldier1, MacroAction::TrainSoldier2, MacroAction::TrainSoldier3};
  int n_ok = 0;
  MacroAction options[3]{};
  for (auto a : soldiers)
    if (ok(a)) options[n_ok++] = a;
  const int army = army_count(me, rules);
  int queued_army = 0;
  for (const auto& q : me.queue) queued_army += tree.spec(q.unit).kind == UnitKind::Army;
  if (n_ok > 0 && army + queued_army < prof.army_cap) {
    const double frac = prof.activity > 0 ? roll / prof.activity : 0.0;  // reuse the draw, uniform in [0,1)
    return options[std::min(n_ok - 1, static_cast<int>(frac * n_ok))];
  }

  const bool attack_due = s.t >= prof.attack_step || army >= prof.target_army_size;
  if (!me.attacking && attack_due && ok(MacroAction::Attack)) return MacroAction::Attack;
  return MacroAction::NoOp;
}

/// Binds a ladder rung into the controller signature expected by step().
inline auto scripted_opponent(const Rules& rules, DifficultyProfile prof) {
  return [&rules, prof](const GameState& s, Rng& rng) { return opponent_action(s, rules, prof, rng); };
}

}  // namespace thoughtcraft
