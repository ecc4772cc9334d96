#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "thoughtcraft/error.hpp"
#include "thoughtcraft/profile.hpp"
#include "thoughtcraft/rng.hpp"
#include "thoughtcraft/techtree.hpp"

namespace thoughtcraft {

enum class Player : std::uint8_t { Agent = 0, Opponent = 1 };
enum class Winner : std::uint8_t { None, Agent, Opponent };

constexpr Player other(Player p) { return p == Player::Agent ? Player::Opponent : Player::Agent; }

struct QueueEntry {
  int unit = 0;  // catalog index
  int steps_remaining = 1;
  bool operator==(const QueueEntry&) const = default;
};

struct PlayerState {
  double minerals = 0;
  double gas = 0;
  int supply_used = 0;
  int supply_cap = 0;
  Counts owned;
  Counts produced;  // cumulative completions, used by scripts that do not rebuild
  // hp of the single partially damaged unit per catalog entry (0 = none damaged)
  std::vector<int> wounded_hp;
  std::vector<QueueEntry> queue;
  int base_hp = 0;
  bool attacking = false;
  double income_multiplier = 1.0;
  int illegal_actions = 0;

  bool operator==(const PlayerState&) const = default;
};

struct GameState {
  std::array<PlayerState, 2> players;
  int t = 0;
  int max_steps = 0;
  int difficulty = 1;
  Rng rng;
  bool done = false;
  Winner winner = Winner::None;

  PlayerState& player(Player p) { return players[static_cast<std::size_t>(p)]; }
  const PlayerState& player(Player p) const { return players[static_cast<std::size_t>(p)]; }

  bool operator==(const GameState&) const = default;
};

/// A tech tree, a fidelity profile and the lookups derived from them. The
/// engine functions take this bundle so that per-step code never touches
/// strings.
class Rules {
 public:
  Rules(const TechTree& tree, FidelityProfile profile) : tree_(&tree), profile_(std::move(profile)) {
    validate(profile_);
    bindings_.fill(-1);
    for (const auto& [name, id] : profile_.action_bindings) {
      auto a = action_from_name(name);
      bindings_[static_cast<std::size_t>(*a)] = tree.index_of(id);
    }
    for (std::size_t a = 0; a < kNumActions; ++a)
      if (is_production(static_cast<MacroAction>(a)) && bindings_[a] < 0)
        throw Error(Errc::ConfigInvalid, "no catalog binding for action " + std::string(kActionNames[a]));
    worker_ = bindings_[static_cast<std::size_t>(MacroAction::BuildWorker)];
    for (std::size_t i = 0; i < tree.size(); ++i) {
      switch (tree.spec(static_cast<int>(i)).kind) {
        case UnitKind::Army: army_.push_back(static_cast<int>(i)); break;
        case UnitKind::Building:
        case UnitKind::Supply: structures_.push_back(static_cast<int>(i)); break;
        default: break;
      }
    }
  }

  const TechTree& tree() const { return *tree_; }
  const FidelityProfile& profile() const { return profile_; }
  /// Catalog index produced by a production action, -1 otherwise.
  int unit_for(MacroAction a) const { return bindings_[static_cast<std::size_t>(a)]; }
  int worker_index() const { return worker_; }
  const std::vector<int>& army_units() const { return army_; }
  const std::vector<int>& structure_units() const { return structures_; }

 private:
  const TechTree* tree_;
  FidelityProfile profile_;
  std::array<int, kNumActions> bindings_{};
  int worker_ = -1;
  std::vector<int> army_;
  std::vector<int> structures_;
};

// ---------------------------------------------------------------------------
// Small queries

inline int army_count(const PlayerState& p, const Rules& rules) {
  int n = 0;
  for (int u : rules.army_units()) n += p.owned[static_cast<std::size_t>(u)];
  return n;
}

inline int worker_count(const PlayerState& p, const Rules& rules) {
  return p.owned[static_cast<std::size_t>(rules.worker_index())];
}

inline int supply_free(const PlayerState& p) { return p.supply_cap - p.supply_used; }

// ---------------------------------------------------------------------------
// reset

inline GameState reset(const Rules& rules, int difficulty, std::uint64_t seed) {
  const auto& prof = rules.profile();
  const auto& tree = rules.tree();
  if (difficulty < prof.min_difficulty || difficulty > prof.max_difficulty)
    throw Error(Errc::DifficultyOutOfRange, "difficulty " + std::to_string(difficulty) + " outside [" +
                                                std::to_string(prof.min_difficulty) + ", " +
                                                std::to_string(prof.max_difficulty) + "]");
  GameState s;
  s.t = 0;
  s.max_steps = prof.max_steps;
  s.difficulty = difficulty;
  s.rng = Rng(mix_seed(mix_seed(seed, hash_string(fidelity_name(prof.name))), static_cast<std::uint64_t>(difficulty)));
  const int base = tree.base_index();
  const int worker = rules.worker_index();
  for (auto& p : s.players) {
    p.minerals = prof.starting_minerals;
    p.gas = prof.starting_gas;
    p.owned = tree.empty_counts();
    p.owned[static_cast<std::size_t>(base)] = 1;
    p.owned[static_cast<std::size_t>(worker)] = prof.starting_workers;
    p.produced = tree.empty_counts();
    p.wounded_hp.assign(tree.size(), 0);
    p.base_hp = tree.spec(base).hp;
    p.supply_cap = tree.spec(base).supply_provided;
    p.supply_used = prof.starting_workers * tree.spec(worker).supply_cost;
  }
  return s;
}

// ---------------------------------------------------------------------------
// legality

inline ActionMask legal_actions(const GameState& s, const Rules& rules, Player who = Player::Agent) {
  if (s.done) throw Error(Errc::EpisodeFinished, "legal_actions on a finished episode");
  const PlayerState& p = s.player(who);
  ActionMask mask{};
  mask[static_cast<std::size_t>(MacroAction::NoOp)] = true;
  const int free = supply_free(p);
  for (std::size_t a = 0; a < kNumActions; ++a) {
    auto act = static_cast<MacroAction>(a);
    if (!is_production(act)) continue;
    mask[a] = buildable(rules.tree(), p.owned, p.minerals, p.gas, free, rules.unit_for(act)).ok;
  }
  mask[static_cast<std::size_t>(MacroAction::Attack)] = army_count(p, rules) >= 1;
  mask[static_cast<std::size_t>(MacroAction::Retreat)] = p.attacking;
  return mask;
}

/// Applies one macro action for `who`. Returns false (and counts it) when the
/// action was illegal and therefore treated as NoOp.
inline bool apply_action(GameState& s, const Rules& rules, Player who, MacroAction a) {
  PlayerState& p = s.player(who);
  if (a == MacroAction::NoOp) return true;
  if (a == MacroAction::Attack) {
    if (army_count(p, rules) < 1) {
      ++p.illegal_actions;
      return false;
    }
    p.attacking = true;
    return true;
  }
  if (a == MacroAction::Retreat) {
    if (!p.attacking) {
      ++p.illegal_actions;
      return false;
    }
    p.attacking = false;
    return true;
  }
  const int unit = rules.unit_for(a);
  if (!buildable(rules.tree(), p.owned, p.minerals, p.gas, supply_free(p), unit)) {
    ++p.illegal_actions;
    return false;
  }
  const UnitSpec& spec = rules.tree().spec(unit);
  p.minerals -= spec.mineral_cost;
  p.gas -= spec.gas_cost;
  p.supply_used += spec.supply_cost;
  p.queue.push_back({unit, spec.build_time});
  return true;
}

// ---------------------------------------------------------------------------
// economy

namespace detail {

inline void economy_tick_player(PlayerState& p, const Rules& rules, Rng& rng) {
  const auto& prof = rules.profile();
  const double scale = prof.effective_income_scale() * p.income_multiplier;
  const int workers = worker_count(p, rules);
  if (prof.ticks_per_step == 1 || prof.combat_noise == 0.0) {
    p.minerals += workers * prof.mineral_income_per_worker_per_step * scale;
    p.gas += workers * prof.gas_income_per_worker_per_step * scale;
  } else {
    // Each worker's yield per sub-step jitters uniformly in [1-sigma, 1+sigma];
    // the expected per-step income matches the deterministic branch.
    const double sigma = prof.combat_noise;
    const double per_tick = 1.0 / prof.ticks_per_step;
    double yield = 0;
    for (int tick = 0; tick < prof.ticks_per_step; ++tick)
      for (int w = 0; w < workers; ++w) yield += per_tick * rng.uniform(1.0 - sigma, 1.0 + sigma);
    p.minerals += yield * prof.mineral_income_per_worker_per_step * scale;
    p.gas += yield * prof.gas_income_per_worker_per_step * scale;
  }

  const TechTree& tree = rules.tree();
  std::size_t keep = 0;
  for (std::size_t i = 0; i < p.queue.size(); ++i) {
    QueueEntry e = p.queue[i];
    if (--e.steps_remaining <= 0) {
      const UnitSpec& spec = tree.spec(e.unit);
      ++p.owned[static_cast<std::size_t>(e.unit)];
      ++p.produced[static_cast<std::size_t>(e.unit)];
      p.supply_cap += spec.supply_provided;
    } else {
      p.queue[keep++] = e;
    }
  }
  p.queue.resize(keep);
}

}  // namespace detail

/// Income for both players from owned workers (units still in production do
/// not mine), then production progress; completed entries join `owned`.
inline void economy_tick(GameState& s, const Rules& rules) {
  for (auto& p : s.players) detail::economy_tick_player(p, rules, s.rng);
}

// ---------------------------------------------------------------------------
// combat

struct CombatUnit {
  int unit = 0;  // catalog index
  int hp = 1;
  bool operator==(const CombatUnit&) const = default;
};

struct CombatResult {
  std::vector<CombatUnit> attackers;
  std::vector<CombatUnit> defenders;
  int surplus_base_damage = 0;
  int rounds = 0;
};

namespace detail {

constexpr int kind_priority(UnitKind k) {
  switch (k) {
    case UnitKind::Army: return 0;
    case UnitKind::Worker: return 1;
    case UnitKind::Building:
    case UnitKind::Supply: return 2;
    case UnitKind::Base: return 3;
  }
  return 4;
}

/// Stable ordering: army, then workers, then structures; catalog order inside a class.
inline void sort_by_priority(std::vector<CombatUnit>& units, const TechTree& tree) {
  std::stable_sort(units.begin(), units.end(), [&](const CombatUnit& a, const CombatUnit& b) {
    int pa = kind_priority(tree.spec(a.unit).kind), pb = kind_priority(tree.spec(b.unit).kind);
    return pa != pb ? pa < pb : a.unit < b.unit;
  });
}

inline int hit_damage(const UnitSpec& attacker, UnitKind target_kind, int target_armor, const FidelityProfile& prof,
                      Rng& rng) {
  double raw = attacker.attack + attacker.bonus_against(target_kind) * prof.bonus_damage_scale - target_armor;
  raw = std::max(1.0, raw) * prof.effective_damage_scale();
  if (prof.combat_noise > 0) raw *= rng.uniform(1.0 - prof.combat_noise, 1.0 + prof.combat_noise);
  return std::max(1, static_cast<int>(std::llround(raw)));
}

inline bool has_army(const std::vector<CombatUnit>& units, const TechTree& tree) {
  for (const auto& u : units)
    if (u.hp > 0 && tree.spec(u.unit).kind == UnitKind::Army) return true;
  return false;
}

/// One side's hits for a round, drained into `targets` in order. Returns the
/// damage left over once every target is dead.
inline int deal_round(const std::vector<CombatUnit>& shooters, std::vector<CombatUnit>& targets,
                      const TechTree& tree, const FidelityProfile& prof, Rng& rng) {
  const UnitSpec& base = tree.spec(tree.base_index());
  std::size_t front = 0;
  int leftover = 0;
  for (const auto& sh : shooters) {
    const UnitSpec& spec = tree.spec(sh.unit);
    if (spec.attack <= 0) continue;  // structures do not shoot
    while (front < targets.size() && targets[front].hp <= 0) ++front;
    if (front == targets.size()) {
      leftover += hit_damage(spec, UnitKind::Base, base.armor, prof, rng);
      continue;
    }
    const UnitSpec& tspec = tree.spec(targets[front].unit);
    int dmg = hit_damage(spec, tspec.kind, tspec.armor, prof, rng);
    // Overflow from a kill carries on to the next unit in priority order.
    while (dmg > 0 && front < targets.size()) {
      int take = std::min(dmg, targets[front].hp);
      targets[front].hp -= take;
      dmg -= take;
      if (targets[front].hp <= 0) ++front;
    }
    leftover += dmg;
  }
  return leftover;
}

}  // namespace detail

/// Simultaneous-round battle. Attackers are the attacking side's army; the
/// defender list may contain any non-base units. Both lists are drained in
/// priority order army -> worker -> structure. Units killed in a round still
/// fire in that round.
inline CombatResult combat_resolve(std::vector<CombatUnit> attackers, std::vector<CombatUnit> defenders,
                                   const TechTree& tree, const FidelityProfile& prof, Rng& rng) {
  for (const auto& u : attackers)
    if (u.unit < 0 || static_cast<std::size_t>(u.unit) >= tree.size())
      throw Error(Errc::UnknownId, "combat unit index out of range");
  for (const auto& u : defenders)
    if (u.unit < 0 || static_cast<std::size_t>(u.unit) >= tree.size())
      throw Error(Errc::UnknownId, "combat unit index out of range");
  detail::sort_by_priority(attackers, tree);
  detail::sort_by_priority(defenders, tree);

  CombatResult out;
  int leftover = 0;
  while (out.rounds < prof.combat_rounds_cap && detail::has_army(attackers, tree)) {
    // Both sides fire from the round-start snapshot.
    const std::vector<CombatUnit> a_snapshot = attackers;
    const std::vector<CombatUnit> d_snapshot = defenders;
    leftover = detail::deal_round(a_snapshot, defenders, tree, prof, rng);
    detail::deal_round(d_snapshot, attackers, tree, prof, rng);
    ++out.rounds;
    std::erase_if(attackers, [](const CombatUnit& u) { return u.hp <= 0; });
    std::erase_if(defenders, [](const CombatUnit& u) { return u.hp <= 0; });
    if (!detail::has_army(defenders, tree) || !detail::has_army(attackers, tree)) break;
  }
  if (out.rounds > 0 && !detail::has_army(defenders, tree)) out.surplus_base_damage = leftover;
  out.attackers = std::move(attackers);
  out.defenders = std::move(defenders);
  return out;
}

// ---------------------------------------------------------------------------
// rosters: PlayerState <-> combat unit lists

namespace detail {

inline void append_units(std::vector<CombatUnit>& out, const PlayerState& p, const TechTree& tree, int unit) {
  const int n = p.owned[static_cast<std::size_t>(unit)];
  if (n <= 0) return;
  const int full = tree.spec(unit).hp;
  const int wounded = p.wounded_hp[static_cast<std::size_t>(unit)];
  out.push_back({unit, wounded > 0 ? wounded : full});
  for (int k = 1; k < n; ++k) out.push_back({unit, full});
}

inline std::vector<CombatUnit> army_roster(const PlayerState& p, const Rules& rules) {
  std::vector<CombatUnit> out;
  for (int u : rules.army_units()) append_units(out, p, rules.tree(), u);
  return out;
}

/// Everything that stands in an attacker's way at home: army, workers and
/// production buildings. Supply structures and the base are not targetable.
inline std::vector<CombatUnit> home_roster(const PlayerState& p, const Rules& rules) {
  std::vector<CombatUnit> out = army_roster(p, rules);
  append_units(out, p, rules.tree(), rules.worker_index());
  for (int u : rules.structure_units())
    if (rules.tree().spec(u).kind == UnitKind::Building) append_units(out, p, rules.tree(), u);
  return out;
}

/// Writes combat survivors back. Only catalog entries that took part
/// (`engaged`) are touched.
inline void apply_survivors(PlayerState& p, const Rules& rules, const std::vector<CombatUnit>& engaged_before,
                            const std::vector<CombatUnit>& survivors) {
  const TechTree& tree = rules.tree();
  std::vector<int> before(tree.size(), 0), after(tree.size(), 0), weakest(tree.size(), 0);
  for (const auto& u : engaged_before) ++before[static_cast<std::size_t>(u.unit)];
  for (const auto& u : survivors) {
    auto i = static_cast<std::size_t>(u.unit);
    ++after[i];
    if (u.hp < tree.spec(u.unit).hp && (weakest[i] == 0 || u.hp < weakest[i])) weakest[i] = u.hp;
  }
  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (before[i] == 0) continue;
    const int dead = before[i] - after[i];
    const UnitSpec& spec = tree.spec(static_cast<int>(i));
    p.owned[i] -= dead;
    p.supply_used -= dead * spec.supply_cost;
    p.supply_cap -= dead * spec.supply_provided;
    p.wounded_hp[i] = weakest[i];
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// step

struct StepResult {
  double reward = 0;
  bool done = false;
  bool agent_action_legal = true;
};

/// Controller for the scripted side: sees the state and draws any randomness
/// from the state's generator.
using OpponentController = std::function<MacroAction(const GameState&, Rng&)>;

namespace detail {

inline void resolve_engagements(GameState& s, const Rules& rules) {
  PlayerState& agent = s.player(Player::Agent);
  PlayerState& opp = s.player(Player::Opponent);
  if (!agent.attacking && !opp.attacking) return;
  const TechTree& tree = rules.tree();

  auto run = [&](PlayerState& atk, PlayerState& def, std::vector<CombatUnit> def_roster) {
    std::vector<CombatUnit> atk_roster = army_roster(atk, rules);
    CombatResult r = combat_resolve(atk_roster, def_roster, tree, rules.profile(), s.rng);
    apply_survivors(atk, rules, atk_roster, r.attackers);
    apply_survivors(def, rules, def_roster, r.defenders);
    def.base_hp = std::max(0, def.base_hp - r.surplus_base_damage);
  };

  if (agent.attacking && opp.attacking) {
    // The armies meet in the field; the agent's side resolves as attacker.
    run(agent, opp, army_roster(opp, rules));
  } else if (agent.attacking) {
    run(agent, opp, home_roster(opp, rules));
  } else {
    run(opp, agent, home_roster(agent, rules));
  }
  if (army_count(agent, rules) == 0) agent.attacking = false;
  if (army_count(opp, rules) == 0) opp.attacking = false;
}

}  // namespace detail

/// Advances the game by one macro step in place. Effects happen in a fixed
/// order: agent action, opponent action, economy for both players, combat,
/// terminal check.
template <typename Controller>
StepResult step(GameState& s, MacroAction agent_action, const Rules& rules, Controller&& opponent) {
  if (s.done) throw Error(Errc::EpisodeFinished, "step on a finished episode");
  StepResult out;
  out.agent_action_legal = apply_action(s, rules, Player::Agent, agent_action);
  MacroAction opp_action = opponent(static_cast<const GameState&>(s), s.rng);
  apply_action(s, rules, Player::Opponent, opp_action);
  economy_tick(s, rules);
  detail::resolve_engagements(s, rules);
  ++s.t;
  if (s.player(Player::Opponent).base_hp <= 0) {
    s.done = true;
    s.winner = Winner::Agent;
    out.reward = 1.0;
  } else if (s.player(Player::Agent).base_hp <= 0) {
    s.done = true;
    s.winner = Winner::Opponent;
    out.reward = -1.0;
  } else if (s.t >= s.max_steps) {
    s.done = true;
    s.winner = Winner::None;
  }
  out.done = s.done;
  return out;
}

// ---------------------------------------------------------------------------
// features

enum class FeatureKind : std::uint8_t {
  Minerals,
  Gas,
  SupplyUsed,
  SupplyCap,
  Owned,
  QueueLength,
  Time,
  Attacking,
  OppArmy,
  IncomeRate,
  ArmyHpFraction,
  OppBaseHpFraction,
  OwnBaseHpFraction,
  OppWorkers,
  OppBuildings,
  OppAttacking,
  QueuedArmy,
};

/// Ordered feature names compiled against a catalog and normalizer table.
/// Per-entry ownership counts are named "owned:<id>".
class FeatureSchema {
 public:
  struct Entry {
    std::string name;
    FeatureKind kind;
    int unit = -1;
    double normalizer = 1.0;
  };

  FeatureSchema() = default;

  FeatureSchema(const std::vector<std::string>& names, const Rules& rules) : rules_(&rules) {
    static const std::array<std::pair<std::string_view, FeatureKind>, 16> kNamed = {{
        {"minerals", FeatureKind::Minerals},
        {"gas", FeatureKind::Gas},
        {"supply_used", FeatureKind::SupplyUsed},
        {"supply_cap", FeatureKind::SupplyCap},
        {"queue_length", FeatureKind::QueueLength},
        {"time", FeatureKind::Time},
        {"attacking", FeatureKind::Attacking},
        {"opp_army", FeatureKind::OppArmy},
        {"income_rate", FeatureKind::IncomeRate},
        {"army_hp_fraction", FeatureKind::ArmyHpFraction},
        {"opp_base_hp_fraction", FeatureKind::OppBaseHpFraction},
        {"own_base_hp_fraction", FeatureKind::OwnBaseHpFraction},
        {"opp_workers", FeatureKind::OppWorkers},
        {"opp_buildings", FeatureKind::OppBuildings},
        {"opp_attacking", FeatureKind::OppAttacking},
        {"queued_army", FeatureKind::QueuedArmy},
    }};
    const auto& norms = rules.profile().normalizers;
    for (const auto& name : names) {
      Entry e{name, FeatureKind::Minerals, -1, 1.0};
      bool found = false;
      if (name.rfind("owned:", 0) == 0) {
        auto id = std::string_view(name).substr(6);
        if (!rules.tree().contains(id)) throw Error(Errc::UnknownFeature, "'" + name + "' names no catalog entry");
        e.kind = FeatureKind::Owned;
        e.unit = rules.tree().index_of(id);
        found = true;
      } else {
        for (const auto& [n, k] : kNamed)
          if (n == name) {
            e.kind = k;
            found = true;
          }
      }
      if (!found) throw Error(Errc::UnknownFeature, "'" + name + "'");
      auto it = norms.find(name);
      if (it != norms.end()) e.normalizer = it->second;
      if (!(e.normalizer > 0)) throw Error(Errc::ConfigInvalid, "normalizer for '" + name + "' must be > 0");
      entries_.push_back(std::move(e));
    }
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  /// Raw (unnormalized) value of one entry from the agent's point of view.
  double raw(const Entry& e, const GameState& s) const {
    const Rules& rules = *rules_;
    const PlayerState& me = s.player(Player::Agent);
    const PlayerState& opp = s.player(Player::Opponent);
    const TechTree& tree = rules.tree();
    switch (e.kind) {
      case FeatureKind::Minerals: return me.minerals;
      case FeatureKind::Gas: return me.gas;
      case FeatureKind::SupplyUsed: return me.supply_used;
      case FeatureKind::SupplyCap: return me.supply_cap;
      case FeatureKind::Owned: return me.owned[static_cast<std::size_t>(e.unit)];
      case FeatureKind::QueueLength: return static_cast<double>(me.queue.size());
      case FeatureKind::Time: return s.t;
      case FeatureKind::Attacking: return me.attacking ? 1.0 : 0.0;
      case FeatureKind::OppArmy: return army_count(opp, rules);
      case FeatureKind::IncomeRate:
        return worker_count(me, rules) * rules.profile().mineral_income_per_worker_per_step *
               rules.profile().effective_income_scale();
      case FeatureKind::ArmyHpFraction: {
        double cur = 0, full = 0;
        for (int u : rules.army_units()) {
          const int n = me.owned[static_cast<std::size_t>(u)];
          if (n == 0) continue;
          const int hp = tree.spec(u).hp;
          const int w = me.wounded_hp[static_cast<std::size_t>(u)];
          full += static_cast<double>(n) * hp;
          cur += static_cast<double>(n) * hp - (w > 0 ? hp - w : 0);
        }
        return full > 0 ? cur / full : 0.0;
      }
      case FeatureKind::OppBaseHpFraction: return static_cast<double>(opp.base_hp) / tree.spec(tree.base_index()).hp;
      case FeatureKind::OwnBaseHpFraction: return static_cast<double>(me.base_hp) / tree.spec(tree.base_index()).hp;
      case FeatureKind::OppWorkers: return worker_count(opp, rules);
      case FeatureKind::OppBuildings: {
        int n = 0;
        for (int u : rules.structure_units()) n += opp.owned[static_cast<std::size_t>(u)];
        return n;
      }
      case FeatureKind::OppAttacking: return opp.attacking ? 1.0 : 0.0;
      case FeatureKind::QueuedArmy: {
        int n = 0;
        for (const auto& q : me.queue)
          if (tree.spec(q.unit).kind == UnitKind::Army) ++n;
        return n;
      }
    }
    return 0.0;
  }

  void featurize_into(const GameState& s, std::span<double> out) const {
    if (out.size() != entries_.size()) throw Error(Errc::DimensionMismatch, "feature buffer size");
    for (std::size_t i = 0; i < entries_.size(); ++i)
      out[i] = std::clamp(raw(entries_[i], s) / entries_[i].normalizer, 0.0, 1.0);
  }

 private:
  const Rules* rules_ = nullptr;
  std::vector<Entry> entries_;
};

/// Normalized feature vector in schema order; every value lies in [0, 1].
inline std::vector<double> featurize(const GameState& s, const FeatureSchema& schema) {
  std::vector<double> out(schema.size());
  schema.featurize_into(s, out);
  return out;
}

}  // namespace thoughtcraft
