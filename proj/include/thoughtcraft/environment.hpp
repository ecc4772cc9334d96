#pragma once

#include <cstdint>
#include <vector>

#include "thoughtcraft/game.hpp"
#include "thoughtcraft/opponents.hpp"

namespace thoughtcraft {

/// One game against a scripted rung: owns the state, knows the opponent.
class Match {
 public:
  Match(const Rules& rules, const DifficultyProfile& opponent, int difficulty, std::uint64_t seed)
      : rules_(&rules), opponent_(opponent), state_(reset(rules, difficulty, seed)) {
    state_.player(Player::Opponent).income_multiplier = opponent_.income_multiplier;
  }

  const GameState& state() const { return state_; }
  GameState& state() { return state_; }
  const Rules& rules() const { return *rules_; }
  bool done() const { return state_.done; }

  ActionMask legal() const { return legal_actions(state_, *rules_); }

  StepResult step(MacroAction a) {
    const Rules& rules = *rules_;
    const DifficultyProfile& opp = opponent_;
    return thoughtcraft::step(state_, a, rules,
                              [&](const GameState& s, Rng& rng) { return opponent_action(s, rules, opp, rng); });
  }

 private:
  const Rules* rules_;
  DifficultyProfile opponent_;
  GameState state_;
};

/// Ladder rung used for a difficulty on a given profile. The target game's
/// single level reuses the thought ladder's rung of the same number.
inline DifficultyProfile rung_for(const std::vector<DifficultyProfile>& table, int difficulty) {
  if (difficulty < 1 || static_cast<std::size_t>(difficulty) > table.size())
    throw Error(Errc::DifficultyOutOfRange, "no ladder rung for difficulty " + std::to_string(difficulty));
  return table[static_cast<std::size_t>(difficulty - 1)];
}

}  // namespace thoughtcraft
