#pragma once

// Shared fixtures and independent oracles. Nothing here calls the code it is
// used to check: the oracles are written from the rules with plain loops.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "thoughtcraft/environment.hpp"
#include "thoughtcraft/game.hpp"
#include "thoughtcraft/opponents.hpp"
#include "thoughtcraft/policy.hpp"
#include "thoughtcraft/ppo.hpp"
#include "thoughtcraft/profile.hpp"
#include "thoughtcraft/rng.hpp"
#include "thoughtcraft/techtree.hpp"

#ifndef THOUGHTCRAFT_DATA_DIR
#define THOUGHTCRAFT_DATA_DIR "data"
#endif

namespace tc_test {

using namespace thoughtcraft;

inline std::filesystem::path data_dir() { return THOUGHTCRAFT_DATA_DIR; }
inline std::filesystem::path catalog_path() { return data_dir() / "catalog.json"; }
inline std::filesystem::path thought_path() { return data_dir() / "thought_profile.json"; }
inline std::filesystem::path target_path() { return data_dir() / "target_profile.json"; }

struct Bundle {
  TechTree tree = load_specs(catalog_path());
  FidelityProfile thought = load_profile(thought_path());
  FidelityProfile target = load_profile(target_path());
};

inline const Bundle& bundle() {
  static const Bundle b;
  return b;
}

inline UnitSpec make_spec(std::string id, UnitKind kind, int hp = 10, int attack = 0, int armor = 0) {
  UnitSpec s;
  s.id = std::move(id);
  s.kind = kind;
  s.hp = hp;
  s.attack = attack;
  s.armor = armor;
  return s;
}

// ---------------------------------------------------------------------------
// graph oracles

/// Colour-marking DFS over raw (from -> to) edges, recursion-free.
inline bool dfs_has_cycle(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (auto [a, b] : edges) adj[static_cast<std::size_t>(a)].push_back(b);
  std::vector<int> colour(static_cast<std::size_t>(n), 0);  // 0 white, 1 grey, 2 black
  for (int s = 0; s < n; ++s) {
    if (colour[static_cast<std::size_t>(s)]) continue;
    std::vector<std::pair<int, std::size_t>> stack{{s, 0}};
    colour[static_cast<std::size_t>(s)] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& out = adj[static_cast<std::size_t>(v)];
      if (next == out.size()) {
        colour[static_cast<std::size_t>(v)] = 2;
        stack.pop_back();
        continue;
      }
      const int w = out[next++];
      if (colour[static_cast<std::size_t>(w)] == 1) return true;
      if (colour[static_cast<std::size_t>(w)] == 0) {
        colour[static_cast<std::size_t>(w)] = 1;
        stack.push_back({w, 0});
      }
    }
  }
  return false;
}

/// Ids reachable by repeatedly adding everything whose producer and
/// requirements are already present, starting from nothing.
inline std::set<std::string> closure_fixpoint(const std::vector<UnitSpec>& specs) {
  std::set<std::string> have;
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& s : specs) {
      if (have.count(s.id)) continue;
      bool ok = !s.produced_by || have.count(*s.produced_by);
      for (const auto& r : s.requires_) ok = ok && have.count(r);
      if (ok) {
        have.insert(s.id);
        grew = true;
      }
    }
  }
  return have;
}

// ---------------------------------------------------------------------------
// combat oracle
//
// Rules as stated: rounds are simultaneous, every living unit with attack > 0
// fires once per round at the first living enemy in priority order (army,
// worker, structures; catalog position within a class), damage
// max(1, attack + bonus * scale - armor), overflow from a kill continues down
// the list, damage with nothing left to hit is measured against the base and
// becomes surplus if the defender's army is gone at the end.

struct OracleUnit {
  int unit;
  int hp;
};

struct OracleBattle {
  std::vector<OracleUnit> a, d;
  int surplus = 0;
  int rounds = 0;
};

inline int oracle_class(UnitKind k) {
  if (k == UnitKind::Army) return 0;
  if (k == UnitKind::Worker) return 1;
  return 2;
}

inline OracleBattle oracle_combat(std::vector<OracleUnit> a, std::vector<OracleUnit> d, const TechTree& tree,
                                  double bonus_scale, int rounds_cap) {
  auto order = [&](std::vector<OracleUnit>& v) {
    std::vector<OracleUnit> out;
    for (int cls = 0; cls < 3; ++cls)
      for (int u = 0; u < static_cast<int>(tree.size()); ++u)
        for (const auto& x : v)
          if (x.unit == u && oracle_class(tree.spec(u).kind) == cls) out.push_back(x);
    v = out;
  };
  order(a);
  order(d);
  auto army_alive = [&](const std::vector<OracleUnit>& v) {
    for (const auto& x : v)
      if (x.hp > 0 && tree.spec(x.unit).kind == UnitKind::Army) return true;
    return false;
  };
  auto per_hit = [&](const UnitSpec& s, UnitKind k, int armor) {
    double raw = s.attack + s.bonus_vs[static_cast<std::size_t>(k)] * bonus_scale - armor;
    if (raw < 1) raw = 1;
    return static_cast<int>(std::llround(raw));
  };
  const UnitSpec& base = tree.spec(tree.base_index());
  // Returns the damage that found nothing to hit.
  auto volley = [&](const std::vector<OracleUnit>& shooters, std::vector<OracleUnit>& targets) {
    int spill = 0;
    for (const auto& sh : shooters) {
      const UnitSpec& s = tree.spec(sh.unit);
      if (s.attack == 0) continue;
      std::size_t t = 0;
      while (t < targets.size() && targets[t].hp <= 0) ++t;
      if (t == targets.size()) {
        spill += per_hit(s, UnitKind::Base, base.armor);
        continue;
      }
      int dmg = per_hit(s, tree.spec(targets[t].unit).kind, tree.spec(targets[t].unit).armor);
      for (; t < targets.size() && dmg > 0; ++t) {
        if (targets[t].hp <= 0) continue;
        const int take = std::min(dmg, targets[t].hp);
        targets[t].hp -= take;
        dmg -= take;
      }
      spill += dmg;
    }
    return spill;
  };

  OracleBattle out;
  int spill = 0;
  for (int r = 0; r < rounds_cap; ++r) {
    if (!army_alive(a)) break;
    const auto a0 = a, d0 = d;
    spill = volley(a0, d);
    volley(d0, a);
    ++out.rounds;
    std::erase_if(a, [](const OracleUnit& x) { return x.hp <= 0; });
    std::erase_if(d, [](const OracleUnit& x) { return x.hp <= 0; });
    if (!army_alive(a) || !army_alive(d)) break;
  }
  if (out.rounds > 0 && !army_alive(d)) out.surplus = spill;
  out.a = a;
  out.d = d;
  return out;
}

/// Random army of up to `max_units` non-base units.
inline std::vector<CombatUnit> random_roster(const TechTree& tree, Rng& rng, int max_units, bool army_only) {
  std::vector<int> pool;
  for (int u = 0; u < static_cast<int>(tree.size()); ++u) {
    const UnitKind k = tree.spec(u).kind;
    if (k == UnitKind::Base) continue;
    if (army_only && k != UnitKind::Army) continue;
    pool.push_back(u);
  }
  const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_units) + 1));
  std::vector<CombatUnit> out;
  for (int i = 0; i < n; ++i) {
    const int u = pool[rng.below(pool.size())];
    const int full = tree.spec(u).hp;
    out.push_back({u, 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(full)))});
  }
  return out;
}

inline std::vector<OracleUnit> to_oracle(const std::vector<CombatUnit>& v) {
  std::vector<OracleUnit> out;
  for (const auto& u : v) out.push_back({u.unit, u.hp});
  return out;
}

/// Survivors compared as sorted (unit, hp) multisets.
inline bool same_units(const std::vector<CombatUnit>& got, const std::vector<OracleUnit>& want) {
  std::vector<std::pair<int, int>> g, w;
  for (const auto& u : got) g.push_back({u.unit, u.hp});
  for (const auto& u : want) w.push_back({u.unit, u.hp});
  std::sort(g.begin(), g.end());
  std::sort(w.begin(), w.end());
  return g == w;
}

// ---------------------------------------------------------------------------
// GAE oracle: direct discounted sum of TD errors, truncated at episode ends.

inline std::vector<double> gae_bruteforce(const std::vector<double>& r, const std::vector<double>& v,
                                          const std::vector<std::uint8_t>& done, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double coef = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next_v = (k + 1 < n && !done[k]) ? v[k + 1] : 0.0;
      const double delta = r[k] + gamma * next_v - v[k];
      adv[t] += coef * delta;
      if (done[k]) break;
      coef *= gamma * lambda;
    }
  }
  return adv;
}

// ---------------------------------------------------------------------------
// forward oracle: the network written out with scalar loops over the flat
// parameter vector (row-major blocks W1, b1, W2, b2, Wp, bp, wv, bv).

struct NaiveOutput {
  std::array<double, kNumActions> probs{};
  double value = 0.0;
};

inline NaiveOutput naive_forward(const std::vector<double>& theta, int D, int H, const std::vector<double>& x,
                                 const ActionMask& mask) {
  const int A = static_cast<int>(kNumActions);
  std::size_t o = 0;
  auto take = [&](std::size_t n) {
    const double* p = theta.data() + o;
    o += n;
    return p;
  };
  const double* W1 = take(static_cast<std::size_t>(H * D));
  const double* b1 = take(static_cast<std::size_t>(H));
  const double* W2 = take(static_cast<std::size_t>(H * H));
  const double* b2 = take(static_cast<std::size_t>(H));
  const double* Wp = take(static_cast<std::size_t>(A * H));
  const double* bp = take(static_cast<std::size_t>(A));
  const double* wv = take(static_cast<std::size_t>(H));
  const double bv = *take(1);

  std::vector<double> h1(static_cast<std::size_t>(H)), h2(static_cast<std::size_t>(H));
  for (int i = 0; i < H; ++i) {
    double z = b1[i];
    for (int j = 0; j < D; ++j) z += W1[i * D + j] * x[static_cast<std::size_t>(j)];
    h1[static_cast<std::size_t>(i)] = std::tanh(z);
  }
  for (int i = 0; i < H; ++i) {
    double z = b2[i];
    for (int j = 0; j < H; ++j) z += W2[i * H + j] * h1[static_cast<std::size_t>(j)];
    h2[static_cast<std::size_t>(i)] = std::tanh(z);
  }
  NaiveOutput out;
  std::array<double, kNumActions> logit{};
  double mx = -1e300;
  for (int k = 0; k < A; ++k) {
    double z = bp[k];
    for (int j = 0; j < H; ++j) z += Wp[k * H + j] * h2[static_cast<std::size_t>(j)];
    logit[static_cast<std::size_t>(k)] = z;
    if (mask[static_cast<std::size_t>(k)]) mx = std::max(mx, z);
  }
  double zsum = 0.0;
  for (int k = 0; k < A; ++k)
    if (mask[static_cast<std::size_t>(k)]) zsum += std::exp(logit[static_cast<std::size_t>(k)] - mx);
  for (int k = 0; k < A; ++k)
    out.probs[static_cast<std::size_t>(k)] =
        mask[static_cast<std::size_t>(k)] ? std::exp(logit[static_cast<std::size_t>(k)] - mx) / zsum : 0.0;
  out.value = bv;
  for (int j = 0; j < H; ++j) out.value += wv[j] * h2[static_cast<std::size_t>(j)];
  return out;
}

inline std::vector<double> flat(const PolicyNet& net) {
  return {net.params().data(), net.params().data() + net.params().size()};
}

inline ActionMask random_mask(Rng& rng) {
  ActionMask m{};
  bool any = false;
  for (auto& b : m) any |= (b = rng.uniform() < 0.6);
  if (!any) m[rng.below(kNumActions)] = true;
  return m;
}

inline std::vector<double> random_features(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform();
  return x;
}

/// Plays a random legal agent against a ladder rung; returns every state seen.
inline std::vector<GameState> random_states(const Rules& rules, const DifficultyProfile& opp, int difficulty,
                                            std::uint64_t seed, int games) {
  std::vector<GameState> out;
  Rng pick(seed ^ 0xABCDEF);
  for (int g = 0; g < games; ++g) {
    GameState s = reset(rules, difficulty, seed + static_cast<std::uint64_t>(g));
    s.player(Player::Opponent).income_multiplier = opp.income_multiplier;
    while (!s.done) {
      out.push_back(s);
      const ActionMask m = legal_actions(s, rules);
      std::vector<int> legal;
      for (std::size_t a = 0; a < kNumActions; ++a)
        if (m[a]) legal.push_back(static_cast<int>(a));
      const auto a = static_cast<MacroAction>(legal[pick.below(legal.size())]);
      step(s, a, rules, [&](const GameState& st, Rng& rng) { return opponent_action(st, rules, opp, rng); });
    }
  }
  return out;
}

/// Games out of `games` that rung d+1 wins against rung d, sides alternating.
inline int ladder_duel(const Rules& rules, const std::vector<DifficultyProfile>& table, int d, int games) {
  int wins = 0;
  for (int g = 0; g < games; ++g) {
    const bool hi_is_agent = g % 2 == 0;
    const DifficultyProfile& hi = table[static_cast<std::size_t>(d)];
    const DifficultyProfile& lo = table[static_cast<std::size_t>(d - 1)];
    const DifficultyProfile& mine = hi_is_agent ? hi : lo;
    Match m(rules, hi_is_agent ? lo : hi, rules.profile().min_difficulty, static_cast<std::uint64_t>(g));
    m.state().player(Player::Agent).income_multiplier = mine.income_multiplier;
    while (!m.done()) m.step(opponent_action(m.state(), rules, mine, m.state().rng, Player::Agent));
    const Winner w = m.state().winner;
    wins += (hi_is_agent && w == Winner::Agent) || (!hi_is_agent && w == Winner::Opponent);
  }
  return wins;
}

// ---------------------------------------------------------------------------
// loss oracle: the clipped surrogate written out per sample on top of
// naive_forward, differentiated by central differences.

struct GradCase {
  PolicyNet net;
  ReplayBuffer buf;
  std::vector<double> adv, ret;
};

inline GradCase random_grad_case(Rng& rng, int D, int H, std::size_t n, double clip) {
  GradCase c{PolicyNet::random(D, rng, H), ReplayBuffer(D), {}, {}};
  c.net.wp() *= 100.0;  // move away from the near-uniform initial head
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = random_features(rng, static_cast<std::size_t>(D));
    const ActionMask m = random_mask(rng);
    const auto probs = forward(c.net, x, m).probs;
    std::vector<int> legal;
    for (std::size_t a = 0; a < kNumActions; ++a)
      if (m[a]) legal.push_back(static_cast<int>(a));
    const int a = legal[rng.below(legal.size())];
    // Old log-prob shifted so the ratio sits clear of both clip edges.
    double shift = 0.0;
    do shift = rng.uniform(-0.5, 0.5);
    while (std::abs(std::exp(-shift) - (1 - clip)) < 0.02 || std::abs(std::exp(-shift) - (1 + clip)) < 0.02);
    c.buf.push(x, a, std::log(probs[static_cast<std::size_t>(a)]) + shift, 0.0, 0.0, i + 1 == n, m);
    c.adv.push_back(rng.uniform(-2.0, 2.0));
    c.ret.push_back(rng.uniform(-1.0, 1.0));
  }
  return c;
}

inline double naive_loss(const std::vector<double>& theta, const GradCase& c, const TrainerConfig& cfg) {
  const int D = c.net.input_dim(), H = c.net.hidden();
  double total = 0.0;
  const std::size_t n = c.buf.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = c.buf.features(i);
    const NaiveOutput o = naive_forward(theta, D, H, std::vector<double>(f.begin(), f.end()), c.buf.mask(i));
    const double p = o.probs[static_cast<std::size_t>(c.buf.action(i))];
    const double ratio = std::exp(std::log(p) - c.buf.log_prob(i));
    const double lo = 1 - cfg.clip, hi = 1 + cfg.clip;
    const double clipped = ratio < lo ? lo : ratio > hi ? hi : ratio;
    const double surrogate = std::min(ratio * c.adv[i], clipped * c.adv[i]);
    double ent = 0.0;
    for (double q : o.probs)
      if (q > 0) ent -= q * std::log(q);
    const double err = o.value - c.ret[i];
    total += -surrogate + cfg.value_coef * err * err - cfg.entropy_coef * ent;
  }
  return total / static_cast<double>(n);
}

inline std::vector<double> fd_gradient(const GradCase& c, const TrainerConfig& cfg, double h = 1e-6) {
  std::vector<double> theta = flat(c.net), g(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double keep = theta[k];
    theta[k] = keep + h;
    const double up = naive_loss(theta, c, cfg);
    theta[k] = keep - h;
    const double down = naive_loss(theta, c, cfg);
    theta[k] = keep;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

/// ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline double gradient_relative_error(const GradCase& c, const TrainerConfig& cfg) {
  std::vector<std::size_t> idx(c.buf.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Eigen::VectorXd g;
  ppo_loss(c.net, c.buf, idx, c.adv, c.ret, cfg, &g);
  const auto num = fd_gradient(c, cfg);
  double diff = 0, na = 0, nn = 0;
  for (std::size_t k = 0; k < num.size(); ++k) {
    const double a = g[static_cast<Eigen::Index>(k)];
    diff += (a - num[k]) * (a - num[k]);
    na += a * a;
    nn += num[k] * num[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
}

}  // namespace tc_test
