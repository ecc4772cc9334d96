#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <exception>
#include <span>
#include <string_view>
#include <string>
#include <thread>
#include <vector>

#include "thoughtcraft/environment.hpp"
#include "thoughtcraft/error.hpp"
#include "thoughtcraft/game.hpp"
#include "thoughtcraft/opponents.hpp"
#include "thoughtcraft/policy.hpp"
#include "thoughtcraft/ppo.hpp"

namespace thoughtcraft {

struct CurriculumConfig {
  double V = 0.75;
  int Z = 7;
  int U = 7;
  int M_m = 64;
  int M_s = 64;
  int I_m = 300;
  int I_s = 100;
  std::uint64_t seed = 0;

  bool operator==(const CurriculumConfig&) const = default;
};

inline void validate(const CurriculumConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::ConfigInvalid, "curriculum: " + m); };
  if (!(c.V > 0 && c.V <= 1)) fail("V must lie in (0, 1]");
  if (c.Z < 1) fail("Z must be >= 1");
  if (c.U < 1) fail("U must be >= 1");
  if (c.M_m < 1 || c.M_s < 1) fail("episodes per iteration must be >= 1");
  if (c.I_m < 1 || c.I_s < 0) fail("I_m must be >= 1 and I_s >= 0");
}

/// Strict comparison: a perfect window does not pass V = 1.
inline bool advance_check(int w, int M_m, double V) {
  if (M_m < 1 || w < 0 || w > M_m)
    throw Error(Errc::InvalidCounts, "need 0 <= w <= M_m and M_m >= 1, got w=" + std::to_string(w) +
                                         " M_m=" + std::to_string(M_m));
  return static_cast<double>(w) / M_m > V;
}

// ---------------------------------------------------------------------------
// rollouts

struct Rollout {
  ReplayBuffer buffer;
  int episodes = 0;
  int wins = 0;
  int losses = 0;
  int draws = 0;
  long steps = 0;
  long illegal_actions = 0;
  double seconds = 0.0;  // wall time spent collecting

  void merge(const Rollout& o) {
    buffer.append(o.buffer);
    episodes += o.episodes;
    wins += o.wins;
    losses += o.losses;
    draws += o.draws;
    steps += o.steps;
    illegal_actions += o.illegal_actions;
  }
};

/// Seed of one episode. Depends only on the stream, not on which worker runs
/// it, so the number of workers never changes the result.
inline std::uint64_t episode_seed(std::uint64_t stream, std::uint64_t episode) { return mix_seed(stream, episode); }

/// Plays `episodes` games with actions sampled from `net`; when `greedy` the
/// most probable legal action is taken instead.
inline Rollout collect(const PolicyNet& net, const Rules& rules, const FeatureSchema& schema,
                       const DifficultyProfile& opponent, int difficulty, int episodes, std::uint64_t stream,
                       int workers = 1, bool greedy = false, bool record = true) {
  if (static_cast<int>(schema.size()) != net.input_dim())
    throw Error(Errc::DimensionMismatch, "policy expects " + std::to_string(net.input_dim()) + " features, schema has " +
                                             std::to_string(schema.size()));
  auto run = [&](int first, int last) {
    Rollout r;
    r.buffer = ReplayBuffer(net.input_dim());
    std::vector<double> x(schema.size());
    for (int e = first; e < last; ++e) {
      const std::uint64_t seed = episode_seed(stream, static_cast<std::uint64_t>(e));
      Match match(rules, opponent, difficulty, seed);
      Rng pick(mix_seed(seed, 0x5A3D));
      while (!match.done()) {
        schema.featurize_into(match.state(), x);
        const ActionMask mask = match.legal();
        const PolicyOutput out = forward(net, x, mask);
        SampledAction a;
        if (greedy) {
          a.action = argmax_action(out.probs);
          a.log_prob = std::log(out.probs[static_cast<std::size_t>(a.action)]);
        } else {
          a = sample_action(out.probs, pick);
        }
        const StepResult res = match.step(static_cast<MacroAction>(a.action));
        if (!res.agent_action_legal) ++r.illegal_actions;
        if (record) r.buffer.push(x, a.action, a.log_prob, res.reward, out.value, res.done, mask);
        ++r.steps;
      }
      ++r.episodes;
      switch (match.state().winner) {
        case Winner::Agent: ++r.wins; break;
        case Winner::Opponent: ++r.losses; break;
        case Winner::None: ++r.draws; break;
      }
    }
    return r;
  };
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  workers = std::clamp(workers, 1, std::max(1, episodes));
  if (workers == 1) {
    Rollout r = run(0, episodes);
    r.seconds = elapsed();
    return r;
  }
  std::vector<Rollout> parts(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const int lo = episodes * w / workers, hi = episodes * (w + 1) / workers;
    pool.emplace_back([&, w, lo, hi] {
      try {
        parts[static_cast<std::size_t>(w)] = run(lo, hi);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  Rollout all;
  all.buffer = ReplayBuffer(net.input_dim());
  for (const auto& p : parts) all.merge(p);
  all.seconds = elapsed();
  return all;
}

struct EvalResult {
  double win_rate = 0.0;
  int wins = 0;
  int losses = 0;
  int draws = 0;
  double mean_episode_length = 0.0;
};

/// Greedy play over `n_games` seeded games.
inline EvalResult evaluate(const PolicyNet& net, const Rules& rules, const FeatureSchema& schema,
                           const DifficultyProfile& opponent, int difficulty, int n_games, std::uint64_t seed,
                           int workers = 1) {
  if (n_games < 1) throw Error(Errc::InvalidCount, "n_games must be >= 1");
  const Rollout r = collect(net, rules, schema, opponent, difficulty, n_games, seed, workers, true, false);
  EvalResult out;
  out.wins = r.wins;
  out.losses = r.losses;
  out.draws = r.draws;
  out.win_rate = static_cast<double>(r.wins) / n_games;
  out.mean_episode_length = static_cast<double>(r.steps) / n_games;
  return out;
}

// ---------------------------------------------------------------------------
// curriculum

struct CurriculumEntry {
  int iteration = 0;
  int difficulty = 1;
  double win_rate = 0.0;
};

struct CurriculumState {
  int d = 1;
  int w = 0;
  int iteration = 0;
  long episodes = 0;
  long env_steps = 0;
  std::vector<CurriculumEntry> history;
  bool completed = false;         // the window at level Z passed
  bool budget_exhausted = false;  // I_m iterations ran out first
};

/// What one curriculum iteration reports to its observer.
struct IterationReport {
  const CurriculumState* state = nullptr;
  int difficulty = 1;  // level the window was played at
  const Rollout* rollout = nullptr;
  const UpdateStats* update = nullptr;
  double seconds = 0.0;
};

/// The curriculum loop, independent of how episodes are produced or how the
/// policy learns. `collect(d, iteration)` returns a Rollout at difficulty d;
/// `update(rollout)` trains on it; `observe(report)` sees every iteration.
template <typename Collect, typename Update, typename Observe>
CurriculumState curriculum_loop(const CurriculumConfig& cfg, Collect&& collect_fn, Update&& update_fn,
                                Observe&& observe) {
  validate(cfg);
  CurriculumState st;
  for (int i = 0; i < cfg.I_m; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    st.iteration = i + 1;
    const int played = st.d;
    Rollout r = collect_fn(played, i);
    st.w = r.wins;
    st.episodes += r.episodes;
    st.env_steps += r.steps;
    const double rate = r.episodes > 0 ? static_cast<double>(r.wins) / r.episodes : 0.0;
    st.history.push_back({st.iteration, played, rate});
    const bool advance = advance_check(r.wins, r.episodes, cfg.V);
    if (advance) {
      if (st.d == cfg.Z) st.completed = true;
      else ++st.d;
    }
    const UpdateStats us = update_fn(r);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    observe(IterationReport{&st, played, &r, &us, secs});
    if (st.completed) return st;
  }
  st.budget_exhausted = true;
  return st;
}

/// Stream id of an iteration's episodes; phases never share streams.
inline std::uint64_t iteration_stream(std::uint64_t seed, std::string_view phase, int iteration) {
  return mix_seed(mix_seed(seed, hash_string(phase)), static_cast<std::uint64_t>(iteration));
}

struct TrainingSetup {
  const Rules* rules = nullptr;
  const std::vector<DifficultyProfile>* ladder = nullptr;
  TrainerConfig trainer;
  int workers = 1;
};

/// Thought-game phase: random init, then the curriculum loop with PPO.
template <typename Observe>
CurriculumState run_curriculum(const CurriculumConfig& cfg, const TrainingSetup& setup, PolicyNet& policy,
                               Observe&& observe) {
  validate(cfg);
  validate(setup.trainer);
  const Rules& rules = *setup.rules;
  FeatureSchema schema(rules.profile().feature_schema, rules);
  Rng init(mix_seed(cfg.seed, hash_string("init")));
  policy = PolicyNet::random(static_cast<int>(schema.size()), init);
  Rng shuffle(mix_seed(cfg.seed, hash_string("ppo-thought")));
  OptimizerState opt;
  auto collect_fn = [&](int d, int i) {
    return collect(policy, rules, schema, rung_for(*setup.ladder, d), d, cfg.M_m,
                   iteration_stream(cfg.seed, "thought", i), setup.workers);
  };
  auto update_fn = [&](const Rollout& r) { return ppo_update(policy, r.buffer, setup.trainer, shuffle, opt); };
  return curriculum_loop(cfg, collect_fn, update_fn, observe);
}

// ---------------------------------------------------------------------------
// transfer

/// Where each thought feature sits in the target feature vector. Actions map
/// by identity because both games share one vocabulary.
class MappingSchema {
 public:
  MappingSchema(const std::vector<std::string>& thought, const std::vector<std::string>& target)
      : thought_(thought), target_(target) {
    for (const auto& name : thought) {
      const auto it = std::find(target.begin(), target.end(), name);
      if (it == target.end()) throw Error(Errc::UnknownFeature, "thought feature '" + name + "' absent from target");
      if (std::find(it + 1, target.end(), name) != target.end())
        throw Error(Errc::SchemaMismatch, "feature '" + name + "' appears twice in the target schema");
      index_.push_back(static_cast<int>(it - target.begin()));
    }
  }

  std::size_t thought_size() const { return thought_.size(); }
  std::size_t target_size() const { return target_.size(); }
  const std::vector<int>& indices() const { return index_; }
  const std::vector<std::string>& thought_names() const { return thought_; }
  const std::vector<std::string>& target_names() const { return target_; }

 private:
  std::vector<std::string> thought_;
  std::vector<std::string> target_;
  std::vector<int> index_;
};

/// f_s: index selection, no value transformation.
inline std::vector<double> map_state(std::span<const double> target_features, const MappingSchema& m) {
  if (target_features.size() != m.target_size())
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(m.target_size()) + " target features, got " +
                                             std::to_string(target_features.size()));
  std::vector<double> out;
  out.reserve(m.thought_size());
  for (int i : m.indices()) out.push_back(target_features[static_cast<std::size_t>(i)]);
  return out;
}

/// f_a: identity over the shared vocabulary.
inline MacroAction map_action(int a) {
  if (a < 0 || a >= static_cast<int>(kNumActions)) throw Error(Errc::UnknownAction, "action id " + std::to_string(a));
  return static_cast<MacroAction>(a);
}

inline MacroAction map_action(MacroAction a) { return map_action(static_cast<int>(a)); }

/// Builds pi_theta from pi_phi: first-layer columns move to their target
/// positions, columns of target-only features are zero, everything else is
/// copied. At initialization pi_theta(s) == pi_phi(f_s(s)) exactly.
inline PolicyNet transfer_init(const PolicyNet& phi, const MappingSchema& m) {
  if (static_cast<std::size_t>(phi.input_dim()) != m.thought_size())
    throw Error(Errc::SchemaMismatch, "policy input " + std::to_string(phi.input_dim()) + " vs thought schema " +
                                          std::to_string(m.thought_size()));
  PolicyNet theta(static_cast<int>(m.target_size()), phi.hidden());
  theta.w1().setZero();
  for (std::size_t j = 0; j < m.thought_size(); ++j)
    theta.w1().col(m.indices()[j]) = phi.w1().col(static_cast<Eigen::Index>(j));
  const std::size_t tail = phi.size() - phi.off_b1();
  std::copy_n(phi.params().data() + phi.off_b1(), tail, theta.params().data() + theta.off_b1());
  return theta;
}

struct TargetReport {
  int iteration = 0;  // updates applied so far
  long episodes = 0;  // training episodes consumed so far
  long env_steps = 0;
  const Rollout* rollout = nullptr;  // null for the initial report
  const UpdateStats* update = nullptr;
  const EvalResult* eval = nullptr;  // null when not evaluated this iteration
  double seconds = 0.0;
};

struct TargetConfig {
  int eval_games = 100;
  int eval_every = 1;
  std::uint64_t eval_seed = 0;
};

/// Target-game phase: I_s iterations of collect-and-update at level U. The
/// initial policy is evaluated first (iteration 0); afterwards each report
/// follows one update, with a greedy evaluation every `eval_every` updates
/// and after the last.
template <typename Observe>
void train_target(PolicyNet& theta, const CurriculumConfig& cfg, const TrainingSetup& setup, const TargetConfig& tc,
                  Observe&& observe) {
  validate(cfg);
  validate(setup.trainer);
  if (tc.eval_games < 1) throw Error(Errc::InvalidCount, "eval_games must be >= 1");
  const Rules& rules = *setup.rules;
  FeatureSchema schema(rules.profile().feature_schema, rules);
  if (static_cast<int>(schema.size()) != theta.input_dim())
    throw Error(Errc::DimensionMismatch, "target policy expects " + std::to_string(theta.input_dim()) + " features");
  if (cfg.I_s == 0) return;
  const DifficultyProfile opp = rung_for(*setup.ladder, cfg.U);
  Rng shuffle(mix_seed(cfg.seed, hash_string("ppo-target")));
  OptimizerState opt;
  long episodes = 0, steps = 0;
  auto clock = [] { return std::chrono::steady_clock::now(); };
  auto since = [](auto t0) { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  {
    const auto t0 = clock();
    const EvalResult ev = evaluate(theta, rules, schema, opp, cfg.U, tc.eval_games, tc.eval_seed, setup.workers);
    observe(TargetReport{0, 0, 0, nullptr, nullptr, &ev, since(t0)});
  }
  for (int i = 1; i <= cfg.I_s; ++i) {
    const auto t0 = clock();
    Rollout r = collect(theta, rules, schema, opp, cfg.U, cfg.M_s, iteration_stream(cfg.seed, "target", i),
                        setup.workers);
    episodes += r.episodes;
    steps += r.steps;
    const UpdateStats us = ppo_update(theta, r.buffer, setup.trainer, shuffle, opt);
    const bool due = tc.eval_every > 0 && (i % tc.eval_every == 0 || i == cfg.I_s);
    EvalResult ev;
    if (due) ev = evaluate(theta, rules, schema, opp, cfg.U, tc.eval_games, tc.eval_seed, setup.workers);
    observe(TargetReport{i, episodes, steps, &r, &us, due ? &ev : nullptr, since(t0)});
  }
}

}  // namespace thoughtcraft
