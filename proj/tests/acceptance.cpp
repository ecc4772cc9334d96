// End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and a
// tally. Exits nonzero only with --strict (or on a crash), so a criterion that
// honestly misses its bound is reported without breaking the test run.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "support.hpp"
#include "thoughtcraft/acrl.hpp"
#include "thoughtcraft/experiments.hpp"

using namespace thoughtcraft;
namespace fs = std::filesystem;

#ifndef THOUGHTCRAFT_CONFIG_DIR
#define THOUGHTCRAFT_CONFIG_DIR "configs"
#endif

namespace {

int g_failed = 0;
int g_total = 0;

void verdict(bool ok, const char* name, const std::string& detail) {
  ++g_total;
  if (!ok) ++g_failed;
  std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Options {
  fs::path out;
  int workers = 1;
  bool strict = false;
};

ExperimentConfig bundled(const char* file, const Options& o) {
  ExperimentConfig c = load_experiment(fs::path(THOUGHTCRAFT_CONFIG_DIR) / file);
  c.workers = o.workers;  // results do not depend on the worker count
  return c;
}

std::vector<MetricsRecord> for_run(const std::vector<MetricsRecord>& all, const std::string& id) {
  std::vector<MetricsRecord> out;
  for (const auto& r : all)
    if (r.run_id == id) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------

void curriculum_and_determinism(const Options& o) {
  const ExperimentConfig c = bundled("acrl_thought.json", o);
  const fs::path dir = run_experiment(c);
  const auto records = read_metrics(dir / "metrics.jsonl");
  const auto runs = summarize_runs(records, c.curriculum.Z, c.curriculum.V, c.threshold);
  int done = 0, worst_it = 0;
  double ms = 0;
  std::string its;
  for (const auto& r : runs) {
    done += r.completed;
    worst_it = std::max(worst_it, r.thought_iterations);
    ms += r.wall_clock_ms;
    its += (its.empty() ? "" : ",") + std::to_string(r.thought_iterations) + (r.completed ? "" : "*");
  }
  const double minutes = ms / 60000.0;
  verdict(done == static_cast<int>(runs.size()) && runs.size() == 3 && worst_it <= c.curriculum.I_m && minutes <= 20.0,
          "curriculum-completion",
          fmt("%d/%zu seeds reached d=%d; iterations %s (cap %d); %.1f min total on %u hw threads (bound 20)", done,
              runs.size(), c.curriculum.Z, its.c_str(), c.curriculum.I_m, minutes,
              std::thread::hardware_concurrency()));

  // Replay the first seed into a fresh directory; everything but timing must match.
  ExperimentConfig again = c;
  again.seeds = {c.seeds.front()};
  again.output_dir = c.output_dir.string() + "-replay";
  const fs::path rdir = run_experiment(again);
  const std::string id = "acrl-thought-s" + std::to_string(c.seeds.front());
  auto a = for_run(records, id), b = for_run(read_metrics(rdir / "metrics.jsonl"), id);
  for (auto* v : {&a, &b})
    for (auto& r : *v) r.wall_clock_ms = r.steps_per_second = 0;
  const bool same_training = !a.empty() && a == b;

  const TechTree& tree = tc_test::bundle().tree;
  const FidelityProfile& prof = tc_test::bundle().thought;
  Rng gen(20240);
  int exact = 0;
  for (int battle = 0; battle < 1000; ++battle) {
    const auto atk = tc_test::random_roster(tree, gen, 8, true);
    const auto def = tc_test::random_roster(tree, gen, 8, false);
    Rng rng(static_cast<std::uint64_t>(battle));
    const auto got = combat_resolve(atk, def, tree, prof, rng);
    const auto want = tc_test::oracle_combat(tc_test::to_oracle(atk), tc_test::to_oracle(def), tree,
                                             prof.bonus_damage_scale, prof.combat_rounds_cap);
    exact += tc_test::same_units(got.attackers, want.a) && tc_test::same_units(got.defenders, want.d) &&
             got.surplus_base_damage == want.surplus && got.rounds == want.rounds;
  }
  verdict(exact == 1000 && same_training, "simulator-determinism",
          fmt("combat oracle %d/1000 exact; replay of %s: %zu records %s", exact, id.c_str(), a.size(),
              same_training ? "bit-identical" : "DIFFER"));
}

void transfer_advantage(const Options& o, fs::path& transfer_dir) {
  const ExperimentConfig tc = bundled("transfer.json", o);
  const ExperimentConfig sc = bundled("scratch_baseline.json", o);
  transfer_dir = run_experiment(tc);
  const fs::path scratch_dir = run_experiment(sc);

  // Greedy iteration-0 evaluation per seed, plus the sampled win rate of the
  // first training window, which is shown for context only.
  auto initial = [](const fs::path& dir, bool sampled) {
    std::map<std::uint64_t, double> out;
    for (const auto& r : read_metrics(dir / "metrics.jsonl")) {
      if (r.phase != "target") continue;
      const auto seed = std::stoull(r.run_id.substr(r.run_id.rfind("-s") + 2));
      if (!sampled && r.iteration == 0 && r.eval_win_rate) out[seed] = *r.eval_win_rate;
      if (sampled && r.iteration == 1) out[seed] = r.window_win_rate;
    }
    return out;
  };
  const auto ti = initial(transfer_dir, false), si = initial(scratch_dir, false);
  auto sampled_median = [&](const fs::path& dir) {
    std::vector<double> v;
    for (const auto& [seed, w] : initial(dir, true)) v.push_back(w);
    return median(v);
  };
  std::vector<double> gaps;
  std::string pairs;
  for (const auto& [seed, w] : ti)
    if (si.count(seed)) {
      gaps.push_back(w - si.at(seed));
      pairs += fmt("%s%.2f/%.2f", pairs.empty() ? "" : ",", w, si.at(seed));
    }
  const double gap = median(gaps);

  const auto rep = compare_runs(transfer_dir, scratch_dir, tc.threshold);
  const int reached_t = rep["a"]["reached"].get<int>(), reached_s = rep["b"]["reached"].get<int>();
  const double med_t = rep["a"]["median_episodes_to_threshold"].get<double>();
  const double med_s = rep["b"]["median_episodes_to_threshold"].get<double>();
  // Scratch runs that never reach the threshold enter at their full budget, a
  // lower bound on their true cost, so the ratio below can only overstate it.
  const int n = static_cast<int>(ti.size());
  const bool transfer_median_real = 2 * reached_t > n;
  const double ratio = med_s > 0 ? med_t / med_s : 1.0;
  std::ofstream(transfer_dir.parent_path() / "compare-transfer-vs-scratch.json") << rep.dump(2) << '\n';
  verdict(gaps.size() == 3 && gap >= 0.25 && transfer_median_real && ratio <= 0.5, "transfer-advantage",
          fmt("iteration-0 greedy win rate transfer/scratch %s (median gap %.2f, bound 0.25; first sampled "
              "window %.2f vs %.2f); episodes to %.2f: median %.0f vs %.0f%s (ratio %.2f, bound 0.50; reached "
              "%d/%d vs %d/%d)",
              pairs.c_str(), gap, sampled_median(transfer_dir), sampled_median(scratch_dir), tc.threshold, med_t,
              med_s, reached_s < n ? " censored" : "", ratio, reached_t, n, reached_s, n));
}

void parameter_robustness(const Options& o) {
  const ExperimentConfig c = bundled("param_sweep.json", o);
  const fs::path dir = run_experiment(c);
  const auto runs = summarize_runs(read_metrics(dir / "metrics.jsonl"), c.curriculum.Z, c.curriculum.V, c.threshold);
  std::map<std::string, std::pair<int, int>> cells;  // cell -> (completed, seeds)
  for (const auto& r : runs) {
    const std::string cell = r.run_id.substr(6, r.run_id.rfind("-s") - 6);
    cells[cell].first += r.completed;
    cells[cell].second += 1;
  }
  bool ok = cells.size() == 9;
  std::string detail;
  for (const auto& [cell, cs] : cells) {
    ok = ok && 3 * cs.first >= 2 * cs.second;
    detail += fmt("%s%s %d/%d", detail.empty() ? "" : "; ", cell.c_str(), cs.first, cs.second);
  }
  verdict(ok, "parameter-robustness", fmt("%zu cells: %s (need >= 2/3 each)", cells.size(), detail.c_str()));
}

void transfer_identity(const fs::path& transfer_dir) {
  const auto& b = tc_test::bundle();
  const Rules rules(b.tree, b.target);
  FeatureSchema big(b.target.feature_schema, rules);
  const MappingSchema map(b.thought.feature_schema, b.target.feature_schema);
  // The trained thought policy when the transfer run left one, else a sharp random one.
  PolicyNet phi;
  std::string which = "random";
  for (const auto& e : fs::directory_iterator(transfer_dir / "transfer-s0"))
    if (e.path().filename().string().rfind("thought-final_", 0) == 0) {
      phi = load_checkpoint(e.path());
      which = e.path().filename().string();
    }
  if (phi.size() == 0) {
    Rng rng(5);
    phi = PolicyNet::random(16, rng);
    phi.wp() *= 100.0;
  }
  const PolicyNet theta = transfer_init(phi, map);
  std::vector<GameState> states;
  const auto ladder = difficulty_table(7);
  for (std::uint64_t seed = 1; states.size() < 1000; ++seed) {
    auto more = tc_test::random_states(rules, ladder[6], 7, seed, 5);
    states.insert(states.end(), more.begin(), more.end());
  }
  Rng pick(9);
  double worst = 0;
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    const GameState& s = states[pick.below(states.size())];
    const auto x = featurize(s, big);
    const ActionMask m = legal_actions(s, rules);
    const auto pt = forward(theta, x, m).probs;
    const auto pp = forward(phi, map_state(x, map), m).probs;
    Probabilities mapped{};
    for (std::size_t a = 0; a < kNumActions; ++a) mapped[static_cast<std::size_t>(map_action(static_cast<int>(a)))] = pp[a];
    double tv = 0;
    for (std::size_t a = 0; a < kNumActions; ++a) tv += std::abs(pt[a] - mapped[a]);
    worst = std::max(worst, 0.5 * tv);
    agree += argmax_action(pt) == argmax_action(mapped);
  }
  verdict(worst <= 1e-9 && agree == 1000, "transfer-identity",
          fmt("1000 target states, policy %s: max TV %.3g (bound 1e-9), argmax agreement %d/1000", which.c_str(),
              worst, agree));
}

void optimizer_correctness() {
  TrainerConfig cfg;
  Rng rng(77);
  double worst_grad = 0;
  for (int i = 0; i < 20; ++i) {
    const auto c = tc_test::random_grad_case(rng, 16, 64, 10, cfg.clip);
    worst_grad = std::max(worst_grad, tc_test::gradient_relative_error(c, cfg));
  }
  double worst_gae = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng.below(400);
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t k = 0; k < n; ++k) {
      r[k] = rng.uniform(-1, 1);
      v[k] = rng.uniform(-1, 1);
      d[k] = rng.uniform() < 0.03;
    }
    d[n - 1] = 1;
    const double gamma = rng.uniform(0.8, 1.0), lambda = rng.uniform(0.8, 1.0);
    const auto got = compute_gae(r, v, d, gamma, lambda);
    const auto want = tc_test::gae_bruteforce(r, v, d, gamma, lambda);
    for (std::size_t k = 0; k < n; ++k) worst_gae = std::max(worst_gae, std::abs(got.advantages[k] - want[k]));
  }
  verdict(worst_grad <= 1e-4 && worst_gae <= 1e-12, "optimizer-correctness",
          fmt("PPO gradient vs central differences: max rel err %.2e over 20 buffers (bound 1e-4); "
              "GAE vs brute force: max abs err %.2e over 200 instances (bound 1e-12)",
              worst_grad, worst_gae));
}

void speed_premise() {
  const auto& b = tc_test::bundle();
  const Rules thought(b.tree, b.thought), target(b.tree, b.target);
  const auto ladder = difficulty_table(7);
  auto measure = [&](const Rules& rules, int difficulty, double budget_s) {
    long steps = 0, episodes = 0;
    const auto t0 = std::chrono::steady_clock::now();
    Rng pick(1);
    while (seconds_since(t0) < budget_s) {
      Match m(rules, ladder[static_cast<std::size_t>(difficulty - 1)], difficulty, static_cast<std::uint64_t>(episodes));
      while (!m.done()) {
        const ActionMask mask = m.legal();
        int legal[kNumActions], n = 0;
        for (std::size_t a = 0; a < kNumActions; ++a)
          if (mask[a]) legal[n++] = static_cast<int>(a);
        m.step(static_cast<MacroAction>(legal[pick.below(static_cast<std::uint64_t>(n))]));
        ++steps;
      }
      ++episodes;
    }
    const double s = seconds_since(t0);
    return std::pair{steps / s, episodes / s};
  };
  const auto [th_steps, th_eps] = measure(thought, 4, 3.0);
  const auto [tg_steps, tg_eps] = measure(target, 7, 3.0);
  const double ratio = th_eps / tg_eps;
  verdict(ratio >= 20.0 && th_steps >= 50000.0, "speed-premise",
          fmt("thought %.0f steps/s, %.1f episodes/s; target %.0f steps/s, %.2f episodes/s; episode ratio %.1fx "
              "(bound 20x), thought throughput bound 50000 steps/s, single thread",
              th_steps, th_eps, tg_steps, tg_eps, ratio));
}

void curriculum_smoothness() {
  const Rules rules(tc_test::bundle().tree, tc_test::bundle().thought);
  const auto table = difficulty_table(7);
  bool ok = true;
  std::string detail;
  for (int d = 1; d <= 6; ++d) {
    const int w = tc_test::ladder_duel(rules, table, d, 200);
    ok = ok && w >= 120;
    detail += fmt("%s%d>%d %d", detail.empty() ? "" : ", ", d + 1, d, w);
  }
  verdict(ok, "curriculum-smoothness", detail + " of 200 (need >= 120)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate"};
  Options o;
  o.out = fs::current_path() / "acceptance-runs";
  o.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out = o.out.string();
  app.add_option("--out", out, "where the acceptance runs write")->capture_default_str();
  app.add_option("--workers", o.workers, "rollout threads")->capture_default_str();
  app.add_flag("--strict", o.strict, "exit nonzero when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  o.out = out;
  fs::create_directories(o.out);
  ::setenv("THOUGHTCRAFT_OUT", o.out.c_str(), 1);

  const auto t0 = std::chrono::steady_clock::now();
  try {
    optimizer_correctness();
    curriculum_smoothness();
    speed_premise();
    curriculum_and_determinism(o);
    fs::path transfer_dir;
    transfer_advantage(o, transfer_dir);
    transfer_identity(transfer_dir);
    parameter_robustness(o);
  } catch (const std::exception& e) {
    std::printf("ERROR %s\n", e.what());
    return 3;
  }
  std::printf("%d/%d criteria passed in %.0f s; runs under %s\n", g_total - g_failed, g_total, seconds_since(t0),
              o.out.c_str());
  return o.strict && g_failed > 0 ? 1 : 0;
}
