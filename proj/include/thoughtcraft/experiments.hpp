#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "thoughtcraft/acrl.hpp"
#include "thoughtcraft/error.hpp"
#include "thoughtcraft/opponents.hpp"
#include "thoughtcraft/policy.hpp"
#include "thoughtcraft/ppo.hpp"
#include "thoughtcraft/profile.hpp"
#include "thoughtcraft/techtree.hpp"

namespace thoughtcraft {

namespace fs = std::filesystem;

enum class ExperimentKind : std::uint8_t { AcrlThought, Transfer, ScratchBaseline, ParamSweep, EvaluateLevels };

inline constexpr std::array<std::pair<ExperimentKind, std::string_view>, 5> kKindNames = {{
    {ExperimentKind::AcrlThought, "acrl-thought"},
    {ExperimentKind::Transfer, "transfer"},
    {ExperimentKind::ScratchBaseline, "scratch-baseline"},
    {ExperimentKind::ParamSweep, "param-sweep"},
    {ExperimentKind::EvaluateLevels, "evaluate-levels"},
}};

inline std::string_view kind_name(ExperimentKind k) {
  for (const auto& [kk, n] : kKindNames)
    if (kk == k) return n;
  return "?";
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::AcrlThought;
  fs::path catalog;
  fs::path thought_profile;
  fs::path target_profile;
  CurriculumConfig curriculum;
  TrainerConfig trainer;
  std::vector<std::uint64_t> seeds;
  fs::path output_dir;
  std::vector<double> bonus_multipliers{1.0};
  std::vector<double> income_multipliers{1.0};
  int eval_games = 100;
  int eval_every = 1;
  std::uint64_t eval_seed = 12345;
  int workers = 1;
  double threshold = 0.9;
  std::optional<fs::path> checkpoint;  // evaluate-levels only
};

namespace detail {

inline fs::path resolve_against(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace detail

/// Output root for relative output directories: $THOUGHTCRAFT_OUT when set,
/// otherwise the current directory.
inline fs::path output_root() {
  const char* env = std::getenv("THOUGHTCRAFT_OUT");
  return env && *env ? fs::path(env) : fs::current_path();
}

/// Parses and validates an experiment description. Relative input paths are
/// resolved against `base_dir` (the config file's directory). Every referenced
/// file must exist and parse; nothing is written.
inline ExperimentConfig parse_experiment(const nlohmann::json& j, const fs::path& base_dir) {
  auto fail = [](const std::string& m) -> Error { return Error(Errc::ConfigInvalid, "experiment: " + m); };
  if (!j.is_object()) throw fail("config must be a JSON object");
  static const std::set<std::string> kFields = {
      "kind",       "catalog",   "thought_profile", "target_profile", "curriculum", "trainer",
      "seeds",      "output_dir", "sweep",          "eval_games",     "eval_every", "eval_seed",
      "workers",    "threshold",  "checkpoint"};
  for (const auto& [k, _] : j.items())
    if (!kFields.count(k)) throw fail("unknown field '" + k + "'");
  ExperimentConfig c;
  try {
    const auto kind = j.at("kind").get<std::string>();
    bool found = false;
    for (const auto& [k, n] : kKindNames)
      if (n == kind) {
        c.kind = k;
        found = true;
      }
    if (!found) throw fail("unknown kind '" + kind + "'");
    c.catalog = detail::resolve_against(base_dir, j.at("catalog").get<std::string>());
    c.thought_profile = detail::resolve_against(base_dir, j.at("thought_profile").get<std::string>());
    c.target_profile = detail::resolve_against(base_dir, j.at("target_profile").get<std::string>());
    c.output_dir = j.at("output_dir").get<std::string>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("curriculum")) {
      const auto& cj = j.at("curriculum");
      if (!cj.is_object()) throw fail("curriculum must be an object");
      static const std::set<std::string> kCur = {"V", "Z", "U", "M_m", "M_s", "I_m", "I_s"};
      for (const auto& [k, _] : cj.items())
        if (!kCur.count(k)) throw fail("unknown curriculum field '" + k + "'");
      c.curriculum.V = cj.value("V", c.curriculum.V);
      c.curriculum.Z = cj.value("Z", c.curriculum.Z);
      c.curriculum.U = cj.value("U", c.curriculum.U);
      c.curriculum.M_m = cj.value("M_m", c.curriculum.M_m);
      c.curriculum.M_s = cj.value("M_s", c.curriculum.M_s);
      c.curriculum.I_m = cj.value("I_m", c.curriculum.I_m);
      c.curriculum.I_s = cj.value("I_s", c.curriculum.I_s);
    }
    if (j.contains("trainer")) c.trainer = trainer_from_json(j.at("trainer"));
    if (j.contains("sweep")) {
      const auto& sj = j.at("sweep");
      for (const auto& [k, _] : sj.items())
        if (k != "bonus_damage" && k != "income") throw fail("unknown sweep field '" + k + "'");
      c.bonus_multipliers = sj.value("bonus_damage", c.bonus_multipliers);
      c.income_multipliers = sj.value("income", c.income_multipliers);
    }
    c.eval_games = j.value("eval_games", c.eval_games);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_seed = j.value("eval_seed", c.eval_seed);
    c.workers = j.value("workers", c.workers);
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("checkpoint")) c.checkpoint = detail::resolve_against(base_dir, j.at("checkpoint").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }

  if (c.seeds.empty()) throw fail("at least one seed is required");
  if (c.output_dir.empty()) throw fail("output_dir must not be empty");
  if (c.eval_games < 1) throw fail("eval_games must be >= 1");
  if (c.eval_every < 1) throw fail("eval_every must be >= 1");
  if (c.workers < 1) throw fail("workers must be >= 1");
  if (c.bonus_multipliers.empty() || c.income_multipliers.empty()) throw fail("sweep lists must not be empty");
  for (double m : c.bonus_multipliers)
    if (!(m >= 0)) throw fail("bonus multipliers must be >= 0");
  for (double m : c.income_multipliers)
    if (!(m > 0)) throw fail("income multipliers must be > 0");
  if (c.kind == ExperimentKind::EvaluateLevels && !c.checkpoint) throw fail("evaluate-levels needs a checkpoint");
  validate(c.curriculum);
  validate(c.trainer);

  for (const fs::path* p : {&c.catalog, &c.thought_profile, &c.target_profile})
    if (!fs::exists(*p)) throw fail("missing file '" + p->string() + "'");
  if (c.checkpoint && !fs::exists(*c.checkpoint)) throw fail("missing checkpoint '" + c.checkpoint->string() + "'");
  try {
    load_specs(c.catalog);
    auto th = load_profile(c.thought_profile);
    auto tg = load_profile(c.target_profile);
    validate_pair(th, tg);
    if (c.curriculum.Z != th.max_difficulty)
      throw fail("curriculum Z must equal the thought profile's max_difficulty");
    if (c.curriculum.U < tg.min_difficulty || c.curriculum.U > tg.max_difficulty)
      throw fail("U outside the target profile's difficulty range");
    if (c.curriculum.U > c.curriculum.Z) throw fail("U must name a rung of the thought ladder (U <= Z)");
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigInvalid) throw;
    throw fail(e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigInvalid, "cannot open experiment config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ConfigInvalid, "experiment config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_experiment(j, path.has_parent_path() ? path.parent_path() : fs::current_path());
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {
      {"kind", kind_name(c.kind)},
      {"catalog", c.catalog.string()},
      {"thought_profile", c.thought_profile.string()},
      {"target_profile", c.target_profile.string()},
      {"curriculum",
       {{"V", c.curriculum.V},
        {"Z", c.curriculum.Z},
        {"U", c.curriculum.U},
        {"M_m", c.curriculum.M_m},
        {"M_s", c.curriculum.M_s},
        {"I_m", c.curriculum.I_m},
        {"I_s", c.curriculum.I_s}}},
      {"trainer", to_json(c.trainer)},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir.string()},
      {"sweep", {{"bonus_damage", c.bonus_multipliers}, {"income", c.income_multipliers}}},
      {"eval_games", c.eval_games},
      {"eval_every", c.eval_every},
      {"eval_seed", c.eval_seed},
      {"workers", c.workers},
      {"threshold", c.threshold},
  };
  if (c.checkpoint) j["checkpoint"] = c.checkpoint->string();
  return j;
}

// ---------------------------------------------------------------------------
// metrics

/// One line of metrics.jsonl. `wall_clock_ms` is cumulative since the run
/// started; it and `steps_per_second` are the only nondeterministic fields.
struct MetricsRecord {
  std::string run_id;
  std::string phase;
  int iteration = 0;
  long episodes_total = 0;
  long env_steps_total = 0;
  long phase_episodes = 0;  // training episodes consumed within this phase
  int difficulty = 1;
  double window_win_rate = 0.0;
  std::optional<double> eval_win_rate;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double illegal_action_rate = 0.0;
  double wall_clock_ms = 0.0;
  double steps_per_second = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

inline nlohmann::json to_json(const MetricsRecord& r) {
  return {{"run_id", r.run_id},
          {"phase", r.phase},
          {"iteration", r.iteration},
          {"episodes_total", r.episodes_total},
          {"env_steps_total", r.env_steps_total},
          {"phase_episodes", r.phase_episodes},
          {"difficulty", r.difficulty},
          {"window_win_rate", r.window_win_rate},
          {"eval_win_rate", r.eval_win_rate ? nlohmann::json(*r.eval_win_rate) : nlohmann::json(nullptr)},
          {"policy_loss", r.policy_loss},
          {"value_loss", r.value_loss},
          {"entropy", r.entropy},
          {"clip_fraction", r.clip_fraction},
          {"illegal_action_rate", r.illegal_action_rate},
          {"wall_clock_ms", r.wall_clock_ms},
          {"steps_per_second", r.steps_per_second}};
}

inline MetricsRecord metrics_from_json(const nlohmann::json& j) {
  try {
    MetricsRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.phase = j.at("phase").get<std::string>();
    r.iteration = j.at("iteration").get<int>();
    r.episodes_total = j.at("episodes_total").get<long>();
    r.env_steps_total = j.at("env_steps_total").get<long>();
    r.phase_episodes = j.at("phase_episodes").get<long>();
    r.difficulty = j.at("difficulty").get<int>();
    r.window_win_rate = j.at("window_win_rate").get<double>();
    if (!j.at("eval_win_rate").is_null()) r.eval_win_rate = j.at("eval_win_rate").get<double>();
    r.policy_loss = j.at("policy_loss").get<double>();
    r.value_loss = j.at("value_loss").get<double>();
    r.entropy = j.at("entropy").get<double>();
    r.clip_fraction = j.at("clip_fraction").get<double>();
    r.illegal_action_rate = j.at("illegal_action_rate").get<double>();
    r.wall_clock_ms = j.at("wall_clock_ms").get<double>();
    r.steps_per_second = j.at("steps_per_second").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedRecord, std::string("metrics record: ") + e.what());
  }
}

inline std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileMissing, "cannot open metrics '" + path.string() + "'");
  std::vector<MetricsRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(metrics_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::MalformedRecord, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

/// Appends records as they arrive so a crashed run keeps what it produced.
class MetricsWriter {
 public:
  explicit MetricsWriter(const fs::path& path) : out_(path, std::ios::app) {
    if (!out_) throw Error(Errc::EnvironmentFailure, "cannot write '" + path.string() + "'");
  }
  void write(const MetricsRecord& r) {
    out_ << to_json(r).dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// summaries

/// Per-run finals, derived from metrics records alone.
struct RunSummary {
  std::string run_id;
  int final_difficulty = 0;
  bool completed = false;
  int thought_iterations = 0;
  long episodes_total = 0;
  long env_steps_total = 0;
  std::optional<double> initial_eval_win_rate;
  std::optional<double> final_eval_win_rate;
  std::optional<long> episodes_to_threshold;  // target-phase episodes
  std::optional<double> wall_clock_ms_to_threshold;
  long target_episodes = 0;
  double wall_clock_ms = 0.0;
};

/// `completed` means the last thought window was at level Z and passed V.
inline std::vector<RunSummary> summarize_runs(const std::vector<MetricsRecord>& records, int Z, double V,
                                              double threshold) {
  std::vector<RunSummary> out;
  std::map<std::string, std::size_t> where;
  for (const auto& r : records) {
    auto [it, fresh] = where.try_emplace(r.run_id, out.size());
    if (fresh) {
      out.emplace_back();
      out.back().run_id = r.run_id;
    }
    RunSummary& s = out[it->second];
    s.episodes_total = std::max(s.episodes_total, r.episodes_total);
    s.env_steps_total = std::max(s.env_steps_total, r.env_steps_total);
    s.wall_clock_ms = std::max(s.wall_clock_ms, r.wall_clock_ms);
    if (r.phase == "thought") {
      s.final_difficulty = std::max(s.final_difficulty, r.difficulty);
      s.thought_iterations = std::max(s.thought_iterations, r.iteration);
      s.completed = r.difficulty == Z && r.window_win_rate > V;
    }
    if (r.phase == "target" || r.phase == "evaluate") {
      if (r.phase == "target") s.target_episodes = std::max(s.target_episodes, r.phase_episodes);
      if (r.eval_win_rate) {
        if (!s.initial_eval_win_rate) s.initial_eval_win_rate = r.eval_win_rate;
        s.final_eval_win_rate = r.eval_win_rate;
        if (!s.episodes_to_threshold && *r.eval_win_rate >= threshold) {
          s.episodes_to_threshold = r.phase_episodes;
          s.wall_clock_ms_to_threshold = r.wall_clock_ms;
        }
      }
    }
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

template <typename T>
std::string fmt_opt(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) return fmt_num(*v);
  else return std::to_string(*v);
}

}  // namespace detail

/// summary.csv: one row per run, then one aggregate row per group. Groups
/// come from `group_of(run_id)`; aggregates are means, except
/// episodes_to_threshold which is the median over runs that reached it.
template <typename GroupOf>
std::string summary_csv(const std::vector<RunSummary>& runs, GroupOf&& group_of) {
  std::ostringstream o;
  o << "run_id,final_difficulty,completed,thought_iterations,episodes_total,env_steps_total,"
       "initial_eval_win_rate,final_eval_win_rate,episodes_to_threshold,target_episodes,wall_clock_ms\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) {
    o << r.run_id << ',' << r.final_difficulty << ',' << (r.completed ? 1 : 0) << ',' << r.thought_iterations << ','
      << r.episodes_total << ',' << r.env_steps_total << ',' << detail::fmt_opt(r.initial_eval_win_rate) << ','
      << detail::fmt_opt(r.final_eval_win_rate) << ',' << detail::fmt_opt(r.episodes_to_threshold) << ','
      << r.target_episodes << ',' << detail::fmt_num(r.wall_clock_ms) << '\n';
    const std::string g = group_of(r.run_id);
    if (!groups.count(g)) order.push_back(g);
    groups[g].push_back(&r);
  }
  for (const auto& g : order) {
    const auto& rs = groups[g];
    const double n = static_cast<double>(rs.size());
    double fd = 0, comp = 0, it = 0, ep = 0, st = 0, wc = 0, te = 0;
    double ie = 0, fe = 0;
    int n_ie = 0, n_fe = 0;
    std::vector<double> ett;
    for (const auto* r : rs) {
      fd += r->final_difficulty;
      comp += r->completed ? 1 : 0;
      it += r->thought_iterations;
      ep += static_cast<double>(r->episodes_total);
      st += static_cast<double>(r->env_steps_total);
      te += static_cast<double>(r->target_episodes);
      wc += r->wall_clock_ms;
      if (r->initial_eval_win_rate) ie += *r->initial_eval_win_rate, ++n_ie;
      if (r->final_eval_win_rate) fe += *r->final_eval_win_rate, ++n_fe;
      if (r->episodes_to_threshold) ett.push_back(static_cast<double>(*r->episodes_to_threshold));
    }
    o << "aggregate:" << g << ',' << detail::fmt_num(fd / n) << ',' << detail::fmt_num(comp / n) << ','
      << detail::fmt_num(it / n) << ',' << detail::fmt_num(ep / n) << ',' << detail::fmt_num(st / n) << ','
      << (n_ie ? detail::fmt_num(ie / n_ie) : "") << ',' << (n_fe ? detail::fmt_num(fe / n_fe) : "") << ','
      << (ett.empty() ? "" : detail::fmt_num(median(ett))) << ',' << detail::fmt_num(te / n) << ','
      << detail::fmt_num(wc / n) << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// comparison

/// Time-to-threshold comparison of two run directories, each holding a
/// metrics.jsonl. Runs that never reach the threshold are reported with the
/// error name and enter the medians as censored lower bounds (their total
/// target-phase episodes and wall-clock).
inline nlohmann::json compare_runs(const fs::path& dir_a, const fs::path& dir_b, double threshold) {
  auto side = [&](const fs::path& dir) {
    const auto records = read_metrics(dir / "metrics.jsonl");
    const auto runs = summarize_runs(records, 0, 1.0, threshold);
    nlohmann::json j;
    j["dir"] = dir.string();
    j["runs"] = nlohmann::json::array();
    std::vector<double> eps, wcs;
    int reached = 0;
    for (const auto& r : runs) {
      nlohmann::json e = {{"run_id", r.run_id}, {"reached", r.episodes_to_threshold.has_value()}};
      if (r.episodes_to_threshold) {
        ++reached;
        e["episodes_to_threshold"] = *r.episodes_to_threshold;
        e["wall_clock_ms_to_threshold"] = *r.wall_clock_ms_to_threshold;
        eps.push_back(static_cast<double>(*r.episodes_to_threshold));
        wcs.push_back(*r.wall_clock_ms_to_threshold);
      } else {
        e["error"] = "ThresholdNeverReached";
        e["episodes_lower_bound"] = r.target_episodes;
        e["wall_clock_ms_lower_bound"] = r.wall_clock_ms;
        eps.push_back(static_cast<double>(r.target_episodes));
        wcs.push_back(r.wall_clock_ms);
      }
      j["runs"].push_back(e);
    }
    j["reached"] = reached;
    j["median_episodes_to_threshold"] = median(eps);
    j["median_wall_clock_ms_to_threshold"] = median(wcs);
    j["censored"] = reached < static_cast<int>(runs.size());
    return j;
  };
  nlohmann::json rep;
  rep["threshold"] = threshold;
  rep["a"] = side(dir_a);
  rep["b"] = side(dir_b);
  auto ratio = [&](const char* key) -> nlohmann::json {
    if (rep["a"]["reached"].get<int>() == 0 || rep["b"]["reached"].get<int>() == 0) return nullptr;
    const double a = rep["a"][key].get<double>(), b = rep["b"][key].get<double>();
    if (a == b) return 1.0;
    if (b == 0.0) return nullptr;
    return a / b;
  };
  rep["episodes_ratio"] = ratio("median_episodes_to_threshold");
  rep["wall_clock_ratio"] = ratio("median_wall_clock_ms_to_threshold");
  return rep;
}

// ---------------------------------------------------------------------------
// running experiments

/// Everything a run needs, loaded once per experiment.
struct ExperimentWorld {
  TechTree tree;
  FidelityProfile thought;
  FidelityProfile target;
  std::vector<DifficultyProfile> ladder;
};

inline ExperimentWorld load_world(const ExperimentConfig& c) {
  ExperimentWorld w{load_specs(c.catalog), load_profile(c.thought_profile), load_profile(c.target_profile), {}};
  w.ladder = difficulty_table(c.curriculum.Z);
  return w;
}

inline FidelityProfile scaled_profile(FidelityProfile p, double bonus_mult, double income_mult) {
  p.bonus_damage_scale *= bonus_mult;
  p.mineral_income_per_worker_per_step *= income_mult;
  p.gas_income_per_worker_per_step *= income_mult;
  return p;
}

inline std::string fmt_multiplier(double m) {
  std::ostringstream o;
  o << m;
  return o.str();
}

/// Resolves where an experiment writes: absolute output_dir as given,
/// relative output_dir under output_root().
inline fs::path resolve_output(const ExperimentConfig& c) {
  return c.output_dir.is_absolute() ? c.output_dir : output_root() / c.output_dir;
}

struct RunContext {
  std::string run_id;
  fs::path dir;  // checkpoints go here
  MetricsWriter* metrics = nullptr;
  std::chrono::steady_clock::time_point start;
  long episodes = 0;
  long steps = 0;

  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  fs::path checkpoint(std::string_view phase, int iteration) const {
    return dir / (std::string(phase) + "_" + std::to_string(iteration) + ".ckpt");
  }
};

struct ThoughtOutcome {
  PolicyNet policy;
  CurriculumState state;
};

inline ThoughtOutcome thought_phase(const ExperimentConfig& c, const ExperimentWorld& w, const FidelityProfile& prof,
                                    std::uint64_t seed, RunContext& ctx) {
  Rules rules(w.tree, prof);
  CurriculumConfig cc = c.curriculum;
  cc.seed = seed;
  TrainingSetup setup{&rules, &w.ladder, c.trainer, c.workers};
  ThoughtOutcome out;
  long phase_eps = 0;
  out.state = run_curriculum(cc, setup, out.policy, [&](const IterationReport& rep) {
    ctx.episodes += rep.rollout->episodes;
    ctx.steps += rep.rollout->steps;
    phase_eps += rep.rollout->episodes;
    MetricsRecord m;
    m.run_id = ctx.run_id;
    m.phase = "thought";
    m.iteration = rep.state->iteration;
    m.episodes_total = ctx.episodes;
    m.env_steps_total = ctx.steps;
    m.phase_episodes = phase_eps;
    m.difficulty = rep.difficulty;
    m.window_win_rate = static_cast<double>(rep.rollout->wins) / rep.rollout->episodes;
    m.policy_loss = rep.update->policy_loss;
    m.value_loss = rep.update->value_loss;
    m.entropy = rep.update->entropy;
    m.clip_fraction = rep.update->clip_fraction;
    m.illegal_action_rate =
        rep.rollout->steps > 0 ? static_cast<double>(rep.rollout->illegal_actions) / rep.rollout->steps : 0.0;
    m.wall_clock_ms = ctx.elapsed_ms();
    m.steps_per_second = rep.rollout->seconds > 0 ? rep.rollout->steps / rep.rollout->seconds : 0.0;
    ctx.metrics->write(m);
    if (rep.state->d != rep.difficulty || rep.state->completed)
      save_checkpoint(out.policy, ctx.checkpoint("thought", rep.state->iteration));
  });
  save_checkpoint(out.policy, ctx.checkpoint("thought-final", out.state.iteration));
  return out;
}

inline void target_phase(const ExperimentConfig& c, const ExperimentWorld& w, PolicyNet& theta, std::uint64_t seed,
                         RunContext& ctx) {
  Rules rules(w.tree, w.target);
  CurriculumConfig cc = c.curriculum;
  cc.seed = seed;
  TrainingSetup setup{&rules, &w.ladder, c.trainer, c.workers};
  TargetConfig tc{c.eval_games, c.eval_every, mix_seed(c.eval_seed, seed)};
  train_target(theta, cc, setup, tc, [&](const TargetReport& rep) {
    MetricsRecord m;
    m.run_id = ctx.run_id;
    m.phase = "target";
    m.iteration = rep.iteration;
    m.difficulty = cc.U;
    if (rep.rollout) {
      ctx.episodes += rep.rollout->episodes;
      ctx.steps += rep.rollout->steps;
      m.window_win_rate = static_cast<double>(rep.rollout->wins) / rep.rollout->episodes;
      m.illegal_action_rate =
          rep.rollout->steps > 0 ? static_cast<double>(rep.rollout->illegal_actions) / rep.rollout->steps : 0.0;
      m.steps_per_second = rep.rollout->seconds > 0 ? rep.rollout->steps / rep.rollout->seconds : 0.0;
    }
    if (rep.update) {
      m.policy_loss = rep.update->policy_loss;
      m.value_loss = rep.update->value_loss;
      m.entropy = rep.update->entropy;
      m.clip_fraction = rep.update->clip_fraction;
    }
    if (rep.eval) m.eval_win_rate = rep.eval->win_rate;
    m.episodes_total = ctx.episodes;
    m.env_steps_total = ctx.steps;
    m.phase_episodes = rep.episodes;
    m.wall_clock_ms = ctx.elapsed_ms();
    ctx.metrics->write(m);
  });
  save_checkpoint(theta, ctx.checkpoint("target-final", cc.I_s));
}

/// Runs every seed (and sweep cell) of an experiment, writing
///   <out>/config.resolved.json, <out>/metrics.jsonl, <out>/summary.csv,
///   <out>/<run_id>/<phase>_<iteration>.ckpt
/// Returns the output directory.
inline fs::path run_experiment(const ExperimentConfig& c) {
  const ExperimentWorld w = load_world(c);
  const fs::path out = resolve_output(c);
  fs::create_directories(out);
  {
    std::ofstream cfg(out / "config.resolved.json");
    cfg << to_json(c).dump(2) << '\n';
  }
  const fs::path metrics_path = out / "metrics.jsonl";
  fs::remove(metrics_path);
  MetricsWriter writer(metrics_path);
  std::map<std::string, std::string> group;

  auto new_run = [&](const std::string& id, const std::string& g) {
    group[id] = g;
    RunContext ctx{id, out / id, &writer, std::chrono::steady_clock::now()};
    fs::create_directories(ctx.dir);
    return ctx;
  };
  const std::string kind(kind_name(c.kind));

  for (std::uint64_t seed : c.seeds) {
    const std::string sfx = "-s" + std::to_string(seed);
    switch (c.kind) {
      case ExperimentKind::AcrlThought: {
        RunContext ctx = new_run(kind + sfx, kind);
        thought_phase(c, w, w.thought, seed, ctx);
        break;
      }
      case ExperimentKind::Transfer: {
        RunContext ctx = new_run(kind + sfx, kind);
        ThoughtOutcome t = thought_phase(c, w, w.thought, seed, ctx);
        MappingSchema map(w.thought.feature_schema, w.target.feature_schema);
        PolicyNet theta = transfer_init(t.policy, map);
        save_checkpoint(theta, ctx.checkpoint("transfer-init", 0));
        target_phase(c, w, theta, seed, ctx);
        break;
      }
      case ExperimentKind::ScratchBaseline: {
        RunContext ctx = new_run(kind + sfx, kind);
        Rng init(mix_seed(seed, hash_string("init")));
        PolicyNet theta = PolicyNet::random(static_cast<int>(w.target.feature_schema.size()), init);
        target_phase(c, w, theta, seed, ctx);
        break;
      }
      case ExperimentKind::ParamSweep: {
        for (double b : c.bonus_multipliers)
          for (double m : c.income_multipliers) {
            const std::string cell = "b" + fmt_multiplier(b) + "-i" + fmt_multiplier(m);
            RunContext ctx = new_run("sweep-" + cell + sfx, cell);
            thought_phase(c, w, scaled_profile(w.thought, b, m), seed, ctx);
          }
        break;
      }
      case ExperimentKind::EvaluateLevels: {
        const PolicyNet net = load_checkpoint(*c.checkpoint);
        const bool is_thought = static_cast<std::size_t>(net.input_dim()) == w.thought.feature_schema.size();
        const FidelityProfile& prof = is_thought ? w.thought : w.target;
        if (static_cast<std::size_t>(net.input_dim()) != prof.feature_schema.size())
          throw Error(Errc::DimensionMismatch, "checkpoint input size matches neither profile");
        Rules rules(w.tree, prof);
        FeatureSchema schema(prof.feature_schema, rules);
        RunContext ctx = new_run(kind + sfx, kind);
        for (int d = prof.min_difficulty; d <= prof.max_difficulty; ++d) {
          const EvalResult ev = evaluate(net, rules, schema, rung_for(w.ladder, d), d, c.eval_games,
                                         mix_seed(seed, static_cast<std::uint64_t>(d)), c.workers);
          MetricsRecord m;
          m.run_id = ctx.run_id;
          m.phase = "evaluate";
          m.iteration = d;
          m.difficulty = d;
          m.eval_win_rate = ev.win_rate;
          m.window_win_rate = ev.win_rate;
          m.wall_clock_ms = ctx.elapsed_ms();
          writer.write(m);
        }
        break;
      }
    }
  }

  const auto records = read_metrics(metrics_path);
  const auto runs = summarize_runs(records, c.curriculum.Z, c.curriculum.V, c.threshold);
  std::ofstream csv(out / "summary.csv");
  csv << summary_csv(runs, [&](const std::string& id) { return group[id]; });
  return out;
}

}  // namespace thoughtcraft
