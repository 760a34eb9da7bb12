#pragma once

// Training/evaluation loops and the repeated experiments built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "godial/agent.hpp"
#include "godial/random.hpp"
#include "godial/schema.hpp"
#include "godial/simulation.hpp"
#include "godial/transfer.hpp"

namespace godial {

struct ExperimentConfig {
  std::string source_domain;  // schema path; optional for single-domain training
  std::string target_domain;  // schema path of the domain being trained
  std::size_t kb_size = 100;
  std::uint64_t kb_seed = 17;
  std::size_t n_train_goals = 120;
  std::size_t n_test_goals = 32;
  double constraint_fraction = 0.5;
  std::size_t n_epochs = 50;
  std::size_t n_dialogues = 100;
  int max_turns = 20;
  Hyperparams hyper;
  bool warm_start = true;
  double warm_start_ratio = 0.3;
  std::size_t warm_start_max_episodes = 5000;
  double flush_threshold = 0.3;
  std::string transfer_source;  // checkpoint path (optional)
  bool copy_hidden_bias = true;
  std::size_t source_epochs = 50;
  std::vector<std::size_t> portions = {5, 10, 20, 30, 50, 120};
  std::vector<std::string> arms = {"tl_ws", "ws", "tl", "none"};
  std::size_t repetitions = 10;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  std::size_t jobs = 1;

  void validate() const {
    hyper.validate();
    if (kb_size < 1 || n_train_goals < 1 || n_test_goals < 1 || n_epochs < 1 || n_dialogues < 1 ||
        repetitions < 1 || max_turns < 1)
      throw std::invalid_argument("config: all counts must be >= 1");
    for (auto p : portions)
      if (p < 1 || p > n_train_goals)
        throw std::invalid_argument("config: portion " + std::to_string(p) + " outside [1, n_train_goals]");
    for (const auto& a : arms)
      if (a != "tl_ws" && a != "ws" && a != "tl" && a != "none")
        throw std::invalid_argument("config: unknown arm '" + a + "' (expected tl_ws, ws, tl or none)");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_success_rate = 0.0;
  double eval_success_rate = 0.0;
  double mean_reward = 0.0;
  bool buffer_flushed = false;
};

using LearningCurve = std::vector<EpochRecord>;

// ---------------------------------------------------------------------------
// domains and data

struct DomainData {
  DomainSchema schema;
  KnowledgeBase kb;
  std::vector<UserGoal> train_goals;
  std::vector<UserGoal> test_goals;
};

inline DomainData make_domain_data(const DomainSchema& schema, std::size_t domain_tag, const ExperimentConfig& cfg) {
  DomainData d;
  d.schema = schema;
  d.kb = generate_kb(schema, cfg.kb_size, derive_seed(cfg.kb_seed, stream::kKb, domain_tag));
  d.train_goals = sample_goals(d.kb, cfg.n_train_goals, cfg.constraint_fraction,
                               derive_seed(cfg.kb_seed, stream::kTrainGoals, domain_tag));
  d.test_goals = sample_goals(d.kb, cfg.n_test_goals, cfg.constraint_fraction,
                              derive_seed(cfg.kb_seed, stream::kTestGoals, domain_tag));
  return d;
}

/// Source and target domains over one unified space. Without a source, the
/// space is the target domain alone.
struct Scenario {
  std::optional<DomainData> source;
  DomainData target;
  UnifiedSpace space;

  Environment environment(const DomainData& d, int max_turns) const {
    return Environment(space, d.schema.name, d.kb, max_turns);
  }
};

inline Scenario make_scenario(const std::optional<DomainSchema>& source, const DomainSchema& target,
                              const ExperimentConfig& cfg) {
  Scenario sc;
  if (source) {
    if (source->name == target.name) throw std::invalid_argument("scenario: source and target share a name");
    sc.source = make_domain_data(*source, 0, cfg);
    sc.space = unify({*source, target});
  } else {
    sc.space = unify({target});
  }
  sc.target = make_domain_data(target, 1, cfg);
  return sc;
}

inline Scenario load_scenario(const ExperimentConfig& cfg) {
  if (cfg.target_domain.empty()) throw std::invalid_argument("config: target_domain is required");
  std::optional<DomainSchema> source;
  if (!cfg.source_domain.empty()) source = load_schema(cfg.source_domain);
  return make_scenario(source, load_schema(cfg.target_domain), cfg);
}

// ---------------------------------------------------------------------------
// epochs and training

inline Policy greedy_policy(const DqnAgent& agent) {
  return [&agent](const TrackerState&, std::span<const double> s) { return argmax(forward(agent.online, s)); };
}

inline Policy epsilon_greedy_policy(const DqnAgent& agent, double epsilon, Rng& rng) {
  return [&agent, epsilon, &rng](const TrackerState&, std::span<const double> s) {
    return select_action(agent, s, epsilon, rng);
  };
}

/// Greedy success rate over every goal once; never touches the buffer.
inline double evaluate(const DqnAgent& agent, const std::vector<UserGoal>& goals, const Environment& env,
                       std::uint64_t seed) {
  if (goals.empty()) return 0.0;
  const Policy policy = greedy_policy(agent);
  std::size_t wins = 0;
  for (std::size_t g = 0; g < goals.size(); ++g)
    wins += run_dialogue(policy, goals[g], env, derive_seed(seed, stream::kEval, g)).success() ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(goals.size());
}

/// Random streams of one training run. Paired arms construct this from the
/// same seed, so goal order and user behaviour line up dialogue by dialogue.
struct TrainingStreams {
  Rng agent;
  Rng user;
  Rng warm;
  std::vector<std::size_t> goal_order;
  std::size_t cursor = 0;

  TrainingStreams(std::uint64_t seed, std::size_t n_goals)
      : agent(derive_seed(seed, stream::kAgent)), user(derive_seed(seed, stream::kUser)),
        warm(derive_seed(seed, stream::kWarmStart)), goal_order(n_goals) {
    std::iota(goal_order.begin(), goal_order.end(), std::size_t{0});
    Rng order(derive_seed(seed, stream::kGoalOrder));
    std::shuffle(goal_order.begin(), goal_order.end(), order);
  }

  std::size_t next_goal() {
    const std::size_t g = goal_order[cursor];
    cursor = (cursor + 1) % goal_order.size();
    return g;
  }
};

struct EpochOptions {
  std::size_t n_dialogues = 100;
  double flush_threshold = 0.3;
};

/// Simulates n_dialogues training dialogues (one learn step per turn once the
/// buffer holds a batch), runs a pass of size/batch_size learn steps, then
/// applies the flush rule. Target sync is left to the caller.
inline EpochRecord run_epoch(DqnAgent& agent, const std::vector<UserGoal>& goals, const Environment& env,
                             const EpochOptions& opt, TrainingStreams& streams, std::size_t epoch_index = 0) {
  if (goals.empty()) throw std::invalid_argument("run_epoch: no goals");
  const Policy policy = epsilon_greedy_policy(agent, agent.hyper.epsilon, streams.agent);
  std::size_t wins = 0;
  double reward_sum = 0.0;
  for (std::size_t d = 0; d < opt.n_dialogues; ++d) {
    const UserGoal& goal = goals[streams.next_goal()];
    auto result = run_dialogue(policy, goal, env, streams.user(), {.record = true});
    wins += result.success() ? 1 : 0;
    reward_sum += result.total_reward;
    for (auto& e : result.experiences) agent.buffer.push(std::move(e), result.success());
    for (int t = 0; t < result.turns; ++t)
      if (agent.buffer.size() >= agent.hyper.batch_size) learn_step(agent, streams.agent);
  }
  EpochRecord rec;
  rec.epoch = epoch_index;
  rec.train_success_rate = static_cast<double>(wins) / static_cast<double>(opt.n_dialogues);
  rec.mean_reward = reward_sum / static_cast<double>(opt.n_dialogues);
  if (agent.buffer.size() >= agent.hyper.batch_size) {
    const std::size_t steps = agent.buffer.size() / agent.hyper.batch_size;
    for (std::size_t k = 0; k < steps; ++k) learn_step(agent, streams.agent);
  }
  rec.buffer_flushed = flush_if_threshold(agent, rec.train_success_rate, opt.flush_threshold);
  return rec;
}

struct TrainSetup {
  const Environment* env = nullptr;
  const std::vector<UserGoal>* train_goals = nullptr;
  const std::vector<UserGoal>* test_goals = nullptr;
  Hyperparams hyper;
  std::size_t n_epochs = 50;
  EpochOptions epoch;
  bool warm_start = true;
  WarmStartOptions warm;
  std::optional<Network> initial_network;  // e.g. from transfer; fresh init otherwise
  std::uint64_t seed = 1;
};

struct TrainResult {
  LearningCurve curve;
  DqnAgent agent;
  std::size_t warm_start_episodes = 0;
};

/// Optional warm start, then n_epochs of run_epoch with a greedy evaluation on
/// the test goals after each epoch.
inline TrainResult train_agent(const TrainSetup& setup) {
  const Environment& env = *setup.env;
  const auto& goals = *setup.train_goals;
  Network net = setup.initial_network
                    ? *setup.initial_network
                    : new_network({env.state_dim(), setup.hyper.hidden_units, env.space.action_count},
                                  derive_seed(setup.seed, stream::kNetInit));
  if (net.input_dim() != env.state_dim() || net.output_dim() != env.space.action_count)
    throw std::invalid_argument("train: initial network does not fit the environment");
  TrainResult out{{}, DqnAgent(std::move(net), setup.hyper), 0};
  DqnAgent& agent = out.agent;
  TrainingStreams streams(setup.seed, goals.size());

  if (setup.warm_start) out.warm_start_episodes = warm_start(agent, env, goals, setup.warm, streams.warm);

  for (std::size_t e = 0; e < setup.n_epochs; ++e) {
    EpochRecord rec = run_epoch(agent, goals, env, setup.epoch, streams, e);
    if ((e + 1) % setup.hyper.target_sync_period == 0) sync_target(agent);
    rec.eval_success_rate = setup.test_goals ? evaluate(agent, *setup.test_goals, env, setup.seed) : 0.0;
    out.curve.push_back(rec);
  }
  return out;
}

inline TrainSetup setup_from_config(const ExperimentConfig& cfg, const Environment& env,
                                    const std::vector<UserGoal>& train, const std::vector<UserGoal>& test) {
  TrainSetup s;
  s.env = &env;
  s.train_goals = &train;
  s.test_goals = &test;
  s.hyper = cfg.hyper;
  s.n_epochs = cfg.n_epochs;
  s.epoch = {cfg.n_dialogues, cfg.flush_threshold};
  s.warm_start = cfg.warm_start;
  s.warm = {cfg.warm_start_ratio, cfg.warm_start_max_episodes};
  s.seed = cfg.seed;
  return s;
}

inline Checkpoint make_checkpoint(const TrainResult& r, const Environment& env, const DomainSchema& domain) {
  return Checkpoint{domain, env.space.fingerprint(), env.max_turns, r.agent.hyper, r.agent.online};
}

/// Trains the source-domain agent used by transfer arms.
inline Checkpoint train_source(const Scenario& sc, const ExperimentConfig& cfg) {
  if (!sc.source) throw std::invalid_argument("train_source: scenario has no source domain");
  const Environment env = sc.environment(*sc.source, cfg.max_turns);
  TrainSetup s = setup_from_config(cfg, env, sc.source->train_goals, sc.source->test_goals);
  s.n_epochs = cfg.source_epochs;
  s.warm_start = true;
  s.seed = derive_seed(cfg.seed, stream::kSource);
  return make_checkpoint(train_agent(s), env, sc.source->schema);
}

inline Network transferred_network(const Scenario& sc, const Checkpoint& source, std::uint64_t seed,
                                   bool copy_hidden_bias) {
  const TransferMap map = common_indices(sc.source->schema, sc.target.schema, sc.space);
  return initialize_from_source(source, map, derive_seed(seed, stream::kNetInit), {copy_hidden_bias});
}

/// Single run on the target domain as described by the config (optionally
/// transfer-initialized from cfg.transfer_source).
inline TrainResult train(const ExperimentConfig& cfg, const Scenario& sc) {
  cfg.validate();
  const Environment env = sc.environment(sc.target, cfg.max_turns);
  TrainSetup s = setup_from_config(cfg, env, sc.target.train_goals, sc.target.test_goals);
  if (!cfg.transfer_source.empty()) {
    if (!sc.source) throw std::invalid_argument("train: transfer_source needs source_domain");
    const Checkpoint ck = load_checkpoint(cfg.transfer_source, sc.space);
    s.initial_network = transferred_network(sc, ck, cfg.seed, cfg.copy_hidden_bias);
  }
  return train_agent(s);
}

// ---------------------------------------------------------------------------
// repeated experiments

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> running;
  for (std::size_t i = 0; i < n; ++i) {
    if (running.size() == jobs) {
      running.front().get();
      running.erase(running.begin());
    }
    running.push_back(std::async(std::launch::async, [&fn, i] { fn(i); }));
  }
  for (auto& f : running) f.get();
}

inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t goal_set_hash(const std::vector<UserGoal>& goals) { return fnv1a(to_json(goals).dump()); }

/// `portion` goals drawn without replacement from the training set.
inline std::vector<UserGoal> goal_subset(const std::vector<UserGoal>& goals, std::size_t portion,
                                         std::uint64_t seed) {
  if (portion >= goals.size()) return goals;
  std::vector<std::size_t> idx(goals.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(portion);
  std::sort(idx.begin(), idx.end());
  std::vector<UserGoal> out;
  for (auto i : idx) out.push_back(goals[i]);
  return out;
}

struct PortionRow {
  std::size_t portion = 0;
  std::string arm;
  std::size_t rep = 0;
  double train_rate = 0.0;
  double test_rate = 0.0;
  std::uint64_t subset_hash = 0;
};

/// For every repetition and portion, a random training subset is shared by a
/// baseline arm and a transfer arm (both follow cfg.warm_start); the final
/// epoch's training and test success rates are recorded.
inline std::vector<PortionRow> portion_experiment(const ExperimentConfig& cfg, const Scenario& sc,
                                                  const Checkpoint& source) {
  cfg.validate();
  const Environment env = sc.environment(sc.target, cfg.max_turns);
  const std::size_t P = cfg.portions.size();
  std::vector<PortionRow> rows(cfg.repetitions * P * 2);
  parallel_for(cfg.repetitions * P, cfg.jobs, [&](std::size_t job) {
    const std::size_t rep = job / P, p = job % P;
    const std::uint64_t rep_seed = derive_seed(cfg.seed, stream::kPortion, rep);
    const std::size_t portion = cfg.portions[p];
    const auto subset = goal_subset(sc.target.train_goals, portion, derive_seed(rep_seed, stream::kPortion, portion));
    const std::uint64_t hash = goal_set_hash(subset);
    const std::uint64_t run_seed = derive_seed(rep_seed, portion);
    for (std::size_t arm = 0; arm < 2; ++arm) {
      TrainSetup s = setup_from_config(cfg, env, subset, sc.target.test_goals);
      s.seed = run_seed;
      if (arm == 1) s.initial_network = transferred_network(sc, source, run_seed, cfg.copy_hidden_bias);
      const auto result = train_agent(s);
      rows[job * 2 + arm] = {portion, arm == 1 ? "transfer" : "baseline", rep,
                             result.curve.back().train_success_rate, result.curve.back().eval_success_rate, hash};
    }
  });
  return rows;
}

struct CurveRow {
  std::size_t epoch = 0;
  std::string arm;
  std::size_t rep = 0;
  double train_rate = 0.0;
  double test_rate = 0.0;
  double mean_reward = 0.0;
  bool flushed = false;
};

inline std::vector<CurveRow> curve_rows(const LearningCurve& curve, const std::string& arm, std::size_t rep) {
  std::vector<CurveRow> out;
  for (const auto& r : curve)
    out.push_back({r.epoch, arm, rep, r.train_success_rate, r.eval_success_rate, r.mean_reward, r.buffer_flushed});
  return out;
}

/// Learning curves on the full training set for the requested arms of the
/// transfer (tl) x warm-start (ws) grid; arms of one repetition share seeds.
inline std::vector<CurveRow> curve_experiment(const ExperimentConfig& cfg, const Scenario& sc,
                                              const std::optional<Checkpoint>& source) {
  cfg.validate();
  const Environment env = sc.environment(sc.target, cfg.max_turns);
  const std::size_t A = cfg.arms.size();
  std::vector<std::vector<CurveRow>> parts(cfg.repetitions * A);
  parallel_for(cfg.repetitions * A, cfg.jobs, [&](std::size_t job) {
    const std::size_t rep = job / A;
    const std::string& arm = cfg.arms[job % A];
    TrainSetup s = setup_from_config(cfg, env, sc.target.train_goals, sc.target.test_goals);
    s.seed = derive_seed(cfg.seed, stream::kAgent, rep);
    s.warm_start = arm == "tl_ws" || arm == "ws";
    if (arm == "tl_ws" || arm == "tl") {
      if (!source) throw std::invalid_argument("curve_experiment: transfer arms need a source checkpoint");
      s.initial_network = transferred_network(sc, *source, s.seed, cfg.copy_hidden_bias);
    }
    parts[job] = curve_rows(train_agent(s).curve, arm, rep);
  });
  std::vector<CurveRow> rows;
  for (auto& p : parts) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

// ---------------------------------------------------------------------------
// statistics

struct Interval {
  double mean = 0.0;
  double half_width = 0.0;
};

/// Two-sided standard-normal quantile for a confidence level; 0.95 maps to 1.96.
inline double normal_quantile(double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  if (level == 0.95) return 1.96;
  double lo = 0.0, hi = 10.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (std::erf(mid / std::sqrt(2.0)) < level ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Normal approximation: mean +- z * s / sqrt(n), s the unbiased sample deviation.
inline Interval confidence_interval(const std::vector<double>& samples, double level = 0.95) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("confidence_interval: need at least 2 samples");
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double s = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, normal_quantile(level) * s / std::sqrt(static_cast<double>(n))};
}

// ---------------------------------------------------------------------------
// CSV
//   curves:   epoch,arm,rep,train_rate,test_rate,mean_reward,flushed
//   portions: portion,arm,rep,train_rate,test_rate
// Reals are written with 10 significant digits.

inline const std::string kCurvesHeader = "epoch,arm,rep,train_rate,test_rate,mean_reward,flushed";
inline const std::string kPortionsHeader = "portion,arm,rep,train_rate,test_rate";

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::string out = kCurvesHeader + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.epoch) + "," + r.arm + "," + std::to_string(r.rep) + "," + format_real(r.train_rate) +
           "," + format_real(r.test_rate) + "," + format_real(r.mean_reward) + "," + (r.flushed ? "1" : "0") + "\n";
  return out;
}

inline std::string portions_csv(const std::vector<PortionRow>& rows) {
  std::string out = kPortionsHeader + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.portion) + "," + r.arm + "," + std::to_string(r.rep) + "," + format_real(r.train_rate) +
           "," + format_real(r.test_rate) + "\n";
  return out;
}

inline void emit_csv(const std::vector<CurveRow>& rows, const std::string& path) {
  write_text_file(path, curves_csv(rows));
}

inline void emit_csv(const std::vector<PortionRow>& rows, const std::string& path) {
  write_text_file(path, portions_csv(rows));
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_cells(const std::string& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != header) throw std::runtime_error(path + ": unexpected CSV header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

inline std::vector<CurveRow> read_curves_csv(const std::string& path) {
  std::vector<CurveRow> out;
  for (const auto& c : detail::read_csv_cells(path, kCurvesHeader)) {
    if (c.size() != 7) throw std::runtime_error(path + ": curves row needs 7 columns");
    out.push_back({std::stoul(c[0]), c[1], std::stoul(c[2]), std::stod(c[3]), std::stod(c[4]), std::stod(c[5]),
                   c[6] == "1"});
  }
  return out;
}

inline std::vector<PortionRow> read_portions_csv(const std::string& path) {
  std::vector<PortionRow> out;
  for (const auto& c : detail::read_csv_cells(path, kPortionsHeader)) {
    if (c.size() != 5) throw std::runtime_error(path + ": portions row needs 5 columns");
    out.push_back({std::stoul(c[0]), c[1], std::stoul(c[2]), std::stod(c[3]), std::stod(c[4]), 0});
  }
  return out;
}

}  // namespace godial
