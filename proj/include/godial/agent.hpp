#pragma once

// DQN / Double-DQN dialogue agent with experience replay and a target
// network, plus the scripted rule-based agent used for warm-starting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "godial/dialogue.hpp"
#include "godial/neural.hpp"
#include "godial/random.hpp"
#include "godial/replay.hpp"
#include "godial/simulation.hpp"
#include "godial/tracker.hpp"

namespace godial {

struct Hyperparams {
  double gamma = 0.9;
  double epsilon = 0.05;
  std::size_t batch_size = 16;
  std::size_t buffer_capacity = 10000;
  std::size_t target_sync_period = 1;  // epochs
  // With the 1.0 global-norm clip each step moves at most `learning_rate`;
  // 1e-3 is too slow to learn within 50 epochs, 1e-2 overshoots on small domains.
  double learning_rate = 5e-3;
  double grad_clip = 1.0;
  std::size_t hidden_units = 80;
  bool ddqn = false;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (batch_size > buffer_capacity) throw std::invalid_argument("batch_size must not exceed buffer_capacity");
    if (target_sync_period < 1) throw std::invalid_argument("target_sync_period must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (hidden_units < 1) throw std::invalid_argument("hidden_units must be >= 1");
  }
  bool operator==(const Hyperparams&) const = default;
};

struct DqnAgent {
  Network online;
  Network target;
  ReplayBuffer buffer;
  Hyperparams hyper;
  bool flushed = false;

  DqnAgent(Network net, const Hyperparams& h) : online(std::move(net)), target(online), buffer(h.buffer_capacity), hyper(h) {
    hyper.validate();
  }
};

inline DqnAgent make_agent(std::size_t state_dim, std::size_t action_count, const Hyperparams& h,
                           std::uint64_t seed) {
  return DqnAgent(new_network({state_dim, h.hidden_units, action_count}, seed), h);
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> q) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = i;
  return best;
}

/// Epsilon-greedy over the online network. With epsilon == 0 the RNG is untouched.
inline std::size_t select_action(const DqnAgent& agent, std::span<const double> state, double epsilon, Rng& rng) {
  if (epsilon > 0.0 && uniform01(rng) < epsilon) return uniform_index(rng, agent.online.output_dim());
  return argmax(forward(agent.online, state));
}

/// y_j = r_j for terminal transitions; otherwise r_j + gamma * Q_target(s', a*)
/// with a* = argmax Q_target(s', .) (standard) or argmax Q_online(s', .) (DDQN).
inline std::vector<double> td_targets(std::span<const ExperienceRef> batch, const Network& online,
                                      const Network& target, double gamma, bool ddqn) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (const Experience& e : batch) {
    if (e.terminal) {
      y.push_back(e.reward);
      continue;
    }
    const auto q_target = forward(target, e.next_state);
    const std::size_t a_star = ddqn ? argmax(forward(online, e.next_state)) : argmax(q_target);
    y.push_back(e.reward + gamma * q_target[a_star]);
  }
  return y;
}

/// Samples a minibatch, computes targets with the frozen target network and
/// takes one SGD step on the online network.
inline double learn_step(DqnAgent& agent, Rng& rng) {
  const auto idx = agent.buffer.sample_indices(agent.hyper.batch_size, rng);
  std::vector<ExperienceRef> batch;
  std::vector<std::span<const double>> inputs;
  std::vector<std::size_t> actions;
  batch.reserve(idx.size());
  for (auto i : idx) {
    const Experience& e = agent.buffer[i];
    batch.emplace_back(e);
    inputs.emplace_back(e.state);
    actions.push_back(e.action);
  }
  const auto y = td_targets(batch, agent.online, agent.target, agent.hyper.gamma, agent.hyper.ddqn);
  return train_batch(agent.online, inputs, actions, y, {agent.hyper.learning_rate, agent.hyper.grad_clip});
}

inline void sync_target(DqnAgent& agent) { agent.target = agent.online; }

/// Empties the buffer the first time the epoch success rate reaches the
/// threshold; never again afterwards.
inline bool flush_if_threshold(DqnAgent& agent, double epoch_success_rate, double threshold = 0.3) {
  if (agent.flushed || epoch_success_rate < threshold) return false;
  agent.buffer.clear();
  agent.flushed = true;
  return true;
}

// ---------------------------------------------------------------------------
// scripted agent

/// Open on turn 0; request every slot (of the domain, or already mentioned by
/// the user) that is still unknown; inform every slot the user asked for; close.
inline AgentAction rule_policy(const TrackerState& st, const UnifiedSpace& space, const std::vector<bool>& domain_mask) {
  const std::size_t n = space.num_slots();
  if (st.turn == 0) return make_open();
  for (std::size_t i = 0; i < n; ++i) {
    const bool relevant = domain_mask[i] || st.user_informed[i] || st.user_requested[i];
    if (relevant && !st.user_informed[i] && !st.user_requested[i] && !st.agent_requested[i]) return make_request(i);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (st.user_requested[i] && !st.agent_informed[i]) return make_inform(i);
  return make_close();
}

inline Policy rule_based(const Environment& env) {
  return [&env](const TrackerState& st, std::span<const double>) {
    return rule_policy(st, env.space, env.domain_mask).index;
  };
}

struct WarmStartOptions {
  double fill_ratio = 0.3;
  std::size_t max_episodes = 5000;
};

/// Fills the buffer with scripted dialogues over `goals` (round robin) until
/// positive experiences reach fill_ratio * capacity or the episode cap is hit.
/// Failed dialogues are stored too, untagged. Returns the episodes used.
inline std::size_t warm_start(DqnAgent& agent, const Environment& env, const std::vector<UserGoal>& goals,
                              const WarmStartOptions& opt, Rng& rng, const Policy& policy = {}) {
  if (goals.empty()) throw std::invalid_argument("warm_start: no goals");
  const Policy run = policy ? policy : rule_based(env);
  const double needed = opt.fill_ratio * static_cast<double>(agent.buffer.capacity());
  std::size_t episodes = 0;
  while (static_cast<double>(agent.buffer.positive_count()) < needed && episodes < opt.max_episodes) {
    const UserGoal& goal = goals[episodes % goals.size()];
    auto result = run_dialogue(run, goal, env, rng(), {.record = true});
    for (auto& e : result.experiences) agent.buffer.push(std::move(e), result.success());
    ++episodes;
  }
  return episodes;
}

// ---------------------------------------------------------------------------
// checkpoint
//
//   godial-checkpoint 1
//   domain <schema JSON on one line>
//   space <n> <slot_0> ... <slot_{n-1}>
//   max_turns <m>
//   hyper gamma <g> epsilon <e> batch_size <b> buffer_capacity <N> target_sync_period <C>
//         learning_rate <lr> grad_clip <c> hidden_units <h> ddqn <0|1>
//   network ...                     (see write_network)

struct Checkpoint {
  DomainSchema domain;
  std::vector<std::string> space;  // unified-space fingerprint
  int max_turns = 20;
  Hyperparams hyper;
  Network network;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "godial-checkpoint 1\n";
  os << "domain " << to_json(ck.domain).dump() << '\n';
  os << "space " << ck.space.size();
  for (const auto& s : ck.space) os << ' ' << s;
  os << "\nmax_turns " << ck.max_turns << '\n';
  const auto& h = ck.hyper;
  os << std::setprecision(17) << "hyper gamma " << h.gamma << " epsilon " << h.epsilon << " batch_size "
     << h.batch_size << " buffer_capacity " << h.buffer_capacity << " target_sync_period " << h.target_sync_period
     << " learning_rate " << h.learning_rate << " grad_clip " << h.grad_clip << " hidden_units " << h.hidden_units
     << " ddqn " << (h.ddqn ? 1 : 0) << '\n';
  write_network(os, ck.network);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  Checkpoint ck;
  std::string line, tag;
  if (!std::getline(is, line) || line != "godial-checkpoint 1") throw CheckpointError("not a godial checkpoint");
  if (!(is >> tag) || tag != "domain") throw CheckpointError("checkpoint: missing domain line");
  std::getline(is, line);
  try {
    ck.domain = schema_from_json(nlohmann::json::parse(line), "checkpoint domain");
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad domain: ") + e.what());
  }
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "space") throw CheckpointError("checkpoint: missing space line");
  ck.space.resize(n);
  for (auto& s : ck.space) is >> s;
  if (!(is >> tag >> ck.max_turns) || tag != "max_turns") throw CheckpointError("checkpoint: missing max_turns");
  if (!(is >> tag) || tag != "hyper") throw CheckpointError("checkpoint: missing hyper line");
  auto& h = ck.hyper;
  int ddqn = 0;
  std::string k;
  is >> k >> h.gamma >> k >> h.epsilon >> k >> h.batch_size >> k >> h.buffer_capacity >> k >>
      h.target_sync_period >> k >> h.learning_rate >> k >> h.grad_clip >> k >> h.hidden_units >> k >> ddqn;
  if (!is) throw CheckpointError("checkpoint: malformed hyper line");
  h.ddqn = ddqn != 0;
  try {
    ck.network = read_network(is);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  const std::size_t expected_in = 6 * n + static_cast<std::size_t>(ck.max_turns) + 10;
  if (ck.network.input_dim() != expected_in || ck.network.output_dim() != 2 * n + 2)
    throw CheckpointError("checkpoint: network shape does not match its unified space");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw CheckpointError(path + ": cannot open for writing");
  write_checkpoint(out, ck);
}

/// Loads a checkpoint without checking which space it belongs to.
inline Checkpoint load_checkpoint_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError(path + ": cannot open");
  return read_checkpoint(in);
}

/// Loads a checkpoint, refusing it unless it was trained in `space`.
inline Checkpoint load_checkpoint(const std::string& path, const UnifiedSpace& space) {
  Checkpoint ck = load_checkpoint_raw(path);
  if (ck.space != space.fingerprint())
    throw CheckpointError(path + ": unified-space fingerprint mismatch (use transfer-init to move across spaces)");
  return ck;
}

}  // namespace godial
