#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "godial/dialogue.hpp"
#include "godial/usersim.hpp"

namespace godial {

/// Bookkeeping for one dialogue. A turn is one agent action plus the user reply;
/// the user's opening utterance is kept apart and does not count as a turn.
struct EpisodeState {
  UserGoal goal;
  int turn = 0;
  int max_turns = 20;
  SemanticFrame opening;
  std::vector<SemanticFrame> history;
  std::map<std::string, std::string> delivered;
  Outcome status = Outcome::Ongoing;
};

struct StepResult {
  double reward = 0.0;
  bool terminal = false;
};

inline EpisodeState start_episode(const UserGoal& goal, const SemanticFrame& opening, int max_turns) {
  if (max_turns < 1) throw std::invalid_argument("start_episode: max_turns must be >= 1");
  EpisodeState ep;
  ep.goal = goal;
  ep.max_turns = max_turns;
  ep.opening = opening;
  return ep;
}

/// Advances the episode by one exchange. Success is only declared on Close
/// when the user's state passes verify_success; running out of turns fails.
/// The terminal reward replaces the per-turn -1.
inline StepResult episode_step(EpisodeState& ep, const AgentAction& act, const SemanticFrame& agent_utterance,
                               const SemanticFrame& user_reply, const UserState& user, const KnowledgeBase& kb) {
  if (ep.status != Outcome::Ongoing) throw std::logic_error("episode_step: episode already terminated");
  ep.history.push_back(agent_utterance);
  ep.history.push_back(user_reply);
  ++ep.turn;
  if (act.kind == ActionKind::Inform)
    for (const auto& [slot, value] : agent_utterance.inform) ep.delivered[slot] = value;

  if (act.kind == ActionKind::Close)
    ep.status = verify_success(user, kb) ? Outcome::Success : Outcome::Failure;
  else if (ep.turn >= ep.max_turns)
    ep.status = Outcome::Failure;

  return {reward(ep.status, ep.max_turns), ep.status != Outcome::Ongoing};
}

inline std::string format_transcript(const EpisodeState& ep) {
  std::string out = "T00 " + format_frame(ep.opening) + "\n";
  for (std::size_t i = 0; i < ep.history.size(); ++i) {
    const std::size_t t = i / 2 + 1;
    out += (t < 10 ? "T0" : "T") + std::to_string(t) + " " + format_frame(ep.history[i]) + "\n";
  }
  out += "outcome " + std::string(to_string(ep.status)) + " turns " + std::to_string(ep.turn) + "\n";
  return out;
}

}  // namespace godial
