#pragma once

// One agent <-> simulated-user dialogue at the semantic-frame level.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "godial/dialogue.hpp"
#include "godial/episode.hpp"
#include "godial/replay.hpp"
#include "godial/schema.hpp"
#include "godial/tracker.hpp"
#include "godial/usersim.hpp"

namespace godial {

/// Everything a dialogue needs besides the policy and the goal. Owns the KB
/// and its index; the active domain restricts nothing in the action space,
/// it only tells the scripted policy which slots exist.
struct Environment {
  UnifiedSpace space;
  std::string domain;
  std::vector<bool> domain_mask;
  KnowledgeBase kb;
  std::shared_ptr<const KbIndex> kb_index;
  int max_turns = 20;

  Environment(UnifiedSpace space_, const std::string& domain_, KnowledgeBase kb_, int max_turns_)
      : space(std::move(space_)), domain(domain_), domain_mask(space.mask(domain_)), kb(std::move(kb_)),
        kb_index(std::make_shared<KbIndex>(kb, space)), max_turns(max_turns_) {
    if (max_turns < 1) throw std::invalid_argument("Environment: max_turns must be >= 1");
  }

  std::size_t state_dim() const { return space.state_dim(max_turns); }
};

/// Maps the tracker state (and its vector encoding) to an action index.
using Policy = std::function<std::size_t(const TrackerState&, std::span<const double>)>;

struct DialogueResult {
  Outcome outcome = Outcome::Ongoing;
  double total_reward = 0.0;
  int turns = 0;
  std::vector<Experience> experiences;  // empty unless recording
  std::string transcript;               // empty unless requested

  bool success() const noexcept { return outcome == Outcome::Success; }
};

struct DialogueOptions {
  bool record = false;
  bool transcript = false;
};

inline DialogueResult run_dialogue(const Policy& policy, const UserGoal& goal, const Environment& env,
                                   std::uint64_t user_seed, const DialogueOptions& opt = {}) {
  auto [user, opening] = init_user(goal, user_seed);
  TrackerState tracker = reset_tracker(env.space, env.max_turns);
  observe_opening(tracker, opening, env.space, *env.kb_index);
  EpisodeState ep = start_episode(goal, opening, env.max_turns);

  DialogueResult result;
  std::vector<double> state = vectorize(tracker);
  while (ep.status == Outcome::Ongoing) {
    const std::size_t a = policy(tracker, state);
    const AgentAction act = action_from_index(a, env.space.num_slots());
    std::optional<std::string> value;
    if (act.kind == ActionKind::Inform) value = lookup_value(tracker, act.slot, *env.kb_index);
    const SemanticFrame said = agent_frame(act, env.space, value);
    const SemanticFrame reply = respond(user, act, env.space, value);
    const StepResult step = episode_step(ep, act, said, reply, user, env.kb);
    update_tracker(tracker, reply, act, env.space, *env.kb_index);
    std::vector<double> next = vectorize(tracker);
    result.total_reward += step.reward;
    if (opt.record) result.experiences.push_back({state, a, step.reward, next, step.terminal});
    state = std::move(next);
  }
  result.outcome = ep.status;
  result.turns = ep.turn;
  if (opt.transcript) result.transcript = format_transcript(ep);
  return result;
}

}  // namespace godial
