#pragma once

// Rule-based dialogue state tracker. Folds the observable history into a
// fixed-length binary feature vector over the unified space:
//
//   [ 4 flags per union slot | last user intent (6) | last agent action (2S+2)
//     | turn one-hot (max_turns+1) | kb has match (1) ]
//
// Slot i owns columns 4i..4i+3 in the order user_informed, user_requested,
// agent_informed, agent_requested.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "godial/dialogue.hpp"
#include "godial/schema.hpp"

namespace godial {

struct TrackerState {
  std::vector<std::uint8_t> user_informed;
  std::vector<std::uint8_t> user_requested;
  std::vector<std::uint8_t> agent_informed;
  std::vector<std::uint8_t> agent_requested;
  std::vector<int> constraints;  // per union slot: value id, KbIndex::kDontCareId, or KbIndex::kUnknown
  std::optional<Intent> last_user_intent;
  std::optional<std::size_t> last_agent_action;
  int turn = 0;
  int max_turns = 20;
  bool kb_has_match = true;

  bool operator==(const TrackerState&) const = default;
};

struct FeatureLayout {
  std::size_t n_slots = 0;
  int max_turns = 0;

  std::size_t slot_block(std::size_t slot) const noexcept { return 4 * slot; }
  std::size_t intent_offset() const noexcept { return 4 * n_slots; }
  std::size_t action_offset() const noexcept { return intent_offset() + kIntentCount; }
  std::size_t turn_offset() const noexcept { return action_offset() + 2 * n_slots + 2; }
  std::size_t kb_offset() const noexcept { return turn_offset() + static_cast<std::size_t>(max_turns) + 1; }
  std::size_t dim() const noexcept { return kb_offset() + 1; }
};

inline FeatureLayout feature_layout(const UnifiedSpace& space, int max_turns) {
  return {space.num_slots(), max_turns};
}

inline TrackerState reset_tracker(const UnifiedSpace& space, int max_turns) {
  if (max_turns < 1) throw std::invalid_argument("reset_tracker: max_turns must be >= 1");
  const std::size_t n = space.num_slots();
  TrackerState st;
  st.user_informed.assign(n, 0);
  st.user_requested.assign(n, 0);
  st.agent_informed.assign(n, 0);
  st.agent_requested.assign(n, 0);
  st.constraints.assign(n, KbIndex::kUnknown);
  st.max_turns = max_turns;
  return st;
}

namespace detail {

inline void absorb_user_frame(TrackerState& st, const SemanticFrame& frame, const UnifiedSpace& space,
                              const KbIndex& kb) {
  for (const auto& [slot, value] : frame.inform) {
    const std::size_t i = space.index_of(slot);
    st.user_informed[i] = 1;
    const int id = kb.encode(i, value);
    if (id != KbIndex::kUnknown) st.constraints[i] = id;
  }
  for (const auto& slot : frame.request) st.user_requested[space.index_of(slot)] = 1;
  st.last_user_intent = frame.intent;
  st.kb_has_match = kb.first_match(st.constraints).has_value();
}

}  // namespace detail

/// Folds in the user's opening utterance (turn stays 0).
inline void observe_opening(TrackerState& st, const SemanticFrame& opening, const UnifiedSpace& space,
                            const KbIndex& kb) {
  detail::absorb_user_frame(st, opening, space, kb);
}

/// Folds in one exchange: the agent action and the user's reply.
inline void update_tracker(TrackerState& st, const SemanticFrame& user_frame, const AgentAction& act,
                           const UnifiedSpace& space, const KbIndex& kb) {
  if (act.index >= space.action_count) throw std::out_of_range("update_tracker: action outside unified space");
  if (act.kind == ActionKind::Request) st.agent_requested[act.slot] = 1;
  if (act.kind == ActionKind::Inform) st.agent_informed[act.slot] = 1;
  st.last_agent_action = act.index;
  if (st.turn < st.max_turns) ++st.turn;
  detail::absorb_user_frame(st, user_frame, space, kb);
}

/// Value the agent would inform for a slot: taken from the first KB record
/// consistent with the constraints gathered so far, or "no_match".
inline std::string lookup_value(const TrackerState& st, std::size_t slot, const KbIndex& kb) {
  const auto rec = kb.first_match(st.constraints);
  if (!rec) return kNoMatch;
  const int id = kb.value(*rec, slot);
  if (id < 0) return kNoMatch;
  return kb.decode(slot, id);
}

inline void vectorize_into(const TrackerState& st, std::span<double> out) {
  const FeatureLayout layout{st.user_informed.size(), st.max_turns};
  if (out.size() != layout.dim()) throw std::invalid_argument("vectorize: output has wrong length");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < layout.n_slots; ++i) {
    const std::size_t b = layout.slot_block(i);
    out[b] = st.user_informed[i];
    out[b + 1] = st.user_requested[i];
    out[b + 2] = st.agent_informed[i];
    out[b + 3] = st.agent_requested[i];
  }
  if (st.last_user_intent) out[layout.intent_offset() + static_cast<std::size_t>(*st.last_user_intent)] = 1.0;
  if (st.last_agent_action) out[layout.action_offset() + *st.last_agent_action] = 1.0;
  out[layout.turn_offset() + static_cast<std::size_t>(st.turn)] = 1.0;
  out[layout.kb_offset()] = st.kb_has_match ? 1.0 : 0.0;
}

inline std::vector<double> vectorize(const TrackerState& st) {
  std::vector<double> out(FeatureLayout{st.user_informed.size(), st.max_turns}.dim());
  vectorize_into(st, out);
  return out;
}

}  // namespace godial
