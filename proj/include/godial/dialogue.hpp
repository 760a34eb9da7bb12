#pragma once

// Semantic frames, the agent action space and the reward schedule.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "godial/schema.hpp"

namespace godial {

enum class Speaker { User, Agent };

enum class Intent { Greeting = 0, Inform, Request, Deny, Thanks, Closing };
inline constexpr std::size_t kIntentCount = 6;

inline constexpr std::string_view to_string(Intent intent) {
  constexpr std::array<std::string_view, kIntentCount> names = {"greeting", "inform", "request",
                                                                "deny",     "thanks", "closing"};
  return names[static_cast<std::size_t>(intent)];
}

inline constexpr std::string_view to_string(Speaker s) { return s == Speaker::User ? "user" : "agent"; }

struct SemanticFrame {
  Speaker speaker = Speaker::User;
  Intent intent = Intent::Greeting;
  std::map<std::string, std::string> inform;
  std::set<std::string> request;

  bool operator==(const SemanticFrame&) const = default;
};

/// One line per frame: `<speaker> <intent> inform={slot:value,...} request={slot,...}`.
inline std::string format_frame(const SemanticFrame& f) {
  std::string out(to_string(f.speaker));
  out += ' ';
  out += to_string(f.intent);
  out += " inform={";
  bool first = true;
  for (const auto& [k, v] : f.inform) {
    if (!first) out += ',';
    out += k + ":" + v;
    first = false;
  }
  out += "} request={";
  first = true;
  for (const auto& k : f.request) {
    if (!first) out += ',';
    out += k;
    first = false;
  }
  out += '}';
  return out;
}

enum class ActionKind { Open, Close, Request, Inform };

/// Index layout: 0 = Open, 1 = Close, 2+2i = Request(slot i), 3+2i = Inform(slot i).
struct AgentAction {
  ActionKind kind = ActionKind::Open;
  std::size_t slot = 0;  // meaningful for Request/Inform only
  std::size_t index = 0;

  bool operator==(const AgentAction&) const = default;
};

inline AgentAction make_open() { return {ActionKind::Open, 0, 0}; }
inline AgentAction make_close() { return {ActionKind::Close, 0, 1}; }
inline AgentAction make_request(std::size_t slot) { return {ActionKind::Request, slot, 2 + 2 * slot}; }
inline AgentAction make_inform(std::size_t slot) { return {ActionKind::Inform, slot, 3 + 2 * slot}; }

inline constexpr std::size_t request_index(std::size_t slot) { return 2 + 2 * slot; }
inline constexpr std::size_t inform_index(std::size_t slot) { return 3 + 2 * slot; }

inline AgentAction action_from_index(std::size_t index, std::size_t n_slots) {
  if (index >= 2 * n_slots + 2) throw std::out_of_range("action index out of range");
  if (index == 0) return make_open();
  if (index == 1) return make_close();
  const std::size_t slot = (index - 2) / 2;
  return index % 2 == 0 ? make_request(slot) : make_inform(slot);
}

inline std::vector<AgentAction> action_space(const UnifiedSpace& space) {
  std::vector<AgentAction> out;
  out.reserve(space.action_count);
  for (std::size_t i = 0; i < space.action_count; ++i) out.push_back(action_from_index(i, space.num_slots()));
  return out;
}

inline std::string action_name(const AgentAction& a, const UnifiedSpace& space) {
  switch (a.kind) {
    case ActionKind::Open: return "open";
    case ActionKind::Close: return "close";
    case ActionKind::Request: return "request(" + space.slots[a.slot].name + ")";
    case ActionKind::Inform: return "inform(" + space.slots[a.slot].name + ")";
  }
  return "?";
}

/// Semantic frame the agent utters for an action; Inform carries the looked-up value.
inline SemanticFrame agent_frame(const AgentAction& a, const UnifiedSpace& space,
                                 const std::optional<std::string>& value = std::nullopt) {
  SemanticFrame f{Speaker::Agent, Intent::Greeting, {}, {}};
  switch (a.kind) {
    case ActionKind::Open: f.intent = Intent::Greeting; break;
    case ActionKind::Close: f.intent = Intent::Closing; break;
    case ActionKind::Request:
      f.intent = Intent::Request;
      f.request.insert(space.slots[a.slot].name);
      break;
    case ActionKind::Inform:
      f.intent = Intent::Inform;
      f.inform[space.slots[a.slot].name] = value.value_or(kNoMatch);
      break;
  }
  return f;
}

enum class Outcome { Ongoing, Success, Failure };

inline constexpr std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Ongoing: return "ongoing";
    case Outcome::Success: return "success";
    case Outcome::Failure: return "failure";
  }
  return "?";
}

/// -1 per ongoing turn; -max_turns on failure; +2*max_turns on success.
inline double reward(Outcome outcome, int max_turns) {
  if (max_turns < 1) throw std::invalid_argument("reward: max_turns must be >= 1");
  switch (outcome) {
    case Outcome::Ongoing: return -1.0;
    case Outcome::Failure: return -static_cast<double>(max_turns);
    case Outcome::Success: return 2.0 * static_cast<double>(max_turns);
  }
  return 0.0;
}

}  // namespace godial
