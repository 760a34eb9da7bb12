#pragma once

// Agenda-based user simulator. The user holds a goal (constraints C, requests R)
// and a stack of pending dialogue acts, and answers agent actions with a fixed
// rule table so that every dialogue can be replayed exactly.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "godial/dialogue.hpp"
#include "godial/random.hpp"
#include "godial/schema.hpp"

namespace godial {

struct AgendaItem {
  Intent intent = Intent::Inform;  // Inform (a constraint) or Request
  std::string slot;

  bool operator==(const AgendaItem&) const = default;
};

struct UserState {
  UserGoal goal;
  std::vector<AgendaItem> agenda;  // back() is the top of the stack
  std::set<std::string> informed_so_far;
  std::map<std::string, std::string> received;

  bool operator==(const UserState&) const = default;
};

/// Seeds the agenda (constraints on top, then requests) and produces the
/// opening utterance: a random nonempty subset of C and every request in R.
inline std::pair<UserState, SemanticFrame> init_user(const UserGoal& goal, std::uint64_t seed) {
  UserState st;
  st.goal = goal;
  for (auto it = goal.request_slots.rbegin(); it != goal.request_slots.rend(); ++it)
    st.agenda.push_back({Intent::Request, *it});
  for (auto it = goal.inform_slots.rbegin(); it != goal.inform_slots.rend(); ++it)
    st.agenda.push_back({Intent::Inform, it->first});

  SemanticFrame first{Speaker::User, Intent::Greeting, {}, goal.request_slots};
  if (!goal.inform_slots.empty()) {
    Rng rng(seed);
    std::vector<std::string> slots;
    for (const auto& [slot, _] : goal.inform_slots) slots.push_back(slot);
    std::shuffle(slots.begin(), slots.end(), rng);
    const std::size_t k = 1 + uniform_index(rng, slots.size());
    for (std::size_t i = 0; i < k; ++i) {
      first.inform[slots[i]] = goal.inform_slots.at(slots[i]);
      st.informed_so_far.insert(slots[i]);
    }
  }
  return {std::move(st), std::move(first)};
}

namespace detail {

inline std::optional<std::string> next_unreceived(const UserState& st) {
  for (const auto& slot : st.goal.request_slots)
    if (!st.received.count(slot)) return slot;
  return std::nullopt;
}

inline SemanticFrame user_frame(Intent intent) { return SemanticFrame{Speaker::User, intent, {}, {}}; }

}  // namespace detail

/// Applies the rule table to one agent action and updates the user state in place.
/// `informed_value` is the value carried by an Inform action.
inline SemanticFrame respond(UserState& st, const AgentAction& act, const UnifiedSpace& space,
                             const std::optional<std::string>& informed_value = std::nullopt) {
  const auto& C = st.goal.inform_slots;
  const auto& R = st.goal.request_slots;
  switch (act.kind) {
    case ActionKind::Request: {
      const std::string& s = space.slots[act.slot].name;
      auto reply = detail::user_frame(Intent::Inform);
      if (auto it = C.find(s); it != C.end()) {
        reply.inform[s] = it->second;
        st.informed_so_far.insert(s);
      } else if (R.count(s)) {
        reply.intent = Intent::Request;
        reply.request.insert(s);
      } else {
        reply.inform[s] = kDontCare;
      }
      return reply;
    }
    case ActionKind::Inform: {
      const std::string& s = space.slots[act.slot].name;
      const std::string v = informed_value.value_or(kNoMatch);
      if (R.count(s)) {
        st.received[s] = v;
        if (auto next = detail::next_unreceived(st)) {
          auto reply = detail::user_frame(Intent::Request);
          reply.request.insert(*next);
          return reply;
        }
        return detail::user_frame(Intent::Thanks);
      }
      if (auto it = C.find(s); it != C.end() && it->second != v) {
        auto reply = detail::user_frame(Intent::Deny);
        reply.inform[s] = it->second;
        st.informed_so_far.insert(s);
        return reply;
      }
      return detail::user_frame(Intent::Thanks);
    }
    case ActionKind::Open: {
      while (!st.agenda.empty()) {
        AgendaItem item = st.agenda.back();
        st.agenda.pop_back();
        if (item.intent == Intent::Inform && !st.informed_so_far.count(item.slot)) {
          auto reply = detail::user_frame(Intent::Inform);
          reply.inform[item.slot] = C.at(item.slot);
          st.informed_so_far.insert(item.slot);
          return reply;
        }
        if (item.intent == Intent::Request && !st.received.count(item.slot)) {
          auto reply = detail::user_frame(Intent::Request);
          reply.request.insert(item.slot);
          return reply;
        }
      }
      return detail::user_frame(Intent::Thanks);
    }
    case ActionKind::Close: return detail::user_frame(Intent::Closing);
  }
  return detail::user_frame(Intent::Thanks);
}

/// True iff every request was answered and some KB record satisfies the
/// constraints while agreeing with all answers.
inline bool verify_success(const UserState& st, const KnowledgeBase& kb) {
  for (const auto& slot : st.goal.request_slots)
    if (!st.received.count(slot)) return false;
  for (const auto& rec : kb.records) {
    if (!record_satisfies(rec, st.goal.inform_slots)) continue;
    bool agrees = true;
    for (const auto& slot : st.goal.request_slots) {
      auto it = rec.find(slot);
      if (it == rec.end() || it->second != st.received.at(slot)) {
        agrees = false;
        break;
      }
    }
    if (agrees) return true;
  }
  return false;
}

}  // namespace godial
