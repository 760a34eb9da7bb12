#pragma once

// Dialogue domains, synthetic knowledge bases and user goals, and the
// cross-domain unified slot space that makes weight transfer possible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "godial/random.hpp"

namespace godial {

/// Reserved value a user gives for a slot that is not part of its goal.
inline const std::string kDontCare = "dontcare";
/// Value the agent informs when no KB record satisfies the known constraints.
inline const std::string kNoMatch = "no_match";

class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

struct SlotDef {
  std::string name;
  std::vector<std::string> values;

  bool operator==(const SlotDef&) const = default;
};

struct DomainSchema {
  std::string name;
  std::vector<SlotDef> slots;

  std::optional<std::size_t> find(const std::string& slot) const {
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i].name == slot) return i;
    return std::nullopt;
  }
  std::vector<std::string> slot_names() const {
    std::vector<std::string> out;
    out.reserve(slots.size());
    for (const auto& s : slots) out.push_back(s.name);
    return out;
  }
  bool operator==(const DomainSchema&) const = default;
};

using Record = std::map<std::string, std::string>;

struct KnowledgeBase {
  std::string schema_name;
  std::vector<Record> records;

  bool operator==(const KnowledgeBase&) const = default;
};

struct UserGoal {
  std::map<std::string, std::string> inform_slots;  // constraints C
  std::set<std::string> request_slots;              // requests R

  bool operator==(const UserGoal&) const = default;
};

// ---------------------------------------------------------------------------
// validation and JSON documents

/// Checks the SlotDef/DomainSchema invariants; `where` prefixes error locations.
inline void validate_schema(const DomainSchema& schema, const std::string& where = "schema") {
  if (schema.name.empty()) throw SchemaError(where, "domain name is empty");
  if (schema.slots.empty()) throw SchemaError(where, "domain has no slots");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < schema.slots.size(); ++i) {
    const auto& slot = schema.slots[i];
    const std::string at = where + ": slots[" + std::to_string(i) + "]";
    if (slot.name.empty()) throw SchemaError(at, "slot name is empty");
    if (!seen.insert(slot.name).second)
      throw SchemaError(at, "duplicate slot name '" + slot.name + "'");
    if (slot.values.empty()) throw SchemaError(at, "slot '" + slot.name + "' has an empty vocabulary");
    std::set<std::string> vals;
    for (std::size_t j = 0; j < slot.values.size(); ++j) {
      if (!vals.insert(slot.values[j]).second)
        throw SchemaError(at + ".values[" + std::to_string(j) + "]",
                          "duplicate value '" + slot.values[j] + "' in slot '" + slot.name + "'");
      if (slot.values[j] == kDontCare || slot.values[j] == kNoMatch)
        throw SchemaError(at + ".values[" + std::to_string(j) + "]",
                          "value '" + slot.values[j] + "' is reserved");
    }
  }
}

inline nlohmann::json to_json(const DomainSchema& schema) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : schema.slots) slots.push_back({{"name", s.name}, {"values", s.values}});
  return {{"name", schema.name}, {"slots", std::move(slots)}};
}

inline DomainSchema schema_from_json(const nlohmann::json& doc, const std::string& where = "schema") {
  DomainSchema schema;
  try {
    if (!doc.is_object()) throw SchemaError(where, "expected a JSON object");
    schema.name = doc.at("name").get<std::string>();
    const auto& slots = doc.at("slots");
    if (!slots.is_array()) throw SchemaError(where + ": slots", "expected an array");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& s = slots[i];
      SlotDef def;
      def.name = s.at("name").get<std::string>();
      def.values = s.at("values").get<std::vector<std::string>>();
      schema.slots.push_back(std::move(def));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where, e.what());
  }
  validate_schema(schema, where);
  return schema;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open file for writing");
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline nlohmann::json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ":byte " + std::to_string(e.byte), e.what());
  }
}

inline DomainSchema load_schema(const std::string& path) {
  return schema_from_json(parse_json_file(path), path);
}

inline void save_schema(const DomainSchema& schema, const std::string& path) {
  write_text_file(path, to_json(schema).dump(2) + "\n");
}

inline void validate_kb(const KnowledgeBase& kb, const DomainSchema& schema) {
  for (std::size_t i = 0; i < kb.records.size(); ++i) {
    const auto& rec = kb.records[i];
    const std::string at = "records[" + std::to_string(i) + "]";
    if (rec.size() != schema.slots.size()) throw SchemaError(at, "record does not assign every slot");
    for (const auto& slot : schema.slots) {
      auto it = rec.find(slot.name);
      if (it == rec.end()) throw SchemaError(at, "missing slot '" + slot.name + "'");
      if (std::find(slot.values.begin(), slot.values.end(), it->second) == slot.values.end())
        throw SchemaError(at, "value '" + it->second + "' not in vocabulary of '" + slot.name + "'");
    }
  }
}

inline nlohmann::json to_json(const KnowledgeBase& kb) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : kb.records) records.push_back(r);
  return {{"schema_name", kb.schema_name}, {"records", std::move(records)}};
}

inline KnowledgeBase kb_from_json(const nlohmann::json& doc, const std::string& where = "kb") {
  KnowledgeBase kb;
  try {
    kb.schema_name = doc.at("schema_name").get<std::string>();
    for (const auto& r : doc.at("records")) kb.records.push_back(r.get<Record>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where, e.what());
  }
  return kb;
}

inline KnowledgeBase load_kb(const std::string& path) { return kb_from_json(parse_json_file(path), path); }

inline void save_kb(const KnowledgeBase& kb, const std::string& path) {
  write_text_file(path, to_json(kb).dump(1) + "\n");
}

inline nlohmann::json to_json(const std::vector<UserGoal>& goals) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& g : goals)
    out.push_back({{"inform_slots", g.inform_slots},
                   {"request_slots", std::vector<std::string>(g.request_slots.begin(), g.request_slots.end())}});
  return out;
}

inline void validate_goal(const UserGoal& goal, const DomainSchema& schema, const std::string& where = "goal") {
  if (goal.request_slots.empty()) throw SchemaError(where, "request_slots is empty");
  for (const auto& [slot, value] : goal.inform_slots) {
    auto idx = schema.find(slot);
    if (!idx) throw SchemaError(where, "unknown inform slot '" + slot + "'");
    const auto& vocab = schema.slots[*idx].values;
    if (std::find(vocab.begin(), vocab.end(), value) == vocab.end())
      throw SchemaError(where, "value '" + value + "' not in vocabulary of '" + slot + "'");
    if (goal.request_slots.count(slot)) throw SchemaError(where, "slot '" + slot + "' both informed and requested");
  }
  for (const auto& slot : goal.request_slots)
    if (!schema.find(slot)) throw SchemaError(where, "unknown request slot '" + slot + "'");
}

inline std::vector<UserGoal> goals_from_json(const nlohmann::json& doc, const std::string& where = "goals") {
  std::vector<UserGoal> goals;
  try {
    for (const auto& g : doc) {
      UserGoal goal;
      goal.inform_slots = g.at("inform_slots").get<std::map<std::string, std::string>>();
      for (const auto& r : g.at("request_slots")) goal.request_slots.insert(r.get<std::string>());
      goals.push_back(std::move(goal));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where, e.what());
  }
  return goals;
}

inline std::vector<UserGoal> load_goals(const std::string& path) {
  return goals_from_json(parse_json_file(path), path);
}

inline void save_goals(const std::vector<UserGoal>& goals, const std::string& path) {
  write_text_file(path, to_json(goals).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// synthesis

inline KnowledgeBase generate_kb(const DomainSchema& schema, std::size_t n_records, std::uint64_t seed) {
  if (n_records < 1) throw std::invalid_argument("generate_kb: n_records must be >= 1");
  Rng rng(seed);
  KnowledgeBase kb{schema.name, {}};
  kb.records.reserve(n_records);
  for (std::size_t r = 0; r < n_records; ++r) {
    Record rec;
    for (const auto& slot : schema.slots) rec[slot.name] = slot.values[uniform_index(rng, slot.values.size())];
    kb.records.push_back(std::move(rec));
  }
  return kb;
}

/// Number of constraint slots for a goal: fraction of the slot count, rounded
/// half-up, clamped to [1, n_slots - 1].
inline std::size_t constraint_count(std::size_t n_slots, double constraint_fraction) {
  const auto n = static_cast<long long>(std::floor(constraint_fraction * static_cast<double>(n_slots) + 0.5));
  return static_cast<std::size_t>(std::clamp<long long>(n, 1, static_cast<long long>(n_slots) - 1));
}

/// Goals are drawn from random KB records, so each is satisfiable. The
/// remaining (non-constraint) slots contribute a random nonempty request set.
inline std::vector<UserGoal> sample_goals(const KnowledgeBase& kb, std::size_t n_goals, double constraint_fraction,
                                          std::uint64_t seed) {
  if (kb.records.empty()) throw std::invalid_argument("sample_goals: knowledge base is empty");
  if (!(constraint_fraction > 0.0 && constraint_fraction <= 1.0))
    throw std::invalid_argument("sample_goals: constraint_fraction must lie in (0, 1]");
  std::vector<std::string> slots;
  for (const auto& [name, _] : kb.records.front()) slots.push_back(name);
  if (slots.size() < 2) throw std::invalid_argument("sample_goals: schema needs at least 2 slots");

  Rng rng(seed);
  const std::size_t n_inform = constraint_count(slots.size(), constraint_fraction);
  std::vector<UserGoal> goals;
  goals.reserve(n_goals);
  for (std::size_t g = 0; g < n_goals; ++g) {
    const Record& rec = kb.records[uniform_index(rng, kb.records.size())];
    std::vector<std::string> order = slots;
    std::shuffle(order.begin(), order.end(), rng);
    UserGoal goal;
    for (std::size_t i = 0; i < n_inform; ++i) goal.inform_slots[order[i]] = rec.at(order[i]);
    const std::size_t remaining = order.size() - n_inform;
    const std::size_t n_request = 1 + uniform_index(rng, remaining);
    for (std::size_t i = 0; i < n_request; ++i) goal.request_slots.insert(order[n_inform + i]);
    goals.push_back(std::move(goal));
  }
  return goals;
}

inline bool record_satisfies(const Record& rec, const std::map<std::string, std::string>& constraints) {
  for (const auto& [slot, value] : constraints) {
    auto it = rec.find(slot);
    if (it == rec.end() || it->second != value) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// unified space

struct UnifiedSpace {
  std::vector<SlotDef> slots;
  std::unordered_map<std::string, std::size_t> slot_index;
  std::vector<std::string> domain_names;
  std::vector<std::vector<bool>> domain_slot_mask;  // [domain][union slot]
  std::size_t action_count = 0;

  std::size_t num_slots() const noexcept { return slots.size(); }

  /// Length of the tracker feature vector for a given turn budget.
  std::size_t state_dim(int max_turns) const noexcept {
    return 6 * slots.size() + static_cast<std::size_t>(max_turns) + 10;
  }

  std::optional<std::size_t> domain(const std::string& name) const {
    for (std::size_t d = 0; d < domain_names.size(); ++d)
      if (domain_names[d] == name) return d;
    return std::nullopt;
  }

  const std::vector<bool>& mask(const std::string& domain_name) const {
    auto d = domain(domain_name);
    if (!d) throw std::invalid_argument("domain '" + domain_name + "' is not part of the unified space");
    return domain_slot_mask[*d];
  }

  std::size_t index_of(const std::string& slot) const {
    auto it = slot_index.find(slot);
    if (it == slot_index.end()) throw std::out_of_range("slot '" + slot + "' is outside the unified space");
    return it->second;
  }

  /// Ordered slot names; identifies the space in checkpoints.
  std::vector<std::string> fingerprint() const {
    std::vector<std::string> out;
    for (const auto& s : slots) out.push_back(s.name);
    return out;
  }
};

/// Union of the domains' slots: first domain's slots in its order, then each
/// later domain's new slots in that domain's order. Shared slots merge their
/// vocabularies (first occurrence order).
inline UnifiedSpace unify(const std::vector<DomainSchema>& domains) {
  if (domains.empty()) throw std::invalid_argument("unify: need at least one domain");
  UnifiedSpace space;
  for (const auto& d : domains) {
    for (const auto& slot : d.slots) {
      auto it = space.slot_index.find(slot.name);
      if (it == space.slot_index.end()) {
        space.slot_index.emplace(slot.name, space.slots.size());
        space.slots.push_back(slot);
      } else {
        auto& vocab = space.slots[it->second].values;
        for (const auto& v : slot.values)
          if (std::find(vocab.begin(), vocab.end(), v) == vocab.end()) vocab.push_back(v);
      }
    }
  }
  for (const auto& d : domains) {
    std::vector<bool> mask(space.slots.size(), false);
    for (const auto& slot : d.slots) mask[space.slot_index.at(slot.name)] = true;
    space.domain_names.push_back(d.name);
    space.domain_slot_mask.push_back(std::move(mask));
  }
  space.action_count = 2 * space.slots.size() + 2;
  return space;
}

// ---------------------------------------------------------------------------

/// KB records re-encoded as value ids over the union slots, for the lookups
/// performed every dialogue turn.
class KbIndex {
 public:
  static constexpr int kUnknown = -1;
  static constexpr int kDontCareId = -2;
  static constexpr int kAbsent = -3;

  KbIndex(const KnowledgeBase& kb, const UnifiedSpace& space) : n_slots_(space.num_slots()) {
    vocab_.resize(n_slots_);
    for (std::size_t i = 0; i < n_slots_; ++i)
      for (std::size_t v = 0; v < space.slots[i].values.size(); ++v)
        vocab_[i].emplace(space.slots[i].values[v], static_cast<int>(v));
    values_.reserve(kb.records.size() * n_slots_);
    for (const auto& rec : kb.records) {
      std::vector<int> row(n_slots_, kAbsent);
      for (const auto& [slot, value] : rec) {
        const std::size_t i = space.index_of(slot);
        row[i] = encode(i, value);
        if (row[i] < 0) throw SchemaError("kb", "value '" + value + "' not in vocabulary of '" + slot + "'");
      }
      values_.insert(values_.end(), row.begin(), row.end());
    }
    names_.reserve(n_slots_);
    for (const auto& s : space.slots) names_.push_back(s.values);
  }

  std::size_t size() const noexcept { return n_slots_ == 0 ? 0 : values_.size() / n_slots_; }

  /// Value id for a slot's token; kDontCareId for "dontcare", kUnknown if not in vocabulary.
  int encode(std::size_t slot, const std::string& value) const {
    if (value == kDontCare) return kDontCareId;
    auto it = vocab_[slot].find(value);
    return it == vocab_[slot].end() ? kUnknown : it->second;
  }

  const std::string& decode(std::size_t slot, int id) const { return names_[slot][static_cast<std::size_t>(id)]; }

  /// First record (KB order) agreeing with every concrete constraint id.
  std::optional<std::size_t> first_match(const std::vector<int>& constraints) const {
    const std::size_t n = size();
    for (std::size_t r = 0; r < n; ++r) {
      const int* row = values_.data() + r * n_slots_;
      bool ok = true;
      for (std::size_t i = 0; i < n_slots_ && ok; ++i)
        if (constraints[i] >= 0 && row[i] != constraints[i]) ok = false;
      if (ok) return r;
    }
    return std::nullopt;
  }

  int value(std::size_t record, std::size_t slot) const { return values_[record * n_slots_ + slot]; }

 private:
  std::size_t n_slots_;
  std::vector<std::unordered_map<std::string, int>> vocab_;
  std::vector<std::vector<std::string>> names_;
  std::vector<int> values_;
};

}  // namespace godial
