#pragma once

#include <string>
#include <vector>

#include "godial/schema.hpp"

namespace fixtures {

inline std::string data_path(const std::string& name) { return std::string(GODIAL_DATA_DIR) + "/" + name; }

inline godial::DomainSchema abc(const std::string& name, const std::vector<std::string>& slots,
                                std::size_t vocab = 3) {
  godial::DomainSchema d{name, {}};
  for (const auto& s : slots) {
    godial::SlotDef def{s, {}};
    for (std::size_t v = 0; v < vocab; ++v) def.values.push_back(s + std::to_string(v));
    d.slots.push_back(def);
  }
  return d;
}

inline godial::DomainSchema toy() { return abc("toy", {"a", "b"}); }

}  // namespace fixtures
