#pragma once

// Weight transfer between domains that share a unified space.
//
// The target network starts from a fresh random initialization. Weights tied
// to slots and actions common to both domains are then copied from the
// source network:
//   * first layer: the input columns of each common slot's 4-flag feature
//     block and of the common actions' one-hot entries, plus the slot-free
//     blocks (user intent, turn, kb bit);
//   * last layer: the rows (and biases) of common actions;
//   * hidden biases, optionally (on by default), and any hidden-to-hidden
//     matrices of deeper networks, in full.
// Everything else keeps the fresh random value.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "godial/agent.hpp"
#include "godial/dialogue.hpp"
#include "godial/neural.hpp"
#include "godial/schema.hpp"
#include "godial/tracker.hpp"

namespace godial {

struct TransferMap {
  std::vector<std::size_t> common_slot_indices;    // union-slot positions, ascending
  std::vector<std::size_t> common_action_indices;  // ascending
  std::vector<std::string> source_fingerprint;     // source domain slots, in order
  std::vector<std::string> target_fingerprint;     // target domain slots, in order
  std::vector<std::string> space_fingerprint;      // unified slots, in order
};

inline TransferMap common_indices(const DomainSchema& source, const DomainSchema& target, const UnifiedSpace& space) {
  const auto& src_mask = space.mask(source.name);
  const auto& tgt_mask = space.mask(target.name);
  for (const auto* d : {&source, &target}) {
    const auto& mask = space.mask(d->name);
    if (static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)) != d->slots.size())
      throw std::invalid_argument("common_indices: domain '" + d->name + "' differs from its entry in the space");
    for (const auto& s : d->slots)
      if (!space.slot_index.count(s.name) || !mask[space.slot_index.at(s.name)])
        throw std::invalid_argument("common_indices: slot '" + s.name + "' not registered for domain '" + d->name +
                                    "'");
  }
  TransferMap map;
  map.common_action_indices = {0, 1};
  for (std::size_t i = 0; i < space.num_slots(); ++i) {
    if (src_mask[i] && tgt_mask[i]) {
      map.common_slot_indices.push_back(i);
      map.common_action_indices.push_back(request_index(i));
      map.common_action_indices.push_back(inform_index(i));
    }
  }
  map.source_fingerprint = source.slot_names();
  map.target_fingerprint = target.slot_names();
  map.space_fingerprint = space.fingerprint();
  return map;
}

/// Input columns of the first layer that are copied from the source.
inline std::vector<std::size_t> common_input_columns(const TransferMap& map, const FeatureLayout& layout) {
  std::vector<std::size_t> cols;
  for (auto i : map.common_slot_indices)
    for (std::size_t k = 0; k < 4; ++k) cols.push_back(layout.slot_block(i) + k);
  for (std::size_t k = 0; k < kIntentCount; ++k) cols.push_back(layout.intent_offset() + k);
  for (auto a : map.common_action_indices) cols.push_back(layout.action_offset() + a);
  for (std::size_t k = layout.turn_offset(); k < layout.dim(); ++k) cols.push_back(k);
  std::sort(cols.begin(), cols.end());
  return cols;
}

struct TransferOptions {
  bool copy_hidden_bias = true;
};

inline Network initialize_from_source(const Checkpoint& source, const TransferMap& map, std::uint64_t seed,
                                      const TransferOptions& opt = {}) {
  if (source.space != map.space_fingerprint)
    throw CheckpointError("transfer: checkpoint unified-space fingerprint does not match the transfer map");
  if (source.domain.slot_names() != map.source_fingerprint)
    throw CheckpointError("transfer: checkpoint domain '" + source.domain.name + "' does not match the source domain");
  const Network& src = source.network;
  if (src.layer_sizes.size() < 3) throw std::invalid_argument("transfer: network needs at least one hidden layer");
  const FeatureLayout layout{map.space_fingerprint.size(), source.max_turns};
  if (src.input_dim() != layout.dim() || src.output_dim() != 2 * layout.n_slots + 2)
    throw std::invalid_argument("transfer: network shape does not match the unified space");

  Network net = new_network(src.layer_sizes, seed);
  const std::size_t L = net.layers.size();

  DenseLayer& first = net.layers.front();
  const DenseLayer& src_first = src.layers.front();
  for (auto c : common_input_columns(map, layout))
    for (std::size_t o = 0; o < first.out; ++o) first.w(o, c) = src_first.w(o, c);

  for (std::size_t l = 1; l + 1 < L; ++l) net.layers[l].weights = src.layers[l].weights;
  if (opt.copy_hidden_bias)
    for (std::size_t l = 0; l + 1 < L; ++l) net.layers[l].bias = src.layers[l].bias;

  DenseLayer& last = net.layers.back();
  const DenseLayer& src_last = src.layers.back();
  for (auto a : map.common_action_indices) {
    for (std::size_t i = 0; i < last.in; ++i) last.w(a, i) = src_last.w(a, i);
    last.bias[a] = src_last.bias[a];
  }
  return net;
}

}  // namespace godial
