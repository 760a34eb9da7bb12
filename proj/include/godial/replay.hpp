#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "godial/random.hpp"

namespace godial {

struct Experience {
  std::vector<double> state;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;

  bool operator==(const Experience&) const = default;
};

using ExperienceRef = std::reference_wrapper<const Experience>;

/// Bounded FIFO store of transitions. Each entry remembers whether it came
/// from a successful dialogue.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
  }

  void push(Experience e, bool positive) {
    if (entries_.size() == capacity_) {
      if (entries_.front().positive) --positive_count_;
      entries_.pop_front();
    }
    entries_.push_back({std::move(e), positive});
    if (positive) ++positive_count_;
  }

  void clear() {
    entries_.clear();
    positive_count_ = 0;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t positive_count() const noexcept { return positive_count_; }

  const Experience& operator[](std::size_t i) const { return entries_[i].experience; }
  bool is_positive(std::size_t i) const { return entries_[i].positive; }

  /// batch_size distinct positions, uniformly (Floyd's subset sampling).
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const {
    const std::size_t n = entries_.size();
    if (batch_size > n)
      throw std::invalid_argument("ReplayBuffer::sample: buffer holds " + std::to_string(n) + " < batch size " +
                                  std::to_string(batch_size));
    std::vector<std::size_t> chosen;
    chosen.reserve(batch_size);
    for (std::size_t j = n - batch_size; j < n; ++j) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      bool seen = false;
      for (auto c : chosen)
        if (c == t) {
          seen = true;
          break;
        }
      chosen.push_back(seen ? j : t);
    }
    return chosen;
  }

  std::vector<ExperienceRef> sample(std::size_t batch_size, Rng& rng) const {
    std::vector<ExperienceRef> out;
    for (auto i : sample_indices(batch_size, rng)) out.emplace_back(entries_[i].experience);
    return out;
  }

 private:
  struct Entry {
    Experience experience;
    bool positive = false;
  };
  std::size_t capacity_;
  std::deque<Entry> entries_;
  std::size_t positive_count_ = 0;
};

}  // namespace godial
