#pragma once

#include "gbdqn/numcore.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

namespace gbdqn {

using Rng = std::mt19937_64;

struct Transition {
  Vector s;
  int a = 0;
  double r = 0.0;
  Vector s_next;
  bool done = false;
  double p = 1.0;
  std::int64_t t = 0;  // global step at which the transition was collected
};

struct PriorityParams {
  double mix_beta = 0.5;
  double decay_alpha = 1e-4;
  double td_exponent = 1.0;
  double td_epsilon = 1e-2;
  double is_beta = 0.6;

  void validate() const;
  bool operator==(const PriorityParams&) const = default;
};

/// Hybrid priority: mix_beta * (|delta| + eps)^exponent + (1 - mix_beta) * exp(-decay * age).
double priority(double delta, std::int64_t age, const PriorityParams& params);

/// Complete binary tree of partial sums over a power-of-two number of leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  void set(std::size_t leaf, double value);
  double get(std::size_t leaf) const { return nodes_[leaves_ + leaf]; }
  double total() const { return nodes_[1]; }
  /// Leaf whose cumulative interval contains `mass` (0 <= mass < total).
  std::size_t find(double mass) const;
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t leaves_;
  std::vector<double> nodes_;
};

struct SampleBatch {
  std::vector<std::uint64_t> ids;  // insertion serial numbers
  std::vector<const Transition*> transitions;
  std::vector<double> probs;
  Vector is_weights;

  std::size_t size() const { return ids.size(); }
};

/// FIFO ring buffer with proportional prioritized sampling. Transitions are
/// addressed by insertion serial so that stale ids from a sampled batch can be
/// recognised after eviction.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  std::uint64_t push(Transition transition);
  /// Stores the transition with the current maximum stored priority (1 when empty).
  std::uint64_t push_max_priority(Transition transition);

  SampleBatch sample(std::size_t batch_size, double is_beta, Rng& rng) const;
  void update_priorities(std::span<const std::uint64_t> ids, std::span<const double> deltas,
                         std::int64_t now, const PriorityParams& params);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  bool resident(std::uint64_t id) const { return id < inserted_ && id + size_ >= inserted_; }
  const Transition& at(std::uint64_t id) const;
  double total_priority() const { return tree_.total(); }
  double max_priority() const;
  double probability(std::uint64_t id) const { return at(id).p / tree_.total(); }

  /// Oldest-first traversal of resident transitions.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::uint64_t id = inserted_ - size_; id < inserted_; ++id) fn(id, at(id));
  }

  /// One line per transition: s | a | r | s' | done | p | t.
  void dump(std::ostream& out) const;

 private:
  std::size_t slot(std::uint64_t id) const { return static_cast<std::size_t>(id % capacity_); }

  std::size_t capacity_;
  std::vector<Transition> storage_;
  SumTree tree_;
  std::size_t size_ = 0;
  std::uint64_t inserted_ = 0;
};

}  // namespace gbdqn
