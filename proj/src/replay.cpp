#include "gbdqn/replay.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace gbdqn {

void PriorityParams::validate() const {
  if (!(mix_beta >= 0 && mix_beta <= 1)) throw std::invalid_argument("mix_beta must be in [0,1]");
  if (!(decay_alpha > 0)) throw std::invalid_argument("decay_alpha must be > 0");
  if (!(td_exponent > 0)) throw std::invalid_argument("td_exponent must be > 0");
  if (!(td_epsilon > 0)) throw std::invalid_argument("td_epsilon must be > 0");
  if (!(is_beta >= 0 && is_beta <= 1)) throw std::invalid_argument("is_beta must be in [0,1]");
}

double priority(double delta, std::int64_t age, const PriorityParams& params) {
  if (age < 0) throw std::invalid_argument("priority: negative age");
  if (!std::isfinite(delta)) throw std::domain_error("priority: non-finite TD error");
  const double td = std::pow(std::abs(delta) + params.td_epsilon, params.td_exponent);
  const double recency = std::exp(-params.decay_alpha * static_cast<double>(age));
  return params.mix_beta * td + (1.0 - params.mix_beta) * recency;
}

SumTree::SumTree(std::size_t capacity)
    : capacity_(capacity), leaves_(std::bit_ceil(std::max<std::size_t>(capacity, 1))), nodes_(2 * leaves_, 0.0) {}

void SumTree::set(std::size_t leaf, double value) {
  std::size_t node = leaves_ + leaf;
  nodes_[node] = value;
  for (node /= 2; node >= 1; node /= 2) nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
}

std::size_t SumTree::find(double mass) const {
  std::size_t node = 1;
  while (node < leaves_) {
    const std::size_t left = 2 * node;
    if (mass < nodes_[left] || nodes_[left + 1] <= 0.0) {
      node = left;
    } else {
      mass -= nodes_[left];
      node = left + 1;
    }
  }
  std::size_t leaf = node - leaves_;
  // Rounding at the right edge can land on an empty leaf; step back to the last live one.
  while (leaf > 0 && nodes_[leaves_ + leaf] <= 0.0) --leaf;
  return leaf;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity), storage_(capacity), tree_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

std::uint64_t ReplayBuffer::push(Transition transition) {
  if (!(transition.p >= 0) || !std::isfinite(transition.p))
    throw std::invalid_argument("ReplayBuffer: priority must be finite and non-negative");
  const std::uint64_t id = inserted_++;
  const std::size_t k = slot(id);
  tree_.set(k, transition.p);
  storage_[k] = std::move(transition);
  size_ = std::min(size_ + 1, capacity_);
  return id;
}

std::uint64_t ReplayBuffer::push_max_priority(Transition transition) {
  transition.p = size_ == 0 ? 1.0 : max_priority();
  return push(std::move(transition));
}

double ReplayBuffer::max_priority() const {
  double best = 0.0;
  for_each([&](std::uint64_t, const Transition& tr) { best = std::max(best, tr.p); });
  return best;
}

const Transition& ReplayBuffer::at(std::uint64_t id) const {
  if (!resident(id)) throw std::out_of_range("ReplayBuffer: transition not resident");
  return storage_[slot(id)];
}

SampleBatch ReplayBuffer::sample(std::size_t batch_size, double is_beta, Rng& rng) const {
  if (size_ == 0) throw std::logic_error("ReplayBuffer: sample from empty buffer");
  if (batch_size == 0) throw std::invalid_argument("ReplayBuffer: batch_size must be >= 1");
  const double total = tree_.total();
  if (!(total > 0)) throw std::logic_error("ReplayBuffer: all priorities are zero");

  SampleBatch batch;
  batch.ids.reserve(batch_size);
  batch.transitions.reserve(batch_size);
  batch.probs.reserve(batch_size);
  batch.is_weights.resize(static_cast<Index>(batch_size));

  // Slot k holds the resident id with the same residue; the newest window is
  // [inserted_ - size_, inserted_).
  const std::uint64_t first = inserted_ - size_;
  std::uniform_real_distribution<double> uniform(0.0, total);
  const double n = static_cast<double>(size_);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t k = tree_.find(uniform(rng));
    const std::uint64_t base = first - first % capacity_ + k;
    const std::uint64_t id = base >= first ? base : base + capacity_;
    const double prob = tree_.get(k) / total;
    batch.ids.push_back(id);
    batch.transitions.push_back(&storage_[k]);
    batch.probs.push_back(prob);
    batch.is_weights[static_cast<Index>(i)] = std::pow(1.0 / (n * prob), is_beta);
  }
  const double wmax = batch.is_weights.maxCoeff();
  batch.is_weights /= wmax;
  return batch;
}

void ReplayBuffer::update_priorities(std::span<const std::uint64_t> ids, std::span<const double> deltas,
                                     std::int64_t now, const PriorityParams& params) {
  if (ids.size() != deltas.size()) throw std::invalid_argument("update_priorities: length mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!resident(ids[i])) continue;
    const std::size_t k = slot(ids[i]);
    Transition& tr = storage_[k];
    tr.p = priority(deltas[i], std::max<std::int64_t>(now - tr.t, 0), params);
    tree_.set(k, tr.p);
  }
}

void ReplayBuffer::dump(std::ostream& out) const {
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, " ", " ");
  for_each([&](std::uint64_t, const Transition& tr) {
    out << tr.s.transpose().format(fmt) << " | " << tr.a << " | " << tr.r << " | "
        << tr.s_next.transpose().format(fmt) << " | " << (tr.done ? 1 : 0) << " | " << tr.p << " | " << tr.t
        << '\n';
  });
}

}  // namespace gbdqn
