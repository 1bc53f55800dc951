#pragma once

// Additive Q-ensemble trained by residual fitting: frozen learners with
// coefficients, one active learner, and target copies for bootstrapping.

#include "gbdqn/numcore.hpp"
#include "gbdqn/replay.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gbdqn {

struct FrozenLearner {
  Net online;
  Net target;
  double alpha = 1.0;
};

struct ActiveLearner {
  Net online;
  Net target;
  Adam optimizer;
  double coefficient = 1.0;  // anticipated weight while in training
};

/// Per-sample quantities for one minibatch of residual fitting.
struct ResidualBatch {
  Vector td_target;        // y_i
  Vector residual_target;  // y_i - Q_{m-1}(s_i, a_i)
  Vector td_error;         // y_i - Q(s_i, a_i) including the active learner
};

enum class CommitMode { shrinkage, line_search };

struct StepLedger {
  double loss_before = 0;
  double loss_after = 0;
  double a = 0;
  double b = 0;
  double delta_check = 0;
};

/// Packs a minibatch column-wise.
struct PackedBatch {
  Matrix states;
  Matrix next_states;
  std::vector<int> actions;
  Vector rewards;
  Vector not_done;

  static PackedBatch from(std::span<const Transition* const> transitions);
  static PackedBatch from(std::span<const Transition> transitions);
};

class EnsembleQ {
 public:
  EnsembleQ(NetSpec spec, double discount);

  const NetSpec& spec() const { return spec_; }
  double discount() const { return discount_; }

  const std::vector<FrozenLearner>& frozen() const { return frozen_; }
  bool has_active() const { return active_.has_value(); }
  ActiveLearner& active();
  const ActiveLearner& active() const;
  /// m = |frozen| (+1 while an active learner exists).
  std::size_t size() const { return frozen_.size() + (active_ ? 1 : 0); }

  /// Opens a fresh active learner; its target starts as an exact copy.
  template <typename R>
  void open_active(R& rng, double lr, double coefficient) {
    open_active(init_params(spec_, rng), lr, coefficient);
  }
  void open_active(Net online, double lr, double coefficient);

  Matrix ensemble_q(const Eigen::Ref<const Matrix>& states, bool include_active) const;
  Matrix target_ensemble_q(const Eigen::Ref<const Matrix>& states, bool include_active) const;

  /// `bootstrap_with_active = false` bootstraps on the frozen target ensemble only.
  ResidualBatch residual_targets(const PackedBatch& batch, bool bootstrap_with_active = true) const;

  /// Moves the active learner to the frozen list and returns its coefficient.
  /// Line-search mode evaluates residuals on `eval_batch`; a non-positive or
  /// degenerate step falls back to shrinkage and sets `fallback` when given.
  double commit(CommitMode mode, const PackedBatch* eval_batch = nullptr, double alpha_max = 1.0,
                bool* fallback = nullptr);
  /// Commits with an explicit coefficient.
  double commit_with(double alpha);

  void polyak_active(double tau);

  void save(std::ostream& out, const std::string& config_echo = {}) const;
  static EnsembleQ load(std::istream& in);

 private:
  Matrix sum_over(const Eigen::Ref<const Matrix>& states, bool include_active, bool use_target) const;

  NetSpec spec_;
  double discount_;
  std::vector<FrozenLearner> frozen_;
  std::optional<ActiveLearner> active_;
};

/// Closed-form least-squares step sum(r h) / sum(h^2).
double line_search_alpha(const Eigen::Ref<const Vector>& residuals, const Eigen::Ref<const Vector>& h_values);

/// Squared-residual bookkeeping for one line-search step.
StepLedger step_ledger(const Eigen::Ref<const Vector>& residuals, const Eigen::Ref<const Vector>& h_values);

/// Per-column value at the taken action.
Vector gather(const Matrix& q, std::span<const int> actions);
/// Per-column maximum.
Vector column_max(const Matrix& q);

int softmax_action(const Eigen::Ref<const Vector>& q, double tau, Rng& rng);
int epsilon_greedy_action(const Eigen::Ref<const Vector>& q, double epsilon, Rng& rng);
int argmax(const Eigen::Ref<const Vector>& q);

}  // namespace gbdqn
