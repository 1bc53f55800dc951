#pragma once

#include "gbdqn/boost.hpp"
#include "gbdqn/envs.hpp"
#include "gbdqn/numcore.hpp"
#include "gbdqn/replay.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gbdqn {

enum class Method { gbdqn, dqn, ensemble_dqn, reset_dqn, sliding_dqn };
enum class PolicyKind { epsilon_greedy, softmax };
enum class InsertMode { computed_delta, max_priority };

std::string to_string(Method m);
Method method_from_string(std::string_view name);
std::string to_string(PolicyKind p);
PolicyKind policy_from_string(std::string_view name);
std::string to_string(InsertMode m);
InsertMode insert_mode_from_string(std::string_view name);
std::string to_string(CommitMode m);
CommitMode commit_mode_from_string(std::string_view name);

/// All five methods in reporting order.
const std::vector<Method>& all_methods();

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::int64_t decay_steps = 20000;

  double at(std::int64_t step) const;
  bool operator==(const EpsilonSchedule&) const = default;
};

struct AgentConfig {
  Method method = Method::dqn;
  double discount = 0.99;
  double lr = 1e-3;
  int batch_size = 64;
  std::size_t buffer_capacity = 50000;
  std::int64_t learn_start_steps = 1000;
  std::int64_t update_every_steps = 4;
  double polyak_tau = 0.01;
  double clip_norm = 10.0;
  EpsilonSchedule epsilon;
  bool epsilon_rearm_on_drift = false;
  PolicyKind policy = PolicyKind::epsilon_greedy;
  double softmax_tau = 1.0;
  PriorityParams priority{.mix_beta = 1.0};
  InsertMode insert_mode = InsertMode::computed_delta;
  std::vector<Index> hidden{128, 128};

  // gbdqn
  double eta_boost = 0.1;
  double first_learner_alpha = 1.0;
  CommitMode commit_mode = CommitMode::shrinkage;
  double alpha_max = 1.0;
  std::size_t line_search_batch = 1024;
  bool bootstrap_excludes_active = false;
  bool act_on_frozen_only = false;

  // ensemble_dqn
  int ensemble_k = 5;
  bool ensemble_bootstrap_masks = false;

  void validate() const;
  bool operator==(const AgentConfig&) const = default;

  /// Experimental protocol defaults for `method`; sliding_dqn keeps a
  /// 5000-transition window, gbdqn mixes recency into its priorities.
  static AgentConfig preset(Method method);
};

struct LearnStats {
  double loss = 0.0;
  std::vector<double> td_errors;
};

struct DriftContext {
  const ReplayBuffer& buffer;
};

class Agent {
 public:
  virtual ~Agent() = default;

  /// Q-values the behaviour policy acts on.
  virtual Vector behavior_q(const Vector& observation) const = 0;
  /// TD-error of a single transition under the current networks.
  virtual double td_error(const Transition& transition) const = 0;
  /// One gradient step on a sampled minibatch, followed by target tracking.
  virtual LearnStats learn(const SampleBatch& batch) = 0;
  virtual void on_drift(const DriftEvent& event, const DriftContext& ctx) = 0;
  virtual int ensemble_size() const = 0;
};

/// Single-network DQN. With `reset_on_drift` it reinitialises networks and
/// optimizer at every drift event while keeping the replay buffer.
class DqnAgent final : public Agent {
 public:
  DqnAgent(const AgentConfig& config, const NetSpec& spec, Rng rng, bool reset_on_drift);

  Vector behavior_q(const Vector& observation) const override;
  double td_error(const Transition& transition) const override;
  LearnStats learn(const SampleBatch& batch) override;
  void on_drift(const DriftEvent& event, const DriftContext& ctx) override;
  int ensemble_size() const override { return 1; }

  const Net& online() const { return online_; }
  const Net& target() const { return target_; }
  const Adam& optimizer() const { return optimizer_; }

 private:
  void reinitialize();

  AgentConfig config_;
  NetSpec spec_;
  Rng rng_;
  bool reset_on_drift_;
  Net online_;
  Net target_;
  Adam optimizer_;
};

struct EnsembleHead {
  Net online;
  Net target;
  Adam optimizer;
};

/// K independently initialised heads; prediction is the head mean.
class EnsembleDqnAgent final : public Agent {
 public:
  EnsembleDqnAgent(const AgentConfig& config, const NetSpec& spec, Rng rng);
  EnsembleDqnAgent(const AgentConfig& config, std::vector<EnsembleHead> heads, Rng rng);

  Vector behavior_q(const Vector& observation) const override;
  double td_error(const Transition& transition) const override;
  LearnStats learn(const SampleBatch& batch) override;
  void on_drift(const DriftEvent&, const DriftContext&) override {}
  int ensemble_size() const override { return static_cast<int>(heads_.size()); }

  Matrix mean_q(const Eigen::Ref<const Matrix>& states) const;
  Matrix mean_target_q(const Eigen::Ref<const Matrix>& states) const;
  const std::vector<EnsembleHead>& heads() const { return heads_; }

 private:
  AgentConfig config_;
  Rng rng_;
  std::vector<EnsembleHead> heads_;
};

/// Gradient-boosted ensemble: one active learner fits residuals of the frozen
/// ensemble; non-reset drift events commit it and open a fresh learner.
class GbdqnAgent final : public Agent {
 public:
  GbdqnAgent(const AgentConfig& config, const NetSpec& spec, Rng rng);

  Vector behavior_q(const Vector& observation) const override;
  double td_error(const Transition& transition) const override;
  LearnStats learn(const SampleBatch& batch) override;
  void on_drift(const DriftEvent& event, const DriftContext& ctx) override;
  int ensemble_size() const override { return static_cast<int>(ensemble_.size()); }

  const EnsembleQ& ensemble() const { return ensemble_; }
  /// Number of line-search commits that fell back to shrinkage.
  int fallback_count() const { return fallbacks_; }

 private:
  AgentConfig config_;
  Rng rng_;
  EnsembleQ ensemble_;
  int fallbacks_ = 0;
};

std::unique_ptr<Agent> make_agent(const AgentConfig& config, const NetSpec& spec, Rng rng);

struct RunRecord {
  std::uint64_t seed = 0;
  Method method = Method::dqn;
  EnvKind env = EnvKind::acrobot;
  int episode = 1;
  double ret = 0.0;
  int steps = 0;
  double epsilon = 0.0;
  int ensemble_size = 0;
  std::string drift_kind = "none";

  bool operator==(const RunRecord&) const = default;
};

/// Derives an independent generator for one stream of a seeded run.
Rng stream_rng(std::uint64_t seed, std::uint64_t stream);

/// One seeded training run, steppable for inspection.
class Trainer {
 public:
  Trainer(AgentConfig config, EnvKind env, int max_steps, DriftSchedule schedule, std::uint64_t seed);

  /// Runs one full episode (firing any scheduled drift first).
  RunRecord run_episode();

  /// Fine-grained control: begin, step until it returns true, then end.
  void begin_episode();
  bool step();
  RunRecord end_episode();

  Agent& agent() { return *agent_; }
  const Agent& agent() const { return *agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  Environment& env() { return *env_; }
  const AgentConfig& config() const { return config_; }
  int episode() const { return episode_; }
  std::int64_t global_step() const { return global_step_; }
  std::int64_t learn_steps() const { return learn_steps_; }
  double epsilon() const;

 private:
  void learn();

  AgentConfig config_;
  DriftSchedule schedule_;
  std::uint64_t seed_;
  std::unique_ptr<Environment> env_;
  Rng env_rng_;
  Rng policy_rng_;
  Rng replay_rng_;
  std::unique_ptr<Agent> agent_;
  ReplayBuffer buffer_;

  int episode_ = 0;
  std::int64_t global_step_ = 0;
  std::int64_t learn_steps_ = 0;
  std::int64_t epsilon_origin_ = 0;
  Vector observation_;
  double episode_return_ = 0.0;
  std::string episode_drift_ = "none";
  bool in_episode_ = false;
};

std::vector<RunRecord> train_run(const AgentConfig& config, EnvKind env, int max_steps,
                                 const DriftSchedule& schedule, int episodes, std::uint64_t seed);

}  // namespace gbdqn
