#pragma once

// Classic-control benchmarks with mutable physics, and the episode-indexed
// drift schedule that mutates them.

#include "gbdqn/numcore.hpp"
#include "gbdqn/replay.hpp"

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace gbdqn {

enum class EnvKind { acrobot, mountaincar, cartpole };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(std::string_view name);

/// Named, strictly positive physical constants of one environment.
class PhysicsParams {
 public:
  PhysicsParams() = default;
  explicit PhysicsParams(std::map<std::string, double> values);

  double operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return values_.contains(name); }
  void scale(const std::string& name, double factor);
  const std::map<std::string, double>& values() const { return values_; }

  bool operator==(const PhysicsParams&) const = default;

 private:
  std::map<std::string, double> values_;
};

enum class DriftKind { gravity, mass, force, combined, reset };

std::string to_string(DriftKind kind);
DriftKind drift_kind_from_string(std::string_view name);

struct DriftEvent {
  int episode = 1;
  DriftKind kind = DriftKind::reset;
  std::map<std::string, double> factors;

  bool operator==(const DriftEvent&) const = default;
};

class DriftSchedule {
 public:
  DriftSchedule() = default;
  explicit DriftSchedule(std::vector<DriftEvent> events);

  const std::vector<DriftEvent>& events() const { return events_; }
  const DriftEvent* at_episode(int episode) const;
  bool empty() const { return events_.empty(); }

  bool operator==(const DriftSchedule&) const = default;

 private:
  std::vector<DriftEvent> events_;
};

/// Default factors for a drift kind on a given environment.
std::map<std::string, double> default_drift_factors(EnvKind env, DriftKind kind);
/// Four-event schedule at episodes 150/250/350/450 with default factors.
DriftSchedule default_schedule(EnvKind env);

struct StepResult {
  Vector observation;
  double reward = 0.0;
  bool terminated = false;  // goal reached or failure
  bool truncated = false;   // step cap hit
  bool done() const { return terminated || truncated; }
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvKind kind() const = 0;
  virtual Index observation_dim() const = 0;
  virtual int action_count() const = 0;

  Vector reset(Rng& rng);
  StepResult step(int action);

  /// Internal state (not the observation), e.g. Acrobot angles and velocities.
  virtual Vector state() const = 0;
  /// Overwrites the internal state and starts a fresh episode from it.
  void set_state(const Eigen::Ref<const Vector>& state);
  virtual Vector observe() const = 0;

  const PhysicsParams& params() const { return params_; }
  const PhysicsParams& base_params() const { return base_; }
  void apply_drift(const DriftEvent& event);

  int max_steps() const { return max_steps_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }

 protected:
  Environment(PhysicsParams base, int max_steps);

  virtual void sample_initial_state(Rng& rng) = 0;
  virtual void assign_state(const Eigen::Ref<const Vector>& state) = 0;
  /// Advances the internal state; returns (reward, terminated).
  virtual std::pair<double, bool> advance(int action) = 0;

  PhysicsParams params_;

 private:
  PhysicsParams base_;
  int max_steps_;
  int steps_ = 0;
  bool done_ = true;
};

/// Two-link underactuated swing-up, RK4 at dt = 0.2, torque in {-1, 0, 1}.
class Acrobot final : public Environment {
 public:
  explicit Acrobot(int max_steps = 500);
  EnvKind kind() const override { return EnvKind::acrobot; }
  Index observation_dim() const override { return 6; }
  int action_count() const override { return 3; }
  Vector state() const override { return state_; }
  Vector observe() const override;

 private:
  void sample_initial_state(Rng& rng) override;
  void assign_state(const Eigen::Ref<const Vector>& state) override;
  std::pair<double, bool> advance(int action) override;
  Eigen::Vector4d derivatives(const Eigen::Vector4d& s, double torque) const;

  Eigen::Vector4d state_ = Eigen::Vector4d::Zero();
};

class MountainCar final : public Environment {
 public:
  explicit MountainCar(int max_steps = 200);
  EnvKind kind() const override { return EnvKind::mountaincar; }
  Index observation_dim() const override { return 2; }
  int action_count() const override { return 3; }
  Vector state() const override { return state_; }
  Vector observe() const override { return state_; }

 private:
  void sample_initial_state(Rng& rng) override;
  void assign_state(const Eigen::Ref<const Vector>& state) override;
  std::pair<double, bool> advance(int action) override;

  Eigen::Vector2d state_ = Eigen::Vector2d::Zero();
};

/// Cart-pole balancing with explicit Euler at dt = 0.02.
class CartPole final : public Environment {
 public:
  explicit CartPole(int max_steps = 500);
  EnvKind kind() const override { return EnvKind::cartpole; }
  Index observation_dim() const override { return 4; }
  int action_count() const override { return 2; }
  Vector state() const override { return state_; }
  Vector observe() const override { return state_; }

 private:
  void sample_initial_state(Rng& rng) override;
  void assign_state(const Eigen::Ref<const Vector>& state) override;
  std::pair<double, bool> advance(int action) override;

  Eigen::Vector4d state_ = Eigen::Vector4d::Zero();
};

std::unique_ptr<Environment> make_env(EnvKind kind, int max_steps);

}  // namespace gbdqn
