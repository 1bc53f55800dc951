#include "gbdqn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gbdqn {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap(double x, double lo, double hi) {
  const double span = hi - lo;
  while (x > hi) x -= span;
  while (x < lo) x += span;
  return x;
}

}  // namespace

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::acrobot: return "acrobot";
    case EnvKind::mountaincar: return "mountaincar";
    case EnvKind::cartpole: return "cartpole";
  }
  return "?";
}

EnvKind env_kind_from_string(std::string_view name) {
  if (name == "acrobot") return EnvKind::acrobot;
  if (name == "mountaincar") return EnvKind::mountaincar;
  if (name == "cartpole") return EnvKind::cartpole;
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

std::string to_string(DriftKind kind) {
  switch (kind) {
    case DriftKind::gravity: return "gravity";
    case DriftKind::mass: return "mass";
    case DriftKind::force: return "force";
    case DriftKind::combined: return "combined";
    case DriftKind::reset: return "reset";
  }
  return "?";
}

DriftKind drift_kind_from_string(std::string_view name) {
  if (name == "gravity") return DriftKind::gravity;
  if (name == "mass") return DriftKind::mass;
  if (name == "force") return DriftKind::force;
  if (name == "combined") return DriftKind::combined;
  if (name == "reset") return DriftKind::reset;
  throw std::invalid_argument("unknown drift kind '" + std::string(name) + "'");
}

PhysicsParams::PhysicsParams(std::map<std::string, double> values) : values_(std::move(values)) {
  for (const auto& [name, v] : values_)
    if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument("physics parameter '" + name + "' must be > 0");
}

double PhysicsParams::operator[](const std::string& name) const {
  const auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("unknown physics parameter '" + name + "'");
  return it->second;
}

void PhysicsParams::scale(const std::string& name, double factor) {
  const auto it = values_.find(name);
  if (it == values_.end()) throw std::invalid_argument("environment has no parameter '" + name + "'");
  if (!(factor > 0) || !std::isfinite(factor))
    throw std::invalid_argument("drift factor for '" + name + "' must be > 0");
  it->second *= factor;
}

DriftSchedule::DriftSchedule(std::vector<DriftEvent> events) : events_(std::move(events)) {
  for (std::size_t i = 0; i < events_.size(); ++i) {
    if (events_[i].episode < 1) throw std::invalid_argument("drift episode must be >= 1");
    if (i > 0 && events_[i].episode <= events_[i - 1].episode)
      throw std::invalid_argument("drift episodes must be strictly increasing");
    for (const auto& [name, f] : events_[i].factors)
      if (!(f > 0)) throw std::invalid_argument("drift factor for '" + name + "' must be > 0");
  }
}

const DriftEvent* DriftSchedule::at_episode(int episode) const {
  for (const DriftEvent& e : events_)
    if (e.episode == episode) return &e;
  return nullptr;
}

std::map<std::string, double> default_drift_factors(EnvKind env, DriftKind kind) {
  switch (kind) {
    case DriftKind::reset: return {};
    case DriftKind::gravity: return {{"gravity", 1.5}};
    case DriftKind::mass:
      if (env == EnvKind::acrobot) return {{"m1", 1.5}, {"m2", 1.5}};
      if (env == EnvKind::cartpole) return {{"masscart", 1.5}, {"masspole", 1.5}};
      break;
    case DriftKind::force:
      if (env != EnvKind::acrobot) return {{"force", 0.7}};
      break;
    case DriftKind::combined:
      if (env == EnvKind::acrobot) return {{"m1", 1.3}, {"m2", 1.3}, {"gravity", 1.3}};
      if (env == EnvKind::mountaincar) return {{"force", 1.3}, {"gravity", 1.3}};
      return {{"masscart", 1.3}, {"masspole", 1.3}, {"gravity", 1.3}};
  }
  throw std::invalid_argument("drift kind '" + to_string(kind) + "' has no parameters on " + to_string(env));
}

DriftSchedule default_schedule(EnvKind env) {
  const DriftKind second = env == EnvKind::mountaincar ? DriftKind::force : DriftKind::mass;
  std::vector<DriftEvent> events;
  const std::pair<int, DriftKind> plan[] = {
      {150, DriftKind::gravity}, {250, second}, {350, DriftKind::combined}, {450, DriftKind::reset}};
  for (const auto& [episode, kind] : plan) events.push_back({episode, kind, default_drift_factors(env, kind)});
  return DriftSchedule(std::move(events));
}

Environment::Environment(PhysicsParams base, int max_steps)
    : params_(base), base_(std::move(base)), max_steps_(max_steps) {
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
}

Vector Environment::reset(Rng& rng) {
  sample_initial_state(rng);
  steps_ = 0;
  done_ = false;
  return observe();
}

void Environment::set_state(const Eigen::Ref<const Vector>& state) {
  if (state.size() != this->state().size()) throw std::invalid_argument("set_state: dimension mismatch");
  assign_state(state);
  steps_ = 0;
  done_ = false;
}

StepResult Environment::step(int action) {
  if (done_) throw std::logic_error("step called on a finished episode; call reset first");
  if (action < 0 || action >= action_count()) throw std::invalid_argument("invalid action " + std::to_string(action));
  const auto [reward, terminated] = advance(action);
  ++steps_;
  StepResult out;
  out.observation = observe();
  out.reward = reward;
  out.terminated = terminated;
  out.truncated = !terminated && steps_ >= max_steps_;
  done_ = out.done();
  return out;
}

void Environment::apply_drift(const DriftEvent& event) {
  if (event.kind == DriftKind::reset) {
    params_ = base_;
    return;
  }
  for (const auto& [name, factor] : event.factors)
    if (!params_.contains(name)) throw std::invalid_argument("environment has no parameter '" + name + "'");
  for (const auto& [name, factor] : event.factors) params_.scale(name, factor);
}

// Acrobot --------------------------------------------------------------------

Acrobot::Acrobot(int max_steps)
    : Environment(PhysicsParams({{"m1", 1.0}, {"m2", 1.0}, {"l1", 1.0}, {"l2", 1.0}, {"gravity", 9.8}}), max_steps) {}

Vector Acrobot::observe() const {
  Vector obs(6);
  obs << std::cos(state_[0]), std::sin(state_[0]), std::cos(state_[1]), std::sin(state_[1]), state_[2], state_[3];
  return obs;
}

void Acrobot::sample_initial_state(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int i = 0; i < 4; ++i) state_[i] = u(rng);
}

void Acrobot::assign_state(const Eigen::Ref<const Vector>& state) { state_ = state; }

Eigen::Vector4d Acrobot::derivatives(const Eigen::Vector4d& s, double torque) const {
  const double m1 = params_["m1"], m2 = params_["m2"];
  const double l1 = params_["l1"];
  const double lc1 = 0.5 * params_["l1"], lc2 = 0.5 * params_["l2"];
  const double g = params_["gravity"];
  constexpr double i1 = 1.0, i2 = 1.0;
  const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];

  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
  const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - kPi / 2);
  const double phi1 = -m2 * l1 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2 * m2 * l1 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - kPi / 2) + phi2;
  const double ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
                          (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2};
}

std::pair<double, bool> Acrobot::advance(int action) {
  constexpr double dt = 0.2;
  const double torque = static_cast<double>(action - 1);
  const Eigen::Vector4d k1 = derivatives(state_, torque);
  const Eigen::Vector4d k2 = derivatives(state_ + dt / 2 * k1, torque);
  const Eigen::Vector4d k3 = derivatives(state_ + dt / 2 * k2, torque);
  const Eigen::Vector4d k4 = derivatives(state_ + dt * k3, torque);
  Eigen::Vector4d next = state_ + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);

  next[0] = wrap(next[0], -kPi, kPi);
  next[1] = wrap(next[1], -kPi, kPi);
  next[2] = std::clamp(next[2], -4 * kPi, 4 * kPi);
  next[3] = std::clamp(next[3], -9 * kPi, 9 * kPi);
  state_ = next;

  const bool terminated = -std::cos(state_[0]) - std::cos(state_[1] + state_[0]) > 1.0;
  return {terminated ? 0.0 : -1.0, terminated};
}

// MountainCar ----------------------------------------------------------------

MountainCar::MountainCar(int max_steps)
    : Environment(PhysicsParams({{"force", 0.001}, {"gravity", 0.0025}}), max_steps) {}

void MountainCar::sample_initial_state(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.6, -0.4);
  state_ = {u(rng), 0.0};
}

void MountainCar::assign_state(const Eigen::Ref<const Vector>& state) { state_ = state; }

std::pair<double, bool> MountainCar::advance(int action) {
  constexpr double min_position = -1.2, max_position = 0.6, max_speed = 0.07, goal_position = 0.5;
  double position = state_[0], velocity = state_[1];
  velocity += (action - 1) * params_["force"] + std::cos(3 * position) * (-params_["gravity"]);
  velocity = std::clamp(velocity, -max_speed, max_speed);
  position += velocity;
  position = std::clamp(position, min_position, max_position);
  if (position == min_position && velocity < 0) velocity = 0;
  state_ = {position, velocity};
  const bool terminated = position >= goal_position && velocity >= 0;
  return {-1.0, terminated};
}

// CartPole -------------------------------------------------------------------

CartPole::CartPole(int max_steps)
    : Environment(PhysicsParams({{"gravity", 9.8},
                                 {"masscart", 1.0},
                                 {"masspole", 0.1},
                                 {"length", 0.5},
                                 {"force", 10.0}}),
                  max_steps) {}

void CartPole::sample_initial_state(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int i = 0; i < 4; ++i) state_[i] = u(rng);
}

void CartPole::assign_state(const Eigen::Ref<const Vector>& state) { state_ = state; }

std::pair<double, bool> CartPole::advance(int action) {
  constexpr double tau = 0.02, x_limit = 2.4, theta_limit = 12 * 2 * kPi / 360;
  const double gravity = params_["gravity"], masscart = params_["masscart"], masspole = params_["masspole"];
  const double length = params_["length"];
  const double total_mass = masscart + masspole;
  const double polemass_length = masspole * length;
  const double force = action == 1 ? params_["force"] : -params_["force"];

  const double x = state_[0], x_dot = state_[1], theta = state_[2], theta_dot = state_[3];
  const double costheta = std::cos(theta), sintheta = std::sin(theta);
  const double temp = (force + polemass_length * theta_dot * theta_dot * sintheta) / total_mass;
  const double thetaacc = (gravity * sintheta - costheta * temp) /
                          (length * (4.0 / 3.0 - masspole * costheta * costheta / total_mass));
  const double xacc = temp - polemass_length * thetaacc * costheta / total_mass;

  state_ = {x + tau * x_dot, x_dot + tau * xacc, theta + tau * theta_dot, theta_dot + tau * thetaacc};
  const bool terminated =
      state_[0] < -x_limit || state_[0] > x_limit || state_[2] < -theta_limit || state_[2] > theta_limit;
  return {1.0, terminated};
}

std::unique_ptr<Environment> make_env(EnvKind kind, int max_steps) {
  switch (kind) {
    case EnvKind::acrobot: return std::make_unique<Acrobot>(max_steps);
    case EnvKind::mountaincar: return std::make_unique<MountainCar>(max_steps);
    case EnvKind::cartpole: return std::make_unique<CartPole>(max_steps);
  }
  throw std::invalid_argument("unknown environment");
}

}  // namespace gbdqn
