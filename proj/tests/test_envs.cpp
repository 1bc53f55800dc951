#include "gbdqn/envs.hpp"
#include "gbdqn/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gbdqn;

namespace {

DriftEvent event(DriftKind kind, std::map<std::string, double> factors = {}) {
  DriftEvent e;
  e.episode = 10;
  e.kind = kind;
  e.factors = std::move(factors);
  return e;
}

}  // namespace

TEST(MountainCar, ResetRanges) {
  MountainCar env;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vector obs = env.reset(rng);
    EXPECT_GE(obs[0], -0.6);
    EXPECT_LT(obs[0], -0.4);
    EXPECT_EQ(obs[1], 0.0);
  }
}

TEST(Acrobot, ResetRangesAndObservation) {
  Acrobot env;
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vector obs = env.reset(rng);
    ASSERT_EQ(obs.size(), 6);
    const Vector s = env.state();
    EXPECT_LE(s.cwiseAbs().maxCoeff(), 0.1);
    EXPECT_DOUBLE_EQ(obs[0], std::cos(s[0]));
    EXPECT_DOUBLE_EQ(obs[1], std::sin(s[0]));
    EXPECT_DOUBLE_EQ(obs[4], s[2]);
  }
}

TEST(Environments, SameSeedSameTrajectory) {
  for (EnvKind kind : {EnvKind::acrobot, EnvKind::mountaincar, EnvKind::cartpole}) {
    auto a = make_env(kind, 100), b = make_env(kind, 100);
    Rng ra(5), rb(5);
    EXPECT_TRUE((a->reset(ra).array() == b->reset(rb).array()).all());
    for (int t = 0; t < 50 && !a->done(); ++t) {
      const StepResult x = a->step(t % a->action_count()), y = b->step(t % b->action_count());
      ASSERT_TRUE((x.observation.array() == y.observation.array()).all());
      ASSERT_EQ(x.reward, y.reward);
    }
  }
}

TEST(MountainCar, VelocityUpdateClosedForm) {
  MountainCar env;
  Vector s(2);
  s << -0.5, 0.0;
  env.set_state(s);
  const StepResult r = env.step(2);
  const double v = 0.001 - 0.0025 * std::cos(3 * -0.5);
  EXPECT_NEAR(r.observation[1], v, 1e-12);
  EXPECT_NEAR(r.observation[0], -0.5 + v, 1e-12);
  EXPECT_EQ(r.reward, -1.0);
}

TEST(MountainCar, EpisodeTruncatesAtStepCap) {
  MountainCar env(200);
  Rng rng(3);
  env.reset(rng);
  int steps = 0;
  StepResult r;
  do {
    r = env.step(1);
    ++steps;
  } while (!r.done());
  EXPECT_EQ(steps, 200);
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.terminated);
}

TEST(Environments, StepAfterDoneAndInvalidActionThrow) {
  MountainCar env(1);
  Rng rng(4);
  EXPECT_THROW(env.step(0), std::logic_error);
  env.reset(rng);
  EXPECT_THROW(env.step(3), std::invalid_argument);
  EXPECT_THROW(env.step(-1), std::invalid_argument);
  env.step(0);
  EXPECT_THROW(env.step(0), std::logic_error);
}

TEST(CartPole, TerminatesWhenPoleFalls) {
  CartPole env(500);
  Rng rng(6);
  env.reset(rng);
  StepResult r;
  int steps = 0;
  do {
    r = env.step(1);
    ++steps;
  } while (!r.done());
  EXPECT_TRUE(r.terminated);
  EXPECT_LT(steps, 100);
}

TEST(Goldens, MatchReferenceTrajectories) {
  for (const char* name : {"golden_acrobot.txt", "golden_mountaincar.txt", "golden_cartpole.txt"}) {
    const GoldenTrajectory g = read_golden(default_fixture_dir() / name);
    EXPECT_GE(g.steps.size(), 20u) << name;
    EXPECT_LE(golden_deviation(g), 1e-6) << name;
  }
}

TEST(Drift, GravityScalesByFactor) {
  Acrobot env;
  env.apply_drift(event(DriftKind::gravity, {{"gravity", 1.5}}));
  EXPECT_NEAR(env.params()["gravity"], 14.7, 1e-12);
}

TEST(Drift, ResetRestoresBaseBitExactly) {
  Acrobot env;
  const PhysicsParams base = env.params();
  env.apply_drift(event(DriftKind::gravity, {{"gravity", 1.5}}));
  env.apply_drift(event(DriftKind::mass, {{"m1", 1.5}, {"m2", 1.5}}));
  env.apply_drift(event(DriftKind::reset));
  EXPECT_EQ(env.params(), base);
  env.apply_drift(event(DriftKind::reset));
  EXPECT_EQ(env.params(), base);
}

TEST(Drift, CombinedScalesEveryListedParameter) {
  Acrobot env;
  const auto factors = default_drift_factors(EnvKind::acrobot, DriftKind::combined);
  env.apply_drift(event(DriftKind::combined, factors));
  for (const auto& [name, factor] : factors) {
    EXPECT_DOUBLE_EQ(factor, 1.3);
    EXPECT_NEAR(env.params()[name], env.base_params()[name] * 1.3, 1e-12);
  }
  EXPECT_TRUE(factors.contains("gravity"));
  EXPECT_TRUE(factors.contains("m1"));
  EXPECT_TRUE(factors.contains("m2"));
}

TEST(Drift, UnknownParameterRejected) {
  MountainCar env;
  EXPECT_THROW(env.apply_drift(event(DriftKind::mass, {{"m1", 1.5}})), std::invalid_argument);
  EXPECT_THROW(default_drift_factors(EnvKind::mountaincar, DriftKind::mass), std::invalid_argument);
  EXPECT_THROW(default_drift_factors(EnvKind::acrobot, DriftKind::force), std::invalid_argument);
}

TEST(Drift, ChangesDynamicsAndIsolatesInstances) {
  MountainCar drifted, reference;
  drifted.apply_drift(event(DriftKind::force, {{"force", 0.7}}));
  Vector s(2);
  s << -0.5, 0.0;
  drifted.set_state(s);
  reference.set_state(s);
  EXPECT_NE(drifted.step(2).observation[1], reference.step(2).observation[1]);
  EXPECT_DOUBLE_EQ(reference.params()["force"], 0.001);
}

TEST(Schedule, DefaultSchedules) {
  const DriftSchedule acro = default_schedule(EnvKind::acrobot);
  ASSERT_EQ(acro.events().size(), 4u);
  const int episodes[] = {150, 250, 350, 450};
  const DriftKind acro_kinds[] = {DriftKind::gravity, DriftKind::mass, DriftKind::combined, DriftKind::reset};
  const DriftKind car_kinds[] = {DriftKind::gravity, DriftKind::force, DriftKind::combined, DriftKind::reset};
  const DriftSchedule car = default_schedule(EnvKind::mountaincar);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(acro.events()[i].episode, episodes[i]);
    EXPECT_EQ(acro.events()[i].kind, acro_kinds[i]);
    EXPECT_EQ(car.events()[i].kind, car_kinds[i]);
  }
  EXPECT_EQ(acro.at_episode(250)->kind, DriftKind::mass);
  EXPECT_EQ(acro.at_episode(251), nullptr);
}

TEST(Schedule, RejectsUnorderedEpisodes) {
  std::vector<DriftEvent> events{event(DriftKind::gravity), event(DriftKind::reset)};
  EXPECT_THROW(DriftSchedule{events}, std::invalid_argument);
}

TEST(Names, RoundTrip) {
  for (EnvKind k : {EnvKind::acrobot, EnvKind::mountaincar, EnvKind::cartpole})
    EXPECT_EQ(env_kind_from_string(to_string(k)), k);
  for (DriftKind k : {DriftKind::gravity, DriftKind::mass, DriftKind::force, DriftKind::combined, DriftKind::reset})
    EXPECT_EQ(drift_kind_from_string(to_string(k)), k);
  EXPECT_THROW(env_kind_from_string("pendulum"), std::invalid_argument);
}
