#include "gbdqn/agents.hpp"
#include "gbdqn/verify.hpp"

#include <gtest/gtest.h>

using namespace gbdqn;

namespace {

AgentConfig small(Method method) {
  AgentConfig c = AgentConfig::preset(method);
  c.hidden = {16, 16};
  c.learn_start_steps = 64;
  c.batch_size = 16;
  c.epsilon.decay_steps = 500;
  return c;
}

NetSpec acrobot_spec(const AgentConfig& c) {
  NetSpec s;
  s.input_dim = 6;
  s.hidden = c.hidden;
  s.output_dim = 3;
  return s;
}

DriftSchedule one_event(int episode, DriftKind kind) {
  DriftEvent e;
  e.episode = episode;
  e.kind = kind;
  if (kind != DriftKind::reset) e.factors = default_drift_factors(EnvKind::acrobot, kind);
  return DriftSchedule({e});
}

std::vector<Transition> random_transitions(int n, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<Transition> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Transition& tr = out[static_cast<std::size_t>(i)];
    tr.s = Vector(6);
    tr.s_next = Vector(6);
    for (Index k = 0; k < 6; ++k) tr.s[k] = normal(rng), tr.s_next[k] = normal(rng);
    tr.a = i % 3;
    tr.r = -1.0;
    tr.done = i % 7 == 0;
  }
  return out;
}

SampleBatch as_batch(const std::vector<Transition>& trs) {
  SampleBatch b;
  for (std::size_t i = 0; i < trs.size(); ++i) {
    b.ids.push_back(i);
    b.transitions.push_back(&trs[i]);
    b.probs.push_back(1.0 / static_cast<double>(trs.size()));
  }
  b.is_weights = Vector::Ones(static_cast<Index>(trs.size()));
  return b;
}

}  // namespace

TEST(EpsilonSchedule, LinearDecayThenFlat) {
  const EpsilonSchedule e;
  EXPECT_DOUBLE_EQ(e.at(0), 1.0);
  EXPECT_DOUBLE_EQ(e.at(10000), 0.525);
  EXPECT_DOUBLE_EQ(e.at(20000), 0.05);
  EXPECT_DOUBLE_EQ(e.at(50000), 0.05);
}

TEST(AgentConfig, PresetsMatchProtocol) {
  for (Method m : all_methods()) {
    const AgentConfig c = AgentConfig::preset(m);
    EXPECT_EQ(c.discount, 0.99);
    EXPECT_EQ(c.lr, 1e-3);
    EXPECT_EQ(c.batch_size, 64);
    EXPECT_EQ(c.polyak_tau, 0.01);
    EXPECT_EQ(c.clip_norm, 10.0);
    EXPECT_EQ(c.hidden, (std::vector<Index>{128, 128}));
    EXPECT_EQ(c.buffer_capacity, m == Method::sliding_dqn ? 5000u : 50000u);
    EXPECT_EQ(c.priority.mix_beta, m == Method::gbdqn ? 0.5 : 1.0);
    EXPECT_NO_THROW(c.validate());
  }
}

TEST(AgentConfig, ValidationRejectsBadValues) {
  AgentConfig c;
  c.discount = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = AgentConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Names, MethodRoundTrip) {
  for (Method m : all_methods()) EXPECT_EQ(method_from_string(to_string(m)), m);
  EXPECT_THROW(method_from_string("rainbow"), std::invalid_argument);
}

TEST(Reduction, SingleLearnerGbdqnIsBitIdenticalToDqn) {
  const CheckResult r = check_reduction(11);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Trainer, SingleMountainCarEpisode) {
  const auto records = train_run(small(Method::dqn), EnvKind::mountaincar, 200, {}, 1, 0);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_LE(records[0].steps, 200);
  EXPECT_DOUBLE_EQ(records[0].ret, -records[0].steps);
  EXPECT_EQ(records[0].episode, 1);
  EXPECT_EQ(records[0].drift_kind, "none");
}

TEST(Trainer, TruncationDoesNotMarkTerminal) {
  Trainer trainer(small(Method::dqn), EnvKind::mountaincar, 50, {}, 3);
  const RunRecord rec = trainer.run_episode();
  ASSERT_EQ(rec.steps, 50);
  trainer.buffer().for_each([](std::uint64_t, const Transition& tr) { EXPECT_FALSE(tr.done); });
}

TEST(Trainer, DeterministicGivenSeed) {
  for (Method m : all_methods()) {
    const auto a = train_run(small(m), EnvKind::acrobot, 100, one_event(2, DriftKind::gravity), 3, 42);
    const auto b = train_run(small(m), EnvKind::acrobot, 100, one_event(2, DriftKind::gravity), 3, 42);
    EXPECT_EQ(a, b) << to_string(m);
  }
}

TEST(Trainer, DriftIsLabelledOnItsEpisode) {
  const auto records = train_run(small(Method::gbdqn), EnvKind::acrobot, 50, one_event(2, DriftKind::mass), 3, 1);
  EXPECT_EQ(records[0].drift_kind, "none");
  EXPECT_EQ(records[1].drift_kind, "mass");
  EXPECT_EQ(records[0].ensemble_size, 1);
  EXPECT_EQ(records[1].ensemble_size, 2);
}

TEST(Trainer, EpsilonRearmsOnDriftWhenEnabled) {
  AgentConfig c = small(Method::dqn);
  c.epsilon_rearm_on_drift = true;
  Trainer trainer(c, EnvKind::acrobot, 100, one_event(2, DriftKind::gravity), 0);
  trainer.run_episode();
  EXPECT_LT(trainer.epsilon(), 1.0);
  trainer.begin_episode();
  EXPECT_DOUBLE_EQ(trainer.epsilon(), 1.0);
}

TEST(Trainer, SlidingWindowKeepsMostRecent) {
  AgentConfig c = small(Method::sliding_dqn);
  c.buffer_capacity = 150;
  Trainer trainer(c, EnvKind::acrobot, 100, {}, 5);
  for (int e = 0; e < 4; ++e) trainer.run_episode();
  ASSERT_EQ(trainer.buffer().size(), 150u);
  std::int64_t expected = trainer.global_step() - 150;
  trainer.buffer().for_each([&](std::uint64_t, const Transition& tr) { EXPECT_EQ(tr.t, expected++); });
}

TEST(OnDrift, ResetDqnReinitializesButKeepsBuffer) {
  Trainer trainer(small(Method::reset_dqn), EnvKind::acrobot, 100, one_event(3, DriftKind::gravity), 2);
  trainer.run_episode();
  trainer.run_episode();
  const auto& agent = dynamic_cast<const DqnAgent&>(trainer.agent());
  const Vector before = agent.online().params();
  const std::size_t stored = trainer.buffer().size();
  trainer.begin_episode();
  EXPECT_FALSE((agent.online().params().array() == before.array()).all());
  EXPECT_TRUE((agent.target().params().array() == agent.online().params().array()).all());
  for (Index l = 0; l < agent.online().layer_count(); ++l) EXPECT_TRUE(agent.online().bias(l).isZero(0.0));
  EXPECT_EQ(agent.optimizer().step, 0);
  EXPECT_EQ(trainer.buffer().size(), stored);
}

TEST(OnDrift, DqnIgnoresDrift) {
  Trainer trainer(small(Method::dqn), EnvKind::acrobot, 100, one_event(2, DriftKind::gravity), 2);
  trainer.run_episode();
  const auto& agent = dynamic_cast<const DqnAgent&>(trainer.agent());
  const Vector before = agent.online().params();
  trainer.begin_episode();
  EXPECT_TRUE((agent.online().params().array() == before.array()).all());
}

TEST(OnDrift, GbdqnGrowsOnEveryNonResetEvent) {
  const AgentConfig c = small(Method::gbdqn);
  GbdqnAgent agent(c, acrobot_spec(c), Rng(3));
  ReplayBuffer buffer(10);
  std::vector<std::size_t> sizes;
  for (const DriftEvent& e : default_schedule(EnvKind::acrobot).events()) {
    agent.on_drift(e, DriftContext{buffer});
    sizes.push_back(agent.ensemble().frozen().size());
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{1, 2, 3, 3}));
  EXPECT_EQ(agent.ensemble_size(), 4);
  EXPECT_TRUE(agent.ensemble().has_active());
  EXPECT_EQ(agent.ensemble().frozen()[0].alpha, 1.0);
  EXPECT_EQ(agent.ensemble().frozen()[1].alpha, 0.1);
  EXPECT_EQ(agent.ensemble().active().coefficient, 0.1);
}

TEST(OnDrift, GbdqnLineSearchStepIsBounded) {
  AgentConfig c = small(Method::gbdqn);
  c.commit_mode = CommitMode::line_search;
  Trainer trainer(c, EnvKind::acrobot, 100, DriftSchedule({{2, DriftKind::gravity, {{"gravity", 1.5}}},
                                                           {4, DriftKind::mass, {{"m1", 1.5}, {"m2", 1.5}}}}),
                  9);
  for (int e = 0; e < 5; ++e) trainer.run_episode();
  const auto& agent = dynamic_cast<const GbdqnAgent&>(trainer.agent());
  ASSERT_EQ(agent.ensemble().frozen().size(), 2u);
  const double alpha = agent.ensemble().frozen()[1].alpha;
  EXPECT_GT(alpha, 0.0);
  EXPECT_LE(alpha, c.alpha_max);
}

TEST(FrozenLearners, ImmutableDuringTraining) {
  const CheckResult r = check_frozen_immutability(5);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(EnsembleDqn, SingleHeadMatchesDqn) {
  AgentConfig c = small(Method::ensemble_dqn);
  c.ensemble_k = 1;
  DqnAgent dqn(c, acrobot_spec(c), Rng(4), false);
  EnsembleDqnAgent ens(c, acrobot_spec(c), Rng(4));
  Rng data(5);
  for (int step = 0; step < 30; ++step) {
    const auto trs = random_transitions(16, data);
    const LearnStats a = dqn.learn(as_batch(trs));
    const LearnStats b = ens.learn(as_batch(trs));
    ASSERT_EQ(a.td_errors, b.td_errors);
  }
  EXPECT_TRUE((dqn.online().params().array() == ens.heads()[0].online.params().array()).all());
}

TEST(EnsembleDqn, IdenticalHeadsStayIdentical) {
  AgentConfig c = small(Method::ensemble_dqn);
  Rng init(6);
  const Net net = init_params(acrobot_spec(c), init);
  std::vector<EnsembleHead> heads(3, EnsembleHead{net, net, Adam(net.size(), c.lr)});
  EnsembleDqnAgent agent(c, std::move(heads), Rng(7));
  Rng data(8);
  for (int step = 0; step < 20; ++step) agent.learn(as_batch(random_transitions(16, data)));
  const Matrix states = Matrix::Random(6, 5);
  const Matrix head0 = forward(agent.heads()[0].online, states);
  for (const auto& h : agent.heads()) EXPECT_TRUE((h.online.params().array() == agent.heads()[0].online.params().array()).all());
  EXPECT_LE((agent.mean_q(states) - head0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EnsembleDqn, BehaviorIsMeanOfHeads) {
  const AgentConfig c = small(Method::ensemble_dqn);
  EnsembleDqnAgent agent(c, acrobot_spec(c), Rng(9));
  ASSERT_EQ(agent.ensemble_size(), 5);
  Vector obs = Vector::Random(6);
  Vector sum = Vector::Zero(3);
  for (const auto& h : agent.heads()) sum += forward(h.online, obs);
  EXPECT_LE((agent.behavior_q(obs) - sum / 5.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EnsembleDqn, BootstrapMasksDecorrelateHeads) {
  AgentConfig c = small(Method::ensemble_dqn);
  c.ensemble_bootstrap_masks = true;
  Rng init(10);
  const Net net = init_params(acrobot_spec(c), init);
  std::vector<EnsembleHead> heads(2, EnsembleHead{net, net, Adam(net.size(), c.lr)});
  EnsembleDqnAgent agent(c, std::move(heads), Rng(11));
  Rng data(12);
  for (int step = 0; step < 5; ++step) agent.learn(as_batch(random_transitions(16, data)));
  EXPECT_FALSE((agent.heads()[0].online.params().array() == agent.heads()[1].online.params().array()).all());
}
