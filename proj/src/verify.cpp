#include "gbdqn/verify.hpp"

#include "gbdqn/agents.hpp"
#include "gbdqn/bench.hpp"
#include "gbdqn/boost.hpp"
#include "gbdqn/replay.hpp"
#include "gbdqn/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#ifndef GBDQN_FIXTURE_DIR
#define GBDQN_FIXTURE_DIR "tests/fixtures"
#endif

namespace gbdqn {

namespace {

std::string describe(std::initializer_list<std::pair<const char*, double>> items) {
  std::ostringstream out;
  out.precision(4);
  bool first = true;
  for (const auto& [k, v] : items) {
    out << (first ? "" : ", ") << k << '=' << v;
    first = false;
  }
  return out.str();
}

bool bit_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data());
}

double reference_loss(const Net& net, const Matrix& states, std::span<const int> actions, const Vector& targets,
                      const Vector& weights) {
  double loss = 0.0;
  for (Index i = 0; i < states.cols(); ++i) {
    const double err = targets[i] - reference_forward(net, states.col(i))[actions[static_cast<std::size_t>(i)]];
    loss += 0.5 * weights[i] * err * err;
  }
  return loss;
}

}  // namespace

std::filesystem::path default_fixture_dir() { return GBDQN_FIXTURE_DIR; }

Vector reference_forward(const Net& net, const Vector& state) {
  std::vector<double> x(state.data(), state.data() + state.size());
  const NetSpec& spec = net.spec();
  for (Index l = 0; l < spec.layer_count(); ++l) {
    const Index rows = spec.fan_out(l), cols = spec.fan_in(l);
    const double* w = net.params().data() + net.weight_offset(l);
    const double* b = net.params().data() + net.bias_offset(l);
    std::vector<double> y(static_cast<std::size_t>(rows));
    for (Index i = 0; i < rows; ++i) {
      double acc = b[i];
      for (Index j = 0; j < cols; ++j) acc += w[j * rows + i] * x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = (l + 1 < spec.layer_count() && acc < 0.0) ? 0.0 : acc;
    }
    x = std::move(y);
  }
  return Eigen::Map<const Vector>(x.data(), static_cast<Index>(x.size()));
}

Vector finite_difference_gradient(const Net& net, const Matrix& states, std::span<const int> actions,
                                  const Vector& targets, const Vector& weights, double h) {
  Net probe = net;
  Vector grad(net.size());
  for (Index k = 0; k < net.size(); ++k) {
    const double saved = probe.params()[k];
    probe.params()[k] = saved + h;
    const double up = reference_loss(probe, states, actions, targets, weights);
    probe.params()[k] = saved - h;
    const double down = reference_loss(probe, states, actions, targets, weights);
    probe.params()[k] = saved;
    grad[k] = (up - down) / (2 * h);
  }
  return grad;
}

GoldenTrajectory read_golden(std::istream& in) {
  GoldenTrajectory g;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "env") {
        std::string name;
        ls >> name;
        g.env = env_kind_from_string(name);
      } else if (key == "initial") {
        std::vector<double> v;
        for (double x; ls >> x;) v.push_back(x);
        g.initial = Eigen::Map<Vector>(v.data(), static_cast<Index>(v.size()));
      }
      continue;
    }
    std::vector<double> fields;
    for (double x; ls >> x;) fields.push_back(x);
    const std::size_t dim = static_cast<std::size_t>(g.initial.size());
    if (fields.size() != dim + 4) throw std::runtime_error("golden: malformed row '" + line + "'");
    GoldenStep s;
    s.step = static_cast<int>(fields[0]);
    s.action = static_cast<int>(fields[1]);
    s.state = Eigen::Map<Vector>(fields.data() + 2, static_cast<Index>(dim));
    s.reward = fields[dim + 2];
    s.done = fields[dim + 3] != 0.0;
    g.steps.push_back(std::move(s));
  }
  return g;
}

GoldenTrajectory read_golden(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open golden fixture " + path.string());
  return read_golden(in);
}

double golden_deviation(const GoldenTrajectory& golden) {
  auto env = make_env(golden.env, 10000);
  env->set_state(golden.initial);
  double worst = 0.0;
  for (const GoldenStep& s : golden.steps) {
    const StepResult r = env->step(s.action);
    if (r.reward != s.reward || r.terminated != s.done) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, (env->state() - s.state).cwiseAbs().maxCoeff());
  }
  return worst;
}

// Checks -----------------------------------------------------------------------

CheckResult check_step_ledger(std::uint64_t seed, int instances, int length) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  double worst_rel = 0.0;
  int non_decreasing = 0;
  for (int k = 0; k < instances; ++k) {
    Vector r(length), h(length);
    for (Index i = 0; i < length; ++i) r[i] = normal(rng), h[i] = normal(rng);
    const StepLedger led = step_ledger(r, h);
    // Direct-summation oracle for the loss change.
    double before = 0, after = 0;
    const double alpha = led.a / led.b;
    for (Index i = 0; i < length; ++i) {
      before += r[i] * r[i];
      after += (r[i] - alpha * h[i]) * (r[i] - alpha * h[i]);
    }
    const double predicted = -led.a * led.a / led.b;
    const double rel = std::abs((after - before) - predicted) / std::max(before, 1e-300);
    worst_rel = std::max({worst_rel, rel, led.delta_check / std::max(led.loss_before, 1e-300)});
    if (std::abs(led.a) > 1e-12 && !(after < before)) ++non_decreasing;
  }
  return {"step_ledger", worst_rel <= 1e-9 && non_decreasing == 0,
          describe({{"instances", double(instances)}, {"worst_rel", worst_rel}, {"non_decreasing", double(non_decreasing)}})};
}

CheckResult check_gradients(std::uint64_t seed, int nets) {
  Rng rng(seed);
  std::uniform_int_distribution<int> dim(1, 5), depth(1, 2), act(0, 4);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  double worst = 0.0;
  for (int n = 0; n < nets; ++n) {
    NetSpec spec;
    spec.input_dim = dim(rng);
    spec.hidden.assign(static_cast<std::size_t>(depth(rng)), 0);
    for (Index& h : spec.hidden) h = dim(rng);
    spec.output_dim = dim(rng);
    Net net = init_params(spec, rng);
    for (Index i = 0; i < net.size(); ++i) net.params()[i] += 0.1 * normal(rng);  // non-zero biases
    constexpr Index batch = 3;
    Matrix states(spec.input_dim, batch);
    for (Index i = 0; i < states.size(); ++i) states.data()[i] = normal(rng);
    std::vector<int> actions(batch);
    for (int& a : actions) a = act(rng) % static_cast<int>(spec.output_dim);
    Vector targets(batch), weights(batch);
    for (Index i = 0; i < batch; ++i) targets[i] = normal(rng), weights[i] = weight(rng);

    Vector analytic;
    weighted_mse_gradient(net, states, actions, targets, weights, analytic);
    const Vector numeric = finite_difference_gradient(net, states, actions, targets, weights, 1e-5);
    for (Index k = 0; k < analytic.size(); ++k) {
      const double denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), 1e-6});
      worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / denom);
    }
  }
  return {"gradient_check", worst <= 1e-4, describe({{"nets", double(nets)}, {"worst_rel", worst}})};
}

CheckResult check_replay_distribution(std::uint64_t seed) {
  constexpr std::size_t items = 64, batches = 1000, batch_size = 100;
  constexpr double chi2_critical = 103.44237731987324;  // 99.9% quantile, 63 degrees of freedom
  Rng rng(seed);
  std::uniform_real_distribution<double> pdist(0.1, 10.0);
  ReplayBuffer buffer(items);
  for (std::size_t i = 0; i < items; ++i) {
    Transition tr;
    tr.s = Vector::Zero(1);
    tr.s_next = Vector::Zero(1);
    tr.p = pdist(rng);
    tr.t = static_cast<std::int64_t>(i);
    buffer.push(std::move(tr));
  }
  double prob_sum = 0.0, direct_total = 0.0;
  buffer.for_each([&](std::uint64_t id, const Transition& tr) {
    prob_sum += buffer.probability(id);
    direct_total += tr.p;
  });
  std::vector<double> counts(items, 0.0);
  bool max_weight_one = true;
  for (std::size_t b = 0; b < batches; ++b) {
    const SampleBatch s = buffer.sample(batch_size, 0.6, rng);
    if (s.is_weights.maxCoeff() != 1.0) max_weight_one = false;
    for (std::uint64_t id : s.ids) counts[id] += 1.0;
  }
  const double draws = static_cast<double>(batches * batch_size);
  double chi2 = 0.0;
  buffer.for_each([&](std::uint64_t id, const Transition& tr) {
    const double expected = draws * tr.p / direct_total;
    chi2 += (counts[id] - expected) * (counts[id] - expected) / expected;
  });
  const bool ok = chi2 < chi2_critical && max_weight_one && std::abs(prob_sum - 1.0) <= 1e-9;
  return {"replay_distribution", ok,
          describe({{"chi2", chi2}, {"critical", chi2_critical}, {"max_w_is_1", double(max_weight_one)},
                    {"sum_P_minus_1", prob_sum - 1.0}})};
}

CheckResult check_priority_monotonicity() {
  PriorityParams params;
  params.mix_beta = 0.5;
  int violations = 0;
  constexpr int grid = 100;
  for (int i = 0; i < grid; ++i) {
    const std::int64_t age = 50 * i;
    for (int j = 0; j + 1 < grid; ++j) {
      const double d0 = 0.1 * j, d1 = 0.1 * (j + 1);
      if (!(priority(d1, age, params) > priority(d0, age, params))) ++violations;
      if (!(priority(-d1, age, params) > priority(-d0, age, params))) ++violations;
    }
  }
  for (int j = 0; j < grid; ++j) {
    const double delta = 0.1 * j;
    for (int i = 0; i + 1 < grid; ++i)
      if (!(priority(delta, 50 * (i + 1), params) < priority(delta, 50 * i, params))) ++violations;
  }
  return {"priority_monotonicity", violations == 0, describe({{"violations", double(violations)}})};
}

CheckResult check_env_goldens(const std::filesystem::path& fixture_dir) {
  double worst = 0.0;
  std::string detail;
  bool ok = true;
  for (const char* name : {"acrobot", "mountaincar", "cartpole"}) {
    try {
      const GoldenTrajectory g = read_golden(fixture_dir / ("golden_" + std::string(name) + ".txt"));
      const double dev = golden_deviation(g);
      worst = std::max(worst, dev);
      if (!(dev <= 1e-6) || g.steps.size() < 20) ok = false;
      detail += std::string(detail.empty() ? "" : ", ") + name + "=" + std::to_string(dev);
    } catch (const std::exception& e) {
      ok = false;
      detail += std::string(detail.empty() ? "" : ", ") + name + ": " + e.what();
    }
  }
  return {"env_goldens", ok, detail};
}

CheckResult check_reduction(std::uint64_t seed, int learn_steps) {
  AgentConfig dqn = AgentConfig::preset(Method::dqn);
  dqn.learn_start_steps = dqn.batch_size;
  AgentConfig gb = dqn;
  gb.method = Method::gbdqn;  // TD-only priorities and epsilon-greedy inherited from the DQN settings

  Trainer a(dqn, EnvKind::acrobot, 500, {}, seed);
  Trainer b(gb, EnvKind::acrobot, 500, {}, seed);
  const auto& da = dynamic_cast<const DqnAgent&>(a.agent());
  const auto& gba = dynamic_cast<const GbdqnAgent&>(b.agent());

  int compared = 0;
  bool identical = true;
  a.begin_episode();
  b.begin_episode();
  while (a.learn_steps() < learn_steps && identical) {
    const std::int64_t before = a.learn_steps();
    const bool done_a = a.step();
    const bool done_b = b.step();
    if (done_a != done_b || a.learn_steps() != b.learn_steps()) identical = false;
    if (a.learn_steps() != before) {
      ++compared;
      const ActiveLearner& act = gba.ensemble().active();
      identical = identical && bit_equal(da.online().params(), act.online.params()) &&
                  bit_equal(da.target().params(), act.target.params());
    }
    if (done_a && identical) {
      a.end_episode();
      b.end_episode();
      a.begin_episode();
      b.begin_episode();
    }
  }
  return {"reduction_m1", identical && compared == learn_steps,
          describe({{"learn_steps_compared", double(compared)}, {"bit_identical", double(identical)}})};
}

CheckResult check_frozen_immutability(std::uint64_t seed) {
  const ExperimentConfig smoke = preset("smoke");
  Trainer trainer(smoke.agent(Method::gbdqn), smoke.env, smoke.max_steps, smoke.schedule, seed);
  const auto& agent = dynamic_cast<const GbdqnAgent&>(trainer.agent());
  std::vector<std::pair<Vector, Vector>> snapshots;
  for (int e = 0; e < smoke.episodes; ++e) {
    trainer.run_episode();
    const auto& frozen = agent.ensemble().frozen();
    for (std::size_t j = snapshots.size(); j < frozen.size(); ++j)
      snapshots.emplace_back(frozen[j].online.params(), frozen[j].target.params());
  }
  bool ok = !snapshots.empty();
  const auto& frozen = agent.ensemble().frozen();
  for (std::size_t j = 0; j < snapshots.size(); ++j)
    ok = ok && bit_equal(snapshots[j].first, frozen[j].online.params()) &&
         bit_equal(snapshots[j].second, frozen[j].target.params());
  return {"frozen_immutability", ok,
          describe({{"commits", double(snapshots.size())}, {"learn_steps", double(trainer.learn_steps())}})};
}

CheckResult check_tabular_convergence(std::uint64_t seed) {
  Rng rng(seed);
  const tabular::Mdp mdp = tabular::Mdp::random(5, 2, 0.9, rng);
  const Matrix q_star = tabular::value_iteration(mdp, 1e-10);
  const tabular::BoostTrace trace = tabular::boost(mdp, Matrix::Zero(5, 2), 200, 1e-3);
  const double bellman = (mdp.bellman(trace.q) - trace.q).cwiseAbs().maxCoeff();
  const double gap = (trace.q - q_star).cwiseAbs().maxCoeff();
  // Contraction bound: |Q - Q*| <= |T*Q - Q| / (1 - discount).
  const bool ok = bellman < 1e-3 && trace.rounds <= 200 && gap <= bellman / (1 - mdp.discount) + 1e-10 &&
                  trace.worst_ledger_violation <= 1e-9 && trace.residual_loss_decreased;
  return {"tabular_convergence", ok,
          describe({{"rounds", double(trace.rounds)}, {"bellman_err", bellman}, {"gap_to_Qstar", gap},
                    {"ledger_rel", trace.worst_ledger_violation}})};
}

CheckResult check_tabular_adaptation(std::uint64_t seed) {
  Rng rng(seed);
  const tabular::Mdp mdp = tabular::Mdp::random(5, 2, 0.9, rng);
  const tabular::BoostTrace before = tabular::boost(mdp, Matrix::Zero(5, 2), 200, 1e-6);
  const tabular::Mdp drifted = mdp.perturbed(0.5, rng);
  const Matrix q_new = tabular::value_iteration(drifted, 1e-10);
  const double initial_gap = (before.q - q_new).cwiseAbs().maxCoeff();
  // Keep boosting until the Bellman error certifies a 1e-3 gap: |T*Q - Q| <= (1 - discount) * 1e-3.
  const tabular::BoostTrace after = tabular::boost(drifted, before.q, 400, 1e-3 * (1 - drifted.discount));
  const double gap = (after.q - q_new).cwiseAbs().maxCoeff();
  const double step_violation = std::max(before.worst_step_violation, after.worst_step_violation);
  const bool ok = gap <= 1e-3 && initial_gap > 1e-3 && step_violation <= 2.0 && after.residual_loss_decreased;
  return {"tabular_adaptation", ok,
          describe({{"initial_gap", initial_gap}, {"rounds", double(after.rounds)}, {"final_gap", gap},
                    {"step_violation_ulps", step_violation}})};
}

std::vector<CheckResult> verify(const VerifyOptions& options) {
  const std::uint64_t s = options.seed;
  const auto fixtures = options.fixture_dir.empty() ? default_fixture_dir() : options.fixture_dir;
  std::vector<CheckResult> out;
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("exception: ") + e.what()});
    }
  };
  guarded("step_ledger", [&] { return check_step_ledger(s); });
  guarded("gradient_check", [&] { return check_gradients(s + 1); });
  guarded("replay_distribution", [&] { return check_replay_distribution(s + 2); });
  guarded("priority_monotonicity", [&] { return check_priority_monotonicity(); });
  guarded("env_goldens", [&] { return check_env_goldens(fixtures); });
  guarded("reduction_m1", [&] { return check_reduction(s + 3); });
  guarded("frozen_immutability", [&] { return check_frozen_immutability(s + 4); });
  guarded("tabular_convergence", [&] { return check_tabular_convergence(s + 5); });
  guarded("tabular_adaptation", [&] { return check_tabular_adaptation(s + 5); });
  return out;
}

bool print_report(std::ostream& out, const std::vector<CheckResult>& results) {
  bool all = true;
  for (const CheckResult& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  (" << r.detail << ")\n";
    all = all && r.passed;
  }
  out << (all ? "all checks passed" : "verification FAILED") << '\n';
  return all;
}

}  // namespace gbdqn
