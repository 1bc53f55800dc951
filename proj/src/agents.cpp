#include "gbdqn/agents.hpp"

#include <algorithm>
#include <stdexcept>

namespace gbdqn {

namespace {

template <typename E>
struct Names {
  E value;
  const char* name;
};

constexpr Names<Method> kMethods[] = {{Method::dqn, "dqn"},
                                      {Method::gbdqn, "gbdqn"},
                                      {Method::ensemble_dqn, "ensemble_dqn"},
                                      {Method::reset_dqn, "reset_dqn"},
                                      {Method::sliding_dqn, "sliding_dqn"}};
constexpr Names<PolicyKind> kPolicies[] = {{PolicyKind::epsilon_greedy, "epsilon_greedy"},
                                           {PolicyKind::softmax, "softmax"}};
constexpr Names<InsertMode> kInsertModes[] = {{InsertMode::computed_delta, "computed_delta"},
                                              {InsertMode::max_priority, "max_priority"}};
constexpr Names<CommitMode> kCommitModes[] = {{CommitMode::shrinkage, "shrinkage"},
                                              {CommitMode::line_search, "line_search"}};

template <typename E, std::size_t N>
std::string name_of(const Names<E> (&table)[N], E value) {
  for (const auto& entry : table)
    if (entry.value == value) return entry.name;
  return "?";
}

template <typename E, std::size_t N>
E value_of(const Names<E> (&table)[N], std::string_view name, const char* what) {
  for (const auto& entry : table)
    if (name == entry.name) return entry.value;
  throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

Matrix column(const Vector& v) { return Matrix(v); }

}  // namespace

std::string to_string(Method m) { return name_of(kMethods, m); }
Method method_from_string(std::string_view name) { return value_of(kMethods, name, "method"); }
std::string to_string(PolicyKind p) { return name_of(kPolicies, p); }
PolicyKind policy_from_string(std::string_view name) { return value_of(kPolicies, name, "policy"); }
std::string to_string(InsertMode m) { return name_of(kInsertModes, m); }
InsertMode insert_mode_from_string(std::string_view name) { return value_of(kInsertModes, name, "insert mode"); }
std::string to_string(CommitMode m) { return name_of(kCommitModes, m); }
CommitMode commit_mode_from_string(std::string_view name) { return value_of(kCommitModes, name, "commit mode"); }

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::dqn, Method::gbdqn, Method::ensemble_dqn, Method::reset_dqn,
                                           Method::sliding_dqn};
  return methods;
}

double EpsilonSchedule::at(std::int64_t step) const {
  if (decay_steps <= 0 || step >= decay_steps) return end;
  const double frac = static_cast<double>(std::max<std::int64_t>(step, 0)) / static_cast<double>(decay_steps);
  return start + frac * (end - start);
}

void AgentConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(discount > 0 && discount < 1, "discount must be in (0,1)");
  require(lr > 0, "lr must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(buffer_capacity >= 1, "buffer_capacity must be >= 1");
  require(learn_start_steps >= 0, "learn_start_steps must be >= 0");
  require(update_every_steps >= 1, "update_every_steps must be >= 1");
  require(polyak_tau > 0 && polyak_tau <= 1, "polyak_tau must be in (0,1]");
  require(clip_norm > 0, "clip_norm must be > 0");
  require(epsilon.start >= 0 && epsilon.start <= 1 && epsilon.end >= 0 && epsilon.end <= 1,
          "epsilon bounds must be in [0,1]");
  require(softmax_tau > 0, "softmax_tau must be > 0");
  require(!hidden.empty(), "hidden must be non-empty");
  require(eta_boost > 0, "eta_boost must be > 0");
  require(first_learner_alpha > 0, "first_learner_alpha must be > 0");
  require(alpha_max > 0, "alpha_max must be > 0");
  require(line_search_batch >= 1, "line_search_batch must be >= 1");
  require(ensemble_k >= 1, "ensemble_k must be >= 1");
  priority.validate();
}

AgentConfig AgentConfig::preset(Method method) {
  AgentConfig c;
  c.method = method;
  if (method == Method::sliding_dqn) c.buffer_capacity = 5000;
  if (method == Method::gbdqn) c.priority.mix_beta = 0.5;
  return c;
}

Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x9e3779b9u};
  return Rng(seq);
}

// DQN ------------------------------------------------------------------------

DqnAgent::DqnAgent(const AgentConfig& config, const NetSpec& spec, Rng rng, bool reset_on_drift)
    : config_(config), spec_(spec), rng_(std::move(rng)), reset_on_drift_(reset_on_drift) {
  reinitialize();
}

void DqnAgent::reinitialize() {
  online_ = init_params(spec_, rng_);
  target_ = online_;
  optimizer_ = Adam(online_.size(), config_.lr);
}

Vector DqnAgent::behavior_q(const Vector& observation) const { return forward(online_, observation); }

double DqnAgent::td_error(const Transition& tr) const {
  const double next = tr.done ? 0.0 : forward(target_, tr.s_next).maxCoeff();
  return tr.r + config_.discount * next - forward(online_, tr.s)[tr.a];
}

LearnStats DqnAgent::learn(const SampleBatch& sample) {
  const PackedBatch batch = PackedBatch::from(sample.transitions);
  const Vector next_max = column_max(forward(target_, batch.next_states));
  const Vector y = batch.rewards + config_.discount * batch.not_done.cwiseProduct(next_max);
  const Vector td = y - gather(forward(online_, batch.states), batch.actions);

  LearnStats stats;
  stats.loss = weighted_mse_grad_step(online_, optimizer_, batch.states, batch.actions, y, sample.is_weights,
                                      config_.clip_norm);
  stats.td_errors.assign(td.data(), td.data() + td.size());
  polyak_update(target_, online_, config_.polyak_tau);
  return stats;
}

void DqnAgent::on_drift(const DriftEvent&, const DriftContext&) {
  if (reset_on_drift_) reinitialize();
}

// Ensemble-DQN ---------------------------------------------------------------

EnsembleDqnAgent::EnsembleDqnAgent(const AgentConfig& config, const NetSpec& spec, Rng rng)
    : config_(config), rng_(std::move(rng)) {
  if (config.ensemble_k < 1) throw std::invalid_argument("ensemble_k must be >= 1");
  for (int k = 0; k < config.ensemble_k; ++k) {
    Net online = init_params(spec, rng_);
    Net target = online;
    const Index n = online.size();
    heads_.push_back({std::move(online), std::move(target), Adam(n, config.lr)});
  }
}

EnsembleDqnAgent::EnsembleDqnAgent(const AgentConfig& config, std::vector<EnsembleHead> heads, Rng rng)
    : config_(config), rng_(std::move(rng)), heads_(std::move(heads)) {
  if (heads_.empty()) throw std::invalid_argument("EnsembleDqnAgent: need at least one head");
}

Matrix EnsembleDqnAgent::mean_q(const Eigen::Ref<const Matrix>& states) const {
  Matrix q = forward(heads_.front().online, states);
  for (std::size_t k = 1; k < heads_.size(); ++k) q += forward(heads_[k].online, states);
  return q / static_cast<double>(heads_.size());
}

Matrix EnsembleDqnAgent::mean_target_q(const Eigen::Ref<const Matrix>& states) const {
  Matrix q = forward(heads_.front().target, states);
  for (std::size_t k = 1; k < heads_.size(); ++k) q += forward(heads_[k].target, states);
  return q / static_cast<double>(heads_.size());
}

Vector EnsembleDqnAgent::behavior_q(const Vector& observation) const { return mean_q(column(observation)).col(0); }

double EnsembleDqnAgent::td_error(const Transition& tr) const {
  const double next = tr.done ? 0.0 : mean_target_q(column(tr.s_next)).col(0).maxCoeff();
  return tr.r + config_.discount * next - mean_q(column(tr.s))(tr.a, 0);
}

LearnStats EnsembleDqnAgent::learn(const SampleBatch& sample) {
  const PackedBatch batch = PackedBatch::from(sample.transitions);
  const Vector next_max = column_max(mean_target_q(batch.next_states));
  const Vector y = batch.rewards + config_.discount * batch.not_done.cwiseProduct(next_max);
  const Vector td = y - gather(mean_q(batch.states), batch.actions);

  LearnStats stats;
  std::bernoulli_distribution coin(0.5);
  for (EnsembleHead& head : heads_) {
    Vector weights = sample.is_weights;
    if (config_.ensemble_bootstrap_masks)
      for (Index i = 0; i < weights.size(); ++i)
        if (!coin(rng_)) weights[i] = 0.0;
    stats.loss += weighted_mse_grad_step(head.online, head.optimizer, batch.states, batch.actions, y, weights,
                                         config_.clip_norm);
    polyak_update(head.target, head.online, config_.polyak_tau);
  }
  stats.loss /= static_cast<double>(heads_.size());
  stats.td_errors.assign(td.data(), td.data() + td.size());
  return stats;
}

// GB-DQN ---------------------------------------------------------------------

GbdqnAgent::GbdqnAgent(const AgentConfig& config, const NetSpec& spec, Rng rng)
    : config_(config), rng_(std::move(rng)), ensemble_(spec, config.discount) {
  ensemble_.open_active(rng_, config_.lr, config_.first_learner_alpha);
}

Vector GbdqnAgent::behavior_q(const Vector& observation) const {
  return ensemble_.ensemble_q(column(observation), !config_.act_on_frozen_only).col(0);
}

double GbdqnAgent::td_error(const Transition& tr) const {
  const bool with_active = !config_.bootstrap_excludes_active;
  const double next = tr.done ? 0.0 : ensemble_.target_ensemble_q(column(tr.s_next), with_active).col(0).maxCoeff();
  return tr.r + config_.discount * next - ensemble_.ensemble_q(column(tr.s), true)(tr.a, 0);
}

LearnStats GbdqnAgent::learn(const SampleBatch& sample) {
  const PackedBatch batch = PackedBatch::from(sample.transitions);
  const ResidualBatch res = ensemble_.residual_targets(batch, !config_.bootstrap_excludes_active);
  ActiveLearner& active = ensemble_.active();

  LearnStats stats;
  stats.loss = weighted_mse_grad_step(active.online, active.optimizer, batch.states, batch.actions,
                                      res.residual_target, sample.is_weights, config_.clip_norm);
  stats.td_errors.assign(res.td_error.data(), res.td_error.data() + res.td_error.size());
  ensemble_.polyak_active(config_.polyak_tau);
  return stats;
}

void GbdqnAgent::on_drift(const DriftEvent& event, const DriftContext& ctx) {
  if (event.kind == DriftKind::reset) return;
  if (ensemble_.frozen().empty()) {
    ensemble_.commit_with(config_.first_learner_alpha);
  } else if (config_.commit_mode == CommitMode::line_search && ctx.buffer.size() > 0) {
    // Evaluate the outgoing learner on the most recent transitions of its regime.
    std::vector<const Transition*> recent;
    const std::size_t n = std::min(config_.line_search_batch, ctx.buffer.size());
    for (std::uint64_t id = ctx.buffer.inserted() - n; id < ctx.buffer.inserted(); ++id)
      recent.push_back(&ctx.buffer.at(id));
    const PackedBatch eval = PackedBatch::from(recent);
    bool fallback = false;
    ensemble_.commit(CommitMode::line_search, &eval, config_.alpha_max, &fallback);
    if (fallback) ++fallbacks_;
  } else {
    ensemble_.commit(CommitMode::shrinkage);
  }
  ensemble_.open_active(rng_, config_.lr, config_.eta_boost);
}

std::unique_ptr<Agent> make_agent(const AgentConfig& config, const NetSpec& spec, Rng rng) {
  switch (config.method) {
    case Method::dqn:
    case Method::sliding_dqn: return std::make_unique<DqnAgent>(config, spec, std::move(rng), false);
    case Method::reset_dqn: return std::make_unique<DqnAgent>(config, spec, std::move(rng), true);
    case Method::ensemble_dqn: return std::make_unique<EnsembleDqnAgent>(config, spec, std::move(rng));
    case Method::gbdqn: return std::make_unique<GbdqnAgent>(config, spec, std::move(rng));
  }
  throw std::invalid_argument("unknown method");
}

// Trainer --------------------------------------------------------------------

namespace {
enum Stream : std::uint64_t { kEnvStream = 1, kAgentStream, kPolicyStream, kReplayStream };

NetSpec spec_for(const AgentConfig& config, const Environment& env) {
  NetSpec spec;
  spec.input_dim = env.observation_dim();
  spec.hidden = config.hidden;
  spec.output_dim = env.action_count();
  return spec;
}
}  // namespace

Trainer::Trainer(AgentConfig config, EnvKind env, int max_steps, DriftSchedule schedule, std::uint64_t seed)
    : config_(std::move(config)),
      schedule_(std::move(schedule)),
      seed_(seed),
      env_(make_env(env, max_steps)),
      env_rng_(stream_rng(seed, kEnvStream)),
      policy_rng_(stream_rng(seed, kPolicyStream)),
      replay_rng_(stream_rng(seed, kReplayStream)),
      buffer_(config_.buffer_capacity) {
  config_.validate();
  agent_ = make_agent(config_, spec_for(config_, *env_), stream_rng(seed, kAgentStream));
}

double Trainer::epsilon() const { return config_.epsilon.at(global_step_ - epsilon_origin_); }

void Trainer::begin_episode() {
  if (in_episode_) throw std::logic_error("Trainer: episode already in progress");
  ++episode_;
  episode_drift_ = "none";
  if (const DriftEvent* event = schedule_.at_episode(episode_)) {
    env_->apply_drift(*event);
    agent_->on_drift(*event, DriftContext{buffer_});
    if (config_.epsilon_rearm_on_drift) epsilon_origin_ = global_step_;
    episode_drift_ = to_string(event->kind);
  }
  observation_ = env_->reset(env_rng_);
  episode_return_ = 0.0;
  in_episode_ = true;
}

bool Trainer::step() {
  if (!in_episode_) throw std::logic_error("Trainer: no episode in progress");
  const Vector q = agent_->behavior_q(observation_);
  const int action = config_.policy == PolicyKind::epsilon_greedy
                         ? epsilon_greedy_action(q, epsilon(), policy_rng_)
                         : softmax_action(q, config_.softmax_tau, policy_rng_);
  StepResult result = env_->step(action);

  Transition tr;
  tr.s = observation_;
  tr.a = action;
  tr.r = result.reward;
  tr.s_next = result.observation;
  tr.done = result.terminated;
  tr.t = global_step_;
  if (config_.insert_mode == InsertMode::computed_delta) {
    tr.p = priority(agent_->td_error(tr), 0, config_.priority);
    buffer_.push(std::move(tr));
  } else {
    buffer_.push_max_priority(std::move(tr));
  }

  ++global_step_;
  episode_return_ += result.reward;
  if (global_step_ >= config_.learn_start_steps && global_step_ % config_.update_every_steps == 0) learn();

  observation_ = std::move(result.observation);
  return result.done();
}

void Trainer::learn() {
  const SampleBatch batch =
      buffer_.sample(static_cast<std::size_t>(config_.batch_size), config_.priority.is_beta, replay_rng_);
  const LearnStats stats = agent_->learn(batch);
  buffer_.update_priorities(batch.ids, stats.td_errors, global_step_, config_.priority);
  ++learn_steps_;
}

RunRecord Trainer::end_episode() {
  if (!in_episode_) throw std::logic_error("Trainer: no episode in progress");
  in_episode_ = false;
  RunRecord rec;
  rec.seed = seed_;
  rec.method = config_.method;
  rec.env = env_->kind();
  rec.episode = episode_;
  rec.ret = episode_return_;
  rec.steps = env_->steps();
  rec.epsilon = epsilon();
  rec.ensemble_size = agent_->ensemble_size();
  rec.drift_kind = episode_drift_;
  return rec;
}

RunRecord Trainer::run_episode() {
  begin_episode();
  while (!step()) {
  }
  return end_episode();
}

std::vector<RunRecord> train_run(const AgentConfig& config, EnvKind env, int max_steps,
                                 const DriftSchedule& schedule, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("train_run: episodes must be >= 1");
  Trainer trainer(config, env, max_steps, schedule, seed);
  std::vector<RunRecord> records;
  records.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) records.push_back(trainer.run_episode());
  return records;
}

}  // namespace gbdqn
