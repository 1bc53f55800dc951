#include "gbdqn/boost.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gbdqn {

namespace {

constexpr const char* kCheckpointMagic = "gbdqn-ensemble";
constexpr int kCheckpointVersion = 1;

template <typename Range>
PackedBatch pack(const Range& transitions, auto&& deref) {
  PackedBatch b;
  const Index n = static_cast<Index>(transitions.size());
  if (n == 0) throw std::invalid_argument("PackedBatch: empty batch");
  const Transition& first = deref(transitions[0]);
  const Index dim = first.s.size();
  b.states.resize(dim, n);
  b.next_states.resize(dim, n);
  b.actions.resize(static_cast<std::size_t>(n));
  b.rewards.resize(n);
  b.not_done.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Transition& tr = deref(transitions[static_cast<std::size_t>(i)]);
    if (tr.s.size() != dim || tr.s_next.size() != dim)
      throw std::invalid_argument("PackedBatch: inconsistent state dimension");
    b.states.col(i) = tr.s;
    b.next_states.col(i) = tr.s_next;
    b.actions[static_cast<std::size_t>(i)] = tr.a;
    b.rewards[i] = tr.r;
    b.not_done[i] = tr.done ? 0.0 : 1.0;
  }
  return b;
}

void write_net(std::ostream& out, const Net& net) {
  out << net.size();
  for (Index i = 0; i < net.size(); ++i) out << ' ' << net.params()[i];
  out << '\n';
}

void read_net(std::istream& in, Net& net) {
  Index count = 0;
  in >> count;
  if (!in || count != net.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (Index i = 0; i < count; ++i) in >> net.params()[i];
  if (!in) throw std::runtime_error("checkpoint: truncated parameter vector");
}

std::string expect_word(std::istream& in, const char* word) {
  std::string got;
  in >> got;
  if (got != word) throw std::runtime_error(std::string("checkpoint: expected '") + word + "', got '" + got + "'");
  return got;
}

}  // namespace

PackedBatch PackedBatch::from(std::span<const Transition* const> transitions) {
  return pack(transitions, [](const Transition* t) -> const Transition& { return *t; });
}

PackedBatch PackedBatch::from(std::span<const Transition> transitions) {
  return pack(transitions, [](const Transition& t) -> const Transition& { return t; });
}

EnsembleQ::EnsembleQ(NetSpec spec, double discount) : spec_(std::move(spec)), discount_(discount) {
  spec_.validate();
  if (!(discount_ > 0 && discount_ < 1)) throw std::invalid_argument("EnsembleQ: discount must be in (0,1)");
}

ActiveLearner& EnsembleQ::active() {
  if (!active_) throw std::logic_error("EnsembleQ: no active learner");
  return *active_;
}

const ActiveLearner& EnsembleQ::active() const {
  if (!active_) throw std::logic_error("EnsembleQ: no active learner");
  return *active_;
}

void EnsembleQ::open_active(Net online, double lr, double coefficient) {
  if (online.spec() != spec_) throw std::invalid_argument("EnsembleQ: learner shape mismatch");
  if (!(coefficient > 0)) throw std::invalid_argument("EnsembleQ: coefficient must be > 0");
  Net target = online;
  const Index n = online.size();
  active_.emplace(ActiveLearner{std::move(online), std::move(target), Adam(n, lr), coefficient});
}

Matrix EnsembleQ::sum_over(const Eigen::Ref<const Matrix>& states, bool include_active, bool use_target) const {
  Matrix q = Matrix::Zero(spec_.output_dim, states.cols());
  for (const FrozenLearner& f : frozen_) q += f.alpha * forward(use_target ? f.target : f.online, states);
  if (include_active && active_)
    q += active_->coefficient * forward(use_target ? active_->target : active_->online, states);
  return q;
}

Matrix EnsembleQ::ensemble_q(const Eigen::Ref<const Matrix>& states, bool include_active) const {
  return sum_over(states, include_active, false);
}

Matrix EnsembleQ::target_ensemble_q(const Eigen::Ref<const Matrix>& states, bool include_active) const {
  return sum_over(states, include_active, true);
}

ResidualBatch EnsembleQ::residual_targets(const PackedBatch& batch, bool bootstrap_with_active) const {
  if (!active_) throw std::logic_error("residual_targets: no active learner");
  ResidualBatch out;
  const Vector next_max = column_max(target_ensemble_q(batch.next_states, bootstrap_with_active));
  out.td_target = batch.rewards + discount_ * batch.not_done.cwiseProduct(next_max);

  Matrix q_prev = Matrix::Zero(spec_.output_dim, batch.states.cols());
  for (const FrozenLearner& f : frozen_) q_prev += f.alpha * forward(f.online, batch.states);
  Matrix q_full = q_prev + active_->coefficient * forward(active_->online, batch.states);

  out.residual_target = out.td_target - gather(q_prev, batch.actions);
  out.td_error = out.td_target - gather(q_full, batch.actions);
  if (!out.residual_target.allFinite()) throw NumericError("residual_targets: non-finite residual");
  return out;
}

double EnsembleQ::commit_with(double alpha) {
  if (!active_) throw std::logic_error("commit: no active learner");
  if (!(alpha > 0)) throw std::invalid_argument("commit: coefficient must be > 0");
  frozen_.push_back(FrozenLearner{std::move(active_->online), std::move(active_->target), alpha});
  active_.reset();
  return alpha;
}

double EnsembleQ::commit(CommitMode mode, const PackedBatch* eval_batch, double alpha_max, bool* fallback) {
  if (!active_) throw std::logic_error("commit: no active learner");
  if (fallback) *fallback = false;
  const double shrinkage = active_->coefficient;
  if (mode == CommitMode::shrinkage) return commit_with(shrinkage);

  if (!eval_batch) throw std::invalid_argument("commit: line search requires an evaluation batch");
  const ResidualBatch res = residual_targets(*eval_batch);
  const Vector h = gather(forward(active_->online, eval_batch->states), eval_batch->actions);
  double alpha = 0.0;
  if (h.squaredNorm() > 0.0) alpha = line_search_alpha(res.residual_target, h);
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    if (fallback) *fallback = true;
    return commit_with(shrinkage);
  }
  return commit_with(std::min(alpha, alpha_max));
}

void EnsembleQ::polyak_active(double tau) { polyak_update(active().target, active().online, tau); }

void EnsembleQ::save(std::ostream& out, const std::string& config_echo) const {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "discount " << discount_ << '\n';
  out << "config " << (config_echo.empty() ? "-" : config_echo) << '\n';
  out << "spec " << spec_.input_dim << ' ' << spec_.hidden.size();
  for (Index h : spec_.hidden) out << ' ' << h;
  out << ' ' << spec_.output_dim << '\n';
  out << "learners " << frozen_.size() << ' ' << (active_ ? 1 : 0) << '\n';
  for (const FrozenLearner& f : frozen_) {
    out << "frozen " << f.alpha << '\n';
    write_net(out, f.online);
    write_net(out, f.target);
  }
  if (active_) {
    out << "active " << active_->coefficient << ' ' << active_->optimizer.lr << '\n';
    write_net(out, active_->online);
    write_net(out, active_->target);
  }
  out.precision(old_precision);
}

EnsembleQ EnsembleQ::load(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic");
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  double discount = 0;
  expect_word(in, "discount");
  in >> discount;
  expect_word(in, "config");
  std::string echo;
  std::getline(in >> std::ws, echo);
  NetSpec spec;
  std::size_t hidden = 0;
  expect_word(in, "spec");
  in >> spec.input_dim >> hidden;
  spec.hidden.assign(hidden, 0);
  for (Index& h : spec.hidden) in >> h;
  in >> spec.output_dim;
  if (!in) throw std::runtime_error("checkpoint: malformed spec line");

  EnsembleQ ens(spec, discount);
  std::size_t frozen = 0;
  int has_active = 0;
  expect_word(in, "learners");
  in >> frozen >> has_active;
  for (std::size_t j = 0; j < frozen; ++j) {
    FrozenLearner f{Net(spec), Net(spec), 0.0};
    expect_word(in, "frozen");
    in >> f.alpha;
    read_net(in, f.online);
    read_net(in, f.target);
    ens.frozen_.push_back(std::move(f));
  }
  if (has_active) {
    double coefficient = 0, lr = 0;
    expect_word(in, "active");
    in >> coefficient >> lr;
    Net online(spec);
    read_net(in, online);
    ens.open_active(std::move(online), lr, coefficient);
    read_net(in, ens.active_->target);
  }
  return ens;
}

double line_search_alpha(const Eigen::Ref<const Vector>& residuals, const Eigen::Ref<const Vector>& h_values) {
  if (residuals.size() != h_values.size()) throw std::invalid_argument("line_search_alpha: length mismatch");
  const double b = h_values.squaredNorm();
  if (!(b > 0.0)) throw std::domain_error("line_search_alpha: degenerate learner (all outputs zero)");
  return residuals.dot(h_values) / b;
}

StepLedger step_ledger(const Eigen::Ref<const Vector>& residuals, const Eigen::Ref<const Vector>& h_values) {
  StepLedger ledger;
  ledger.a = residuals.dot(h_values);
  ledger.b = h_values.squaredNorm();
  if (!(ledger.b > 0.0)) throw std::domain_error("step_ledger: B must be > 0");
  const double step = ledger.a / ledger.b;
  ledger.loss_before = residuals.squaredNorm();
  ledger.loss_after = (residuals - step * h_values).squaredNorm();
  ledger.delta_check = std::abs((ledger.loss_after - ledger.loss_before) + ledger.a * ledger.a / ledger.b);
  return ledger;
}

Vector gather(const Matrix& q, std::span<const int> actions) {
  Vector out(static_cast<Index>(actions.size()));
  for (Index i = 0; i < out.size(); ++i) out[i] = q(actions[static_cast<std::size_t>(i)], i);
  return out;
}

Vector column_max(const Matrix& q) { return q.colwise().maxCoeff().transpose(); }

int argmax(const Eigen::Ref<const Vector>& q) {
  int best = 0;
  for (Index a = 1; a < q.size(); ++a)
    if (q[a] > q[best]) best = static_cast<int>(a);
  return best;
}

int softmax_action(const Eigen::Ref<const Vector>& q, double tau, Rng& rng) {
  if (!(tau > 0)) throw std::invalid_argument("softmax_action: tau must be > 0");
  if (!q.allFinite()) throw NumericError("softmax_action: non-finite q-values");
  const Vector logits = (q.array() - q.maxCoeff()) / tau;
  const Vector weights = logits.array().exp();
  std::uniform_real_distribution<double> uniform(0.0, weights.sum());
  double u = uniform(rng);
  for (Index a = 0; a < weights.size(); ++a) {
    if (u < weights[a]) return static_cast<int>(a);
    u -= weights[a];
  }
  return argmax(q);
}

int epsilon_greedy_action(const Eigen::Ref<const Vector>& q, double epsilon, Rng& rng) {
  if (!(epsilon >= 0 && epsilon <= 1)) throw std::invalid_argument("epsilon_greedy_action: epsilon must be in [0,1]");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  if (uniform(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(q.size()) - 1);
    return pick(rng);
  }
  return argmax(q);
}

}  // namespace gbdqn
