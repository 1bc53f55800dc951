#include "gbdqn/tabular.hpp"

#include "gbdqn/boost.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gbdqn::tabular {

namespace {

Vector random_distribution(int n, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  Vector p(n);
  for (int i = 0; i < n; ++i) p[i] = expo(rng);
  return p / p.sum();
}

}  // namespace

Mdp Mdp::random(int states, int actions, double discount, Rng& rng) {
  if (states < 1 || actions < 1) throw std::invalid_argument("Mdp: need at least one state and action");
  if (!(discount > 0 && discount < 1)) throw std::invalid_argument("Mdp: discount must be in (0,1)");
  Mdp mdp;
  mdp.states = states;
  mdp.actions = actions;
  mdp.discount = discount;
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  mdp.reward.resize(states, actions);
  for (int s = 0; s < states; ++s)
    for (int a = 0; a < actions; ++a) mdp.reward(s, a) = reward(rng);
  for (int a = 0; a < actions; ++a) {
    Matrix p(states, states);
    for (int s = 0; s < states; ++s) p.row(s) = random_distribution(states, rng).transpose();
    mdp.transition.push_back(std::move(p));
  }
  return mdp;
}

Mdp Mdp::perturbed(double strength, Rng& rng) const {
  Mdp out = *this;
  for (Matrix& p : out.transition)
    for (int s = 0; s < states; ++s)
      p.row(s) = (1.0 - strength) * p.row(s) + strength * random_distribution(states, rng).transpose();
  return out;
}

Matrix Mdp::bellman(const Matrix& q) const {
  const Vector v = q.rowwise().maxCoeff();
  Matrix out(states, actions);
  for (int a = 0; a < actions; ++a) out.col(a) = reward.col(a) + discount * transition[a] * v;
  return out;
}

Matrix value_iteration(const Mdp& mdp, double tolerance, int max_iterations) {
  const double stop = tolerance * (1.0 - mdp.discount) / mdp.discount;
  Matrix q = Matrix::Zero(mdp.states, mdp.actions);
  for (int it = 0; it < max_iterations; ++it) {
    Matrix next = mdp.bellman(q);
    const double diff = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (diff <= stop) return q;
  }
  throw std::runtime_error("value_iteration: did not converge");
}

BoostTrace boost(const Mdp& mdp, Matrix q0, int max_rounds, double stop_tolerance) {
  BoostTrace trace;
  trace.q = std::move(q0);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int m = 1; m <= max_rounds; ++m) {
    const Matrix targets = mdp.bellman(trace.q);
    const Matrix residual = targets - trace.q;
    if (residual.cwiseAbs().maxCoeff() < stop_tolerance) break;

    // A tabular weak learner reproduces the residual table exactly.
    const Matrix h = residual;
    const Eigen::Map<const Vector> r_flat(residual.data(), residual.size());
    const Eigen::Map<const Vector> h_flat(h.data(), h.size());
    const double alpha = line_search_alpha(r_flat, h_flat);
    const StepLedger ledger = step_ledger(r_flat, h_flat);
    trace.worst_ledger_violation =
        std::max(trace.worst_ledger_violation, ledger.delta_check / std::max(ledger.loss_before, 1.0));
    if (std::abs(ledger.a) > 1e-12 && !(ledger.loss_after < ledger.loss_before)) trace.residual_loss_decreased = false;

    const Matrix previous = trace.q;
    trace.q = previous + alpha * h;
    for (Index i = 0; i < h.size(); ++i) {
      const double change = std::abs(trace.q.data()[i] - previous.data()[i]);
      const double bound = alpha * std::abs(h.data()[i]);
      const double scale = eps * std::max({std::abs(trace.q.data()[i]), std::abs(previous.data()[i]), 1e-300});
      trace.worst_step_violation = std::max(trace.worst_step_violation, std::abs(change - bound) / scale);
    }
    trace.rounds = m;
    trace.bellman_errors.push_back((mdp.bellman(trace.q) - trace.q).cwiseAbs().maxCoeff());
  }
  return trace;
}

}  // namespace gbdqn::tabular
