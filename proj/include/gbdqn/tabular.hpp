#pragma once

// Finite MDPs for checking boosting convergence against exact value iteration.

#include "gbdqn/numcore.hpp"
#include "gbdqn/replay.hpp"

#include <vector>

namespace gbdqn::tabular {

struct Mdp {
  int states = 0;
  int actions = 0;
  double discount = 0.9;
  std::vector<Matrix> transition;  // transition[a](s, s') = P(s' | s, a)
  Matrix reward;                   // reward(s, a) = E[r | s, a]

  static Mdp random(int states, int actions, double discount, Rng& rng);
  /// Mixes every transition row with a fresh random distribution.
  Mdp perturbed(double strength, Rng& rng) const;

  /// (T*Q)(s,a) = R(s,a) + discount * sum_s' P(s'|s,a) max_a' Q(s',a').
  Matrix bellman(const Matrix& q) const;
};

/// Iterates the Bellman operator until successive iterates differ by at most
/// `tolerance * (1 - discount) / discount` in max norm, so the result is within
/// `tolerance` of Q*.
Matrix value_iteration(const Mdp& mdp, double tolerance, int max_iterations = 100000);

struct BoostTrace {
  Matrix q;
  int rounds = 0;
  std::vector<double> bellman_errors;     // max-norm |T*Q - Q| after each round
  double worst_ledger_violation = 0.0;    // max delta_check / max(L_before, 1)
  double worst_step_violation = 0.0;      // max | |Q_m - Q_{m-1}| - alpha |h| | in units of eps * |Q|
  bool residual_loss_decreased = true;    // L_after < L_before on every round with A != 0
};

/// Gradient boosting on Bellman residuals with tabular weak learners: each
/// round fits h to the exact residual T*Q - Q, picks alpha by line search and
/// adds alpha * h. Stops once the Bellman error is below `stop_tolerance`.
BoostTrace boost(const Mdp& mdp, Matrix q0, int max_rounds, double stop_tolerance);

}  // namespace gbdqn::tabular
