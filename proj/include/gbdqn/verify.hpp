#pragma once

// Invariant suite behind `gbdqn verify`, and the independent oracles it uses.

#include "gbdqn/envs.hpp"
#include "gbdqn/numcore.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gbdqn {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::filesystem::path fixture_dir;
  std::uint64_t seed = 20240601;
};

/// Default location of the golden trajectory fixtures.
std::filesystem::path default_fixture_dir();

// Oracles ----------------------------------------------------------------------

/// Central finite differences of the taken-action weighted loss, evaluated
/// with plain scalar loops (no Eigen products).
Vector finite_difference_gradient(const Net& net, const Matrix& states, std::span<const int> actions,
                                  const Vector& targets, const Vector& weights, double h);

/// Scalar-loop evaluation of the network at one state.
Vector reference_forward(const Net& net, const Vector& state);

struct GoldenStep {
  int step = 0;
  int action = 0;
  Vector state;
  double reward = 0.0;
  bool done = false;
};

struct GoldenTrajectory {
  EnvKind env = EnvKind::acrobot;
  Vector initial;
  std::vector<GoldenStep> steps;
};

GoldenTrajectory read_golden(std::istream& in);
GoldenTrajectory read_golden(const std::filesystem::path& path);

/// Largest per-coordinate deviation of the C++ environment from the fixture;
/// infinity when rewards or termination flags disagree.
double golden_deviation(const GoldenTrajectory& golden);

// Checks -----------------------------------------------------------------------

CheckResult check_step_ledger(std::uint64_t seed, int instances = 1000, int length = 64);
CheckResult check_gradients(std::uint64_t seed, int nets = 20);
CheckResult check_replay_distribution(std::uint64_t seed);
CheckResult check_priority_monotonicity();
CheckResult check_env_goldens(const std::filesystem::path& fixture_dir);
CheckResult check_reduction(std::uint64_t seed, int learn_steps = 100);
CheckResult check_frozen_immutability(std::uint64_t seed);
CheckResult check_tabular_convergence(std::uint64_t seed);
CheckResult check_tabular_adaptation(std::uint64_t seed);

std::vector<CheckResult> verify(const VerifyOptions& options);
/// Prints one line per check; returns true when all passed.
bool print_report(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace gbdqn
