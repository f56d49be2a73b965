#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "turnrl/model.hpp"

namespace turnrl::checks {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t cases = 0;
  std::string detail;
};

// "PASS gae  max_error=1.2e-15 tol=1e-10 cases=1000"
std::string format(const SuiteResult& result);

using GaeFn = std::function<std::vector<double>(std::span<const double>, double, double)>;

// A_h = sum_k (gamma lambda)^k delta_{h+k}, summed directly.
std::vector<double> gae_direct_sum(std::span<const double> deltas, double gamma, double lambda);

// Recursive `gae` against the direct sum on random delta sequences
// (H <= 50, gamma, lambda in {0, 0.5, 0.9, 0.99, 1}).
SuiteResult gae_suite(std::uint64_t seed, std::size_t trials = 1000, const GaeFn& gae = {});

// Analytic vs central-difference gradients of the four actor objectives and
// the critic loss on small random instances.
SuiteResult gradient_suite(std::uint64_t seed, std::size_t instances_per_objective = 20);

// Turn ratio vs product of token ratios, geometric variant, and the
// first-epoch identity on a freshly collected batch.
SuiteResult ratio_suite(std::uint64_t seed, std::size_t trials = 1000);

// Mean/std of normalized groups, shift invariance, plain mean-centering.
SuiteResult grpo_suite(std::uint64_t seed, std::size_t groups = 1000);

// Generated Sokoban instances are BFS-solvable; shop goals are attainable.
SuiteResult env_suite(std::uint64_t seed, std::size_t instances = 1000);

// Structural validation of a trajectory dump; with a policy, stored behavior
// logprobs are re-scored and must agree within 1e-12.
SuiteResult trajectory_suite(const std::string& path, const model::PolicyModel* policy);

std::vector<SuiteResult> run_all(std::uint64_t seed);

}  // namespace turnrl::checks
