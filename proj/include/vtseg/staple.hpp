#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vtseg/volume.hpp"

namespace vtseg {

// One rater's error characteristics: sensitivity is the probability of
// marking a true-foreground voxel, specificity of leaving a true-background
// voxel unmarked. Inside the EM both stay clamped to [1e-6, 1 - 1e-6];
// simulate_raters accepts the full (0, 1] range (1.0 = a perfect rater).
struct RaterPerformance {
  double sensitivity = 0.9;
  double specificity = 0.9;
};

struct StapleConfig {
  RaterPerformance init{0.9, 0.9};
  // Foreground prior. Unset = mean foreground fraction across raters.
  std::optional<double> prior;
  double tol = 1e-7;  // convergence threshold on mean |change in W|
  int max_iter = 100;

  void validate() const;
};

struct StapleResult {
  VolumeMeta meta;
  std::vector<double> weights;  // per-voxel foreground probability, in [0,1]
  std::vector<RaterPerformance> performances;  // one per rater, input order
  double prior = 0.0;                          // the prior actually used
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // mean |change in W| per iteration
};

// Expectation-maximization consensus over >= 2 binary raters.
// E-step per voxel: a = prior * prod_j (p_j if marked else 1-p_j),
// b = (1-prior) * prod_j (1-q_j if marked else q_j), W = a / (a + b),
// evaluated in log space with the per-rater log terms sorted by value
// before summation so that permuting the rater list leaves every W
// bit-identical. M-step per rater: p = sum(W*D)/sum(W),
// q = sum((1-W)*(1-D))/sum(1-W), accumulated in flat voxel order, then
// clamped. Iterations stop when the mean absolute change in W (W starts
// at the prior) drops below tol, or at max_iter.
//
// A stack whose raters agree everywhere (including all-empty and all-full)
// short-circuits: W is the exact {0,1} unanimous map, every rater gets
// clamp-limit performances, and the run reports one converged iteration.
StapleResult staple_em(const RaterStack& stack, const StapleConfig& config = {});

// Threshold the per-voxel probabilities into a mask; ties (W == threshold)
// count as foreground.
LabelMap consensus(const StapleResult& r, double threshold = 0.5);

// The per-voxel probabilities as a float volume (for writing to disk).
Volume probability_map(const StapleResult& r);

// Draw noisy rater masks from a known truth: rater j keeps each foreground
// voxel with probability sensitivity_j and each background voxel clean with
// probability specificity_j, independently. Deterministic per seed; each
// rater consumes its own derived stream, so adding a rater never changes
// the masks of earlier ones.
RaterStack simulate_raters(const LabelMap& truth, const std::vector<RaterPerformance>& perfs,
                           std::uint64_t seed);

}  // namespace vtseg
