#include "vtseg/staple.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vtseg/rng.hpp"

namespace vtseg {
namespace {

constexpr double kClampLo = 1e-6;
constexpr double kClampHi = 1.0 - 1e-6;

double clamp_prob(double v) { return std::clamp(v, kClampLo, kClampHi); }

// Foreground probability for one vector of rater decisions. The log terms
// are sorted by value before summation, so any ordering of the raters
// produces the identical double.
double decision_weight(const std::vector<const std::uint8_t*>& raters, std::size_t voxel,
                       unsigned pattern, bool use_pattern,
                       const std::vector<RaterPerformance>& perf, double log_prior,
                       double log_inv_prior, std::vector<double>& fg_terms,
                       std::vector<double>& bg_terms) {
  fg_terms.clear();
  bg_terms.clear();
  for (std::size_t j = 0; j < perf.size(); ++j) {
    const bool marked = use_pattern ? ((pattern >> j) & 1u) : (raters[j][voxel] != 0);
    if (marked) {
      fg_terms.push_back(std::log(perf[j].sensitivity));
      bg_terms.push_back(std::log(1.0 - perf[j].specificity));
    } else {
      fg_terms.push_back(std::log(1.0 - perf[j].sensitivity));
      bg_terms.push_back(std::log(perf[j].specificity));
    }
  }
  std::sort(fg_terms.begin(), fg_terms.end());
  std::sort(bg_terms.begin(), bg_terms.end());
  double log_a = log_prior;
  for (double t : fg_terms) log_a += t;
  double log_b = log_inv_prior;
  for (double t : bg_terms) log_b += t;
  return 1.0 / (1.0 + std::exp(log_b - log_a));
}

}  // namespace

void StapleConfig::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("consensus tolerance must be positive");
  if (max_iter < 1) throw std::invalid_argument("consensus iteration limit must be at least 1");
  if (!(init.sensitivity > 0.0 && init.sensitivity < 1.0 && init.specificity > 0.0 &&
        init.specificity < 1.0))
    throw std::invalid_argument("initial rater performance must lie strictly inside (0,1)");
  if (prior && !(*prior > 0.0 && *prior < 1.0))
    throw std::invalid_argument("foreground prior must lie strictly inside (0,1)");
}

StapleResult staple_em(const RaterStack& stack, const StapleConfig& config) {
  stack.validate();
  config.validate();

  const std::size_t k = stack.raters.size();
  const std::size_t n = stack.raters[0].data.size();

  StapleResult result;
  result.meta = stack.raters[0].meta;

  // Prior: supplied, or the mean foreground fraction across raters. The
  // fractions are sorted before summing so the prior (and hence every W)
  // is bit-identical under any rater ordering.
  double prior;
  if (config.prior) {
    prior = *config.prior;
  } else {
    std::vector<double> fractions;
    fractions.reserve(k);
    for (const auto& r : stack.raters)
      fractions.push_back(static_cast<double>(r.foreground_count()) / static_cast<double>(n));
    std::sort(fractions.begin(), fractions.end());
    double fraction_sum = 0.0;
    for (double f : fractions) fraction_sum += f;
    prior = clamp_prob(fraction_sum / static_cast<double>(k));
  }
  result.prior = prior;

  // Unanimous stacks (including all-empty / all-full) have an exact answer
  // the clamped EM can only approach: return it directly.
  bool unanimous = true;
  for (std::size_t j = 1; j < k && unanimous; ++j)
    unanimous = stack.raters[j].data == stack.raters[0].data;
  if (unanimous) {
    result.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      result.weights[i] = stack.raters[0].data[i] ? 1.0 : 0.0;
    result.performances.assign(k, RaterPerformance{kClampHi, kClampHi});
    result.iterations = 1;
    result.converged = true;
    result.trace = {0.0};
    return result;
  }

  std::vector<const std::uint8_t*> raters(k);
  for (std::size_t j = 0; j < k; ++j) raters[j] = stack.raters[j].data.data();

  // With few raters, voxels sharing a decision pattern share W; cache per
  // pattern instead of recomputing per voxel.
  const bool use_patterns = k <= 16;
  std::vector<unsigned> pattern;
  if (use_patterns) {
    pattern.resize(n, 0u);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < n; ++i)
        if (raters[j][i]) pattern[i] |= 1u << j;
  }

  const double log_prior = std::log(prior);
  const double log_inv_prior = std::log(1.0 - prior);

  std::vector<RaterPerformance> perf(
      k, RaterPerformance{clamp_prob(config.init.sensitivity), clamp_prob(config.init.specificity)});
  std::vector<double> weights(n), prev_weights(n, prior);
  std::vector<double> fg_terms, bg_terms;
  std::vector<double> pattern_weight;

  int iterations = 0;
  bool converged = false;
  while (iterations < config.max_iter) {
    ++iterations;

    // E-step
    if (use_patterns) {
      pattern_weight.assign(std::size_t{1} << k, -1.0);
      for (std::size_t i = 0; i < n; ++i) {
        double& w = pattern_weight[pattern[i]];
        if (w < 0.0)
          w = decision_weight(raters, i, pattern[i], true, perf, log_prior, log_inv_prior,
                              fg_terms, bg_terms);
        weights[i] = w;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i)
        weights[i] = decision_weight(raters, i, 0u, false, perf, log_prior, log_inv_prior,
                                     fg_terms, bg_terms);
    }

    double delta_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta_sum += std::abs(weights[i] - prev_weights[i]);
    const double delta = delta_sum / static_cast<double>(n);
    result.trace.push_back(delta);

    // M-step, accumulated in flat voxel order per rater so each rater's
    // estimate is independent of the others' positions in the list.
    double sum_w = 0.0, sum_inv_w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_w += weights[i];
      sum_inv_w += 1.0 - weights[i];
    }
    for (std::size_t j = 0; j < k; ++j) {
      double sum_wd = 0.0, sum_inv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (raters[j][i])
          sum_wd += weights[i];
        else
          sum_inv += 1.0 - weights[i];
      }
      if (sum_w > 0.0) perf[j].sensitivity = clamp_prob(sum_wd / sum_w);
      if (sum_inv_w > 0.0) perf[j].specificity = clamp_prob(sum_inv / sum_inv_w);
    }

    prev_weights = weights;
    if (delta < config.tol) {
      converged = true;
      break;
    }
  }

  result.weights = std::move(weights);
  result.performances = std::move(perf);
  result.iterations = iterations;
  result.converged = converged;
  return result;
}

LabelMap consensus(const StapleResult& r, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("consensus threshold must lie strictly inside (0,1)");
  LabelMap m;
  m.meta = r.meta;
  m.data.resize(r.weights.size());
  for (std::size_t i = 0; i < r.weights.size(); ++i)
    m.data[i] = r.weights[i] >= threshold ? 1 : 0;
  return m;
}

Volume probability_map(const StapleResult& r) {
  Volume v;
  v.meta = r.meta;
  v.data.resize(r.weights.size());
  for (std::size_t i = 0; i < r.weights.size(); ++i)
    v.data[i] = static_cast<float>(r.weights[i]);
  return v;
}

RaterStack simulate_raters(const LabelMap& truth, const std::vector<RaterPerformance>& perfs,
                           std::uint64_t seed) {
  truth.validate();
  if (perfs.empty()) throw std::invalid_argument("need at least one rater performance");
  for (const auto& p : perfs)
    if (!(p.sensitivity >= 0.0 && p.sensitivity <= 1.0 && p.specificity >= 0.0 &&
          p.specificity <= 1.0))
      throw std::invalid_argument("rater performance probabilities must lie in [0,1]");

  RaterStack stack;
  stack.raters.reserve(perfs.size());
  for (std::size_t j = 0; j < perfs.size(); ++j) {
    Rng rng(derive_seed(seed, j));
    LabelMap m;
    m.meta = truth.meta;
    m.data.resize(truth.data.size());
    for (std::size_t i = 0; i < truth.data.size(); ++i) {
      if (truth.data[i])
        m.data[i] = rng.bernoulli(perfs[j].sensitivity) ? 1 : 0;
      else
        m.data[i] = rng.bernoulli(1.0 - perfs[j].specificity) ? 1 : 0;
    }
    stack.raters.push_back(std::move(m));
  }
  return stack;
}

}  // namespace vtseg
