#include "metacot/grpo_math.hpp"

#include <algorithm>
#include <cmath>

#include "metacot/error.hpp"
#include "metacot/kernels.hpp"

namespace metacot::grpo {

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
  if (rewards.empty()) throw PreconditionError("reward group is empty");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw PreconditionError("epsilon must be > 0");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw PreconditionError("reward group holds a non-finite value");
  }
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    return out;
  }
  const double n = static_cast<double>(rewards.size());
  const double mean = kernels::mean(rewards);
  const double std_pop = std::sqrt(kernels::sum_sq_dev(rewards, mean) / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    out[i] = (rewards[i] - mean) / (std_pop + epsilon);
  }
  return out;
}

std::size_t TimestepMask::true_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

TimestepMask make_mask(std::size_t total_steps, double cutoff_fraction) {
  if (total_steps < 1) throw PreconditionError("total_steps must be >= 1");
  if (!(cutoff_fraction > 0.0 && cutoff_fraction <= 1.0)) {
    throw PreconditionError("cutoff_fraction must lie in (0, 1]");
  }
  const double product = cutoff_fraction * static_cast<double>(total_steps);
  const double nearest = std::round(product);
  const double count = std::abs(product - nearest) <= 1e-9 ? nearest : std::ceil(product);
  const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(count), 1, total_steps);
  TimestepMask m;
  m.total_steps = total_steps;
  m.cutoff_fraction = cutoff_fraction;
  m.mask.assign(total_steps, false);
  std::fill_n(m.mask.begin(), k, true);
  return m;
}

double masked_objective(std::span<const double> terms, const TimestepMask& mask) {
  if (terms.size() != mask.total_steps || mask.mask.size() != mask.total_steps) {
    throw PreconditionError("per-step terms must match the mask length");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!mask.mask[i]) continue;
    sum += terms[i];
    ++n;
  }
  if (n == 0) throw PreconditionError("mask selects no steps");
  return sum / static_cast<double>(n);
}

}  // namespace metacot::grpo
