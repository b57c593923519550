#pragma once

#include <span>
#include <vector>

// Group-relative advantages and early-timestep masking.
namespace metacot::grpo {

inline constexpr double kDefaultEpsilon = 1e-8;

/// a_i = (r_i - mean) / (population std + epsilon). A group of identical
/// rewards yields all zeros. Throws PreconditionError on an empty group,
/// non-finite rewards or epsilon <= 0.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double epsilon = kDefaultEpsilon);

struct TimestepMask {
  std::size_t total_steps = 0;
  double cutoff_fraction = 0.0;
  std::vector<bool> mask;

  std::size_t true_count() const;
};

/// The first ceil(cutoff_fraction * total_steps) steps are true. Products
/// within 1e-9 of an integer count as that integer.
TimestepMask make_mask(std::size_t total_steps, double cutoff_fraction = 0.5);

/// Mean of the terms at masked-in steps.
double masked_objective(std::span<const double> per_step_terms, const TimestepMask& mask);

}  // namespace metacot::grpo
