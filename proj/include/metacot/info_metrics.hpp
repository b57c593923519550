#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// Information quantities over finite spaces and discrete joint
// distributions. All logarithms are base 2 (bits).
namespace metacot::info {

/// log2(cardinality); cardinality >= 1.
double space_entropy(std::uint64_t cardinality);

struct ComplexityVerdict {
  bool holds = false;
  double h_triplet = 0.0;  // log2(t1 * t2 * t3)
  double h_classic = 0.0;  // log2(T)
};

/// holds iff t1 * t2 * t3 < T (strict). The comparison is done on exact
/// integers; the entropies are reported alongside.
ComplexityVerdict triplet_complexity_check(std::uint64_t t1, std::uint64_t t2, std::uint64_t t3,
                                           std::uint64_t classic);

struct DiscreteVariable {
  std::string name;
  std::vector<std::string> support;
};

using Outcome = std::vector<std::string>;

class JointDistribution {
 public:
  /// Validates: unique names, nonempty supports, tuples of the right arity
  /// whose labels belong to the supports, p >= 0, sum within 1e-9 of 1.
  JointDistribution(std::vector<DiscreteVariable> variables, std::map<Outcome, double> probs);

  /// CSV rows `outcome_1,...,outcome_k,probability`. A first row whose last
  /// field is not a number names the variables; otherwise they are X1..Xk.
  /// Supports are the labels seen, in order of first appearance.
  static JointDistribution parse_csv(std::string_view csv, const std::string& source = "<dist>");
  static JointDistribution load_csv(const std::filesystem::path& path);

  const std::vector<DiscreteVariable>& variables() const { return variables_; }
  const std::map<Outcome, double>& probabilities() const { return probs_; }
  std::size_t index_of(std::string_view name) const;
  std::vector<std::size_t> indices_of(const std::vector<std::string>& names) const;
  std::map<Outcome, double> marginal(const std::vector<std::size_t>& over) const;

 private:
  std::vector<DiscreteVariable> variables_;
  std::map<Outcome, double> probs_;
};

/// Shannon entropy of the marginal over `over` (0 log 0 = 0).
double entropy(const JointDistribution& dist, const std::vector<std::size_t>& over);
double entropy(const JointDistribution& dist, const std::vector<std::string>& over);

/// H(left) + H(right) - H(left, right). Negative results within 1e-12 of
/// zero are reported as 0. Subsets must be nonempty and disjoint.
double mutual_information(const JointDistribution& dist, const std::vector<std::string>& left,
                          const std::vector<std::string>& right);

/// I(t; x) / H(t). UndefinedError when H(t) is zero.
double granularity(const JointDistribution& dist, const std::vector<std::string>& t,
                   const std::vector<std::string>& x);

struct GranularityComparison {
  double g_triplet = 0.0;
  double g_classic = 0.0;
  bool triplet_finer = false;  // g_triplet > g_classic
};

GranularityComparison granularity_comparison(const JointDistribution& triplet_dist,
                                             const std::vector<std::string>& triplet_vars,
                                             const std::vector<std::string>& triplet_x,
                                             const JointDistribution& classic_dist,
                                             const std::vector<std::string>& classic_vars,
                                             const std::vector<std::string>& classic_x);

}  // namespace metacot::info
