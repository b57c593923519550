#include "metacot/info_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "metacot/error.hpp"
#include "metacot/text.hpp"

namespace metacot::info {

namespace {

double entropy_of(const std::map<Outcome, double>& marginal) {
  double h = 0.0;
  for (const auto& [outcome, p] : marginal) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

double space_entropy(std::uint64_t cardinality) {
  if (cardinality < 1) throw PreconditionError("space cardinality must be >= 1");
  return std::log2(static_cast<double>(cardinality));
}

ComplexityVerdict triplet_complexity_check(std::uint64_t t1, std::uint64_t t2, std::uint64_t t3,
                                           std::uint64_t classic) {
  if (t1 < 1 || t2 < 1 || t3 < 1 || classic < 1) {
    throw PreconditionError("space cardinalities must be >= 1");
  }
  ComplexityVerdict v;
  v.h_triplet = space_entropy(t1) + space_entropy(t2) + space_entropy(t3);
  v.h_classic = space_entropy(classic);
  const unsigned __int128 pair = static_cast<unsigned __int128>(t1) * t2;
  // t1 * t2 * t3 < classic, without overflowing 128 bits.
  v.holds = pair < classic && pair * t3 < classic;
  return v;
}

JointDistribution::JointDistribution(std::vector<DiscreteVariable> variables,
                                     std::map<Outcome, double> probs)
    : variables_(std::move(variables)), probs_(std::move(probs)) {
  if (variables_.empty()) throw PreconditionError("distribution has no variables");
  std::set<std::string, std::less<>> names;
  std::vector<std::set<std::string, std::less<>>> supports;
  for (const auto& v : variables_) {
    if (v.name.empty() || !names.insert(v.name).second) {
      throw PreconditionError("variable names must be nonempty and unique ('" + v.name + "')");
    }
    if (v.support.empty()) throw PreconditionError("variable '" + v.name + "' has empty support");
    std::set<std::string, std::less<>> s(v.support.begin(), v.support.end());
    if (s.size() != v.support.size()) {
      throw PreconditionError("variable '" + v.name + "' repeats a support label");
    }
    supports.push_back(std::move(s));
  }
  double total = 0.0;
  for (const auto& [outcome, p] : probs_) {
    if (outcome.size() != variables_.size()) throw PreconditionError("outcome arity mismatch");
    for (std::size_t i = 0; i < outcome.size(); ++i) {
      if (!supports[i].contains(outcome[i])) {
        throw PreconditionError("label '" + outcome[i] + "' is not in the support of '" +
                                variables_[i].name + "'");
      }
    }
    if (!(p >= 0.0) || !std::isfinite(p)) throw PreconditionError("probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw PreconditionError("probabilities sum to " + text::format_double(total) + ", not 1");
  }
}

JointDistribution JointDistribution::parse_csv(std::string_view csv, const std::string& source) {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> supports;
  std::map<Outcome, double> probs;
  const auto lines = text::split_lines(csv);
  bool first = true;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty() || text::trim(lines[i]).front() == '#') continue;
    const auto fields = text::split_trimmed(lines[i], ',');
    if (fields.size() < 2) throw FormatError(source, i + 1, "need at least one outcome and a probability");
    const std::size_t k = fields.size() - 1;
    const auto p = text::parse_double(fields.back());
    if (first) {
      first = false;
      supports.resize(k);
      if (!p) {
        names.assign(fields.begin(), fields.end() - 1);
        continue;
      }
      for (std::size_t v = 0; v < k; ++v) names.push_back("X" + std::to_string(v + 1));
    }
    if (k != names.size()) throw FormatError(source, i + 1, "row arity differs from the first row");
    if (!p) throw FormatError(source, i + 1, "bad probability '" + fields.back() + "'");
    Outcome outcome(fields.begin(), fields.end() - 1);
    for (std::size_t v = 0; v < k; ++v) {
      auto& s = supports[v];
      if (std::find(s.begin(), s.end(), outcome[v]) == s.end()) s.push_back(outcome[v]);
    }
    if (!probs.emplace(std::move(outcome), *p).second) {
      throw FormatError(source, i + 1, "duplicate outcome");
    }
  }
  if (names.empty() || probs.empty()) throw FormatError(source, 0, "distribution has no rows");
  std::vector<DiscreteVariable> vars;
  for (std::size_t v = 0; v < names.size(); ++v) vars.push_back({names[v], supports[v]});
  try {
    return JointDistribution(std::move(vars), std::move(probs));
  } catch (const PreconditionError& e) {
    throw FormatError(source, 0, e.what());
  }
}

JointDistribution JointDistribution::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open distribution file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

std::size_t JointDistribution::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].name == name) return i;
  }
  throw PreconditionError("unknown variable '" + std::string(name) + "'");
}

std::vector<std::size_t> JointDistribution::indices_of(const std::vector<std::string>& names) const {
  std::vector<std::size_t> out;
  for (const auto& n : names) out.push_back(index_of(n));
  return out;
}

std::map<Outcome, double> JointDistribution::marginal(const std::vector<std::size_t>& over) const {
  if (over.empty()) throw PreconditionError("variable subset is empty");
  std::set<std::size_t> seen;
  for (std::size_t i : over) {
    if (i >= variables_.size()) throw PreconditionError("variable index out of range");
    if (!seen.insert(i).second) throw PreconditionError("variable subset repeats a variable");
  }
  std::map<Outcome, double> out;
  for (const auto& [outcome, p] : probs_) {
    Outcome key;
    key.reserve(over.size());
    for (std::size_t i : over) key.push_back(outcome[i]);
    out[key] += p;
  }
  return out;
}

double entropy(const JointDistribution& dist, const std::vector<std::size_t>& over) {
  return entropy_of(dist.marginal(over));
}

double entropy(const JointDistribution& dist, const std::vector<std::string>& over) {
  return entropy(dist, dist.indices_of(over));
}

double mutual_information(const JointDistribution& dist, const std::vector<std::string>& left,
                          const std::vector<std::string>& right) {
  const auto l = dist.indices_of(left);
  const auto r = dist.indices_of(right);
  if (l.empty() || r.empty()) throw PreconditionError("mutual information needs nonempty subsets");
  for (std::size_t i : l) {
    if (std::find(r.begin(), r.end(), i) != r.end()) {
      throw PreconditionError("subsets overlap on '" + dist.variables()[i].name + "'");
    }
  }
  std::vector<std::size_t> both = l;
  both.insert(both.end(), r.begin(), r.end());
  const double mi = entropy(dist, l) + entropy(dist, r) - entropy(dist, both);
  return (mi < 0.0 && mi >= -1e-12) ? 0.0 : mi;
}

double granularity(const JointDistribution& dist, const std::vector<std::string>& t,
                   const std::vector<std::string>& x) {
  const double ht = entropy(dist, t);
  if (ht <= 1e-12) throw UndefinedError("granularity undefined: H(t) is zero");
  return mutual_information(dist, t, x) / ht;
}

GranularityComparison granularity_comparison(const JointDistribution& triplet_dist,
                                             const std::vector<std::string>& triplet_vars,
                                             const std::vector<std::string>& triplet_x,
                                             const JointDistribution& classic_dist,
                                             const std::vector<std::string>& classic_vars,
                                             const std::vector<std::string>& classic_x) {
  GranularityComparison c;
  c.g_triplet = granularity(triplet_dist, triplet_vars, triplet_x);
  c.g_classic = granularity(classic_dist, classic_vars, classic_x);
  c.triplet_finer = c.g_triplet > c.g_classic;
  return c;
}

}  // namespace metacot::info
