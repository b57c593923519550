#pragma once

// Hand-rolled random generators for property tests. Every generator is a
// pure function of the Gen state, so a failing case is reproducible from
// its seed.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "metacot/cot_schema.hpp"
#include "metacot/data_pipeline.hpp"
#include "metacot/model_gateway.hpp"
#include "oracles.hpp"

namespace gen {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t seed_u64() { return rng_(); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  template <typename T>
  const T& pick(const std::vector<T>& v) { return v[index(v.size())]; }

 private:
  std::mt19937_64 rng_;
};

/// Human score set: mostly integers 0..10 (ties are common), sometimes
/// halves or arbitrary reals.
std::array<double, 4> score_set(Gen& g);

/// Vector of length n with values drawn from a random affine family so that
/// constant series are rare but correlations cover [-1, 1].
std::vector<double> real_vector(Gen& g, std::size_t n, double lo = 0.0, double hi = 10.0);

/// Reward group of size 2..64; with probability p_equal all rewards equal.
std::vector<double> reward_group(Gen& g, double p_equal = 0.05);

/// rows x cols joint with random sparsity, normalized to sum 1.
oracle::Matrix joint_table(Gen& g, std::size_t rows, std::size_t cols);

/// Descriptor safe for list items: letters, digits, spaces, '-', '(', ')',
/// '\'' and, when allow_comma, ','.
std::string descriptor(Gen& g, bool allow_comma);

/// Structurally valid Meta-CoT document with at least one Edit entry.
metacot::cot::MetaCotDocument cot_document(Gen& g);

// ---- pipeline fixture ----

/// Failure injected into one pipeline record, keyed by record index.
enum class Inject {
  None,
  EmptyInstruction,
  Unclassifiable,
  GatewayDown,
  TypeMismatch,
  JudgeFormat,
  CotUnparseable,
  CotInvalid,
  Misaligned,
};

struct PipelineFixture {
  std::vector<metacot::pipeline::SampleRecord> records;
  std::vector<Inject> injected;  // aligned with records
  std::shared_ptr<metacot::gateway::MockBackend> backend;
};

/// n records cycling through lexicon-classified task families. `schedule`
/// maps record indices to injected failures; everything else passes. The
/// mock backend answers every stage by inspecting the request text.
PipelineFixture pipeline_fixture(std::size_t n, const std::map<std::size_t, Inject>& schedule);

/// Reason code expected for an injection (None -> nullopt).
std::optional<metacot::pipeline::ReasonCode> expected_reason(Inject k);

/// Default schedule used by the 50-record suites: every failure kind at
/// least twice.
std::map<std::size_t, Inject> default_schedule(std::size_t n);

}  // namespace gen
