#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metacot/cot_schema.hpp"
#include "metacot/model_gateway.hpp"

// CoT-editing consistency reward: judge scoring, human score aggregation and
// judge-vs-human calibration statistics.
namespace metacot::cec {

struct CecScore {
  double value = 0.0;  // [0, 10]
  std::string rationale;
  std::string sample_id;
};

struct HumanScoreSet {
  std::string sample_id;
  std::array<double, 4> scores{};

  /// Throws PreconditionError when a score is outside [0, 10] or not finite.
  void check() const;
};

/// Range < 3: mean of all four. Otherwise the mean of the 3-subset with the
/// smallest range; ties go to the larger mean, then to the earliest subset in
/// sorted order.
double aggregate_human(const std::array<double, 4>& scores);
inline double aggregate_human(const HumanScoreSet& set) {
  set.check();
  return aggregate_human(set.scores);
}

class JudgeFormatError : public Error {
 public:
  using Error::Error;
};

/// First numeric token of a judge reply. It must lie in [lo, hi]; replies
/// whose first number is out of range are rejected, never clamped.
double extract_score(std::string_view reply, double lo = 0.0, double hi = 10.0);

/// "v3" -> "cec_judge/v3"; ids containing '/' or "file:" pass through.
std::string judge_prompt_id(std::string_view prompt_version);

gateway::ChatRequest judge_request(const cot::MetaCotDocument& cot,
                                   const gateway::ImageRef& edited_image,
                                   std::string_view prompt_version);

CecScore judge_score(const cot::MetaCotDocument& cot, const gateway::ImageRef& edited_image,
                     const gateway::GatewayProfile& profile, std::string_view prompt_version,
                     std::string sample_id = {});

/// Product-moment correlation. Throws PreconditionError on length mismatch
/// or fewer than 2 points, UndefinedError when either series is constant.
double pearson(std::span<const double> xs, std::span<const double> ys);
/// Mean absolute difference; requires equal nonzero lengths.
double mae(std::span<const double> xs, std::span<const double> ys);

struct Gate {
  double min_r = 0.8;
  double max_mae = 2.5;
  bool passes(double r, double mae_value) const { return r >= min_r && mae_value <= max_mae; }
};

struct CalibrationReport {
  std::string status = "ok";  // "ok" | "insufficient data" | "undefined"
  std::optional<double> pearson_r;
  std::optional<double> mae;
  std::size_t n_samples = 0;
  std::size_t excluded = 0;
  bool gate_passed = false;
  std::string prompt_version;
  std::string detail;

  nlohmann::json to_json() const;
};

/// Report over paired (judge, consensus) values.
CalibrationReport make_report(std::span<const double> judge, std::span<const double> consensus,
                              std::size_t excluded, std::string prompt_version,
                              const Gate& gate = {});

struct CalibrationSample {
  std::string sample_id;
  cot::MetaCotDocument cot;
  gateway::ImageRef edited_image;
  HumanScoreSet human;
};

class CalibrationFailedError : public Error {
 public:
  using Error::Error;
};

/// Judge-scores every sample (up to `parallelism` calls in flight), pairs the
/// scores with the human consensus and reports. Samples whose judge reply is
/// unusable are excluded and counted; all excluded -> CalibrationFailedError.
CalibrationReport calibration_round(const std::vector<CalibrationSample>& samples,
                                    const gateway::GatewayProfile& profile,
                                    std::string_view prompt_version, const Gate& gate = {},
                                    std::size_t parallelism = 4);

/// CSV `sample_id,s1,s2,s3,s4`; an optional header row is skipped.
std::vector<HumanScoreSet> parse_human_scores(std::string_view csv,
                                              const std::string& source = "<scores>");
std::vector<HumanScoreSet> load_human_scores(const std::filesystem::path& path);

/// One sample to be judged: JSONL lines with "id", "cot" (canonical text) and
/// "edited_image" (path string or {uri, digest}); "source_image" optional.
struct JudgedSample {
  std::string id;
  cot::MetaCotDocument cot;
  std::string cot_text;
  gateway::ImageRef source_image;
  gateway::ImageRef edited_image;
};
std::vector<JudgedSample> load_judged_samples(const std::filesystem::path& jsonl);

/// Joins samples with human score sets by id. Every sample needs a set.
std::vector<CalibrationSample> join_human_scores(const std::vector<JudgedSample>& samples,
                                                 const std::vector<HumanScoreSet>& human);

}  // namespace metacot::cec
