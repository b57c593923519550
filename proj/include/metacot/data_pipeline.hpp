#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metacot/cot_schema.hpp"
#include "metacot/instruction_compiler.hpp"
#include "metacot/model_gateway.hpp"

// Four-stage curation pipeline turning (source, target, instruction) triples
// into validated Meta-CoT records, plus the JSONL record store.
namespace metacot::pipeline {

enum class Stage { TaskTyping, ConsistencyCheck, CotGeneration, AlignmentEval };
inline constexpr std::array<Stage, 4> kStages = {Stage::TaskTyping, Stage::ConsistencyCheck,
                                                 Stage::CotGeneration, Stage::AlignmentEval};
std::string_view to_string(Stage s);  // "task_typing", ...
std::optional<Stage> parse_stage(std::string_view s);

enum class ReasonCode {
  EmptyInstruction,
  Unclassifiable,
  Gateway,
  TypeMismatch,
  JudgeFormat,
  CotUnparseable,
  CotInvalid,
  Misaligned,
};
inline constexpr std::array<ReasonCode, 8> kReasonCodes = {
    ReasonCode::EmptyInstruction, ReasonCode::Unclassifiable, ReasonCode::Gateway,
    ReasonCode::TypeMismatch,     ReasonCode::JudgeFormat,    ReasonCode::CotUnparseable,
    ReasonCode::CotInvalid,       ReasonCode::Misaligned};
std::string_view to_string(ReasonCode r);  // "EMPTY_INSTRUCTION", ...
std::optional<ReasonCode> parse_reason(std::string_view s);

struct StageStatus {
  enum class State { Pending, Passed, Failed };
  State state = State::Pending;
  std::optional<ReasonCode> reason;  // set iff Failed

  static StageStatus passed() { return {State::Passed, {}}; }
  static StageStatus failed(ReasonCode r) { return {State::Failed, r}; }
  friend bool operator==(const StageStatus&, const StageStatus&) = default;
};

struct SampleRecord {
  std::string id;
  gateway::ImageRef source_image;
  gateway::ImageRef target_image;
  std::string instruction;
  std::optional<TaskType> task_type;
  std::optional<cot::MetaCotDocument> cot;
  std::array<StageStatus, 4> stages{};
  std::vector<std::string> provenance;  // request digests of every model call

  StageStatus& status(Stage s) { return stages[static_cast<std::size_t>(s)]; }
  const StageStatus& status(Stage s) const { return stages[static_cast<std::size_t>(s)]; }
  bool passed_all() const;
  /// Reason code of the failed stage, if any.
  std::optional<ReasonCode> failure() const;
  /// Broken record invariants (stage monotonicity, field presence).
  std::vector<std::string> invariant_violations() const;
};

struct PipelineConfig {
  std::optional<gateway::GatewayProfile> task_typer;
  std::optional<gateway::GatewayProfile> consistency_checker;
  std::optional<gateway::GatewayProfile> cot_generator;
  std::optional<gateway::GatewayProfile> alignment_evaluator;
  std::size_t batch_size = 16;
  std::size_t parallelism = 4;
  std::string task_typing_prompt = "task_typing/v1";
  std::string consistency_prompt = "consistency_check/v1";
  std::string cot_prompt = "cot_generation/v1";
  std::string alignment_prompt = "alignment_eval/v1";
  double alignment_threshold = 7.0;
  int cot_reprompts = 2;
  cot::SummaryMode cot_mode = cot::SummaryMode::MetaTaskSummary;
  const compiler::Lexicon* lexicon = nullptr;  // null = bundled
  const TaskRegistry* registry = nullptr;      // null = bundled

  void check() const;
  /// SHA-256 over every setting that influences outputs (never credentials).
  std::string digest() const;
};

SampleRecord stage_task_typing(SampleRecord record, const PipelineConfig& config);
SampleRecord stage_consistency_check(SampleRecord record, const PipelineConfig& config);
SampleRecord stage_cot_generation(SampleRecord record, const PipelineConfig& config);
SampleRecord stage_alignment_eval(SampleRecord record, const PipelineConfig& config);

/// Drives one record through the stages, stopping at the first failure.
SampleRecord process_record(SampleRecord record, const PipelineConfig& config);

struct PipelineSummary {
  std::size_t total = 0;
  std::size_t passed = 0;
  std::map<Stage, std::size_t> stage_passed;
  std::map<Stage, std::size_t> stage_failed;
  std::map<ReasonCode, std::size_t> by_reason;

  nlohmann::json to_json() const;
};

PipelineSummary summarize(const std::vector<SampleRecord>& records);

struct PipelineResult {
  std::vector<SampleRecord> records;  // input order
  PipelineSummary summary;
};

/// Processes records with at most config.parallelism in flight, one batch at
/// a time. When `out_dir` is given, finished batches are appended to the
/// store in input order and the manifest is written at the end. Empty input
/// touches nothing.
PipelineResult run_pipeline(std::vector<SampleRecord> records, const PipelineConfig& config,
                            const std::optional<std::filesystem::path>& out_dir = {},
                            bool append = false);

// ---- record store ----

/// Store line for a record, keys in store order.
nlohmann::ordered_json to_json(const SampleRecord& r);
/// Accepts the store format; input files may omit everything but id,
/// source_image, target_image and instruction. Image fields may be plain
/// path strings.
SampleRecord record_from_json(const nlohmann::ordered_json& j);
std::vector<SampleRecord> load_records(const std::filesystem::path& jsonl);

class StoreError : public Error {
 public:
  using Error::Error;
};

/// Append-only JSONL store (`records.jsonl`) with `manifest.json` alongside.
class RecordStore {
 public:
  /// Refuses a directory that already holds records unless `append`.
  RecordStore(std::filesystem::path dir, bool append);

  void append(const SampleRecord& r);
  void write_manifest(const PipelineSummary& summary, const std::string& config_digest,
                      bool complete);
  std::size_t written() const { return written_; }
  std::filesystem::path records_path() const { return dir_ / "records.jsonl"; }
  std::filesystem::path manifest_path() const { return dir_ / "manifest.json"; }

 private:
  std::filesystem::path dir_;
  std::size_t written_ = 0;
  std::size_t preexisting_ = 0;
};

}  // namespace metacot::pipeline
