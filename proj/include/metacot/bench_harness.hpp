#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metacot/model_gateway.hpp"

// Benchmark scoring and table arithmetic for the 21-task benchmark and
// ImgEdit.
namespace metacot::bench {

enum class Benchmark { TwentyOneTask, ImgEdit };
std::string_view to_string(Benchmark b);  // "21-task" | "imgedit"
std::optional<Benchmark> parse_benchmark(std::string_view s);

/// Task columns in table order.
std::span<const std::string> task_columns(Benchmark b);

struct Scale {
  double lo = 0.0;
  double hi = 10.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};
Scale scale_of(Benchmark b);

struct VieComponents {
  double instruction_following = 0.0;
  double consistency = 0.0;
  double naturalness = 0.0;
  double artifact = 0.0;  // 10 = no artifacts

  void check() const;
};

/// sqrt(min(instruction_following, consistency) * min(naturalness, artifact)).
double vie_overall(const VieComponents& c);

struct ScoreRow {
  std::string method;
  std::vector<double> task_means;  // aligned with ScoreTable::tasks
  double overall = 0.0;
};

struct ScoreTable {
  Benchmark benchmark = Benchmark::TwentyOneTask;
  std::vector<std::string> tasks;
  std::vector<ScoreRow> rows;

  const ScoreRow& row(std::string_view method) const;
  /// Every row covers every task and every value lies in the scale.
  void check() const;
  std::string to_csv(int decimals) const;
};

/// Unweighted mean of per-task means.
double overall_of(std::span<const double> task_means);

/// Per-task arithmetic means (in `tasks` order) and their overall. Every task
/// needs at least one sample.
ScoreRow aggregate(std::string method, const std::vector<std::string>& tasks,
                   const std::map<std::string, std::vector<double>>& samples_by_task);

/// Rounds half away from zero, tolerating binary representation error.
double round_half_up(double v, int decimals);
/// "+23.4%" style display of a percentage.
std::string format_pct(double pct);

struct DeltaCell {
  std::string task;  // "Overall" for the overall column
  double raw_pct = 0.0;
  std::string display;
};

struct DeltaReport {
  std::string method;
  std::string baseline;
  std::vector<DeltaCell> cells;  // per task, then Overall
};

/// (method - baseline) / baseline * 100 per task and overall. Throws
/// PreconditionError on a missing row or a zero baseline value.
DeltaReport delta_report(const ScoreTable& table, std::string_view method,
                         std::string_view baseline);
double delta_pct(double method_value, double baseline_value);

struct BenchSample {
  std::string task;
  std::string sample_id;
  gateway::ImageRef source_image;
  std::string instruction;
  std::optional<std::string> reference;
};

struct BenchManifest {
  Benchmark benchmark = Benchmark::TwentyOneTask;
  std::vector<std::string> tasks;  // tasks with samples, in table order
  std::vector<BenchSample> samples;

  /// Sample tasks are benchmark columns, ids unique, `tasks` consistent.
  void check() const;
  /// JSONL lines `task, sample_id, source_image, instruction[, reference]`.
  /// The benchmark is inferred from the task names when not given.
  static BenchManifest load(const std::filesystem::path& jsonl,
                            std::optional<Benchmark> benchmark = {});
  static BenchManifest from_samples(std::vector<BenchSample> samples,
                                    std::optional<Benchmark> benchmark = {});
};

/// Edited images for a manifest: `<dir>/<sample_id>.<ext>` per sample.
std::vector<gateway::ImageRef> find_edits(const BenchManifest& manifest,
                                          const std::filesystem::path& dir);

struct SampleScore {
  std::string sample_id;
  std::string task;
  std::optional<VieComponents> vie;
  std::optional<std::array<double, 3>> imgedit;
  std::optional<double> score;  // absent when the judge reply was unusable
  std::string error;
};

struct BenchResult {
  Benchmark benchmark = Benchmark::TwentyOneTask;
  std::vector<SampleScore> samples;  // manifest order
  std::optional<ScoreTable> table;   // absent when a task has no usable score
  std::size_t failures = 0;
  bool unreliable = false;  // more than 20% of judge calls unusable
  std::string note;

  nlohmann::json to_json() const;
};

/// Parses a judge reply holding one JSON object with the benchmark's score
/// fields. Throws Error on missing, non-numeric or out-of-scale fields.
SampleScore parse_judge_reply(Benchmark b, const std::string& reply);

BenchResult run_bench(const BenchManifest& manifest,
                      const std::vector<gateway::ImageRef>& edited_images,
                      const gateway::GatewayProfile& judge, const std::string& method = "model",
                      std::size_t parallelism = 4);

// ---- printed-table fixtures ----

struct CheckLine {
  std::string name;
  bool strict = true;  // strict lines decide the verdict; others are audit notes
  bool ok = false;
  std::string detail;
};

struct TablesCheckReport {
  std::vector<CheckLine> lines;
  bool strict_ok() const;
  std::size_t strict_count() const;
  std::size_t discrepancies() const;  // failed audit lines
};

struct PrintedTable {
  ScoreTable table;                  // per-task values as printed
  std::vector<double> printed_overall;  // aligned with table.rows
  std::vector<bool> strict;             // aligned with table.rows
};

/// CSV with header `method,<task columns...>,<Average|Overall>,strict`.
PrintedTable load_printed_table(const std::filesystem::path& csv, Benchmark b);

/// Checks every fixture in `dir`: bench21.csv, imgedit.csv, imgedit_delta.csv
/// and claims.csv.
TablesCheckReport check_published_tables(const std::filesystem::path& dir);

}  // namespace metacot::bench
