#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metacot/taxonomy.hpp"

// The three-step Meta-CoT document (summary, task thinking, target traversal),
// its canonical text grammar, and structural/semantic validation.
//
// Canonical grammar:
//
//   [SUMMARY]
//   mode: meta-task | task
//   tasks: <comma-separated MetaTask tokens, or one task type name>
//   targets: <comma-separated descriptors>
//   abilities: <comma-separated labels>
//   [THINKING]
//   <free text, at least one non-blank line>
//   [TRAVERSAL]
//   - target: <descriptor> | action: EDIT(<MetaTask>) | how: <text>
//   - target: <descriptor> | action: KEEP
namespace metacot::cot {

enum class SummaryMode { TaskSummary, MetaTaskSummary };

struct Summary {
  SummaryMode mode = SummaryMode::MetaTaskSummary;
  std::optional<TaskType> task;      // TaskSummary only
  std::vector<MetaTask> meta_tasks;  // MetaTaskSummary only
  std::vector<std::string> targets;
  std::vector<std::string> abilities;

  friend bool operator==(const Summary&, const Summary&) = default;
};

enum class Decision { Edit, Keep };

struct TraversalEntry {
  std::string target;
  Decision decision = Decision::Keep;
  std::optional<MetaTask> meta_task;  // iff Edit
  std::string how;                    // nonempty iff Edit

  static TraversalEntry edit(std::string target, MetaTask m, std::string how) {
    return {std::move(target), Decision::Edit, m, std::move(how)};
  }
  static TraversalEntry keep(std::string target) { return {std::move(target), Decision::Keep, {}, {}}; }

  friend bool operator==(const TraversalEntry&, const TraversalEntry&) = default;
};

struct MetaCotDocument {
  Summary summary;
  std::string thinking;
  std::vector<TraversalEntry> traversal;

  /// Edit entries in traversal order, as a meta-task program.
  MetaTaskProgram induced_program() const;
  bool has_edit() const;

  friend bool operator==(const MetaCotDocument&, const MetaCotDocument&) = default;
};

/// Violated type invariants (empty when the document is well-formed). Fields
/// must already be in canonical form: trimmed, single-line where the grammar
/// is line-oriented, and free of the ',' / '|' separators in list items.
std::vector<std::string> structural_violations(const MetaCotDocument& doc);

class StructureError : public Error {
 public:
  explicit StructureError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Canonical text. Requires a well-formed document with at least one Edit
/// entry; throws StructureError otherwise.
std::string serialize(const MetaCotDocument& doc);

enum class DiagnosticCode {
  MissingSection,
  DuplicateSection,
  SectionOutOfOrder,
  MalformedSummary,
  UnknownMetaTask,
  UnknownTaskType,
  EmptyThinking,
  MalformedTraversal,
  EditMissingHow,
  KeepWithDetail,
  DuplicateTarget,
  EmptySection,
};

std::string_view to_string(DiagnosticCode code);

struct Diagnostic {
  std::size_t line = 0;    // 1-based, 0 when not tied to a line
  std::size_t column = 0;  // 1-based
  DiagnosticCode code{};
  std::string message;
};

struct ParseResult {
  std::optional<MetaCotDocument> document;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return document.has_value(); }
  std::string describe() const;
};

/// Tolerant extraction from raw model output: prose before the first section
/// marker and after the last traversal entry is ignored, markdown fences are
/// skipped, marker matching is case-insensitive. A document is returned only
/// when there are no diagnostics.
ParseResult parse(std::string_view text);

struct TaskViolation {
  enum class Kind { SummaryNotAdmissible, EditNotInSummary, NoEditEntry, TaskMismatch };
  Kind kind;
  std::string message;
};

struct TaskVerdict {
  std::vector<TaskViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks the document against a task's admissible meta-tasks:
///  (a) summary meta-tasks are admissible for `task`,
///  (b) every Edit entry uses a meta-task named in the summary,
///  (c) at least one Edit entry exists.
/// In task-summary mode the summary must name `task` itself and (b) checks
/// Edit entries against the task's admissible set.
TaskVerdict validate_against_task(const MetaCotDocument& doc, TaskType task,
                                  const TaskRegistry& registry = TaskRegistry::bundled());

}  // namespace metacot::cot
