#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metacot/error.hpp"

// The editing-task universe: the five meta-tasks that span it, the 21 task
// types, and the registry describing which meta-task combinations, targets
// and understanding abilities belong to each task.
namespace metacot {

enum class MetaTask : std::uint8_t { Addition, Deletion, Replacement, CameraMotion, PositionChange };

inline constexpr std::array<MetaTask, 5> kAllMetaTasks = {
    MetaTask::Addition, MetaTask::Deletion, MetaTask::Replacement, MetaTask::CameraMotion,
    MetaTask::PositionChange};

/// Canonical token ("CameraMotion"), used in the CoT grammar.
std::string_view to_string(MetaTask m);
/// Human-readable name ("Camera Motion").
std::string_view display_name(MetaTask m);
/// Case- and space-insensitive. "Camera Movement" normalizes to CameraMotion.
std::optional<MetaTask> parse_meta_task(std::string_view token);

/// Small value set over MetaTask; iterates in enum order.
class MetaTaskSet {
 public:
  constexpr MetaTaskSet() = default;
  MetaTaskSet(std::initializer_list<MetaTask> items) {
    for (MetaTask m : items) insert(m);
  }
  static MetaTaskSet all() { return MetaTaskSet(0x1F); }

  void insert(MetaTask m) { bits_ |= bit(m); }
  bool contains(MetaTask m) const { return (bits_ & bit(m)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  bool subset_of(MetaTaskSet other) const { return (bits_ & ~other.bits_) == 0; }
  bool intersects(MetaTaskSet other) const { return (bits_ & other.bits_) != 0; }
  std::vector<MetaTask> members() const;
  std::uint8_t bits() const { return bits_; }

  friend bool operator==(MetaTaskSet, MetaTaskSet) = default;

 private:
  explicit constexpr MetaTaskSet(std::uint8_t bits) : bits_(bits) {}
  static std::uint8_t bit(MetaTask m) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(m)); }
  std::uint8_t bits_ = 0;
};

std::string to_string(MetaTaskSet set);

enum class TaskType : std::uint8_t {
  Addition,
  Deletion,
  Replacement,
  CameraMotion,
  PositionChange,
  StyleTransfer,
  ToneAdjustment,
  TextEditing,
  ShapeModification,
  StructuralChange,
  ColorChange,
  QuantityChange,
  SpecifiedQuantityChange,
  HumanAttributeEditing,
  MaterialChange,
  MotionChange,
  LogicalReasoning,
  CausalReasoning,
  SpatialComposition,
  TemporalReasoning,
  MultiInstructionEditing,
};

inline constexpr std::size_t kTaskTypeCount = 21;
std::span<const TaskType> all_task_types();

std::string_view to_string(TaskType t);
std::optional<TaskType> parse_task_type(std::string_view name);

class UnknownTaskError : public Error {
 public:
  explicit UnknownTaskError(const std::string& name) : Error("unknown task type: " + name) {}
};

struct Triplet {
  TaskType task{};
  std::vector<std::string> targets;
  std::vector<std::string> abilities;

  /// Throws PreconditionError when targets or abilities are empty.
  void check() const;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct ProgramStep {
  MetaTask meta_task{};
  std::string target;
  std::string detail;
  friend bool operator==(const ProgramStep&, const ProgramStep&) = default;
};

/// Ordered composition of meta-tasks, applied first to last.
struct MetaTaskProgram {
  std::vector<ProgramStep> steps;

  MetaTaskSet meta_tasks() const;
  friend bool operator==(const MetaTaskProgram&, const MetaTaskProgram&) = default;
};

struct RegistryEntry {
  TaskType task{};
  MetaTaskSet admissible;
  std::string canonical_target;  // "Any" = unconstrained
  std::vector<std::string> abilities;

  bool any_target() const { return canonical_target == "Any"; }
  /// Lowercased first category of the target column, or empty for "Any".
  std::string default_target() const;
};

class TaskRegistry {
 public:
  /// Parses `task | meta1, meta2 | target | ability` records. Blank lines and
  /// '#' comments are skipped; "# version: N" sets the version. Every task
  /// type must appear exactly once.
  static TaskRegistry parse(std::string_view text, const std::string& source = "<registry>");
  static TaskRegistry load(const std::filesystem::path& path);
  /// The bundled 21-task registry. Parsed once.
  static const TaskRegistry& bundled();

  std::span<const RegistryEntry> entries() const { return entries_; }
  const RegistryEntry& at(TaskType t) const;
  const RegistryEntry& at(std::string_view task_name) const;
  int version() const { return version_; }

  /// Serializes back to the resource-file format.
  std::string dump() const;

 private:
  std::vector<RegistryEntry> entries_;
  int version_ = 0;
};

struct ProgramViolation {
  std::size_t step_index = 0;
  MetaTask meta_task{};
  std::string message;
};

struct ProgramVerdict {
  std::vector<ProgramViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks every step's meta-task against the task's admissible set. Throws
/// PreconditionError for an empty program or a step with an empty target.
ProgramVerdict validate_program(const MetaTaskProgram& program, TaskType task,
                                const TaskRegistry& registry = TaskRegistry::bundled());
/// Same, by task name; unknown names raise UnknownTaskError.
ProgramVerdict validate_program(const MetaTaskProgram& program, std::string_view task_name,
                                const TaskRegistry& registry = TaskRegistry::bundled());

struct CoverageReport {
  std::vector<TaskType> covered;
  std::vector<TaskType> uncovered;
};

/// A task is covered when every admissible meta-task is in `basis`.
CoverageReport basis_coverage_check(const TaskRegistry& registry, MetaTaskSet basis);

}  // namespace metacot
