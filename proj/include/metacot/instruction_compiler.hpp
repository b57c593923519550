#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metacot/model_gateway.hpp"
#include "metacot/taxonomy.hpp"

// Instruction -> (Triplet, MetaTaskProgram). Deterministic lexicon rules are
// tried first; unmatched instructions fall back to a task-typing model call.
namespace metacot::compiler {

/// One lexicon line: `priority | pattern | task_name | target_slot_index`.
/// Patterns are lowercase words with `*` wildcards (each matching one or more
/// words); matching is case-insensitive and ignores edge punctuation.
/// target_slot_index picks the wildcard that captures the target, or -1.
struct LexiconRule {
  int priority = 0;
  std::string pattern;
  TaskType task{};
  int target_slot = -1;
  std::vector<std::string> tokens;  // "*" marks a wildcard

  std::size_t wildcard_count() const;
  std::size_t literal_length() const;  // characters in literal tokens
};

struct LexiconMatch {
  const LexiconRule* rule = nullptr;
  std::vector<std::string> captures;  // original-case text per wildcard
};

class Lexicon {
 public:
  static Lexicon parse(std::string_view text, const std::string& source = "<lexicon>");
  static Lexicon load(const std::filesystem::path& path);
  static const Lexicon& bundled();

  /// Rules in match order: priority descending, then longer literal text.
  std::span<const LexiconRule> rules() const { return rules_; }
  std::optional<LexiconMatch> match(std::string_view instruction) const;

 private:
  std::vector<LexiconRule> rules_;
};

enum class Source { Lexicon, Gateway };
std::string_view to_string(Source s);

struct CompilationResult {
  Triplet triplet;
  MetaTaskProgram program;
  Source source = Source::Lexicon;
  double confidence = 1.0;
  std::vector<std::string> sub_instructions;    // multi-instruction parts
  std::optional<gateway::ChatExchange> exchange;  // set on the gateway path
};

class UnclassifiableError : public Error {
 public:
  using Error::Error;
};

/// The task-typing reply could not be turned into a valid triplet/program.
/// The exchange is kept for audit.
class GatewayFormatError : public Error {
 public:
  GatewayFormatError(const std::string& what, gateway::ChatExchange exchange)
      : Error(what), exchange_(std::move(exchange)) {}
  const gateway::ChatExchange& exchange() const noexcept { return exchange_; }

 private:
  gateway::ChatExchange exchange_;
};

struct ClassifyOptions {
  const TaskRegistry* registry = nullptr;  // null = bundled
  const gateway::GatewayProfile* gateway = nullptr;
  std::string prompt_id = "task_typing/v1";
};

/// Classifies and compiles an instruction. Lexicon matches yield confidence
/// 1.0. Multi-part instructions whose parts all match the lexicon become
/// Multi-Instruction Editing. Quantity tasks whose direction cannot be read
/// from stated counts go to the gateway when one is configured.
CompilationResult classify(std::string_view instruction, const Lexicon& lexicon,
                           const ClassifyOptions& options = {});

/// One step per (meta-task, target) pair, ordered by target then meta-task.
/// Meta-tasks for multi-choice tasks are read from the instruction: counts
/// ("from 2 to 4") for quantity tasks, verb hints otherwise. Multi-instruction
/// triplets compile each sub-instruction and concatenate the programs.
MetaTaskProgram compile_to_program(const Triplet& triplet, std::string_view instruction = {},
                                   const Lexicon& lexicon = Lexicon::bundled(),
                                   const TaskRegistry& registry = TaskRegistry::bundled());

/// Splits at top-level ';', newlines, enumeration markers ("1.", "(2)"), and
/// at "and" / "then" / "," when the next word is an editing verb. Separator
/// tokens are dropped; text inside quotes or parentheses is never split.
std::vector<std::string> split_multi_instruction(std::string_view instruction);

/// Direction implied by "from N to M" counts: Addition when M > N, Deletion
/// when M < N. Number words up to twenty are understood.
std::optional<MetaTask> quantity_direction(std::string_view instruction);

/// Builds the task-typing request for `instruction`.
gateway::ChatRequest task_typing_request(std::string_view instruction,
                                         const TaskRegistry& registry,
                                         const std::string& prompt_id = "task_typing/v1");

}  // namespace metacot::compiler
