#include "metacot/taxonomy.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <sstream>

#include "metacot/resources.hpp"
#include "metacot/text.hpp"

namespace metacot {

namespace {

struct MetaTaskNames {
  MetaTask value;
  std::string_view token;
  std::string_view display;
};

constexpr std::array<MetaTaskNames, 5> kMetaNames = {{
    {MetaTask::Addition, "Addition", "Addition"},
    {MetaTask::Deletion, "Deletion", "Deletion"},
    {MetaTask::Replacement, "Replacement", "Replacement"},
    {MetaTask::CameraMotion, "CameraMotion", "Camera Motion"},
    {MetaTask::PositionChange, "PositionChange", "Position Change"},
}};

constexpr std::array<std::string_view, kTaskTypeCount> kTaskNames = {
    "Addition",
    "Deletion",
    "Replacement",
    "Camera Motion",
    "Position Change",
    "Style Transfer",
    "Tone Adjustment",
    "Text Editing",
    "Shape Modification",
    "Structural Change",
    "Color Change",
    "Quantity Change",
    "Specified Quantity Change",
    "Human Attribute Editing",
    "Material Change",
    "Motion Change",
    "Logical Reasoning",
    "Causal Reasoning",
    "Spatial Composition",
    "Temporal Reasoning",
    "Multi-Instruction Editing",
};

constexpr std::array<TaskType, kTaskTypeCount> kTaskTypes = [] {
  std::array<TaskType, kTaskTypeCount> out{};
  for (std::size_t i = 0; i < kTaskTypeCount; ++i) out[i] = static_cast<TaskType>(i);
  return out;
}();

// Lowercase with spaces, hyphens and underscores removed.
std::string squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '-' || c == '_' || c == '\t') continue;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace

std::string_view to_string(MetaTask m) { return kMetaNames[static_cast<std::size_t>(m)].token; }

std::string_view display_name(MetaTask m) {
  return kMetaNames[static_cast<std::size_t>(m)].display;
}

std::optional<MetaTask> parse_meta_task(std::string_view token) {
  const std::string key = squash(token);
  if (key.empty()) return std::nullopt;
  for (const auto& n : kMetaNames) {
    if (key == squash(n.token)) return n.value;
  }
  if (key == "cameramovement") return MetaTask::CameraMotion;
  return std::nullopt;
}

std::size_t MetaTaskSet::size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<MetaTask> MetaTaskSet::members() const {
  std::vector<MetaTask> out;
  for (MetaTask m : kAllMetaTasks) {
    if (contains(m)) out.push_back(m);
  }
  return out;
}

std::string to_string(MetaTaskSet set) {
  std::string out = "{";
  bool first = true;
  for (MetaTask m : set.members()) {
    if (!first) out += ", ";
    out += to_string(m);
    first = false;
  }
  return out + "}";
}

std::span<const TaskType> all_task_types() { return kTaskTypes; }

std::string_view to_string(TaskType t) { return kTaskNames[static_cast<std::size_t>(t)]; }

std::optional<TaskType> parse_task_type(std::string_view name) {
  const std::string key = squash(name);
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (key == squash(kTaskNames[i])) return static_cast<TaskType>(i);
  }
  return std::nullopt;
}

void Triplet::check() const {
  if (targets.empty()) throw PreconditionError("triplet has no targets");
  if (abilities.empty()) throw PreconditionError("triplet has no understanding abilities");
  for (const auto& t : targets) {
    if (text::trim(t).empty()) throw PreconditionError("triplet has an empty target");
  }
}

MetaTaskSet MetaTaskProgram::meta_tasks() const {
  MetaTaskSet out;
  for (const auto& s : steps) out.insert(s.meta_task);
  return out;
}

std::string RegistryEntry::default_target() const {
  if (any_target()) return {};
  std::string_view first = canonical_target;
  first = first.substr(0, first.find_first_of(",/"));
  return text::to_lower(text::trim(first));
}

TaskRegistry TaskRegistry::parse(std::string_view text_in, const std::string& source) {
  TaskRegistry reg;
  std::array<bool, kTaskTypeCount> seen{};
  const auto lines = text::split_lines(text_in);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    std::string_view line = text::trim(lines[i]);
    if (line.empty()) continue;
    if (line.front() == '#') {
      line.remove_prefix(1);
      line = text::trim(line);
      if (text::istarts_with(line, "version:")) {
        auto v = text::parse_int(line.substr(8));
        if (!v) throw FormatError(source, lineno, "bad version number");
        reg.version_ = static_cast<int>(*v);
      }
      continue;
    }
    const auto fields = text::split_trimmed(line, '|');
    if (fields.size() != 4) {
      throw FormatError(source, lineno, "expected 4 '|'-separated fields");
    }
    RegistryEntry entry;
    const auto task = parse_task_type(fields[0]);
    if (!task) throw FormatError(source, lineno, "unknown task '" + fields[0] + "'");
    if (seen[static_cast<std::size_t>(*task)]) {
      throw FormatError(source, lineno, "duplicate task '" + fields[0] + "'");
    }
    seen[static_cast<std::size_t>(*task)] = true;
    entry.task = *task;
    if (text::iequals(fields[1], "Any")) {
      entry.admissible = MetaTaskSet::all();
    } else {
      for (const auto& tok : text::split_trimmed(fields[1], ',')) {
        const auto m = parse_meta_task(tok);
        if (!m) throw FormatError(source, lineno, "unknown meta-task '" + tok + "'");
        entry.admissible.insert(*m);
      }
    }
    if (entry.admissible.empty()) throw FormatError(source, lineno, "empty meta-task set");
    entry.canonical_target = fields[2];
    if (entry.canonical_target.empty()) throw FormatError(source, lineno, "empty target");
    entry.abilities = text::split_trimmed(fields[3], ',');
    if (entry.abilities.empty()) throw FormatError(source, lineno, "empty ability");
    reg.entries_.push_back(std::move(entry));
  }
  for (std::size_t t = 0; t < kTaskTypeCount; ++t) {
    if (!seen[t]) {
      throw FormatError(source, 0,
                        "missing task '" + std::string(kTaskNames[t]) + "'");
    }
  }
  return reg;
}

TaskRegistry TaskRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open registry file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const TaskRegistry& TaskRegistry::bundled() {
  static const TaskRegistry reg = parse(resources::bundled_registry(), "<bundled registry>");
  return reg;
}

const RegistryEntry& TaskRegistry::at(TaskType t) const {
  for (const auto& e : entries_) {
    if (e.task == t) return e;
  }
  throw UnknownTaskError(std::string(to_string(t)));
}

const RegistryEntry& TaskRegistry::at(std::string_view task_name) const {
  const auto t = parse_task_type(task_name);
  if (!t) throw UnknownTaskError(std::string(task_name));
  return at(*t);
}

std::string TaskRegistry::dump() const {
  std::string out = "# version: " + std::to_string(version_) + "\n";
  for (const auto& e : entries_) {
    out += to_string(e.task);
    out += " | ";
    if (e.admissible == MetaTaskSet::all()) {
      out += "Any";
    } else {
      std::vector<std::string> names;
      for (MetaTask m : e.admissible.members()) names.emplace_back(display_name(m));
      out += text::join(names, ", ");
    }
    out += " | " + e.canonical_target + " | " + text::join(e.abilities, ", ") + "\n";
  }
  return out;
}

ProgramVerdict validate_program(const MetaTaskProgram& program, TaskType task,
                                const TaskRegistry& registry) {
  if (program.steps.empty()) throw PreconditionError("meta-task program has no steps");
  for (const auto& s : program.steps) {
    if (text::trim(s.target).empty()) throw PreconditionError("program step with empty target");
  }
  const RegistryEntry& entry = registry.at(task);
  ProgramVerdict verdict;
  for (std::size_t i = 0; i < program.steps.size(); ++i) {
    const MetaTask m = program.steps[i].meta_task;
    if (!entry.admissible.contains(m)) {
      verdict.violations.push_back(
          {i, m,
           "step " + std::to_string(i) + ": " + std::string(to_string(m)) + " not in " +
               to_string(entry.admissible) + " for " + std::string(to_string(task))});
    }
  }
  return verdict;
}

ProgramVerdict validate_program(const MetaTaskProgram& program, std::string_view task_name,
                                const TaskRegistry& registry) {
  const auto task = parse_task_type(task_name);
  if (!task) throw UnknownTaskError(std::string(task_name));
  return validate_program(program, *task, registry);
}

CoverageReport basis_coverage_check(const TaskRegistry& registry, MetaTaskSet basis) {
  if (basis.empty()) throw PreconditionError("basis must be nonempty");
  CoverageReport report;
  for (const auto& e : registry.entries()) {
    const bool covered = e.admissible.intersects(basis) && e.admissible.subset_of(basis);
    (covered ? report.covered : report.uncovered).push_back(e.task);
  }
  return report;
}

}  // namespace metacot
