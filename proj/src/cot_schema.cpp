#include "metacot/cot_schema.hpp"

#include <array>
#include <set>

#include "metacot/text.hpp"

namespace metacot::cot {

namespace {

enum class Section { Summary = 0, Thinking = 1, Traversal = 2 };
constexpr std::array<std::string_view, 3> kSectionNames = {"SUMMARY", "THINKING", "TRAVERSAL"};

// Marker lines may be decorated with markdown emphasis or heading marks.
std::optional<Section> marker_of(std::string_view line) {
  line = text::trim(line);
  while (!line.empty() && (line.front() == '#' || line.front() == '*')) line.remove_prefix(1);
  while (!line.empty() && line.back() == '*') line.remove_suffix(1);
  line = text::trim(line);
  if (line.size() < 3 || line.front() != '[' || line.back() != ']') return std::nullopt;
  const std::string_view inner = text::trim(line.substr(1, line.size() - 2));
  for (std::size_t i = 0; i < kSectionNames.size(); ++i) {
    if (text::iequals(inner, kSectionNames[i])) return static_cast<Section>(i);
  }
  return std::nullopt;
}

bool is_fence(std::string_view line) { return text::trim(line).starts_with("```"); }

bool is_canonical_item(std::string_view s, bool allow_comma) {
  if (s.empty() || text::trim(s) != s) return false;
  for (char c : s) {
    if (c == '\n' || c == '\r' || c == '|') return false;
    if (!allow_comma && c == ',') return false;
  }
  return true;
}

std::string lower_key(std::string_view target) { return text::to_lower(target); }

std::size_t column_of(std::string_view line, std::string_view part) {
  const auto pos = line.find(part);
  return pos == std::string_view::npos ? 1 : pos + 1;
}

}  // namespace

MetaTaskProgram MetaCotDocument::induced_program() const {
  MetaTaskProgram program;
  for (const auto& e : traversal) {
    if (e.decision == Decision::Edit && e.meta_task) {
      program.steps.push_back({*e.meta_task, e.target, e.how});
    }
  }
  return program;
}

bool MetaCotDocument::has_edit() const {
  for (const auto& e : traversal) {
    if (e.decision == Decision::Edit) return true;
  }
  return false;
}

std::vector<std::string> structural_violations(const MetaCotDocument& doc) {
  std::vector<std::string> out;
  const Summary& s = doc.summary;
  if (s.mode == SummaryMode::TaskSummary) {
    if (!s.task) out.emplace_back("task summary without a task type");
    if (!s.meta_tasks.empty()) out.emplace_back("task summary must not list meta-tasks");
  } else {
    if (s.meta_tasks.empty()) out.emplace_back("meta-task summary lists no meta-tasks");
    if (s.task) out.emplace_back("meta-task summary must not name a task type");
  }
  if (s.targets.empty()) out.emplace_back("summary lists no targets");
  for (const auto& t : s.targets) {
    if (!is_canonical_item(t, false)) out.emplace_back("summary target not canonical: '" + t + "'");
  }
  for (const auto& a : s.abilities) {
    if (!is_canonical_item(a, false)) out.emplace_back("ability label not canonical: '" + a + "'");
  }

  if (text::trim(doc.thinking).empty()) {
    out.emplace_back("thinking is empty");
  } else if (text::trim(doc.thinking) != doc.thinking) {
    out.emplace_back("thinking has leading or trailing whitespace");
  }
  if (doc.thinking.find('\r') != std::string::npos) out.emplace_back("thinking contains CR");
  for (const auto& line : text::split_lines(doc.thinking)) {
    if (marker_of(line) || is_fence(line)) {
      out.emplace_back("thinking line collides with a section marker or fence: '" + line + "'");
    }
  }

  if (doc.traversal.empty()) out.emplace_back("traversal is empty");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.traversal.size(); ++i) {
    const auto& e = doc.traversal[i];
    const std::string where = "traversal entry " + std::to_string(i);
    if (!is_canonical_item(e.target, true)) {
      out.emplace_back(where + ": target not canonical: '" + e.target + "'");
    }
    if (!seen.insert(lower_key(e.target)).second) {
      out.emplace_back(where + ": duplicate target '" + e.target + "'");
    }
    if (e.decision == Decision::Edit) {
      if (!e.meta_task) out.emplace_back(where + ": Edit entry missing meta-task");
      if (e.how.empty()) {
        out.emplace_back(where + ": Edit entry missing how");
      } else if (text::trim(e.how) != e.how || e.how.find_first_of("\r\n") != std::string::npos) {
        out.emplace_back(where + ": how text not canonical");
      }
    } else {
      if (e.meta_task) out.emplace_back(where + ": Keep entry carries a meta-task");
      if (!e.how.empty()) out.emplace_back(where + ": Keep entry carries how text");
    }
  }
  return out;
}

StructureError::StructureError(std::vector<std::string> violations)
    : Error("invalid Meta-CoT document: " + text::join(violations, "; ")),
      violations_(std::move(violations)) {}

std::string serialize(const MetaCotDocument& doc) {
  auto violations = structural_violations(doc);
  if (!doc.has_edit()) violations.emplace_back("traversal has no Edit entry");
  if (!violations.empty()) throw StructureError(std::move(violations));

  std::string out = "[SUMMARY]\n";
  const Summary& s = doc.summary;
  if (s.mode == SummaryMode::MetaTaskSummary) {
    out += "mode: meta-task\ntasks: ";
    std::vector<std::string> names;
    for (MetaTask m : s.meta_tasks) names.emplace_back(to_string(m));
    out += text::join(names, ", ");
  } else {
    out += "mode: task\ntasks: ";
    out += to_string(*s.task);
  }
  out += "\ntargets: " + text::join(s.targets, ", ");
  out += s.abilities.empty() ? "\nabilities:" : "\nabilities: " + text::join(s.abilities, ", ");
  out += "\n[THINKING]\n" + doc.thinking + "\n[TRAVERSAL]\n";
  for (const auto& e : doc.traversal) {
    out += "- target: " + e.target + " | action: ";
    if (e.decision == Decision::Edit) {
      out += "EDIT(" + std::string(to_string(*e.meta_task)) + ") | how: " + e.how + "\n";
    } else {
      out += "KEEP\n";
    }
  }
  return out;
}

std::string_view to_string(DiagnosticCode code) {
  switch (code) {
    case DiagnosticCode::MissingSection: return "missing-section";
    case DiagnosticCode::DuplicateSection: return "duplicate-section";
    case DiagnosticCode::SectionOutOfOrder: return "section-out-of-order";
    case DiagnosticCode::MalformedSummary: return "malformed-summary";
    case DiagnosticCode::UnknownMetaTask: return "unknown-meta-task";
    case DiagnosticCode::UnknownTaskType: return "unknown-task-type";
    case DiagnosticCode::EmptyThinking: return "empty-thinking";
    case DiagnosticCode::MalformedTraversal: return "malformed-traversal";
    case DiagnosticCode::EditMissingHow: return "edit-missing-how";
    case DiagnosticCode::KeepWithDetail: return "keep-with-detail";
    case DiagnosticCode::DuplicateTarget: return "duplicate-target";
    case DiagnosticCode::EmptySection: return "empty-section";
  }
  return "unknown";
}

std::string ParseResult::describe() const {
  std::string out;
  for (const auto& d : diagnostics) {
    out += std::to_string(d.line) + ":" + std::to_string(d.column) + ": " +
           std::string(to_string(d.code)) + ": " + d.message + "\n";
  }
  return out;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view input) : lines_(text::split_lines(input)) {}

  ParseResult run() {
    if (!locate_sections()) return finish();
    MetaCotDocument doc;
    parse_summary(doc.summary);
    parse_thinking(doc.thinking);
    parse_traversal(doc.traversal);
    if (diags_.empty()) result_.document = std::move(doc);
    return finish();
  }

 private:
  void diag(std::size_t line, std::size_t col, DiagnosticCode code, std::string msg) {
    diags_.push_back({line, col, code, std::move(msg)});
  }

  ParseResult finish() {
    result_.diagnostics = std::move(diags_);
    return std::move(result_);
  }

  bool locate_sections() {
    std::array<std::vector<std::size_t>, 3> found;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      if (auto m = marker_of(lines_[i])) found[static_cast<std::size_t>(*m)].push_back(i);
    }
    bool ok = true;
    for (std::size_t s = 0; s < 3; ++s) {
      const std::string name = "[" + std::string(kSectionNames[s]) + "]";
      if (found[s].empty()) {
        diag(0, 0, DiagnosticCode::MissingSection, "missing section " + name);
        ok = false;
      } else if (found[s].size() > 1) {
        diag(found[s][1] + 1, 1, DiagnosticCode::DuplicateSection, "duplicate section " + name);
        ok = false;
      }
    }
    if (!ok) return false;
    for (std::size_t s = 0; s < 3; ++s) start_[s] = found[s].front();
    for (std::size_t s = 1; s < 3; ++s) {
      if (start_[s] < start_[s - 1]) {
        diag(start_[s] + 1, 1, DiagnosticCode::SectionOutOfOrder,
             "section out of order: [" + std::string(kSectionNames[s]) + "] must follow [" +
                 std::string(kSectionNames[s - 1]) + "]");
        return false;
      }
    }
    return true;
  }

  void parse_summary(Summary& summary) {
    const std::size_t begin = start_[0] + 1;
    const std::size_t end = start_[1];
    std::array<std::optional<std::pair<std::size_t, std::string>>, 4> values;
    static constexpr std::array<std::string_view, 4> kKeys = {"mode", "tasks", "targets",
                                                              "abilities"};
    for (std::size_t i = begin; i < end; ++i) {
      const std::string_view line = lines_[i];
      if (text::trim(line).empty() || is_fence(line)) continue;
      const auto colon = line.find(':');
      if (colon == std::string_view::npos) {
        diag(i + 1, 1, DiagnosticCode::MalformedSummary, "expected 'key: value' in summary");
        continue;
      }
      const std::string key = text::to_lower(text::trim(line.substr(0, colon)));
      std::size_t k = 0;
      while (k < kKeys.size() && kKeys[k] != key) ++k;
      if (k == kKeys.size()) {
        diag(i + 1, 1, DiagnosticCode::MalformedSummary, "unknown summary key '" + key + "'");
        continue;
      }
      if (values[k]) {
        diag(i + 1, 1, DiagnosticCode::MalformedSummary, "duplicate summary key '" + key + "'");
        continue;
      }
      values[k] = std::make_pair(i, std::string(text::trim(line.substr(colon + 1))));
    }
    for (std::size_t k = 0; k < 3; ++k) {
      if (!values[k]) {
        diag(start_[0] + 1, 1, DiagnosticCode::MalformedSummary,
             "summary missing '" + std::string(kKeys[k]) + "'");
      }
    }
    if (!values[0] || !values[1] || !values[2]) return;

    const auto& [mode_line, mode] = *values[0];
    const std::string mode_key = text::to_lower(text::normalize_space(mode));
    if (mode_key == "meta-task" || mode_key == "metatask" || mode_key == "meta task") {
      summary.mode = SummaryMode::MetaTaskSummary;
    } else if (mode_key == "task") {
      summary.mode = SummaryMode::TaskSummary;
    } else {
      diag(mode_line + 1, column_of(lines_[mode_line], mode), DiagnosticCode::MalformedSummary,
           "mode must be 'meta-task' or 'task', got '" + mode + "'");
      return;
    }

    const auto& [tasks_line, tasks] = *values[1];
    if (summary.mode == SummaryMode::MetaTaskSummary) {
      const auto tokens = text::split_trimmed(tasks, ',');
      if (tokens.empty()) {
        diag(tasks_line + 1, 1, DiagnosticCode::MalformedSummary, "no meta-tasks listed");
      }
      for (const auto& tok : tokens) {
        if (auto m = parse_meta_task(tok)) {
          summary.meta_tasks.push_back(*m);
        } else {
          diag(tasks_line + 1, column_of(lines_[tasks_line], tok), DiagnosticCode::UnknownMetaTask,
               "unknown meta-task '" + tok + "'");
        }
      }
    } else {
      if (auto t = parse_task_type(tasks)) {
        summary.task = *t;
      } else {
        diag(tasks_line + 1, column_of(lines_[tasks_line], tasks), DiagnosticCode::UnknownTaskType,
             "unknown task type '" + tasks + "'");
      }
    }

    const auto& [targets_line, targets] = *values[2];
    summary.targets = text::split_trimmed(targets, ',');
    bool empty_item = summary.targets.empty();
    for (const auto& t : summary.targets) empty_item = empty_item || t.empty();
    if (empty_item) {
      diag(targets_line + 1, 1, DiagnosticCode::MalformedSummary, "empty target in summary");
    }
    if (values[3]) {
      summary.abilities = text::split_trimmed(values[3]->second, ',');
      for (const auto& a : summary.abilities) {
        if (a.empty()) {
          diag(values[3]->first + 1, 1, DiagnosticCode::MalformedSummary, "empty ability label");
          break;
        }
      }
    }
  }

  void parse_thinking(std::string& thinking) {
    std::vector<std::string> body;
    for (std::size_t i = start_[1] + 1; i < start_[2]; ++i) {
      if (is_fence(lines_[i])) continue;
      body.push_back(lines_[i]);
    }
    thinking = std::string(text::trim(text::join(body, "\n")));
    if (thinking.empty()) {
      diag(start_[1] + 1, 1, DiagnosticCode::EmptyThinking, "thinking section is empty");
    }
  }

  void parse_traversal(std::vector<TraversalEntry>& entries) {
    std::set<std::string> seen;
    for (std::size_t i = start_[2] + 1; i < lines_.size(); ++i) {
      const std::string& raw = lines_[i];
      std::string_view line = text::trim(raw);
      if (line.empty() || is_fence(line)) continue;
      if (line.front() != '-' && line.front() != '*') {
        if (!entries.empty() || had_entry_line_) break;  // trailing prose
        diag(i + 1, 1, DiagnosticCode::MalformedTraversal,
             "expected '- target: <descriptor> | action: ...'");
        continue;
      }
      had_entry_line_ = true;
      line.remove_prefix(1);
      parse_entry(i, raw, text::trim(line), entries, seen);
    }
    if (entries.empty() && !had_entry_line_) {
      diag(start_[2] + 1, 1, DiagnosticCode::EmptySection, "traversal section has no entries");
    }
  }

  void parse_entry(std::size_t i, const std::string& raw, std::string_view body,
                   std::vector<TraversalEntry>& entries, std::set<std::string>& seen) {
    const std::size_t lineno = i + 1;
    const auto bar1 = body.find('|');
    const std::string_view part1 = text::trim(body.substr(0, bar1));
    if (!text::istarts_with(part1, "target:")) {
      diag(lineno, column_of(raw, part1), DiagnosticCode::MalformedTraversal,
           "traversal entry must start with 'target:'");
      return;
    }
    TraversalEntry entry;
    entry.target = std::string(text::trim(part1.substr(7)));
    if (entry.target.empty()) {
      diag(lineno, column_of(raw, part1), DiagnosticCode::MalformedTraversal, "empty target");
      return;
    }
    if (bar1 == std::string_view::npos) {
      diag(lineno, raw.size() + 1, DiagnosticCode::MalformedTraversal, "missing 'action:' field");
      return;
    }
    std::string_view rest = body.substr(bar1 + 1);
    const auto bar2 = rest.find('|');
    const std::string_view part2 = text::trim(rest.substr(0, bar2));
    if (!text::istarts_with(part2, "action:")) {
      diag(lineno, column_of(raw, part2), DiagnosticCode::MalformedTraversal,
           "expected 'action:' after target");
      return;
    }
    const std::string_view action = text::trim(part2.substr(7));
    std::optional<std::string_view> how;
    if (bar2 != std::string_view::npos) {
      const std::string_view part3 = text::trim(rest.substr(bar2 + 1));
      if (!text::istarts_with(part3, "how:")) {
        diag(lineno, column_of(raw, part3), DiagnosticCode::MalformedTraversal,
             "expected 'how:' after action");
        return;
      }
      how = text::trim(part3.substr(4));
    }

    if (text::iequals(action, "KEEP")) {
      entry.decision = Decision::Keep;
      if (how) {
        diag(lineno, column_of(raw, "how:"), DiagnosticCode::KeepWithDetail,
             "Keep entry must not carry how");
        return;
      }
    } else if (text::istarts_with(action, "EDIT(") && action.back() == ')') {
      const std::string_view token = text::trim(action.substr(5, action.size() - 6));
      const auto m = parse_meta_task(token);
      if (!m) {
        diag(lineno, column_of(raw, token), DiagnosticCode::UnknownMetaTask,
             "unknown meta-task '" + std::string(token) + "'");
        return;
      }
      entry.decision = Decision::Edit;
      entry.meta_task = *m;
      if (!how || how->empty()) {
        diag(lineno, raw.size() + 1, DiagnosticCode::EditMissingHow, "Edit entry missing how");
        return;
      }
      entry.how = std::string(*how);
    } else {
      diag(lineno, column_of(raw, action), DiagnosticCode::MalformedTraversal,
           "action must be KEEP or EDIT(<MetaTask>), got '" + std::string(action) + "'");
      return;
    }

    if (!seen.insert(lower_key(entry.target)).second) {
      diag(lineno, column_of(raw, entry.target), DiagnosticCode::DuplicateTarget,
           "duplicate target '" + entry.target + "'");
      return;
    }
    entries.push_back(std::move(entry));
  }

  std::vector<std::string> lines_;
  std::array<std::size_t, 3> start_{};
  std::vector<Diagnostic> diags_;
  ParseResult result_;
  bool had_entry_line_ = false;
};

}  // namespace

ParseResult parse(std::string_view input) { return Parser(input).run(); }

TaskVerdict validate_against_task(const MetaCotDocument& doc, TaskType task,
                                  const TaskRegistry& registry) {
  using Kind = TaskViolation::Kind;
  TaskVerdict verdict;
  const RegistryEntry& entry = registry.at(task);
  MetaTaskSet allowed;
  if (doc.summary.mode == SummaryMode::MetaTaskSummary) {
    for (MetaTask m : doc.summary.meta_tasks) {
      if (!entry.admissible.contains(m)) {
        verdict.violations.push_back(
            {Kind::SummaryNotAdmissible, "summary meta-task " + std::string(to_string(m)) +
                                             " not admissible for " + std::string(to_string(task))});
      }
      allowed.insert(m);
    }
  } else {
    if (doc.summary.task != task) {
      verdict.violations.push_back(
          {Kind::TaskMismatch, "summary names " +
                                   std::string(doc.summary.task ? to_string(*doc.summary.task)
                                                                : std::string_view("no task")) +
                                   ", expected " + std::string(to_string(task))});
    }
    allowed = entry.admissible;
  }
  bool any_edit = false;
  for (std::size_t i = 0; i < doc.traversal.size(); ++i) {
    const auto& e = doc.traversal[i];
    if (e.decision != Decision::Edit) continue;
    any_edit = true;
    if (!e.meta_task || !allowed.contains(*e.meta_task)) {
      verdict.violations.push_back(
          {Kind::EditNotInSummary,
           "traversal entry " + std::to_string(i) + " (" + e.target + ") uses " +
               (e.meta_task ? std::string(to_string(*e.meta_task)) : std::string("no meta-task")) +
               ", outside " + to_string(allowed)});
    }
  }
  if (!any_edit) verdict.violations.push_back({Kind::NoEditEntry, "traversal has no Edit entry"});
  return verdict;
}

}  // namespace metacot::cot
