#include "metacot/prompts.hpp"

#include <fstream>
#include <sstream>

#include "metacot/error.hpp"
#include "metacot/text.hpp"

namespace metacot::prompts {

namespace {

constexpr std::string_view kCotGrammar = R"([SUMMARY]
mode: meta-task | task
tasks: <comma-separated meta-tasks from Addition, Deletion, Replacement, CameraMotion, PositionChange; or one task type name when mode is task>
targets: <comma-separated editing targets>
abilities: <comma-separated understanding abilities>
[THINKING]
<task-specific reasoning, one or more lines>
[TRAVERSAL]
- target: <target> | action: EDIT(<meta-task>) | how: <how it is edited>
- target: <target> | action: KEEP)";

struct Builtin {
  std::string_view id;
  std::string_view system;
  std::string_view user;
};

const std::vector<Builtin>& builtins() {
  static const std::vector<Builtin> table = {
      {"task_typing/v1",
       "You classify image-editing instructions into exactly one editing task type.\n"
       "Task definitions (task | meta-tasks | target | understanding ability):\n{{registry}}",
       "Instruction: {{instruction}}\n"
       "Reply with one JSON object and nothing else:\n"
       "{\"task\": <task type name>, \"targets\": [<editing targets>], "
       "\"abilities\": [<understanding abilities>], "
       "\"steps\": [{\"meta_task\": <meta-task>, \"target\": <target>, \"detail\": <text>}], "
       "\"confidence\": <number between 0 and 1>}"},
      {"consistency_check/v1",
       "You verify that an image-editing instruction was assigned the right task type.",
       "Instruction: {{instruction}}\nPredicted task type: {{task}}\n"
       "Task definition: {{definition}}\n"
       "Does the instruction belong to this task type? Answer YES or NO."},
      {"cot_generation/v1",
       "You write a Meta-CoT for an image edit: a summary of the task as meta-tasks, "
       "task-specific thinking, and a traversal over every target in the image deciding "
       "whether and how it is edited. Use exactly this format:\n",
       "The first image is the source, the second is the edited target.\n"
       "Instruction: {{instruction}}\nTask type: {{task}}\nSummary mode: {{mode}}\n"
       "Admissible meta-tasks: {{meta_tasks}}\n"
       "Write the Meta-CoT now."},
      {"alignment_eval/v1",
       "You check whether a Meta-CoT matches the edit actually applied between two images.",
       "The first image is the source, the second is the edited target.\n"
       "Meta-CoT:\n{{cot}}\n"
       "Score from 0 to 10 how faithfully the Meta-CoT describes this edit. "
       "Reply with a single number."},
      {"cec_judge/v1",
       "You evaluate whether an edited image follows the reasoning that preceded it.",
       "Reasoning (Meta-CoT):\n{{cot}}\n"
       "Compare the edited image with the reasoning. Score 0-10. Reply with a number."},
      {"cec_judge/v2",
       "You evaluate CoT-editing consistency for image edits.",
       "Reasoning (Meta-CoT):\n{{cot}}\n"
       "Check the task: was the operation named in the summary performed? "
       "Check the targets: was every EDIT target changed as described and every KEEP "
       "target left unchanged? Give one combined score from 0 to 10. Reply with the number only."},
      {"cec_judge/v3",
       "You are a strict judge of CoT-editing consistency. You score how well an edited "
       "image agrees with the reasoning that produced it, from the task perspective and "
       "from the target perspective.",
       "Reasoning (Meta-CoT):\n{{cot}}\n"
       "Task perspective: does the edit perform the meta-tasks in the summary, and only those?\n"
       "Target perspective: for each traversal entry, is an EDIT target changed in the stated "
       "way, and is a KEEP target preserved?\n"
       "Combine both into a single score from 0 (contradicts the reasoning) to 10 (fully "
       "consistent). Reply with the number only."},
      {"bench_judge/vie/v1",
       "You rate image edits. Scores are from 0 to 10.",
       "Instruction: {{instruction}}\nThe first image is the source, the second is the edit.\n"
       "Reply with one JSON object: {\"instruction_following\": n, \"consistency\": n, "
       "\"naturalness\": n, \"artifact\": n} where artifact is 10 for no artifacts."},
      {"bench_judge/imgedit/v1",
       "You rate image edits. Scores are from 1 to 5.",
       "Instruction: {{instruction}}\nThe first image is the source, the second is the edit.\n"
       "Reply with one JSON object: {\"instruction_adherence\": n, \"editing_quality\": n, "
       "\"detail_preservation\": n}."},
  };
  return table;
}

Template from_file(const std::string& id, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open prompt template " + path);
  Template t;
  t.id = id;
  std::string* current = nullptr;
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = text::trim(line);
    if (trimmed == "[system]") {
      current = &t.system;
      continue;
    }
    if (trimmed == "[user]") {
      current = &t.user;
      continue;
    }
    if (current) *current += line + "\n";
  }
  t.system = std::string(text::trim(t.system));
  t.user = std::string(text::trim(t.user));
  if (t.user.empty()) throw Error("prompt template " + path + " has no [user] section");
  return t;
}

}  // namespace

Template get(std::string_view id) {
  if (id.starts_with("file:")) return from_file(std::string(id), std::string(id.substr(5)));
  for (const auto& b : builtins()) {
    if (b.id == id) {
      Template t{std::string(b.id), std::string(b.system), std::string(b.user)};
      if (b.id == "cot_generation/v1") t.system += kCotGrammar;
      return t;
    }
  }
  throw Error("unknown prompt template '" + std::string(id) + "'");
}

std::vector<std::string> builtin_ids() {
  std::vector<std::string> out;
  for (const auto& b : builtins()) out.emplace_back(b.id);
  return out;
}

std::string render(std::string_view tmpl, const Vars& vars) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string_view name = tmpl.substr(open + 2, close - open - 2);
    if (auto it = vars.find(name); it != vars.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

}  // namespace metacot::prompts
