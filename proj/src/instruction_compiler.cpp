#include "metacot/instruction_compiler.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "metacot/prompts.hpp"
#include "metacot/resources.hpp"
#include "metacot/text.hpp"

namespace metacot::compiler {

namespace {

constexpr std::string_view kEdgePunct = ".,;:!?\"'()[]{}`";

std::string_view strip_edge_punct(std::string_view s) {
  while (!s.empty() && kEdgePunct.find(s.front()) != std::string_view::npos) s.remove_prefix(1);
  while (!s.empty() && kEdgePunct.find(s.back()) != std::string_view::npos) s.remove_suffix(1);
  return s;
}

struct Word {
  std::string norm;
  std::string raw;
};

std::vector<Word> words_of(std::string_view s) {
  std::vector<Word> out;
  std::istringstream in{std::string(s)};
  std::string raw;
  while (in >> raw) {
    std::string norm = text::to_lower(strip_edge_punct(raw));
    if (norm.empty()) continue;
    out.push_back({std::move(norm), raw});
  }
  return out;
}

const std::set<std::string, std::less<>>& editing_verbs() {
  static const std::set<std::string, std::less<>> verbs = {
      "add",      "remove",    "delete",  "erase",     "replace", "change",  "make",
      "turn",     "move",      "put",     "place",     "insert",  "convert", "transform",
      "rotate",   "zoom",      "increase", "decrease", "reduce",  "shift",   "swap",
      "paint",    "recolor",   "apply",   "give",      "set",     "adjust",  "brighten",
      "darken",   "draw",      "write",   "render",    "eliminate", "include", "raise",
      "lower",    "flip",      "crop",    "extend",    "enlarge", "shrink",  "resize",
      "fill",     "cover",     "hide",    "let",       "take",    "get",     "modify",
      "edit",     "substitute", "relocate", "rearrange", "arrange", "double", "color",
      "colour",   "pan",       "tilt",    "show"};
  return verbs;
}

bool is_verb(std::string_view word) {
  return editing_verbs().contains(text::to_lower(strip_edge_punct(word)));
}

bool is_enum_marker(std::string_view w) {
  if (w == "-" || w == "*" || w == "•") return true;
  std::string_view s = w;
  if (!s.empty() && s.front() == '(') s.remove_prefix(1);
  if (s.size() < 2 || (s.back() != '.' && s.back() != ')')) return false;
  s.remove_suffix(1);
  if (s.empty() || s.size() > 2) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Nesting state for quotes and parentheses, advanced one word at a time.
struct Nesting {
  int parens = 0;
  bool in_quote = false;
  bool in_curly = false;

  bool top() const { return parens == 0 && !in_quote && !in_curly; }
  void feed(std::string_view w) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const char c = w[i];
      if (c == '"') in_quote = !in_quote;
      if (c == '(' && !in_quote) ++parens;
      if (c == ')' && !in_quote && parens > 0) --parens;
      if (w.substr(i).starts_with("“")) in_curly = true;
      if (w.substr(i).starts_with("”")) in_curly = false;
    }
  }
};

std::vector<std::string> hard_chunks(std::string_view s) {
  std::vector<std::string> chunks;
  std::string current;
  Nesting nest;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (nest.top() && (c == ';' || c == '\n')) {
      chunks.push_back(std::move(current));
      current.clear();
      continue;
    }
    nest.feed(std::string_view(&s[i], 1));
    if (s.substr(i).starts_with("“")) nest.in_curly = true;
    if (s.substr(i).starts_with("”")) nest.in_curly = false;
    current += c;
  }
  chunks.push_back(std::move(current));
  return chunks;
}

const std::array<std::pair<std::string_view, int>, 21>& number_words() {
  static const std::array<std::pair<std::string_view, int>, 21> words = {{
      {"zero", 0},    {"one", 1},      {"two", 2},       {"three", 3},    {"four", 4},
      {"five", 5},    {"six", 6},      {"seven", 7},     {"eight", 8},    {"nine", 9},
      {"ten", 10},    {"eleven", 11},  {"twelve", 12},   {"thirteen", 13}, {"fourteen", 14},
      {"fifteen", 15}, {"sixteen", 16}, {"seventeen", 17}, {"eighteen", 18}, {"nineteen", 19},
      {"twenty", 20},
  }};
  return words;
}

std::optional<long long> number_of(std::string_view w) {
  if (auto v = text::parse_int(w)) return v;
  for (const auto& [word, value] : number_words()) {
    if (w == word) return value;
  }
  return std::nullopt;
}

struct Hint {
  std::string_view word;
  MetaTask meta;
};

constexpr std::array<Hint, 46> kVerbHints = {{
    {"add", MetaTask::Addition},        {"insert", MetaTask::Addition},
    {"put", MetaTask::Addition},        {"place", MetaTask::Addition},
    {"include", MetaTask::Addition},    {"draw", MetaTask::Addition},
    {"attach", MetaTask::Addition},     {"write", MetaTask::Addition},
    {"remove", MetaTask::Deletion},     {"delete", MetaTask::Deletion},
    {"erase", MetaTask::Deletion},      {"eliminate", MetaTask::Deletion},
    {"clear", MetaTask::Deletion},      {"hide", MetaTask::Deletion},
    {"without", MetaTask::Deletion},    {"rid", MetaTask::Deletion},
    {"replace", MetaTask::Replacement}, {"change", MetaTask::Replacement},
    {"turn", MetaTask::Replacement},    {"make", MetaTask::Replacement},
    {"convert", MetaTask::Replacement}, {"transform", MetaTask::Replacement},
    {"swap", MetaTask::Replacement},    {"recolor", MetaTask::Replacement},
    {"paint", MetaTask::Replacement},   {"render", MetaTask::Replacement},
    {"adjust", MetaTask::Replacement},  {"modify", MetaTask::Replacement},
    {"substitute", MetaTask::Replacement}, {"edit", MetaTask::Replacement},
    {"zoom", MetaTask::CameraMotion},   {"pan", MetaTask::CameraMotion},
    {"tilt", MetaTask::CameraMotion},   {"camera", MetaTask::CameraMotion},
    {"viewpoint", MetaTask::CameraMotion}, {"view", MetaTask::CameraMotion},
    {"angle", MetaTask::CameraMotion},  {"orbit", MetaTask::CameraMotion},
    {"move", MetaTask::PositionChange}, {"shift", MetaTask::PositionChange},
    {"relocate", MetaTask::PositionChange}, {"drag", MetaTask::PositionChange},
    {"rearrange", MetaTask::PositionChange}, {"arrange", MetaTask::PositionChange},
    {"behind", MetaTask::PositionChange}, {"beside", MetaTask::PositionChange},
}};

constexpr std::array<Hint, 12> kQuantityHints = {{
    {"increase", MetaTask::Addition}, {"more", MetaTask::Addition},
    {"add", MetaTask::Addition},      {"double", MetaTask::Addition},
    {"multiply", MetaTask::Addition}, {"extra", MetaTask::Addition},
    {"decrease", MetaTask::Deletion}, {"fewer", MetaTask::Deletion},
    {"reduce", MetaTask::Deletion},   {"remove", MetaTask::Deletion},
    {"less", MetaTask::Deletion},     {"halve", MetaTask::Deletion},
}};

template <std::size_t N>
MetaTaskSet hinted(std::string_view instruction, const std::array<Hint, N>& hints) {
  MetaTaskSet out;
  for (const auto& w : words_of(instruction)) {
    for (const auto& h : hints) {
      if (w.norm == h.word) out.insert(h.meta);
    }
  }
  return out;
}

MetaTaskSet intersect(MetaTaskSet a, MetaTaskSet b) {
  MetaTaskSet out;
  for (MetaTask m : a.members()) {
    if (b.contains(m)) out.insert(m);
  }
  return out;
}

bool is_quantity(TaskType t) {
  return t == TaskType::QuantityChange || t == TaskType::SpecifiedQuantityChange;
}

MetaTaskSet choose_meta_tasks(TaskType task, MetaTaskSet admissible, std::string_view instruction) {
  if (admissible.size() == 1) return admissible;
  if (is_quantity(task)) {
    if (auto dir = quantity_direction(instruction); dir && admissible.contains(*dir)) {
      return MetaTaskSet{*dir};
    }
    const MetaTaskSet q = intersect(hinted(instruction, kQuantityHints), admissible);
    if (!q.empty()) return q;
    // Direction unknown without seeing the image: both are candidates.
    return intersect(MetaTaskSet{MetaTask::Addition, MetaTask::Deletion}, admissible);
  }
  const MetaTaskSet h = intersect(hinted(instruction, kVerbHints), admissible);
  if (!h.empty()) return h;
  if (admissible.contains(MetaTask::Replacement)) return MetaTaskSet{MetaTask::Replacement};
  return MetaTaskSet{admissible.members().front()};
}

std::string clean_target(std::string_view capture) {
  static const std::set<std::string, std::less<>> determiners = {
      "the", "a", "an", "some", "all", "any", "this", "that", "these", "those", "its", "their"};
  auto words = text::split_trimmed(text::normalize_space(strip_edge_punct(capture)), ' ');
  std::size_t first = 0;
  while (first + 1 < words.size() && determiners.contains(text::to_lower(words[first]))) ++first;
  std::vector<std::string> kept(words.begin() + static_cast<std::ptrdiff_t>(first), words.end());
  return std::string(strip_edge_punct(text::join(kept, " ")));
}

const TaskRegistry& registry_of(const ClassifyOptions& o) {
  return o.registry ? *o.registry : TaskRegistry::bundled();
}

Triplet triplet_from_match(const LexiconMatch& m, const TaskRegistry& registry) {
  const RegistryEntry& entry = registry.at(m.rule->task);
  Triplet t;
  t.task = m.rule->task;
  std::string target;
  if (m.rule->target_slot >= 0) target = clean_target(m.captures[static_cast<std::size_t>(m.rule->target_slot)]);
  if (target.empty()) target = entry.default_target();
  if (target.empty()) target = "scene";
  t.targets.push_back(std::move(target));
  t.abilities = entry.abilities;
  return t;
}

void append_unique(std::vector<std::string>& into, const std::vector<std::string>& from) {
  for (const auto& s : from) {
    const bool present = std::any_of(into.begin(), into.end(),
                                     [&](const std::string& x) { return text::iequals(x, s); });
    if (!present) into.push_back(s);
  }
}

void check_program(const CompilationResult& r, const TaskRegistry& registry) {
  const auto verdict = validate_program(r.program, r.triplet.task, registry);
  if (!verdict.ok()) {
    throw Error("internal: compiled program does not validate: " + verdict.violations[0].message);
  }
}

std::optional<nlohmann::json> extract_json_object(const std::string& reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  auto j = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_array()) throw std::invalid_argument(std::string(key) + " is not a list");
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw std::invalid_argument(std::string(key) + " has a non-string item");
    std::string s(text::trim(v.get<std::string>()));
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

CompilationResult classify_with_gateway(std::string_view instruction, const Lexicon& lexicon,
                                        const ClassifyOptions& options) {
  const TaskRegistry& registry = registry_of(options);
  const auto request = task_typing_request(instruction, registry, options.prompt_id);
  gateway::ChatExchange exchange = gateway::complete(*options.gateway, request);
  auto fail = [&](const std::string& why) -> GatewayFormatError {
    return GatewayFormatError("task-typing reply unusable: " + why, exchange);
  };
  const auto j = extract_json_object(exchange.response);
  if (!j) throw fail("no JSON object");
  CompilationResult r;
  r.source = Source::Gateway;
  try {
    const auto task = parse_task_type(j->value("task", std::string()));
    if (!task) throw fail("unknown task '" + j->value("task", std::string()) + "'");
    r.triplet.task = *task;
    r.triplet.targets = string_list(*j, "targets");
    if (r.triplet.targets.empty()) throw fail("no targets");
    r.triplet.abilities = registry.at(*task).abilities;
    append_unique(r.triplet.abilities, string_list(*j, "abilities"));
    r.confidence = 0.5;
    if (j->contains("confidence")) {
      if (!(*j)["confidence"].is_number()) throw fail("confidence is not a number");
      r.confidence = (*j)["confidence"].get<double>();
      if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) throw fail("confidence outside [0, 1]");
    }
    if (j->contains("steps") && (*j)["steps"].is_array() && !(*j)["steps"].empty()) {
      for (const auto& s : (*j)["steps"]) {
        if (!s.is_object()) throw fail("step is not an object");
        const auto m = parse_meta_task(s.value("meta_task", std::string()));
        if (!m) throw fail("unknown meta-task '" + s.value("meta_task", std::string()) + "'");
        std::string target(text::trim(s.value("target", std::string())));
        if (target.empty()) throw fail("step without target");
        r.program.steps.push_back({*m, std::move(target), s.value("detail", std::string())});
      }
      const auto verdict = validate_program(r.program, r.triplet.task, registry);
      if (!verdict.ok()) throw fail(verdict.violations[0].message);
    } else {
      r.program = compile_to_program(r.triplet, instruction, lexicon, registry);
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }
  r.exchange = std::move(exchange);
  check_program(r, registry);
  return r;
}

}  // namespace

std::size_t LexiconRule::wildcard_count() const {
  return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), "*"));
}

std::size_t LexiconRule::literal_length() const {
  std::size_t n = 0;
  for (const auto& t : tokens) {
    if (t != "*") n += t.size();
  }
  return n;
}

Lexicon Lexicon::parse(std::string_view text_in, const std::string& source) {
  Lexicon lex;
  std::set<int> priorities;
  const auto lines = text::split_lines(text_in);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = text::trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = text::split_trimmed(line, '|');
    if (fields.size() != 4) throw FormatError(source, i + 1, "expected 4 '|'-separated fields");
    LexiconRule rule;
    const auto prio = text::parse_int(fields[0]);
    if (!prio) throw FormatError(source, i + 1, "bad priority '" + fields[0] + "'");
    rule.priority = static_cast<int>(*prio);
    if (!priorities.insert(rule.priority).second) {
      throw FormatError(source, i + 1, "duplicate priority " + fields[0]);
    }
    rule.pattern = fields[1];
    for (const auto& raw : text::split_trimmed(text::normalize_space(rule.pattern), ' ')) {
      if (raw == "*") {
        rule.tokens.emplace_back("*");
      } else {
        std::string norm = text::to_lower(strip_edge_punct(raw));
        if (!norm.empty()) rule.tokens.push_back(std::move(norm));
      }
    }
    if (rule.tokens.empty()) throw FormatError(source, i + 1, "empty pattern");
    const auto task = parse_task_type(fields[2]);
    if (!task) throw FormatError(source, i + 1, "unknown task '" + fields[2] + "'");
    rule.task = *task;
    const auto slot = text::parse_int(fields[3]);
    if (!slot || *slot < -1 || *slot >= static_cast<long long>(rule.wildcard_count())) {
      throw FormatError(source, i + 1, "target slot out of range");
    }
    rule.target_slot = static_cast<int>(*slot);
    lex.rules_.push_back(std::move(rule));
  }
  std::stable_sort(lex.rules_.begin(), lex.rules_.end(), [](const auto& a, const auto& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.literal_length() > b.literal_length();
  });
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const Lexicon& Lexicon::bundled() {
  static const Lexicon lex = parse(resources::bundled_lexicon(), "<bundled lexicon>");
  return lex;
}

namespace {

bool match_at(const LexiconRule& rule, const std::vector<Word>& words, std::size_t pi,
              std::size_t wi, std::vector<std::pair<std::size_t, std::size_t>>& spans) {
  if (pi == rule.tokens.size()) return true;
  const std::string& tok = rule.tokens[pi];
  if (tok != "*") {
    if (wi >= words.size() || words[wi].norm != tok) return false;
    return match_at(rule, words, pi + 1, wi + 1, spans);
  }
  if (wi >= words.size()) return false;
  if (pi + 1 == rule.tokens.size()) {
    spans.emplace_back(wi, words.size());
    return true;
  }
  for (std::size_t end = wi + 1; end < words.size(); ++end) {
    spans.emplace_back(wi, end);
    if (match_at(rule, words, pi + 1, end, spans)) return true;
    spans.pop_back();
  }
  return false;
}

}  // namespace

std::optional<LexiconMatch> Lexicon::match(std::string_view instruction) const {
  const auto words = words_of(instruction);
  for (const auto& rule : rules_) {
    for (std::size_t start = 0; start < words.size(); ++start) {
      std::vector<std::pair<std::size_t, std::size_t>> spans;
      if (!match_at(rule, words, 0, start, spans)) continue;
      LexiconMatch m;
      m.rule = &rule;
      for (const auto& [b, e] : spans) {
        std::vector<std::string> raw;
        for (std::size_t k = b; k < e; ++k) raw.push_back(words[k].raw);
        m.captures.push_back(text::join(raw, " "));
      }
      return m;
    }
  }
  return std::nullopt;
}

std::string_view to_string(Source s) { return s == Source::Lexicon ? "lexicon" : "gateway"; }

std::optional<MetaTask> quantity_direction(std::string_view instruction) {
  const auto words = words_of(instruction);
  for (std::size_t i = 0; i + 3 < words.size(); ++i) {
    if (words[i].norm != "from" || words[i + 2].norm != "to") continue;
    const auto from = number_of(words[i + 1].norm);
    const auto to = number_of(words[i + 3].norm);
    if (!from || !to || *from == *to) continue;
    return *to > *from ? MetaTask::Addition : MetaTask::Deletion;
  }
  return std::nullopt;
}

std::vector<std::string> split_multi_instruction(std::string_view instruction) {
  std::vector<std::string> parts;
  for (const auto& chunk : hard_chunks(instruction)) {
    std::vector<std::string> words = text::split_trimmed(text::normalize_space(chunk), ' ');
    if (words.size() == 1 && words[0].empty()) words.clear();
    std::vector<std::string> current;
    auto flush = [&] {
      if (!current.empty()) parts.push_back(text::join(current, " "));
      current.clear();
    };
    auto skip_conjunctions = [&](std::size_t j) {
      while (j < words.size() && (text::iequals(words[j], "and") || text::iequals(words[j], "then") ||
                                  text::iequals(words[j], "also"))) {
        ++j;
      }
      return j;
    };
    Nesting nest;
    std::size_t i = 0;
    while (i < words.size()) {
      const std::string& w = words[i];
      const bool top_before = nest.top();
      if (top_before && is_enum_marker(w) &&
          (current.empty() || (i + 1 < words.size() && is_verb(words[i + 1])))) {
        flush();
        ++i;
        continue;
      }
      if (top_before && !current.empty() &&
          (text::iequals(w, "and") || text::iequals(w, "then"))) {
        const std::size_t j = skip_conjunctions(i + 1);
        if (j < words.size() && is_verb(words[j])) {
          flush();
          i = j;
          continue;
        }
      }
      nest.feed(w);
      if (nest.top() && w.size() > 1 && w.back() == ',') {
        const std::size_t j = skip_conjunctions(i + 1);
        if (j < words.size() && is_verb(words[j])) {
          current.push_back(w.substr(0, w.size() - 1));
          flush();
          i = j;
          continue;
        }
      }
      current.push_back(w);
      ++i;
    }
    flush();
  }
  return parts;
}

MetaTaskProgram compile_to_program(const Triplet& triplet, std::string_view instruction,
                                   const Lexicon& lexicon, const TaskRegistry& registry) {
  triplet.check();
  const RegistryEntry& entry = registry.at(triplet.task);
  const std::string inst(text::trim(instruction));
  MetaTaskProgram program;

  if (triplet.task == TaskType::MultiInstructionEditing && !inst.empty()) {
    const auto parts = split_multi_instruction(inst);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const auto m = lexicon.match(parts[i]);
      if (m && m->rule->task != TaskType::MultiInstructionEditing) {
        const Triplet sub = triplet_from_match(*m, registry);
        const auto sub_program = compile_to_program(sub, parts[i], lexicon, registry);
        program.steps.insert(program.steps.end(), sub_program.steps.begin(),
                             sub_program.steps.end());
        continue;
      }
      const std::string& target = triplet.targets[std::min(i, triplet.targets.size() - 1)];
      for (MetaTask mt : choose_meta_tasks(triplet.task, entry.admissible, parts[i]).members()) {
        program.steps.push_back({mt, target, parts[i]});
      }
    }
    if (!program.steps.empty()) return program;
  }

  const MetaTaskSet metas = choose_meta_tasks(triplet.task, entry.admissible, inst);
  for (const auto& target : triplet.targets) {
    for (MetaTask m : metas.members()) {
      program.steps.push_back(
          {m, target, inst.empty() ? std::string(display_name(m)) + " " + target : inst});
    }
  }
  return program;
}

gateway::ChatRequest task_typing_request(std::string_view instruction,
                                         const TaskRegistry& registry,
                                         const std::string& prompt_id) {
  const auto tmpl = prompts::get(prompt_id);
  const prompts::Vars vars = {{"registry", registry.dump()},
                              {"instruction", std::string(text::trim(instruction))}};
  gateway::ChatRequest req;
  if (!tmpl.system.empty()) req.messages.push_back({"system", prompts::render(tmpl.system, vars), {}});
  req.messages.push_back({"user", prompts::render(tmpl.user, vars), {}});
  return req;
}

CompilationResult classify(std::string_view instruction, const Lexicon& lexicon,
                           const ClassifyOptions& options) {
  const std::string inst(text::trim(instruction));
  if (inst.empty()) throw PreconditionError("instruction is empty");
  const TaskRegistry& registry = registry_of(options);

  const auto parts = split_multi_instruction(inst);
  if (parts.size() >= 2) {
    std::vector<Triplet> subs;
    for (const auto& part : parts) {
      const auto m = lexicon.match(part);
      if (!m) break;
      subs.push_back(triplet_from_match(*m, registry));
    }
    if (subs.size() == parts.size()) {
      CompilationResult r;
      r.triplet.task = TaskType::MultiInstructionEditing;
      r.triplet.abilities = registry.at(TaskType::MultiInstructionEditing).abilities;
      for (const auto& s : subs) {
        append_unique(r.triplet.targets, s.targets);
        append_unique(r.triplet.abilities, s.abilities);
      }
      r.sub_instructions = parts;
      r.program = compile_to_program(r.triplet, inst, lexicon, registry);
      check_program(r, registry);
      return r;
    }
  } else if (const auto m = lexicon.match(inst)) {
    CompilationResult r;
    r.triplet = triplet_from_match(*m, registry);
    const bool defer = is_quantity(r.triplet.task) && !quantity_direction(inst) && options.gateway;
    if (!defer) {
      r.program = compile_to_program(r.triplet, inst, lexicon, registry);
      check_program(r, registry);
      return r;
    }
  }

  if (options.gateway) return classify_with_gateway(inst, lexicon, options);
  throw UnclassifiableError("no lexicon rule matches \"" + inst + "\" and no gateway is configured");
}

}  // namespace metacot::compiler
