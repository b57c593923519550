#include "metacot/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "third_party/toml.hpp"

#include "metacot/text.hpp"
#include "metacot/version.hpp"

namespace metacot {

std::string_view version() { return METACOT_VERSION; }

namespace {

class Reader {
 public:
  Reader(const toml::table& t, std::string path, const std::string& source)
      : t_(t), path_(std::move(path)), source_(source) {}

  ~Reader() = default;

  void str(const char* key, std::string& out) {
    seen_.insert(key);
    if (auto n = t_.get(key)) {
      auto v = n->value<std::string>();
      if (!v || !n->is_string()) fail(key, "expected a string");
      out = *v;
    }
  }
  void num(const char* key, double& out) {
    seen_.insert(key);
    if (auto n = t_.get(key)) {
      if (!n->is_number()) fail(key, "expected a number");
      out = *n->value<double>();
    }
  }
  template <typename Int>
  void integer(const char* key, Int& out) {
    seen_.insert(key);
    if (auto n = t_.get(key)) {
      if (!n->is_integer()) fail(key, "expected an integer");
      const auto v = *n->value<std::int64_t>();
      if (v < 0) fail(key, "must not be negative");
      out = static_cast<Int>(v);
    }
  }
  const toml::table* sub(const char* key) {
    seen_.insert(key);
    if (auto n = t_.get(key)) {
      if (!n->is_table()) fail(key, "expected a table");
      return n->as_table();
    }
    return nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : t_) {
      if (!seen_.contains(std::string(k.str()))) fail(std::string(k.str()), "unknown key");
    }
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw FormatError(source_, 0, path_ + (path_.empty() ? "" : ".") + key + ": " + what);
  }

  const toml::table& t_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> seen_;
};

std::string trimmed(const std::string& s) { return std::string(text::trim(s)); }

}  // namespace

ToolkitConfig ToolkitConfig::parse(std::string_view toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    throw FormatError(source, e.source().begin.line, std::string(e.description()));
  }
  ToolkitConfig c;
  Reader r(root, "", source);
  if (const auto* profiles = r.sub("profiles")) {
    for (const auto& [name, node] : *profiles) {
      if (!node.is_table()) throw FormatError(source, 0, "profiles." + std::string(name.str()) + ": expected a table");
      ProfileSettings p;
      Reader pr(*node.as_table(), "profiles." + std::string(name.str()), source);
      pr.str("endpoint", p.endpoint);
      pr.str("model", p.model);
      pr.str("credential_env", p.credential_env);
      pr.num("timeout_s", p.timeout_s);
      pr.integer("max_retries", p.max_retries);
      pr.num("temperature", p.temperature);
      pr.integer("max_in_flight", p.max_in_flight);
      pr.finish();
      c.profiles[std::string(name.str())] = p;
    }
  }
  if (const auto* t = r.sub("pipeline")) {
    Reader pr(*t, "pipeline", source);
    auto& p = c.pipeline;
    pr.str("task_typer", p.task_typer);
    pr.str("consistency_checker", p.consistency_checker);
    pr.str("cot_generator", p.cot_generator);
    pr.str("alignment_evaluator", p.alignment_evaluator);
    pr.integer("batch_size", p.batch_size);
    pr.integer("parallelism", p.parallelism);
    pr.num("alignment_threshold", p.alignment_threshold);
    pr.integer("cot_reprompts", p.cot_reprompts);
    pr.str("cot_mode", p.cot_mode);
    if (const auto* prompts = pr.sub("prompts")) {
      Reader pp(*prompts, "pipeline.prompts", source);
      pp.str("task_typing", p.task_typing_prompt);
      pp.str("consistency_check", p.consistency_prompt);
      pp.str("cot_generation", p.cot_prompt);
      pp.str("alignment_eval", p.alignment_prompt);
      pp.finish();
    }
    pr.finish();
  }
  if (const auto* t = r.sub("calibration")) {
    Reader cr(*t, "calibration", source);
    cr.str("judge", c.calibration.judge);
    cr.str("prompt_version", c.calibration.prompt_version);
    cr.num("min_r", c.calibration.min_r);
    cr.num("max_mae", c.calibration.max_mae);
    cr.integer("parallelism", c.calibration.parallelism);
    cr.finish();
  }
  if (const auto* t = r.sub("bench")) {
    Reader br(*t, "bench", source);
    br.str("judge", c.bench.judge);
    br.integer("parallelism", c.bench.parallelism);
    br.finish();
  }
  if (const auto* t = r.sub("store")) {
    Reader sr(*t, "store", source);
    sr.str("dataset_dir", c.store.dataset_dir);
    sr.str("samples", c.store.samples);
    sr.str("score_log", c.store.score_log);
    sr.finish();
  }
  if (const auto* t = r.sub("serve")) {
    Reader sr(*t, "serve", source);
    sr.str("bind", c.serve.bind);
    sr.integer("port", c.serve.port);
    sr.str("static_dir", c.serve.static_dir);
    sr.finish();
  }
  r.finish();
  c.normalize();
  c.check();
  return c;
}

ToolkitConfig ToolkitConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void ToolkitConfig::normalize() {
  for (auto& [name, p] : profiles) {
    p.endpoint = trimmed(p.endpoint);
    p.model = trimmed(p.model);
    p.credential_env = trimmed(p.credential_env);
  }
  for (auto* s : {&pipeline.task_typer, &pipeline.consistency_checker, &pipeline.cot_generator,
                  &pipeline.alignment_evaluator, &pipeline.task_typing_prompt,
                  &pipeline.consistency_prompt, &pipeline.cot_prompt, &pipeline.alignment_prompt,
                  &calibration.judge, &calibration.prompt_version, &bench.judge,
                  &store.dataset_dir, &store.samples, &store.score_log, &serve.bind,
                  &serve.static_dir}) {
    *s = trimmed(*s);
  }
  pipeline.cot_mode = text::to_lower(trimmed(pipeline.cot_mode));
  if (pipeline.cot_mode == "meta_task" || pipeline.cot_mode == "metatask") pipeline.cot_mode = "meta-task";
}

void ToolkitConfig::check() const {
  auto fail = [](const std::string& what) { throw FormatError("config: " + what); };
  for (const auto& [name, p] : profiles) {
    if (!(p.timeout_s > 0.0)) fail("profile '" + name + "': timeout_s must be > 0");
    if (p.temperature < 0.0) fail("profile '" + name + "': temperature must be >= 0");
    if (p.max_in_flight < 1) fail("profile '" + name + "': max_in_flight must be >= 1");
  }
  const std::pair<const char*, const std::string*> refs[] = {
      {"pipeline.task_typer", &pipeline.task_typer},
      {"pipeline.consistency_checker", &pipeline.consistency_checker},
      {"pipeline.cot_generator", &pipeline.cot_generator},
      {"pipeline.alignment_evaluator", &pipeline.alignment_evaluator},
      {"calibration.judge", &calibration.judge},
      {"bench.judge", &bench.judge},
  };
  for (const auto& [key, name] : refs) {
    if (!name->empty() && !profiles.contains(*name)) {
      fail(std::string(key) + " names unknown profile '" + *name + "'");
    }
  }
  if (pipeline.batch_size < 1) fail("pipeline.batch_size must be >= 1");
  if (pipeline.parallelism < 1) fail("pipeline.parallelism must be >= 1");
  if (!(pipeline.alignment_threshold >= 0.0 && pipeline.alignment_threshold <= 10.0)) {
    fail("pipeline.alignment_threshold must lie in [0, 10]");
  }
  if (pipeline.cot_mode != "meta-task" && pipeline.cot_mode != "task") {
    fail("pipeline.cot_mode must be \"meta-task\" or \"task\"");
  }
  if (!(calibration.min_r >= -1.0 && calibration.min_r <= 1.0)) fail("calibration.min_r must lie in [-1, 1]");
  if (!(calibration.max_mae >= 0.0)) fail("calibration.max_mae must be >= 0");
  if (calibration.parallelism < 1 || bench.parallelism < 1) fail("parallelism must be >= 1");
  if (serve.port < 0 || serve.port > 65535) fail("serve.port out of range");
  std::set<std::string> paths;
  for (const auto* p : {&store.dataset_dir, &store.samples, &store.score_log, &serve.static_dir}) {
    if (p->empty()) continue;
    const auto norm = std::filesystem::path(*p).lexically_normal().string();
    if (!paths.insert(norm).second) fail("store/serve paths must be distinct ('" + *p + "')");
  }
}

std::string ToolkitConfig::dump() const {
  toml::table root;
  toml::table profs;
  for (const auto& [name, p] : profiles) {
    profs.insert(name, toml::table{{"endpoint", p.endpoint},
                                   {"model", p.model},
                                   {"credential_env", p.credential_env},
                                   {"timeout_s", p.timeout_s},
                                   {"max_retries", p.max_retries},
                                   {"temperature", p.temperature},
                                   {"max_in_flight", p.max_in_flight}});
  }
  root.insert("profiles", std::move(profs));
  toml::table pipe{{"task_typer", pipeline.task_typer},
                   {"consistency_checker", pipeline.consistency_checker},
                   {"cot_generator", pipeline.cot_generator},
                   {"alignment_evaluator", pipeline.alignment_evaluator},
                   {"batch_size", static_cast<std::int64_t>(pipeline.batch_size)},
                   {"parallelism", static_cast<std::int64_t>(pipeline.parallelism)},
                   {"alignment_threshold", pipeline.alignment_threshold},
                   {"cot_reprompts", pipeline.cot_reprompts},
                   {"cot_mode", pipeline.cot_mode}};
  pipe.insert("prompts", toml::table{{"task_typing", pipeline.task_typing_prompt},
                                     {"consistency_check", pipeline.consistency_prompt},
                                     {"cot_generation", pipeline.cot_prompt},
                                     {"alignment_eval", pipeline.alignment_prompt}});
  root.insert("pipeline", std::move(pipe));
  root.insert("calibration",
              toml::table{{"judge", calibration.judge},
                          {"prompt_version", calibration.prompt_version},
                          {"min_r", calibration.min_r},
                          {"max_mae", calibration.max_mae},
                          {"parallelism", static_cast<std::int64_t>(calibration.parallelism)}});
  root.insert("bench", toml::table{{"judge", bench.judge},
                                   {"parallelism", static_cast<std::int64_t>(bench.parallelism)}});
  root.insert("store", toml::table{{"dataset_dir", store.dataset_dir},
                                   {"samples", store.samples},
                                   {"score_log", store.score_log}});
  root.insert("serve", toml::table{{"bind", serve.bind},
                                   {"port", serve.port},
                                   {"static_dir", serve.static_dir}});
  std::ostringstream os;
  os << root << '\n';
  return os.str();
}

gateway::GatewayProfile ToolkitConfig::profile(const std::string& name, const std::string& role,
                                               std::shared_ptr<gateway::Backend> mock) const {
  gateway::GatewayProfile p;
  const auto it = profiles.find(name);
  if (it == profiles.end()) {
    if (!mock) {
      throw PreconditionError(name.empty() ? "no profile configured for " + role
                                           : "unknown profile '" + name + "' for " + role);
    }
    p.name = role;
    p.model = "mock";
  } else {
    const auto& s = it->second;
    p.name = name;
    p.endpoint = s.endpoint;
    p.model = s.model;
    p.credential_env = s.credential_env;
    p.timeout_s = s.timeout_s;
    p.max_retries = s.max_retries;
    p.temperature = s.temperature;
    p.max_in_flight = s.max_in_flight;
  }
  if (mock) {
    p.backend = std::move(mock);
    p.backoff_initial_ms = 0.0;
  }
  return p;
}

pipeline::PipelineConfig ToolkitConfig::pipeline_config(std::shared_ptr<gateway::Backend> mock) const {
  pipeline::PipelineConfig pc;
  pc.task_typer = profile(pipeline.task_typer, "task_typer", mock);
  pc.consistency_checker = profile(pipeline.consistency_checker, "consistency_checker", mock);
  pc.cot_generator = profile(pipeline.cot_generator, "cot_generator", mock);
  pc.alignment_evaluator = profile(pipeline.alignment_evaluator, "alignment_evaluator", mock);
  pc.batch_size = pipeline.batch_size;
  pc.parallelism = pipeline.parallelism;
  pc.task_typing_prompt = pipeline.task_typing_prompt;
  pc.consistency_prompt = pipeline.consistency_prompt;
  pc.cot_prompt = pipeline.cot_prompt;
  pc.alignment_prompt = pipeline.alignment_prompt;
  pc.alignment_threshold = pipeline.alignment_threshold;
  pc.cot_reprompts = pipeline.cot_reprompts;
  pc.cot_mode = pipeline.cot_mode == "task" ? cot::SummaryMode::TaskSummary
                                            : cot::SummaryMode::MetaTaskSummary;
  return pc;
}

}  // namespace metacot
