#include "metacot/data_pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include "metacot/consistency_reward.hpp"
#include "metacot/digest.hpp"
#include "metacot/prompts.hpp"
#include "metacot/text.hpp"

namespace metacot::pipeline {

namespace {

using State = StageStatus::State;

constexpr std::array<std::string_view, 4> kStageNames = {"task_typing", "consistency_check",
                                                         "cot_generation", "alignment_eval"};
constexpr std::array<std::string_view, 8> kReasonNames = {
    "EMPTY_INSTRUCTION", "UNCLASSIFIABLE", "GATEWAY",         "TYPE_MISMATCH",
    "JUDGE_FORMAT",      "COT_UNPARSEABLE", "COT_INVALID",    "MISALIGNED"};

const TaskRegistry& registry_of(const PipelineConfig& c) {
  return c.registry ? *c.registry : TaskRegistry::bundled();
}

const compiler::Lexicon& lexicon_of(const PipelineConfig& c) {
  return c.lexicon ? *c.lexicon : compiler::Lexicon::bundled();
}

void require_ready(const SampleRecord& r, Stage s) {
  const auto idx = static_cast<std::size_t>(s);
  if (r.stages[idx].state != State::Pending) {
    throw PreconditionError("record '" + r.id + "': stage " + std::string(to_string(s)) +
                            " already ran");
  }
  if (idx > 0 && r.stages[idx - 1].state != State::Passed) {
    throw PreconditionError("record '" + r.id + "': stage " + std::string(to_string(s)) +
                            " requires " + std::string(to_string(kStages[idx - 1])) + " to pass");
  }
}

// Sends one request for a stage. On gateway failure marks the stage Failed
// and returns nullopt. The request digest always lands in provenance.
std::optional<std::string> send(SampleRecord& r, Stage s, const gateway::GatewayProfile& profile,
                                const gateway::ChatRequest& request) {
  r.provenance.push_back(request.digest());
  try {
    return gateway::complete(profile, request).response;
  } catch (const gateway::GatewayError&) {
    r.status(s) = StageStatus::failed(ReasonCode::Gateway);
    return std::nullopt;
  }
}

gateway::ChatRequest build_request(const prompts::Template& tmpl, const prompts::Vars& vars,
                                   std::vector<gateway::ImageRef> images = {}) {
  gateway::ChatRequest req;
  if (!tmpl.system.empty()) req.messages.push_back({"system", prompts::render(tmpl.system, vars), {}});
  req.messages.push_back({"user", prompts::render(tmpl.user, vars), std::move(images)});
  return req;
}

std::string task_definition(const RegistryEntry& e) {
  return "meta-tasks " + to_string(e.admissible) + "; target: " + e.canonical_target +
         "; understanding abilities: " + text::join(e.abilities, ", ");
}

std::optional<bool> parse_verdict(std::string_view reply) {
  std::size_t i = 0;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
  while (i < reply.size() && !alpha(reply[i])) ++i;
  std::size_t j = i;
  while (j < reply.size() && alpha(reply[j])) ++j;
  const std::string word = text::to_lower(reply.substr(i, j - i));
  if (word == "yes") return true;
  if (word == "no") return false;
  return std::nullopt;
}

std::string admissible_tokens(MetaTaskSet set) {
  std::vector<std::string> names;
  for (MetaTask m : set.members()) names.emplace_back(to_string(m));
  return text::join(names, ", ");
}

nlohmann::json profile_json(const std::optional<gateway::GatewayProfile>& p) {
  if (!p) return nullptr;
  return {{"name", p->name},
          {"endpoint", p->endpoint},
          {"model", p->model},
          {"temperature", p->temperature},
          {"max_retries", p->max_retries},
          {"mock", p->is_mock()}};
}

}  // namespace

std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

std::optional<Stage> parse_stage(std::string_view s) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == s) return kStages[i];
  }
  return std::nullopt;
}

std::string_view to_string(ReasonCode r) { return kReasonNames[static_cast<std::size_t>(r)]; }

std::optional<ReasonCode> parse_reason(std::string_view s) {
  for (std::size_t i = 0; i < kReasonNames.size(); ++i) {
    if (kReasonNames[i] == s) return kReasonCodes[i];
  }
  return std::nullopt;
}

bool SampleRecord::passed_all() const {
  return std::all_of(stages.begin(), stages.end(),
                     [](const StageStatus& s) { return s.state == State::Passed; });
}

std::optional<ReasonCode> SampleRecord::failure() const {
  for (const auto& s : stages) {
    if (s.state == State::Failed) return s.reason;
  }
  return std::nullopt;
}

std::vector<std::string> SampleRecord::invariant_violations() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const std::string name(to_string(kStages[i]));
    if (s.state == State::Failed && !s.reason) out.push_back(name + " failed without a reason");
    if (s.state != State::Failed && s.reason) out.push_back(name + " carries a reason but did not fail");
    if (s.state != State::Pending && i > 0 && stages[i - 1].state != State::Passed) {
      out.push_back(name + " ran before " + std::string(to_string(kStages[i - 1])) + " passed");
    }
  }
  const bool typed = status(Stage::TaskTyping).state == State::Passed;
  if (typed != task_type.has_value()) out.emplace_back("task_type presence disagrees with task_typing");
  const bool generated = status(Stage::CotGeneration).state == State::Passed;
  if (generated != cot.has_value()) out.emplace_back("cot presence disagrees with cot_generation");
  return out;
}

void PipelineConfig::check() const {
  const std::array<std::pair<const char*, bool>, 4> roles = {{
      {"task_typer", task_typer.has_value()},
      {"consistency_checker", consistency_checker.has_value()},
      {"cot_generator", cot_generator.has_value()},
      {"alignment_evaluator", alignment_evaluator.has_value()},
  }};
  for (const auto& [role, bound] : roles) {
    if (!bound) throw PreconditionError(std::string("pipeline role '") + role + "' is not bound");
  }
  for (const auto* p : {&*task_typer, &*consistency_checker, &*cot_generator, &*alignment_evaluator}) {
    p->check();
  }
  if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
  if (parallelism < 1) throw PreconditionError("parallelism must be >= 1");
  if (!(alignment_threshold >= 0.0 && alignment_threshold <= 10.0)) {
    throw PreconditionError("alignment_threshold must lie in [0, 10]");
  }
  if (cot_reprompts < 0) throw PreconditionError("cot_reprompts must be >= 0");
}

std::string PipelineConfig::digest() const {
  nlohmann::json j = {
      {"task_typer", profile_json(task_typer)},
      {"consistency_checker", profile_json(consistency_checker)},
      {"cot_generator", profile_json(cot_generator)},
      {"alignment_evaluator", profile_json(alignment_evaluator)},
      {"batch_size", batch_size},
      {"prompts", {task_typing_prompt, consistency_prompt, cot_prompt, alignment_prompt}},
      {"alignment_threshold", alignment_threshold},
      {"cot_reprompts", cot_reprompts},
      {"cot_mode", cot_mode == cot::SummaryMode::TaskSummary ? "task" : "meta-task"},
      {"registry", registry_of(*this).dump()},
  };
  return sha256_hex(j.dump());
}

SampleRecord stage_task_typing(SampleRecord r, const PipelineConfig& config) {
  require_ready(r, Stage::TaskTyping);
  auto& status = r.status(Stage::TaskTyping);
  if (text::trim(r.instruction).empty()) {
    status = StageStatus::failed(ReasonCode::EmptyInstruction);
    return r;
  }
  compiler::ClassifyOptions options;
  options.registry = &registry_of(config);
  options.gateway = config.task_typer ? &*config.task_typer : nullptr;
  options.prompt_id = config.task_typing_prompt;
  try {
    auto result = compiler::classify(r.instruction, lexicon_of(config), options);
    if (result.exchange) r.provenance.push_back(result.exchange->content_digest);
    r.task_type = result.triplet.task;
    status = StageStatus::passed();
  } catch (const compiler::UnclassifiableError&) {
    status = StageStatus::failed(ReasonCode::Unclassifiable);
  } catch (const compiler::GatewayFormatError& e) {
    r.provenance.push_back(e.exchange().content_digest);
    status = StageStatus::failed(ReasonCode::Unclassifiable);
  } catch (const gateway::GatewayError&) {
    r.provenance.push_back(
        compiler::task_typing_request(r.instruction, registry_of(config), config.task_typing_prompt)
            .digest());
    status = StageStatus::failed(ReasonCode::Gateway);
  }
  return r;
}

SampleRecord stage_consistency_check(SampleRecord r, const PipelineConfig& config) {
  require_ready(r, Stage::ConsistencyCheck);
  const RegistryEntry& entry = registry_of(config).at(*r.task_type);
  const auto request = build_request(prompts::get(config.consistency_prompt),
                                     {{"instruction", r.instruction},
                                      {"task", std::string(to_string(*r.task_type))},
                                      {"definition", task_definition(entry)}});
  const auto reply = send(r, Stage::ConsistencyCheck, *config.consistency_checker, request);
  if (!reply) return r;
  const auto verdict = parse_verdict(*reply);
  if (!verdict) {
    r.status(Stage::ConsistencyCheck) = StageStatus::failed(ReasonCode::JudgeFormat);
  } else {
    r.status(Stage::ConsistencyCheck) =
        *verdict ? StageStatus::passed() : StageStatus::failed(ReasonCode::TypeMismatch);
  }
  return r;
}

SampleRecord stage_cot_generation(SampleRecord r, const PipelineConfig& config) {
  require_ready(r, Stage::CotGeneration);
  const TaskRegistry& registry = registry_of(config);
  const RegistryEntry& entry = registry.at(*r.task_type);
  auto request = build_request(
      prompts::get(config.cot_prompt),
      {{"instruction", r.instruction},
       {"task", std::string(to_string(*r.task_type))},
       {"mode", config.cot_mode == cot::SummaryMode::TaskSummary ? "task" : "meta-task"},
       {"meta_tasks", admissible_tokens(entry.admissible)}},
      {r.source_image, r.target_image});
  auto& status = r.status(Stage::CotGeneration);
  for (int attempt = 0; attempt <= config.cot_reprompts; ++attempt) {
    const auto reply = send(r, Stage::CotGeneration, *config.cot_generator, request);
    if (!reply) return r;
    auto parsed = cot::parse(*reply);
    if (!parsed.ok()) {
      request.messages.push_back({"assistant", *reply, {}});
      request.messages.push_back({"user",
                                  "The reply could not be parsed:\n" + parsed.describe() +
                                      "\nReply again using exactly the required format.",
                                  {}});
      continue;
    }
    const auto verdict = cot::validate_against_task(*parsed.document, *r.task_type, registry);
    if (!verdict.ok() || !cot::structural_violations(*parsed.document).empty()) {
      status = StageStatus::failed(ReasonCode::CotInvalid);
      return r;
    }
    r.cot = std::move(*parsed.document);
    status = StageStatus::passed();
    return r;
  }
  status = StageStatus::failed(ReasonCode::CotUnparseable);
  return r;
}

SampleRecord stage_alignment_eval(SampleRecord r, const PipelineConfig& config) {
  require_ready(r, Stage::AlignmentEval);
  const auto request = build_request(prompts::get(config.alignment_prompt),
                                     {{"cot", cot::serialize(*r.cot)}},
                                     {r.source_image, r.target_image});
  const auto reply = send(r, Stage::AlignmentEval, *config.alignment_evaluator, request);
  if (!reply) return r;
  auto& status = r.status(Stage::AlignmentEval);
  try {
    const double score = cec::extract_score(*reply, 0.0, 10.0);
    status = score >= config.alignment_threshold ? StageStatus::passed()
                                                 : StageStatus::failed(ReasonCode::Misaligned);
  } catch (const cec::JudgeFormatError&) {
    status = StageStatus::failed(ReasonCode::JudgeFormat);
  }
  return r;
}

SampleRecord process_record(SampleRecord r, const PipelineConfig& config) {
  using StageFn = SampleRecord (*)(SampleRecord, const PipelineConfig&);
  constexpr std::array<StageFn, 4> fns = {stage_task_typing, stage_consistency_check,
                                          stage_cot_generation, stage_alignment_eval};
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const State state = r.stages[i].state;
    if (state == State::Passed) continue;
    if (state == State::Failed) break;
    r = fns[i](std::move(r), config);
    if (r.stages[i].state != State::Passed) break;
  }
  return r;
}

nlohmann::json PipelineSummary::to_json() const {
  nlohmann::json stages = nlohmann::json::object();
  for (Stage s : kStages) {
    const auto p = stage_passed.find(s);
    const auto f = stage_failed.find(s);
    stages[std::string(to_string(s))] = {{"passed", p == stage_passed.end() ? 0 : p->second},
                                         {"failed", f == stage_failed.end() ? 0 : f->second}};
  }
  nlohmann::json reasons = nlohmann::json::object();
  for (const auto& [reason, n] : by_reason) reasons[std::string(to_string(reason))] = n;
  return {{"total", total}, {"passed", passed}, {"stages", stages}, {"reasons", reasons}};
}

PipelineSummary summarize(const std::vector<SampleRecord>& records) {
  PipelineSummary s;
  s.total = records.size();
  for (const auto& r : records) {
    if (r.passed_all()) ++s.passed;
    for (std::size_t i = 0; i < kStages.size(); ++i) {
      if (r.stages[i].state == State::Passed) ++s.stage_passed[kStages[i]];
      if (r.stages[i].state == State::Failed) ++s.stage_failed[kStages[i]];
    }
    if (auto reason = r.failure()) ++s.by_reason[*reason];
  }
  return s;
}

PipelineResult run_pipeline(std::vector<SampleRecord> records, const PipelineConfig& config,
                            const std::optional<std::filesystem::path>& out_dir, bool append) {
  config.check();
  PipelineResult result;
  if (records.empty()) return result;
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw PreconditionError("duplicate record id '" + r.id + "'");
  }

  std::optional<RecordStore> store;
  if (out_dir) store.emplace(*out_dir, append);
  const std::string config_digest = config.digest();

  for (std::size_t begin = 0; begin < records.size(); begin += config.batch_size) {
    const std::size_t end = std::min(records.size(), begin + config.batch_size);
    std::atomic<std::size_t> next{begin};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < end; i = next.fetch_add(1)) {
        try {
          records[i] = process_record(std::move(records[i]), config);
        } catch (...) {
          std::lock_guard lock(fatal_mu);
          if (!fatal) fatal = std::current_exception();
        }
      }
    };
    const std::size_t n_threads = std::min(config.parallelism, end - begin);
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (fatal) std::rethrow_exception(fatal);

    if (store) {
      try {
        for (std::size_t i = begin; i < end; ++i) store->append(records[i]);
      } catch (const std::exception& e) {
        const std::vector<SampleRecord> done(records.begin(),
                                             records.begin() + static_cast<std::ptrdiff_t>(end));
        try {
          store->write_manifest(summarize(done), config_digest, false);
        } catch (const std::exception&) {
        }
        throw StoreError(std::string("record store write failed after ") +
                         std::to_string(store->written()) + " records: " + e.what());
      }
    }
  }

  result.summary = summarize(records);
  if (store) store->write_manifest(result.summary, config_digest, true);
  result.records = std::move(records);
  return result;
}

}  // namespace metacot::pipeline
