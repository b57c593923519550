#include <fstream>
#include <sstream>

#include "metacot/data_pipeline.hpp"
#include "metacot/digest.hpp"
#include "metacot/text.hpp"
#include "metacot/version.hpp"

namespace metacot::pipeline {

namespace {

using State = StageStatus::State;
using ojson = nlohmann::ordered_json;

std::string status_text(const StageStatus& s) {
  switch (s.state) {
    case State::Pending: return "Pending";
    case State::Passed: return "Passed";
    case State::Failed: return "Failed(" + std::string(to_string(*s.reason)) + ")";
  }
  return "Pending";
}

StageStatus parse_status(const std::string& s) {
  if (s == "Pending") return {};
  if (s == "Passed") return StageStatus::passed();
  if (s.starts_with("Failed(") && s.ends_with(")")) {
    const auto reason = parse_reason(std::string_view(s).substr(7, s.size() - 8));
    if (reason) return StageStatus::failed(*reason);
  }
  throw FormatError("bad stage status '" + s + "'");
}

gateway::ImageRef image_from(const ojson& j) {
  if (j.is_string()) return gateway::image_ref(j.get<std::string>());
  if (j.is_object() && j.contains("uri") && j["uri"].is_string()) {
    gateway::ImageRef img{j["uri"].get<std::string>(), j.value("digest", std::string())};
    if (img.digest.empty()) img.digest = file_digest(img.uri);
    return img;
  }
  throw FormatError("image reference must be a path string or an object with \"uri\"");
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) ++n;
  }
  return n;
}

}  // namespace

nlohmann::ordered_json to_json(const SampleRecord& r) {
  ojson j;
  j["id"] = r.id;
  j["source_image"] = {{"uri", r.source_image.uri}, {"digest", r.source_image.digest}};
  j["target_image"] = {{"uri", r.target_image.uri}, {"digest", r.target_image.digest}};
  j["instruction"] = r.instruction;
  j["task_type"] = r.task_type ? ojson(std::string(to_string(*r.task_type))) : ojson(nullptr);
  j["cot"] = r.cot ? ojson(cot::serialize(*r.cot)) : ojson(nullptr);
  ojson stages = ojson::object();
  for (Stage s : kStages) stages[std::string(to_string(s))] = status_text(r.status(s));
  j["stages"] = std::move(stages);
  ojson reasons = ojson::array();
  if (auto f = r.failure()) reasons.push_back(std::string(to_string(*f)));
  j["reasons"] = std::move(reasons);
  j["provenance"] = r.provenance;
  return j;
}

SampleRecord record_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw FormatError("record must be a JSON object");
  SampleRecord r;
  r.id = j.at("id").get<std::string>();
  if (r.id.empty()) throw FormatError("record id is empty");
  r.source_image = image_from(j.at("source_image"));
  r.target_image = image_from(j.at("target_image"));
  r.instruction = j.at("instruction").get<std::string>();
  if (j.contains("task_type") && !j["task_type"].is_null()) {
    const auto name = j["task_type"].get<std::string>();
    r.task_type = parse_task_type(name);
    if (!r.task_type) throw FormatError("unknown task type '" + name + "'");
  }
  if (j.contains("cot") && !j["cot"].is_null()) {
    auto parsed = cot::parse(j["cot"].get<std::string>());
    if (!parsed.ok()) throw FormatError("stored cot does not parse: " + parsed.describe());
    r.cot = std::move(*parsed.document);
  }
  if (j.contains("stages")) {
    for (const auto& [name, value] : j["stages"].items()) {
      const auto stage = parse_stage(name);
      if (!stage) throw FormatError("unknown stage '" + name + "'");
      r.status(*stage) = parse_status(value.get<std::string>());
    }
  }
  if (j.contains("provenance")) r.provenance = j["provenance"].get<std::vector<std::string>>();
  if (const auto bad = r.invariant_violations(); !bad.empty()) {
    throw FormatError("record '" + r.id + "': " + bad.front());
  }
  return r;
}

std::vector<SampleRecord> load_records(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw Error("cannot open records file " + jsonl.string());
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(ojson::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(jsonl.string(), lineno, e.what());
    } catch (const FormatError& e) {
      throw FormatError(jsonl.string(), lineno, e.what());
    }
  }
  return out;
}

RecordStore::RecordStore(std::filesystem::path dir, bool append) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw StoreError("cannot create store directory " + dir_.string() + ": " + ec.message());
  if (std::filesystem::exists(records_path())) {
    preexisting_ = count_lines(records_path());
    if (preexisting_ > 0 && !append) {
      throw StoreError("store " + dir_.string() + " already holds " +
                       std::to_string(preexisting_) + " records; pass append to extend it");
    }
  }
}

void RecordStore::append(const SampleRecord& r) {
  std::ofstream out(records_path(), std::ios::app);
  out << to_json(r).dump() << '\n';
  out.flush();
  if (!out) throw StoreError("write to " + records_path().string() + " failed");
  ++written_;
}

void RecordStore::write_manifest(const PipelineSummary& summary, const std::string& config_digest,
                                 bool complete) {
  ojson m;
  m["records_file"] = "records.jsonl";
  m["records"] = preexisting_ + written_;
  m["written_this_run"] = written_;
  m["complete"] = complete;
  m["config_digest"] = config_digest;
  m["code_version"] = std::string(version());
  m["run_summary"] = ojson::parse(summary.to_json().dump());
  const auto tmp = manifest_path().string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << m.dump(2) << '\n';
    out.flush();
    if (!out) throw StoreError("write to " + tmp + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, manifest_path(), ec);
  if (ec) throw StoreError("cannot move manifest into place: " + ec.message());
}

}  // namespace metacot::pipeline
