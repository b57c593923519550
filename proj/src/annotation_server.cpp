#include "metacot/annotation_server.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>

#include <httplib.h>

#include "metacot/data_pipeline.hpp"
#include "metacot/text.hpp"

namespace metacot::serve {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

ApiResponse error_response(int status, std::string reason) {
  return {status, {{"error", std::move(reason)}}};
}

}  // namespace

nlohmann::json ScoreEntry::to_json() const {
  return {{"seq", seq},
          {"sample_id", sample_id},
          {"annotator", annotator},
          {"value", value},
          {"timestamp", timestamp}};
}

ScoreLog::ScoreLog(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScoreEntry e;
      e.seq = j.at("seq").get<std::uint64_t>();
      e.sample_id = j.at("sample_id").get<std::string>();
      e.annotator = j.at("annotator").get<std::string>();
      e.value = j.at("value").get<double>();
      e.timestamp = j.value("timestamp", std::string());
      entries_.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(file_->string(), lineno, e.what());
    }
  }
}

ScoreEntry ScoreLog::append(std::string sample_id, std::string annotator, double value) {
  std::lock_guard lock(mu_);
  ScoreEntry e{entries_.empty() ? 1 : entries_.back().seq + 1, std::move(sample_id),
               std::move(annotator), value, utc_now()};
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    out << e.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error("write to score log " + file_->string() + " failed");
  }
  entries_.push_back(e);
  return e;
}

std::vector<ScoreEntry> ScoreLog::snapshot() const {
  std::lock_guard lock(mu_);
  return entries_;
}

nlohmann::json ServeSample::to_json() const {
  nlohmann::json j{{"id", id},
                   {"source_image", gateway::to_json(source_image)},
                   {"edited_image", gateway::to_json(edited_image)},
                   {"cot", cot_text}};
  j["task_type"] = task_type ? nlohmann::json(std::string(to_string(*task_type))) : nlohmann::json();
  j["instruction"] = instruction;
  return j;
}

LoadedSamples load_samples(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw Error("cannot open samples file " + jsonl.string());
  LoadedSamples out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    ServeSample s;
    try {
      const auto j = nlohmann::ordered_json::parse(line);
      if (j.contains("stages")) {
        const auto r = pipeline::record_from_json(j);
        if (!r.passed_all() || !r.cot) {
          ++out.skipped;
          continue;
        }
        s.id = r.id;
        s.cot = *r.cot;
        s.cot_text = cot::serialize(*r.cot);
        s.source_image = r.source_image;
        s.edited_image = r.target_image;
        s.task_type = r.task_type;
        s.instruction = r.instruction;
      } else {
        s.id = j.at("id").get<std::string>();
        s.cot_text = j.at("cot").get<std::string>();
        s.edited_image = gateway::image_ref_from_json(nlohmann::json::parse(j.at("edited_image").dump()));
        if (j.contains("source_image")) {
          s.source_image = gateway::image_ref_from_json(nlohmann::json::parse(j["source_image"].dump()));
        }
        s.instruction = j.value("instruction", std::string());
        if (j.contains("task_type") && !j["task_type"].is_null()) {
          const auto name = j["task_type"].get<std::string>();
          s.task_type = parse_task_type(name);
          if (!s.task_type) throw FormatError("unknown task type '" + name + "'");
        }
        auto parsed = cot::parse(s.cot_text);
        if (!parsed.ok() ||
            (s.task_type && !cot::validate_against_task(*parsed.document, *s.task_type).ok())) {
          ++out.skipped;
          continue;
        }
        s.cot = std::move(*parsed.document);
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(jsonl.string(), lineno, e.what());
    } catch (const FormatError& e) {
      throw FormatError(jsonl.string(), lineno, e.what());
    }
    if (!seen.insert(s.id).second) {
      throw FormatError(jsonl.string(), lineno, "duplicate sample id '" + s.id + "'");
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

std::vector<cec::HumanScoreSet> consensus_inputs(const std::vector<ScoreEntry>& log) {
  struct PerSample {
    std::vector<std::string> order;  // annotators by first score
    std::map<std::string, std::pair<std::uint64_t, double>> latest;
  };
  std::map<std::string, PerSample> by_sample;
  std::vector<std::string> sample_order;
  for (const auto& e : log) {
    auto [it, fresh] = by_sample.try_emplace(e.sample_id);
    if (fresh) sample_order.push_back(e.sample_id);
    auto& ps = it->second;
    auto found = ps.latest.find(e.annotator);
    if (found == ps.latest.end()) {
      ps.order.push_back(e.annotator);
      ps.latest[e.annotator] = {e.seq, e.value};
    } else if (e.seq >= found->second.first) {
      found->second = {e.seq, e.value};
    }
  }
  std::vector<cec::HumanScoreSet> out;
  for (const auto& id : sample_order) {
    const auto& ps = by_sample[id];
    if (ps.order.size() < 4) continue;
    cec::HumanScoreSet set{id, {}};
    for (std::size_t k = 0; k < 4; ++k) set.scores[k] = ps.latest.at(ps.order[k]).second;
    out.push_back(set);
  }
  return out;
}

AnnotationService::AnnotationService(std::vector<ServeSample> samples, std::shared_ptr<ScoreLog> log,
                                     gateway::GatewayProfile judge, ServiceOptions options)
    : samples_(std::move(samples)),
      log_(std::move(log)),
      judge_(std::move(judge)),
      options_(std::move(options)) {
  if (!log_) throw PreconditionError("annotation service needs a score log");
  if (options_.page_size == 0) throw PreconditionError("page size must be positive");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!index_.emplace(samples_[i].id, i).second) {
      throw PreconditionError("duplicate sample id '" + samples_[i].id + "'");
    }
  }
}

ApiResponse AnnotationService::get_sample(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return error_response(404, "unknown sample '" + id + "'");
  return {200, samples_[it->second].to_json()};
}

ApiResponse AnnotationService::list_samples(const std::string& cursor, const std::string& limit,
                                            const std::string& annotator) const {
  std::size_t start = 0;
  if (!cursor.empty()) {
    const auto v = text::parse_int(cursor);
    if (!v || *v < 0 || static_cast<std::size_t>(*v) > samples_.size()) {
      return error_response(400, "bad cursor '" + cursor + "'");
    }
    start = static_cast<std::size_t>(*v);
  }
  std::size_t page = options_.page_size;
  if (!limit.empty()) {
    const auto v = text::parse_int(limit);
    if (!v || *v < 1 || *v > 1000) return error_response(400, "limit must be in [1, 1000]");
    page = static_cast<std::size_t>(*v);
  }
  std::set<std::string> done;
  if (!annotator.empty()) {
    for (const auto& e : log_->snapshot()) {
      if (e.annotator == annotator) done.insert(e.sample_id);
    }
  }
  nlohmann::json items = nlohmann::json::array();
  std::size_t i = start;
  for (; i < samples_.size() && items.size() < page; ++i) {
    if (done.contains(samples_[i].id)) continue;
    items.push_back(samples_[i].to_json());
  }
  // skip over trailing already-scored samples so an exhausted queue reports no cursor
  while (i < samples_.size() && done.contains(samples_[i].id)) ++i;
  nlohmann::json body{{"samples", std::move(items)}, {"total", samples_.size()}};
  body["next_cursor"] = i < samples_.size() ? nlohmann::json(std::to_string(i)) : nlohmann::json();
  return {200, std::move(body)};
}

ApiResponse AnnotationService::post_score(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error_response(400, "body is not valid JSON");
  }
  if (!j.is_object()) return error_response(400, "body must be a JSON object");
  if (!j.contains("sample_id") || !j["sample_id"].is_string()) {
    return error_response(400, "sample_id must be a string");
  }
  if (!j.contains("annotator") || !j["annotator"].is_string() ||
      text::trim(j["annotator"].get<std::string>()).empty()) {
    return error_response(400, "annotator must be a non-empty string");
  }
  if (!j.contains("value") || !j["value"].is_number()) {
    return error_response(400, "value must be a number");
  }
  const auto value = j["value"].get<double>();
  if (!std::isfinite(value) || value < 0.0 || value > 10.0) {
    return error_response(400, "value must lie in [0, 10]");
  }
  const auto id = j["sample_id"].get<std::string>();
  if (!index_.contains(id)) return error_response(400, "unknown sample '" + id + "'");
  const auto entry =
      log_->append(id, std::string(text::trim(j["annotator"].get<std::string>())), value);
  return {201, entry.to_json()};
}

AnnotationService::JudgeOutcome AnnotationService::judged(const ServeSample& s) {
  {
    std::lock_guard lock(cache_mu_);
    if (const auto it = cache_.find(s.id); it != cache_.end()) return it->second;
  }
  JudgeOutcome out;
  try {
    out.score = cec::judge_score(s.cot, s.edited_image, judge_, options_.prompt_version, s.id).value;
  } catch (const cec::JudgeFormatError&) {
    out.score.reset();
  }
  std::lock_guard lock(cache_mu_);
  cache_.emplace(s.id, out);
  return out;
}

cec::CalibrationReport AnnotationService::calibration_report() {
  const auto sets = consensus_inputs(log_->snapshot());
  std::vector<double> judge, consensus;
  std::size_t excluded = 0;
  for (const auto& set : sets) {
    const auto it = index_.find(set.sample_id);
    if (it == index_.end()) continue;
    const auto outcome = judged(samples_[it->second]);
    if (!outcome.score) {
      ++excluded;
      continue;
    }
    judge.push_back(*outcome.score);
    consensus.push_back(cec::aggregate_human(set));
  }
  return cec::make_report(judge, consensus, excluded, options_.prompt_version, options_.gate);
}

ApiResponse AnnotationService::calibration() {
  try {
    return {200, calibration_report().to_json()};
  } catch (const Error& e) {
    return error_response(502, std::string("judge unavailable: ") + e.what());
  }
}

struct AnnotationServer::Impl {
  httplib::Server http;
};

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

AnnotationServer::AnnotationServer(std::shared_ptr<AnnotationService> service,
                                   std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>()) {
  if (!service) throw PreconditionError("annotation server needs a service");
  auto& http = impl_->http;
  http.Get(R"(/api/samples/([^/]+))", [service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service->get_sample(req.matches[1]));
  });
  http.Get("/api/samples", [service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service->list_samples(req.get_param_value("cursor"), req.get_param_value("limit"),
                                     req.get_param_value("annotator")));
  });
  http.Post("/api/scores", [service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service->post_score(req.body));
  });
  http.Get("/api/calibration", [service](const httplib::Request&, httplib::Response& res) {
    reply(res, service->calibration());
  });
  if (!static_dir.empty()) {
    if (!std::filesystem::is_directory(static_dir)) {
      throw PreconditionError("static directory " + static_dir.string() + " does not exist");
    }
    http.set_mount_point("/", static_dir.string());
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start(const std::string& host, int port) {
  auto& http = impl_->http;
  // httplib's default sets SO_REUSEPORT, which lets a second server share a busy port
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  if (port == 0) {
    port_ = http.bind_to_any_port(host);
    if (port_ < 0) throw ServerStartError("cannot bind " + host);
  } else {
    if (!http.bind_to_port(host, port)) {
      throw ServerStartError("cannot bind " + host + ":" + std::to_string(port) +
                             " (port in use or address unavailable)");
    }
    port_ = port;
  }
  thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
  http.wait_until_ready();
  return port_;
}

void AnnotationServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void AnnotationServer::stop() {
  impl_->http.stop();
  wait();
}

}  // namespace metacot::serve
