#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "metacot/consistency_reward.hpp"

// HTTP API for the human-scoring loop:
//   GET  /api/samples/:id        sample with image refs and serialized CoT
//   GET  /api/samples?cursor=    page of samples (optional annotator= filter)
//   POST /api/scores             {sample_id, annotator, value}
//   GET  /api/calibration        judge-vs-human report over the score log
// plus an optional static mount for the UI bundle.
namespace metacot::serve {

struct ScoreEntry {
  std::uint64_t seq = 0;
  std::string sample_id;
  std::string annotator;
  double value = 0.0;
  std::string timestamp;  // UTC, ISO-8601

  nlohmann::json to_json() const;
};

/// Append-only score log. Optionally persisted as JSONL; an existing file is
/// replayed on open. Appends are serialized.
class ScoreLog {
 public:
  ScoreLog() = default;
  explicit ScoreLog(std::filesystem::path file);

  ScoreEntry append(std::string sample_id, std::string annotator, double value);
  std::vector<ScoreEntry> snapshot() const;

 private:
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> file_;
  std::vector<ScoreEntry> entries_;
};

struct ServeSample {
  std::string id;
  std::string cot_text;
  cot::MetaCotDocument cot;
  gateway::ImageRef source_image;
  gateway::ImageRef edited_image;
  std::optional<TaskType> task_type;
  std::string instruction;

  nlohmann::json to_json() const;
};

struct LoadedSamples {
  std::vector<ServeSample> samples;
  std::size_t skipped = 0;  // records that are not presentable
};

/// Reads either judged-sample lines (id, cot, edited_image[, source_image,
/// task_type, instruction]) or pipeline store records. Only records whose
/// CoT parses and, when a task type is known, validates against it are kept;
/// pipeline records must have passed every stage.
LoadedSamples load_samples(const std::filesystem::path& jsonl);

/// Latest value per (sample, annotator). A sample is fully scored once four
/// annotators have scored it; the first four to do so are used.
std::vector<cec::HumanScoreSet> consensus_inputs(const std::vector<ScoreEntry>& log);

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::string prompt_version = "v3";
  cec::Gate gate;
  std::size_t page_size = 20;
};

/// Transport-independent request handling.
class AnnotationService {
 public:
  AnnotationService(std::vector<ServeSample> samples, std::shared_ptr<ScoreLog> log,
                    gateway::GatewayProfile judge, ServiceOptions options = {});

  ApiResponse get_sample(const std::string& id) const;
  ApiResponse list_samples(const std::string& cursor, const std::string& limit,
                           const std::string& annotator) const;
  ApiResponse post_score(const std::string& body);
  /// Recomputed from a snapshot of the log on every call. Judge scores are
  /// cached per sample.
  ApiResponse calibration();

  cec::CalibrationReport calibration_report();

 private:
  struct JudgeOutcome {
    std::optional<double> score;
  };
  JudgeOutcome judged(const ServeSample& s);

  std::vector<ServeSample> samples_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::shared_ptr<ScoreLog> log_;
  gateway::GatewayProfile judge_;
  ServiceOptions options_;
  std::mutex cache_mu_;
  std::map<std::string, JudgeOutcome> cache_;
};

class ServerStartError : public Error {
 public:
  using Error::Error;
};

/// httplib front end. start() binds (port 0 picks a free port) and serves on
/// a background thread; a busy port throws ServerStartError.
class AnnotationServer {
 public:
  explicit AnnotationServer(std::shared_ptr<AnnotationService> service,
                            std::filesystem::path static_dir = {});
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  int start(const std::string& host, int port);
  void wait();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace metacot::serve
