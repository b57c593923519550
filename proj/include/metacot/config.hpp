#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "metacot/data_pipeline.hpp"
#include "metacot/model_gateway.hpp"

// Toolkit configuration file (TOML).
//
//   [profiles.<name>]   endpoint, model, credential_env, timeout_s,
//                       max_retries, temperature, max_in_flight
//   [pipeline]          task_typer, consistency_checker, cot_generator,
//                       alignment_evaluator (profile names), batch_size,
//                       parallelism, alignment_threshold, cot_reprompts,
//                       cot_mode; [pipeline.prompts] per-stage template ids
//   [calibration]       judge, prompt_version, min_r, max_mae, parallelism
//   [bench]             judge, parallelism
//   [store]             dataset_dir, samples, score_log
//   [serve]             bind, port, static_dir
namespace metacot {

struct ProfileSettings {
  std::string endpoint;
  std::string model;
  std::string credential_env;
  double timeout_s = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  int max_in_flight = 4;

  friend bool operator==(const ProfileSettings&, const ProfileSettings&) = default;
};

struct ToolkitConfig {
  std::map<std::string, ProfileSettings> profiles;

  struct Pipeline {
    std::string task_typer;
    std::string consistency_checker;
    std::string cot_generator;
    std::string alignment_evaluator;
    std::size_t batch_size = 16;
    std::size_t parallelism = 4;
    double alignment_threshold = 7.0;
    int cot_reprompts = 2;
    std::string cot_mode = "meta-task";  // "meta-task" | "task"
    std::string task_typing_prompt = "task_typing/v1";
    std::string consistency_prompt = "consistency_check/v1";
    std::string cot_prompt = "cot_generation/v1";
    std::string alignment_prompt = "alignment_eval/v1";
    friend bool operator==(const Pipeline&, const Pipeline&) = default;
  } pipeline;

  struct Calibration {
    std::string judge;
    std::string prompt_version = "v3";
    double min_r = 0.8;
    double max_mae = 2.5;
    std::size_t parallelism = 4;
    friend bool operator==(const Calibration&, const Calibration&) = default;
  } calibration;

  struct Bench {
    std::string judge;
    std::size_t parallelism = 4;
    friend bool operator==(const Bench&, const Bench&) = default;
  } bench;

  struct Store {
    std::string dataset_dir = "dataset";
    std::string samples = "samples.jsonl";
    std::string score_log = "scores.jsonl";
    friend bool operator==(const Store&, const Store&) = default;
  } store;

  struct Serve {
    std::string bind = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
    friend bool operator==(const Serve&, const Serve&) = default;
  } serve;

  /// Unknown keys are rejected. The result is normalized and checked.
  static ToolkitConfig parse(std::string_view toml, const std::string& source = "<config>");
  static ToolkitConfig load(const std::filesystem::path& path);

  /// Trims strings and lowercases enumerations.
  void normalize();
  /// Referenced profiles exist, numeric settings are in range, and the
  /// store/serve paths are distinct. Throws FormatError.
  void check() const;
  /// Canonical TOML. parse(dump()) == *this.
  std::string dump() const;

  /// Gateway profile by name. With a mock backend, unknown or empty names
  /// yield a mock profile named after `role`.
  gateway::GatewayProfile profile(const std::string& name, const std::string& role,
                                  std::shared_ptr<gateway::Backend> mock = {}) const;
  pipeline::PipelineConfig pipeline_config(std::shared_ptr<gateway::Backend> mock = {}) const;

  friend bool operator==(const ToolkitConfig&, const ToolkitConfig&) = default;
};

}  // namespace metacot
