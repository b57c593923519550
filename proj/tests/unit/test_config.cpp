#include <gtest/gtest.h>

#include "generators.hpp"
#include "metacot/config.hpp"

using namespace metacot;

namespace {

const char* kSample = R"(
[profiles.qwen]
endpoint = "https://llm.example/v1/chat/completions"
model = "qwen2.5-72b"
credential_env = "QWEN_KEY"

[profiles.judge]
endpoint = "https://judge.example/v1/chat/completions"
model = "judge-vlm"
timeout_s = 30.0
max_retries = 5

[pipeline]
task_typer = "qwen"
consistency_checker = "judge"
cot_generator = "judge"
alignment_evaluator = "judge"
alignment_threshold = 8

[calibration]
judge = "judge"
prompt_version = "v2"
)";

}  // namespace

TEST(Config, ParseSample) {
  const auto c = ToolkitConfig::parse(kSample);
  ASSERT_EQ(c.profiles.size(), 2u);
  EXPECT_EQ(c.profiles.at("judge").max_retries, 5);
  EXPECT_EQ(c.profiles.at("qwen").timeout_s, 60.0);
  EXPECT_EQ(c.pipeline.alignment_threshold, 8.0);
  EXPECT_EQ(c.calibration.prompt_version, "v2");
  EXPECT_EQ(c.serve.port, 8080);
}

TEST(Config, DefaultsAreValid) {
  const auto c = ToolkitConfig::parse("");
  EXPECT_EQ(c, ToolkitConfig{});
}

TEST(Config, Rejections) {
  EXPECT_THROW(ToolkitConfig::parse("[pipeline]\nbogus = 1\n"), FormatError);
  EXPECT_THROW(ToolkitConfig::parse("[pipeline]\ntask_typer = \"nope\"\n"), FormatError);
  EXPECT_THROW(ToolkitConfig::parse("[calibration]\nmin_r = 2.0\n"), FormatError);
  EXPECT_THROW(ToolkitConfig::parse("[serve]\nport = 70000\n"), FormatError);
  EXPECT_THROW(ToolkitConfig::parse("[store]\nsamples = \"a.jsonl\"\nscore_log = \"a.jsonl\"\n"),
               FormatError);
  EXPECT_THROW(ToolkitConfig::parse("[profiles.x]\nendpoint = \"u\"\ntimeout_s = 0\n"), FormatError);
  EXPECT_THROW(ToolkitConfig::parse("this is = = not toml"), FormatError);
  EXPECT_THROW(ToolkitConfig::parse("[pipeline]\ncot_mode = \"freestyle\"\n"), FormatError);
}

TEST(Config, NormalizesEnumerations) {
  const auto c = ToolkitConfig::parse("[pipeline]\ncot_mode = \" TASK \"\n");
  EXPECT_EQ(c.pipeline.cot_mode, "task");
}

TEST(Config, RoundTripSample) {
  const auto c = ToolkitConfig::parse(kSample);
  const auto text = c.dump();
  const auto again = ToolkitConfig::parse(text);
  EXPECT_EQ(again, c);
  EXPECT_EQ(again.dump(), text);
}

TEST(Config, ProfileResolution) {
  const auto c = ToolkitConfig::parse(kSample);
  const auto p = c.profile("judge", "judge");
  EXPECT_EQ(p.model, "judge-vlm");
  EXPECT_FALSE(p.is_mock());
  EXPECT_THROW(c.profile("missing", "judge"), PreconditionError);
  auto mock = std::make_shared<gateway::MockBackend>();
  const auto m = c.profile("", "cot_generator", mock);
  EXPECT_TRUE(m.is_mock());
  EXPECT_EQ(m.name, "cot_generator");
  const auto pc = c.pipeline_config(mock);
  EXPECT_NO_THROW(pc.check());
  EXPECT_EQ(pc.alignment_threshold, 8.0);
  EXPECT_TRUE(pc.cot_generator->is_mock());
}

TEST(ConfigProperty, DumpParseIsFixedPoint) {
  gen::Gen g(55);
  for (int i = 0; i < 300; ++i) {
    ToolkitConfig c;
    const int n = g.integer(0, 3);
    std::vector<std::string> names;
    for (int k = 0; k < n; ++k) {
      ProfileSettings p;
      p.endpoint = "https://h" + std::to_string(k) + ".example/v1";
      p.model = gen::descriptor(g, false);
      if (g.coin()) p.credential_env = "KEY_" + std::to_string(k);
      p.timeout_s = g.integer(1, 600) / 4.0;
      p.max_retries = g.integer(0, 9);
      p.temperature = g.integer(0, 20) / 10.0;
      p.max_in_flight = g.integer(1, 32);
      names.push_back("p" + std::to_string(k));
      c.profiles[names.back()] = p;
    }
    const auto pick = [&]() { return names.empty() || g.coin(0.3) ? std::string() : g.pick(names); };
    c.pipeline.task_typer = pick();
    c.pipeline.consistency_checker = pick();
    c.pipeline.cot_generator = pick();
    c.pipeline.alignment_evaluator = pick();
    c.pipeline.batch_size = g.integer(1, 64);
    c.pipeline.parallelism = g.integer(1, 16);
    c.pipeline.alignment_threshold = g.integer(0, 100) / 10.0;
    c.pipeline.cot_reprompts = g.integer(0, 5);
    c.pipeline.cot_mode = g.coin() ? "task" : "meta-task";
    c.calibration.judge = pick();
    c.calibration.prompt_version = "v" + std::to_string(g.integer(1, 9));
    c.calibration.min_r = g.integer(-10, 10) / 10.0;
    c.calibration.max_mae = g.integer(0, 100) / 10.0;
    c.bench.judge = pick();
    c.bench.parallelism = g.integer(1, 16);
    c.serve.port = g.integer(1, 65535);
    c.serve.bind = g.coin() ? "0.0.0.0" : "127.0.0.1";
    ASSERT_NO_THROW(c.check()) << i;
    const auto text = c.dump();
    const auto back = ToolkitConfig::parse(text);
    ASSERT_EQ(back, c) << text;
    ASSERT_EQ(back.dump(), text);
  }
}
