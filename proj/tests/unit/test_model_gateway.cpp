#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "metacot/model_gateway.hpp"

using namespace metacot;
using namespace metacot::gateway;

namespace {

ChatRequest request(const std::string& text) {
  ChatRequest r;
  r.messages.push_back({"user", text, {}});
  return r;
}

}  // namespace

TEST(Gateway, FixtureHitIsOneAttempt) {
  const auto req = request("hello");
  auto profile = mock_backend({{req.digest(), "world"}});
  const auto ex = complete(profile, req);
  EXPECT_EQ(ex.response, "world");
  EXPECT_EQ(ex.attempt_count, 1);
  EXPECT_EQ(ex.content_digest, req.digest());
}

TEST(Gateway, TwoFailuresThenSuccess) {
  const auto req = request("hello");
  auto backend = std::make_shared<MockBackend>(std::map<std::string, std::string>{{req.digest(), "ok"}});
  auto profile = mock_profile(backend);
  profile.max_retries = 3;
  backend->fail_next(2);
  const auto ex = complete(profile, req);
  EXPECT_EQ(ex.response, "ok");
  EXPECT_EQ(ex.attempt_count, 3);
  EXPECT_LE(ex.attempt_count, profile.max_retries + 1);
}

TEST(Gateway, RetriesExhausted) {
  const auto req = request("hello");
  auto backend = std::make_shared<MockBackend>(std::map<std::string, std::string>{{req.digest(), "ok"}});
  auto profile = mock_profile(backend);
  profile.max_retries = 2;
  backend->fail_next(10);
  try {
    complete(profile, req);
    FAIL() << "expected ExhaustedRetriesError";
  } catch (const ExhaustedRetriesError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
}

TEST(Gateway, AuthMissingBeforeNetwork) {
  ::unsetenv("METACOT_TEST_SURELY_UNSET_KEY");
  GatewayProfile p;
  p.endpoint = "https://127.0.0.1:9/v1/chat/completions";
  p.model = "m";
  p.credential_env = "METACOT_TEST_SURELY_UNSET_KEY";
  const auto before = live_call_count();
  EXPECT_THROW(complete(p, request("x")), AuthMissingError);
  EXPECT_EQ(live_call_count(), before);
}

TEST(Gateway, PayloadTooLarge) {
  auto profile = mock_backend({}, MockBackend::UnknownMode::Canned, "x");
  profile.max_request_bytes = 16;
  EXPECT_THROW(complete(profile, request(std::string(100, 'a'))), PayloadTooLargeError);
}

TEST(Gateway, DeterministicAndUnknownModes) {
  const auto req = request("same");
  auto canned = mock_backend({}, MockBackend::UnknownMode::Canned, "fallback");
  EXPECT_EQ(complete(canned, req).response, complete(canned, req).response);
  EXPECT_EQ(complete(canned, req).response, "fallback");
  auto strict = mock_backend({});
  EXPECT_THROW(complete(strict, req), UnknownFixtureError);
}

TEST(Gateway, LookupOrder) {
  const auto req = request("alpha beta");
  auto backend = std::make_shared<MockBackend>();
  backend->set_responder([](const ChatRequest&) { return std::optional<std::string>("responder"); });
  auto profile = mock_profile(backend);
  EXPECT_EQ(complete(profile, req).response, "responder");
  backend->add_contains_rule("beta", "second");
  backend->add_contains_rule("alpha", "first-inserted-later");
  EXPECT_EQ(complete(profile, req).response, "second");
  backend->add_fixture(req.digest(), "exact");
  EXPECT_EQ(complete(profile, req).response, "exact");
}

TEST(Gateway, DigestCoversImagesAndRoles) {
  ChatRequest a = request("t");
  ChatRequest b = request("t");
  b.messages[0].images.push_back({"img.png", "sha256:00"});
  ChatRequest c = request("t");
  c.messages[0].role = "system";
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_NE(a.digest(), c.digest());
  EXPECT_EQ(a.digest().size(), 64u);
}

TEST(Gateway, LoadDirReadsFilesInNameOrder) {
  const auto dir = std::filesystem::temp_directory_path() / "metacot_gateway_fixtures";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "20_b.jsonl") << R"({"contains": "ping", "reply": "from-b"})" << "\n";
    std::ofstream(dir / "10_a.jsonl") << R"({"contains": "ping", "reply": "from-a"})" << "\n"
                                      << R"({"default": "canned"})" << "\n";
  }
  auto profile = mock_profile(MockBackend::load_dir(dir));
  EXPECT_EQ(complete(profile, request("ping")).response, "from-a");
  EXPECT_EQ(complete(profile, request("other")).response, "canned");
  std::filesystem::remove_all(dir);
}

TEST(Gateway, MockNeverCountsAsLive) {
  const auto before = live_call_count();
  auto profile = mock_backend({}, MockBackend::UnknownMode::Canned, "x");
  for (int i = 0; i < 20; ++i) complete(profile, request("q" + std::to_string(i)));
  EXPECT_EQ(live_call_count(), before);
}

TEST(Gateway, InFlightCapPerProfile) {
  auto backend = std::make_shared<MockBackend>();
  std::atomic<int> now{0}, peak{0};
  backend->set_responder([&](const ChatRequest&) -> std::optional<std::string> {
    const int v = ++now;
    int p = peak.load();
    while (v > p && !peak.compare_exchange_weak(p, v)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --now;
    return std::string("ok");
  });
  auto profile = mock_profile(backend, "capped-profile");
  profile.max_in_flight = 2;
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      for (int k = 0; k < 5; ++k) complete(profile, request("c" + std::to_string(i * 10 + k)));
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_EQ(backend->call_count(), 40u);
}

TEST(Gateway, ProfileCheck) {
  GatewayProfile p;
  p.timeout_s = 0;
  EXPECT_THROW(p.check(), PreconditionError);
  p.timeout_s = 1;
  p.max_retries = -1;
  EXPECT_THROW(p.check(), PreconditionError);
  auto m = mock_backend({});
  EXPECT_TRUE(m.is_mock());
  EXPECT_THROW(complete(m, ChatRequest{}), PreconditionError);
}

TEST(Gateway, HttpBodyAndReplyExtraction) {
  GatewayProfile p;
  p.model = "judge-model";
  p.temperature = 0.0;
  const auto body = HttpBackend::build_body(p, request("hi"));
  EXPECT_EQ(body["model"], "judge-model");
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(HttpBackend::extract_reply(R"({"choices":[{"message":{"content":"yo"}}]})"), "yo");
  EXPECT_FALSE(HttpBackend::extract_reply("not json").has_value());
  EXPECT_FALSE(HttpBackend::extract_reply(R"({"choices":[]})").has_value());
}
