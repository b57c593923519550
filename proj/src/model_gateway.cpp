#include "metacot/model_gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "metacot/digest.hpp"
#include "metacot/text.hpp"

namespace metacot::gateway {

namespace {

std::atomic<std::size_t> g_live_calls{0};

// Per-profile-name cap on in-flight calls.
class Limiter {
 public:
  void acquire(int cap) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < cap; });
    ++in_flight_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
};

Limiter& limiter_for(const std::string& name) {
  static std::mutex mu;
  static std::map<std::string, std::unique_ptr<Limiter>> limiters;
  std::lock_guard lock(mu);
  auto& slot = limiters[name];
  if (!slot) slot = std::make_unique<Limiter>();
  return *slot;
}

struct SlotGuard {
  Limiter& limiter;
  explicit SlotGuard(Limiter& l, int cap) : limiter(l) { limiter.acquire(cap); }
  ~SlotGuard() { limiter.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;
};

bool is_remote_uri(const std::string& uri) {
  return uri.starts_with("http://") || uri.starts_with("https://") || uri.starts_with("data:");
}

std::size_t estimated_size(const ChatRequest& request) {
  std::size_t n = request.canonical_json().dump().size();
  for (const auto& m : request.messages) {
    for (const auto& img : m.images) {
      if (is_remote_uri(img.uri)) continue;
      std::error_code ec;
      const auto sz = std::filesystem::file_size(img.uri, ec);
      if (!ec) n += static_cast<std::size_t>(sz) * 4 / 3 + 64;
    }
  }
  return n;
}

}  // namespace

ImageRef image_ref(std::string uri) {
  ImageRef img;
  img.digest = file_digest(uri);
  img.uri = std::move(uri);
  return img;
}

ImageRef image_ref_from_json(const nlohmann::json& j) {
  if (j.is_string()) return image_ref(j.get<std::string>());
  if (j.is_object() && j.contains("uri") && j["uri"].is_string()) {
    ImageRef img{j["uri"].get<std::string>(), j.value("digest", std::string())};
    if (img.digest.empty()) img.digest = file_digest(img.uri);
    return img;
  }
  throw FormatError("image reference must be a path string or an object with \"uri\"");
}

nlohmann::json to_json(const ImageRef& img) { return {{"uri", img.uri}, {"digest", img.digest}}; }

nlohmann::json ChatRequest::canonical_json() const {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& img : m.images) images.push_back({{"uri", img.uri}, {"digest", img.digest}});
    msgs.push_back({{"role", m.role}, {"text", m.text}, {"images", std::move(images)}});
  }
  return msgs;
}

std::string ChatRequest::digest() const { return sha256_hex(canonical_json().dump()); }

std::string ChatRequest::flat_text() const {
  std::string out;
  for (const auto& m : messages) {
    out += m.text;
    out += '\n';
  }
  return out;
}

void GatewayProfile::check() const {
  if (!(timeout_s > 0.0)) throw PreconditionError("profile '" + name + "': timeout must be > 0");
  if (max_retries < 0) throw PreconditionError("profile '" + name + "': max_retries must be >= 0");
  if (temperature < 0.0) throw PreconditionError("profile '" + name + "': temperature must be >= 0");
  if (max_in_flight < 1) throw PreconditionError("profile '" + name + "': max_in_flight must be >= 1");
  if (!backend && endpoint.empty()) {
    throw PreconditionError("profile '" + name + "' has neither an endpoint nor a mock backend");
  }
}

bool GatewayProfile::is_mock() const { return backend && !backend->is_live(); }

ChatExchange complete(const GatewayProfile& profile, const ChatRequest& request) {
  profile.check();
  if (request.messages.empty()) throw PreconditionError("empty chat request");

  static HttpBackend http;
  Backend& backend = profile.backend ? *profile.backend : http;

  if (backend.is_live() && !profile.credential_env.empty() &&
      std::getenv(profile.credential_env.c_str()) == nullptr) {
    throw AuthMissingError("profile '" + profile.name + "': credential variable " +
                           profile.credential_env + " is not set");
  }
  if (estimated_size(request) > profile.max_request_bytes) {
    throw PayloadTooLargeError("profile '" + profile.name + "': request exceeds " +
                               std::to_string(profile.max_request_bytes) + " bytes");
  }

  SlotGuard slot(limiter_for(profile.name), profile.max_in_flight);
  ChatExchange exchange;
  exchange.content_digest = request.digest();
  const auto start = std::chrono::steady_clock::now();
  double backoff = profile.backoff_initial_ms;
  std::string last_error;
  for (int attempt = 0; attempt <= profile.max_retries; ++attempt) {
    exchange.attempt_count = attempt + 1;
    if (backend.is_live()) g_live_calls.fetch_add(1);
    AttemptResult r = backend.attempt(profile, request, exchange.content_digest);
    if (r.status == AttemptResult::Status::Ok) {
      exchange.response = std::move(r.body);
      exchange.latency_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - start)
                                .count();
      return exchange;
    }
    if (r.status == AttemptResult::Status::Fatal) {
      if (r.http_status == 413) throw PayloadTooLargeError(r.body);
      if (r.unknown_fixture) throw UnknownFixtureError(r.body);
      throw RequestRejectedError("profile '" + profile.name + "': " + r.body);
    }
    last_error = r.body;
    if (attempt < profile.max_retries && backoff > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
      backoff *= profile.backoff_multiplier;
    }
  }
  throw ExhaustedRetriesError("profile '" + profile.name + "': gave up after " +
                                  std::to_string(exchange.attempt_count) +
                                  " attempts: " + last_error,
                              exchange.attempt_count);
}

std::size_t live_call_count() { return g_live_calls.load(); }

MockBackend::MockBackend(std::map<std::string, std::string> fixtures, UnknownMode mode,
                         std::string canned)
    : fixtures_(std::move(fixtures)), mode_(mode), canned_(std::move(canned)) {}

void MockBackend::add_fixture(const std::string& digest, std::string reply) {
  std::lock_guard lock(mu_);
  fixtures_[digest] = std::move(reply);
}

void MockBackend::add_contains_rule(std::string needle, std::string reply) {
  std::lock_guard lock(mu_);
  contains_.emplace_back(std::move(needle), std::move(reply));
}

void MockBackend::set_unknown_error() {
  std::lock_guard lock(mu_);
  mode_ = UnknownMode::Error;
}

void MockBackend::set_unknown_canned(std::string reply) {
  std::lock_guard lock(mu_);
  mode_ = UnknownMode::Canned;
  canned_ = std::move(reply);
}

void MockBackend::set_responder(
    std::function<std::optional<std::string>(const ChatRequest&)> responder) {
  std::lock_guard lock(mu_);
  responder_ = std::move(responder);
}

void MockBackend::fail_next(int n) {
  std::lock_guard lock(mu_);
  pending_failures_ = n;
}

AttemptResult MockBackend::attempt(const GatewayProfile&, const ChatRequest& request,
                                   const std::string& digest) {
  calls_.fetch_add(1);
  std::function<std::optional<std::string>(const ChatRequest&)> responder;
  {
    std::lock_guard lock(mu_);
    if (pending_failures_ > 0) {
      --pending_failures_;
      return {AttemptResult::Status::Retryable, "scripted transport failure", 503};
    }
    if (auto it = fixtures_.find(digest); it != fixtures_.end()) {
      return {AttemptResult::Status::Ok, it->second, 200};
    }
    if (!contains_.empty()) {
      const std::string flat = request.flat_text();
      for (const auto& [needle, reply] : contains_) {
        if (flat.find(needle) != std::string::npos) return {AttemptResult::Status::Ok, reply, 200};
      }
    }
    responder = responder_;
  }
  if (responder) {
    if (auto reply = responder(request)) return {AttemptResult::Status::Ok, *reply, 200};
  }
  std::lock_guard lock(mu_);
  if (mode_ == UnknownMode::Canned) return {AttemptResult::Status::Ok, canned_, 200};
  return {AttemptResult::Status::Fatal, "no fixture for request digest " + digest, 0, true};
}

std::shared_ptr<MockBackend> MockBackend::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("mock fixture directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  auto backend = std::make_shared<MockBackend>();
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(file.string(), lineno, e.what());
      }
      if (!j.is_object()) throw FormatError(file.string(), lineno, "expected a JSON object");
      if (j.contains("default")) {
        backend->set_unknown_canned(j.at("default").get<std::string>());
        continue;
      }
      if (!j.contains("reply") || !j["reply"].is_string()) {
        throw FormatError(file.string(), lineno, "fixture needs a string 'reply'");
      }
      std::string reply = j["reply"].get<std::string>();
      if (j.contains("digest")) {
        backend->add_fixture(j["digest"].get<std::string>(), std::move(reply));
      } else if (j.contains("contains")) {
        backend->add_contains_rule(j["contains"].get<std::string>(), std::move(reply));
      } else {
        throw FormatError(file.string(), lineno, "fixture needs 'digest' or 'contains'");
      }
    }
  }
  return backend;
}

GatewayProfile mock_profile(std::shared_ptr<MockBackend> backend, std::string name) {
  GatewayProfile p;
  p.name = std::move(name);
  p.model = "mock";
  p.backend = std::move(backend);
  p.backoff_initial_ms = 0.0;
  return p;
}

GatewayProfile mock_backend(std::map<std::string, std::string> fixtures,
                            MockBackend::UnknownMode mode, std::string canned) {
  return mock_profile(std::make_shared<MockBackend>(std::move(fixtures), mode, std::move(canned)));
}

}  // namespace metacot::gateway
