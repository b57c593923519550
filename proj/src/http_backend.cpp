#include <cstdlib>
#include <fstream>
#include <iterator>

#include <httplib.h>

#include "metacot/digest.hpp"
#include "metacot/model_gateway.hpp"

namespace metacot::gateway {

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string mime_for(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "webp") return "image/webp";
  if (ext == "gif") return "image/gif";
  return "image/png";
}

std::string image_url(const ImageRef& img) {
  if (img.uri.starts_with("http://") || img.uri.starts_with("https://") ||
      img.uri.starts_with("data:")) {
    return img.uri;
  }
  std::ifstream in(img.uri, std::ios::binary);
  if (!in) throw GatewayError("cannot read image " + img.uri);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  return "data:" + mime_for(img.uri) + ";base64," + base64_encode({data, bytes.size()});
}

}  // namespace

nlohmann::json HttpBackend::build_body(const GatewayProfile& profile, const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    if (m.images.empty()) {
      messages.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    nlohmann::json parts = nlohmann::json::array();
    parts.push_back({{"type", "text"}, {"text", m.text}});
    for (const auto& img : m.images) {
      parts.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(img)}}}});
    }
    messages.push_back({{"role", m.role}, {"content", std::move(parts)}});
  }
  return {{"model", profile.model},
          {"temperature", profile.temperature},
          {"messages", std::move(messages)}};
}

std::optional<std::string> HttpBackend::extract_reply(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() ||
      j["choices"].empty()) {
    return std::nullopt;
  }
  const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
  if (!msg.contains("content")) return std::nullopt;
  const auto& content = msg["content"];
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") out += part.value("text", "");
    }
    return out;
  }
  return std::nullopt;
}

AttemptResult HttpBackend::attempt(const GatewayProfile& profile, const ChatRequest& request,
                                   const std::string&) {
  const Endpoint ep = split_endpoint(profile.endpoint);
  httplib::Client client(ep.base);
  const auto secs = static_cast<time_t>(profile.timeout_s);
  const auto usecs = static_cast<time_t>((profile.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!profile.credential_env.empty()) {
    if (const char* key = std::getenv(profile.credential_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const std::string body = build_body(profile, request).dump();
  auto res = client.Post(ep.path, headers, body, "application/json");
  if (!res) {
    return {AttemptResult::Status::Retryable, "transport error: " + httplib::to_string(res.error()),
            0};
  }
  if (res->status >= 500 || res->status == 429) {
    return {AttemptResult::Status::Retryable, "HTTP " + std::to_string(res->status), res->status};
  }
  if (res->status != 200) {
    return {AttemptResult::Status::Fatal, "HTTP " + std::to_string(res->status) + ": " + res->body,
            res->status};
  }
  auto reply = extract_reply(res->body);
  if (!reply) {
    return {AttemptResult::Status::Fatal, "response has no choices[0].message.content", 200};
  }
  return {AttemptResult::Status::Ok, std::move(*reply), 200};
}

}  // namespace metacot::gateway
