#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "replanvlm/vlm/backend.hpp"

namespace replanvlm::vlm {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw GatewayError(GatewayErrc::Config, "endpoint must be an http(s) URL: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string media_type(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  return "image/png";
}

std::string reply_text(const json& body) {
  const auto& content = body.at("choices").at(0).at("message").at("content");
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  for (const auto& part : content) {
    if (part.value("type", "") == "text") out += part.value("text", "");
  }
  return out;
}

bool transient(int status) { return status == 429 || status >= 500; }

}  // namespace

RemoteBackend::RemoteBackend(BackendConfig config) : config_(std::move(config)) { config_.validate(); }

json RemoteBackend::request_body(const PromptBundle& bundle) const {
  PromptBundle user = bundle;
  user.role_playing.clear();
  json content = json::array({{{"type", "text"}, {"text", serialize(user)}}});
  for (const auto& img : config_.images) {
    std::ifstream in(img, std::ios::binary);
    if (!in) throw GatewayError(GatewayErrc::Config, "cannot read image " + img.string());
    std::ostringstream bytes;
    bytes << in.rdbuf();
    content.push_back({{"type", "image"}, {"base64", httplib::detail::base64_encode(bytes.str())},
                       {"media_type", media_type(img)}});
  }
  return {{"model", config_.model},
          {"messages", json::array({{{"role", "system"}, {"content", json::array({{{"type", "text"}, {"text", bundle.role_playing}}})}},
                                    {{"role", "user"}, {"content", content}}})},
          {"temperature", config_.temperature}};
}

std::string RemoteBackend::complete(const PromptBundle& bundle, RequestContext&) const {
  const char* key = std::getenv(config_.credential_env.c_str());
  if (!key || !*key) {
    throw GatewayError(GatewayErrc::CredentialMissing, "environment variable " + config_.credential_env + " is not set");
  }
  const auto ep = split_endpoint(config_.endpoint);
  const auto body = request_body(bundle).dump();

  httplib::Client client(ep.base);
  const auto secs = static_cast<time_t>(config_.timeout_s);
  const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  const httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};

  int last_status = 0;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      const double wait = config_.backoff_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_status = 0;
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      try {
        return reply_text(json::parse(res->body));
      } catch (const json::exception& e) {
        throw GatewayError(GatewayErrc::RemoteHTTP, std::string("malformed completion body: ") + e.what(), 200);
      }
    }
    last_status = res->status;
    if (!transient(res->status)) break;
  }
  if (last_status == 0) {
    throw GatewayError(GatewayErrc::RemoteTimeout,
                       "no response from " + config_.endpoint + " after " + std::to_string(config_.retries + 1) +
                           " attempt(s): " + last_error);
  }
  throw GatewayError(GatewayErrc::RemoteHTTP, "request to " + config_.endpoint + " failed", last_status);
}

}  // namespace replanvlm::vlm
