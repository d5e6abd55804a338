#include "bf/vlm_client.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "bf/error.hpp"
#include "bf/png_io.hpp"
#include "bf/rng.hpp"

namespace bf {

using json = nlohmann::json;

const std::string_view kDefaultVlmPrompt =
    R"(You are given a facial image. Carefully examine the image to identify any unusual or suspicious visual artifacts that may serve as a backdoor trigger in a poisoned dataset.

The examples of anomalies are:
- Out-of-place objects such as patches, stickers, or patterns
- Unnatural cosmetic overlays (e.g., lipstick, blush, eyeshadow)
- Accessories like hats or glasses that appear digitally inserted or inconsistent
- Grainy textures, pixel-level noise, or hidden watermarks
- Any digital modification that seems unnatural or deliberately added

If such artifacts are detected, describe each with the following:
- Type: Sticker, noise, accessory, etc.
- Appearance: Color, shape, size, texture
- Location: Forehead, eyes, corner, etc.

If no suspicious triggers are present, clearly state that none were found.)";

void RemoteDetectorConfig::validate() const {
  if (endpoint_url.empty()) throw ValidationError("remote detector needs an endpoint URL");
  if (timeout.count() <= 0) throw ValidationError("remote detector timeout must be positive");
}

void apply_auth_from_env(RemoteDetectorConfig& cfg) {
  if (cfg.auth_token) return;
  if (const char* tok = std::getenv("BF_AUTH_TOKEN"); tok && *tok) cfg.auth_token = tok;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains(const std::string& haystack, std::string_view needle) {
  return haystack.find(needle) != std::string::npos;
}

Verdict parse_free_text(std::string_view text) {
  const std::string t = lower(text);
  const bool negated = contains(t, "none were found") || contains(t, "no suspicious");
  const bool artifact = contains(t, "type:") || contains(t, "appearance:") || contains(t, "location:");
  if (negated) return Verdict::clean("reply states no triggers were found");
  if (artifact) return Verdict::poison("reply lists suspicious artifacts");
  return Verdict::clean("reply reports no artifacts");
}

struct Endpoint {
  std::string base; // scheme://host:port
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError(fmt::format("malformed endpoint URL '{}'", url));
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

Verdict parse_verdict(std::string_view body) {
  const auto first = body.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return Verdict::abstain("empty response body");

  const json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_object()) {
    std::string why = j.contains("rationale") && j["rationale"].is_string() ? j["rationale"].get<std::string>() : "";
    if (j.contains("verdict") && j["verdict"].is_string()) {
      const std::string v = lower(j["verdict"].get<std::string>());
      if (v == "clean") return Verdict::clean(why.empty() ? "structured verdict" : why);
      if (v == "poisoned") return Verdict::poison(why.empty() ? "structured verdict" : why);
    }
    for (const char* key : {"rationale", "text", "response"}) {
      if (j.contains(key) && j[key].is_string()) return parse_free_text(j[key].get<std::string>());
    }
  }
  return parse_free_text(body);
}

std::string base64_encode(std::string_view bytes) { return httplib::detail::base64_encode(std::string(bytes)); }

std::string build_request_body(const Image& x, std::string_view prompt) {
  const auto png = encode_png(x);
  json j;
  j["image_b64"] = base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  j["prompt"] = std::string(prompt);
  return j.dump();
}

Verdict detect_remote(const RemoteDetectorConfig& cfg, const Image& x) {
  Endpoint ep;
  try {
    cfg.validate();
    ep = split_url(cfg.endpoint_url);
  } catch (const ValidationError& e) {
    return Verdict::abstain(fmt::format("remote detector misconfigured: {}", e.what()));
  }
  const std::string body = build_request_body(x, cfg.prompt);

  httplib::Client client(ep.base);
  if (!client.is_valid()) return Verdict::abstain(fmt::format("unsupported endpoint '{}'", cfg.endpoint_url));
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (cfg.auth_token) headers.emplace("Authorization", "Bearer " + *cfg.auth_token);

  std::string last_error;
  const std::uint32_t attempts = cfg.max_retries + 1;
  for (std::uint32_t attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0 && cfg.retry_backoff.count() > 0) std::this_thread::sleep_for(cfg.retry_backoff);
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    Verdict v = parse_verdict(res->body);
    if (attempt > 0) v.rationale += fmt::format(" (after {} retries)", attempt);
    return v;
  }
  return Verdict::abstain(fmt::format("remote detector gave up after {} attempts: {}", attempts, last_error));
}

RemoteDetector::RemoteDetector(RemoteDetectorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

std::string RemoteDetector::name() const {
  return "remote:" + cfg_.endpoint_url;
}

Verdict RemoteDetector::evaluate(const DetectorInput& input) const {
  if (!cfg_.cache) return detect_remote(cfg_, input.image);
  const auto png = encode_png(input.image);
  const std::uint64_t key =
      fnv1a64(std::string_view(reinterpret_cast<const char*>(png.data()), png.size())) ^ splitmix64(fnv1a64(cfg_.prompt));
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  Verdict v = detect_remote(cfg_, input.image);
  if (!v.abstained) {
    std::lock_guard lock(cache_mutex_);
    cache_.emplace(key, v);
  }
  return v;
}

} // namespace bf
