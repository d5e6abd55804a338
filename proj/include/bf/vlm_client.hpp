#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "bf/detection.hpp"
#include "bf/image.hpp"

namespace bf {

// Anomaly-elicitation prompt sent with every image.
extern const std::string_view kDefaultVlmPrompt;

struct RemoteDetectorConfig {
  std::string endpoint_url; // http://host:port/path
  std::chrono::milliseconds timeout{10000};
  std::uint32_t max_retries = 2;
  std::chrono::milliseconds retry_backoff{0};
  std::string prompt{kDefaultVlmPrompt};
  std::optional<std::string> auth_token;
  bool cache = false;

  void validate() const;
};

// Reads BF_AUTH_TOKEN into cfg.auth_token when it is set and cfg has none.
void apply_auth_from_env(RemoteDetectorConfig& cfg);

// Turns a reply body into a verdict. Structured {"verdict": ...} replies win;
// otherwise free text is poisoned iff it contains an artifact-report marker
// ("Type:", "Appearance:", "Location:") and no negation marker ("none were
// found", "no suspicious"). Matching is case-insensitive. Total: an empty
// body yields an abstain vote, never an exception.
Verdict parse_verdict(std::string_view body);

// Wire request body: {"image_b64": <base64 PNG>, "prompt": <text>}.
std::string build_request_body(const Image& x, std::string_view prompt);

std::string base64_encode(std::string_view bytes);

// POSTs the image to the endpoint with up to max_retries retries (transport
// errors and non-200 replies are retried). Never throws for network
// problems: exhaustion returns an abstain vote whose rationale records the
// attempts. The rationale of a successful call notes how many retries it took.
Verdict detect_remote(const RemoteDetectorConfig& cfg, const Image& x);

class RemoteDetector final : public Detector {
public:
  explicit RemoteDetector(RemoteDetectorConfig cfg);
  std::string name() const override;
  Verdict evaluate(const DetectorInput& input) const override;

private:
  RemoteDetectorConfig cfg_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::uint64_t, Verdict> cache_;
};

} // namespace bf
