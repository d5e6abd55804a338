#include "bf/vlm_mock.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "bf/error.hpp"

namespace bf {

namespace {

constexpr const char* kCleanReply =
    "I examined the image for patches, overlays, accessories and noise. No suspicious triggers are present; "
    "none were found.";
constexpr const char* kPoisonedReply =
    "Suspicious artifact detected.\n- Type: Sticker\n- Appearance: high-contrast checkerboard square\n"
    "- Location: lower right corner";

std::uint32_t parse_count(std::string_view text, std::string_view what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(std::string(text), &used);
    if (used != text.size() || v < 0) throw std::invalid_argument("bad");
    return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("invalid {} '{}' in mock scenario", what, text));
  }
}

} // namespace

MockScenario parse_mock_scenario(std::string_view text) {
  MockScenario s;
  if (text == "always-clean") {
    s.behavior = MockBehavior::always_clean;
  } else if (text == "always-poisoned") {
    s.behavior = MockBehavior::always_poisoned;
  } else if (text == "json") {
    s.behavior = MockBehavior::json_poisoned;
  } else if (text.starts_with("flaky:")) {
    s.behavior = MockBehavior::flaky;
    s.failures = parse_count(text.substr(6), "failure count");
  } else if (text.starts_with("stalling:")) {
    s.behavior = MockBehavior::stalling;
    s.stall = std::chrono::milliseconds(parse_count(text.substr(9), "stall duration"));
  } else {
    throw ValidationError(fmt::format("unknown mock scenario '{}'", text));
  }
  return s;
}

MockVlmServer::MockVlmServer(MockScenario scenario)
    : scenario_(std::move(scenario)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

MockVlmServer::~MockVlmServer() {
  stop();
}

void MockVlmServer::install_routes() {
  server_->Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
    const std::uint64_t n = requests_.fetch_add(1);
    if (!scenario_.required_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + scenario_.required_token) {
      res.status = 401;
      return;
    }
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (!body.is_object() || !body.contains("image_b64") || !body.contains("prompt")) {
      res.status = 400;
      res.set_content("{\"error\":\"expected image_b64 and prompt\"}", "application/json");
      return;
    }
    const char* after = scenario_.poisoned_after ? kPoisonedReply : kCleanReply;
    switch (scenario_.behavior) {
    case MockBehavior::always_clean:
      res.set_content(kCleanReply, "text/plain");
      break;
    case MockBehavior::always_poisoned:
      res.set_content(kPoisonedReply, "text/plain");
      break;
    case MockBehavior::json_poisoned:
      res.set_content(R"({"verdict":"poisoned","rationale":"patch in corner"})", "application/json");
      break;
    case MockBehavior::flaky:
      if (n < scenario_.failures) {
        res.status = 503;
        return;
      }
      res.set_content(after, "text/plain");
      break;
    case MockBehavior::stalling:
      std::this_thread::sleep_for(scenario_.stall);
      res.set_content(after, "text/plain");
      break;
    }
    res.status = 200;
  });
}

int MockVlmServer::start(int port) {
  if (thread_.joinable()) throw RuntimeError("mock server already running");
  port_ = port == 0 ? server_->bind_to_any_port("127.0.0.1") : (server_->bind_to_port("127.0.0.1", port) ? port : -1);
  if (port_ <= 0) throw RuntimeError(fmt::format("mock server could not bind port {}", port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockVlmServer::serve_forever(int port) {
  port_ = port == 0 ? server_->bind_to_any_port("127.0.0.1") : (server_->bind_to_port("127.0.0.1", port) ? port : -1);
  if (port_ <= 0) throw RuntimeError(fmt::format("mock server could not bind port {}", port));
  fmt::print("listening on {}\n", url());
  std::fflush(stdout);
  server_->listen_after_bind();
}

void MockVlmServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockVlmServer::url() const {
  return fmt::format("http://127.0.0.1:{}/v1/detect", port_);
}

} // namespace bf
