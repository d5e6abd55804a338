#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

namespace httplib {
class Server;
}

namespace bf {

enum class MockBehavior { always_clean, always_poisoned, json_poisoned, flaky, stalling };

struct MockScenario {
  MockBehavior behavior = MockBehavior::always_clean;
  // flaky: number of leading requests answered with 503.
  std::uint32_t failures = 0;
  // stalling: delay before every reply.
  std::chrono::milliseconds stall{0};
  // Verdict served once flaky requests are exhausted or after a stall.
  bool poisoned_after = true;
  // When set, requests without "Authorization: Bearer <token>" get 401.
  std::string required_token;
};

// "always-clean", "always-poisoned", "json", "flaky:N", "stalling:MS".
MockScenario parse_mock_scenario(std::string_view text);

// In-process HTTP stand-in for a VLM endpoint, listening on 127.0.0.1.
class MockVlmServer {
public:
  explicit MockVlmServer(MockScenario scenario);
  ~MockVlmServer();
  MockVlmServer(const MockVlmServer&) = delete;
  MockVlmServer& operator=(const MockVlmServer&) = delete;

  // Binds to `port` (0 picks a free one) and serves on a background thread.
  int start(int port = 0);
  void stop();
  // Blocks serving on the calling thread.
  void serve_forever(int port);

  int port() const { return port_; }
  std::string url() const;
  std::uint64_t request_count() const { return requests_.load(); }

private:
  void install_routes();

  MockScenario scenario_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<std::uint64_t> requests_{0};
  int port_ = 0;
};

} // namespace bf
