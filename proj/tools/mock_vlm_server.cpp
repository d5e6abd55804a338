#include <cstdio>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bf/error.hpp"
#include "bf/vlm_mock.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stand-in VLM endpoint for offline testing", "mock_vlm_server"};
  std::string scenario = "always-clean";
  std::string token;
  int port = 0;
  app.add_option("--scenario", scenario, "always-clean | always-poisoned | json | flaky:N | stalling:MS");
  app.add_option("--port", port, "0 picks a free port");
  app.add_option("--token", token, "require this bearer token");
  CLI11_PARSE(app, argc, argv);
  try {
    bf::MockScenario s = bf::parse_mock_scenario(scenario);
    s.required_token = token;
    bf::MockVlmServer server(s);
    server.serve_forever(port);
  } catch (const bf::ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "runtime error: {}\n", e.what());
    return 2;
  }
  return 0;
}
