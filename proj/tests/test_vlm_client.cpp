#include <chrono>
#include <cstdlib>

#include <gtest/gtest.h>
#include <json.hpp>

#include "bf/error.hpp"
#include "bf/vlm_client.hpp"
#include "bf/vlm_mock.hpp"

using namespace bf;
using namespace std::chrono_literals;

namespace {

Image tiny_image() {
  return Image(Shape{2, 2, 3}, {0.f, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f, 1.f, 0.5f});
}

RemoteDetectorConfig config_for(const MockVlmServer& s) {
  RemoteDetectorConfig c;
  c.endpoint_url = s.url();
  c.timeout = 2000ms;
  c.max_retries = 2;
  return c;
}

} // namespace

TEST(ParseVerdict, StructuredVerdictWins) {
  EXPECT_TRUE(parse_verdict(R"({"verdict":"poisoned"})").poisoned());
  EXPECT_FALSE(parse_verdict(R"({"verdict":"Clean","rationale":"Type: sticker"})").poisoned());
  EXPECT_EQ(parse_verdict(R"({"verdict":"poisoned","rationale":"corner patch"})").rationale, "corner patch");
}

TEST(ParseVerdict, ArtifactListIsPoisoned) {
  EXPECT_TRUE(parse_verdict("- **Type:** Sticker\n- **Appearance:** red square\n- **Location:** forehead").poisoned());
  EXPECT_TRUE(parse_verdict("location: lower left corner").poisoned());
}

TEST(ParseVerdict, NegationWins) {
  EXPECT_FALSE(parse_verdict("No suspicious triggers are present.").poisoned());
  EXPECT_FALSE(parse_verdict("I checked Type: and Location: fields; none were found.").poisoned());
  EXPECT_FALSE(parse_verdict("The image looks like an ordinary portrait.").poisoned());
}

TEST(ParseVerdict, EmptyBodyAbstains) {
  const Verdict v = parse_verdict("  \n\t");
  EXPECT_TRUE(v.abstained);
  EXPECT_FALSE(v.poisoned());
  EXPECT_TRUE(parse_verdict("").abstained);
}

TEST(ParseVerdict, JsonWithTextFieldFallsBackToText) {
  EXPECT_TRUE(parse_verdict(R"({"text":"Type: noise"})").poisoned());
  EXPECT_FALSE(parse_verdict(R"({"verdict":"maybe","rationale":"none were found"})").poisoned());
}

TEST(Base64, Rfc4648Vectors) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foo"), "Zm9v");
  EXPECT_EQ(base64_encode("foob"), "Zm9vYg==");
  EXPECT_EQ(base64_encode("fooba"), "Zm9vYmE=");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

TEST(RequestBody, CarriesPngAndPrompt) {
  const auto body = nlohmann::json::parse(build_request_body(tiny_image(), "look closely"));
  EXPECT_EQ(body["prompt"], "look closely");
  EXPECT_EQ(body["image_b64"].get<std::string>().rfind("iVBORw0KGgo", 0), 0u); // PNG signature
}

TEST(DefaultPrompt, AsksForStructuredArtifactReport) {
  const std::string p(kDefaultVlmPrompt);
  for (const char* s : {"Type:", "Appearance:", "Location:", "none were found"}) EXPECT_NE(p.find(s), std::string::npos);
}

TEST(RemoteDetector, CleanAndPoisonedScenarios) {
  MockVlmServer clean(parse_mock_scenario("always-clean"));
  clean.start();
  EXPECT_FALSE(detect_remote(config_for(clean), tiny_image()).poisoned());
  MockVlmServer dirty(parse_mock_scenario("always-poisoned"));
  dirty.start();
  EXPECT_TRUE(detect_remote(config_for(dirty), tiny_image()).poisoned());
  MockVlmServer js(parse_mock_scenario("json"));
  js.start();
  EXPECT_TRUE(detect_remote(config_for(js), tiny_image()).poisoned());
  EXPECT_EQ(clean.request_count(), 1u);
}

TEST(RemoteDetector, RetriesTransientFailures) {
  MockVlmServer s(parse_mock_scenario("flaky:2"));
  s.start();
  const Verdict v = detect_remote(config_for(s), tiny_image());
  EXPECT_FALSE(v.abstained);
  EXPECT_TRUE(v.poisoned());
  EXPECT_NE(v.rationale.find("after 2 retries"), std::string::npos);
  EXPECT_EQ(s.request_count(), 3u);
}

TEST(RemoteDetector, ExhaustedRetriesAbstain) {
  MockVlmServer s(parse_mock_scenario("flaky:10"));
  s.start();
  auto cfg = config_for(s);
  cfg.max_retries = 3;
  const Verdict v = detect_remote(cfg, tiny_image());
  EXPECT_TRUE(v.abstained);
  EXPECT_FALSE(v.poisoned());
  EXPECT_NE(v.rationale.find("4 attempts"), std::string::npos);
  EXPECT_EQ(s.request_count(), 4u);
}

TEST(RemoteDetector, StallingServerTimesOut) {
  MockVlmServer s(parse_mock_scenario("stalling:1500"));
  s.start();
  auto cfg = config_for(s);
  cfg.timeout = 200ms;
  cfg.max_retries = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const Verdict v = detect_remote(cfg, tiny_image());
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_TRUE(v.abstained);
  EXPECT_LT(elapsed, 1500ms);
  EXPECT_EQ(s.request_count(), 2u);
}

TEST(RemoteDetector, UnreachableEndpointAbstains) {
  RemoteDetectorConfig cfg;
  cfg.endpoint_url = "http://127.0.0.1:1/v1/detect";
  cfg.timeout = 300ms;
  cfg.max_retries = 1;
  EXPECT_TRUE(detect_remote(cfg, tiny_image()).abstained);
  cfg.endpoint_url = "not a url";
  EXPECT_TRUE(detect_remote(cfg, tiny_image()).abstained);
}

TEST(RemoteDetector, SendsBearerToken) {
  MockScenario sc = parse_mock_scenario("always-poisoned");
  sc.required_token = "s3cret";
  MockVlmServer s(sc);
  s.start();
  auto cfg = config_for(s);
  cfg.max_retries = 0;
  EXPECT_TRUE(detect_remote(cfg, tiny_image()).abstained);
  cfg.auth_token = "s3cret";
  EXPECT_TRUE(detect_remote(cfg, tiny_image()).poisoned());
}

TEST(RemoteDetector, TokenFromEnvironment) {
  ::setenv("BF_AUTH_TOKEN", "from-env", 1);
  RemoteDetectorConfig cfg;
  apply_auth_from_env(cfg);
  ASSERT_TRUE(cfg.auth_token.has_value());
  EXPECT_EQ(*cfg.auth_token, "from-env");
  cfg.auth_token = "explicit";
  apply_auth_from_env(cfg);
  EXPECT_EQ(*cfg.auth_token, "explicit");
  ::unsetenv("BF_AUTH_TOKEN");
}

TEST(RemoteDetector, CacheAvoidsRepeatRequests) {
  MockVlmServer s(parse_mock_scenario("always-poisoned"));
  s.start();
  auto cfg = config_for(s);
  cfg.cache = true;
  const RemoteDetector d(cfg);
  const Image x = tiny_image();
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(d.evaluate({x, std::nullopt, static_cast<std::uint64_t>(i)}).poisoned());
  EXPECT_EQ(s.request_count(), 1u);
}

TEST(MockScenario, ParsesAndRejects) {
  EXPECT_EQ(parse_mock_scenario("flaky:3").failures, 3u);
  EXPECT_EQ(parse_mock_scenario("stalling:250").stall, 250ms);
  EXPECT_THROW(parse_mock_scenario("flaky:x"), ValidationError);
  EXPECT_THROW(parse_mock_scenario("weird"), ValidationError);
}

TEST(RemoteDetector, ConfigValidation) {
  RemoteDetectorConfig cfg;
  EXPECT_THROW(RemoteDetector{cfg}, ValidationError);
  cfg.endpoint_url = "http://127.0.0.1:9/";
  cfg.timeout = 0ms;
  EXPECT_THROW(RemoteDetector{cfg}, ValidationError);
}
