#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "occupred/digest.hpp"
#include "occupred/llm_gateway.hpp"

using namespace occupred;
namespace fs = std::filesystem;

namespace {

ChatRequest req(const std::string& text, int attempt = 0) {
  ChatRequest r;
  r.endpoint_id = "gen";
  r.model = "m";
  r.messages = {{Role::system, "sys"}, {Role::user, text}};
  r.attempt_index = attempt;
  return r;
}

ScriptedStep say(std::string text, int delay_ms = 0) {
  ScriptedStep s;
  s.text = std::move(text);
  s.delay = std::chrono::milliseconds(delay_ms);
  return s;
}

ScriptedStep fail(ScriptedStep::Kind k = ScriptedStep::Kind::transport_error) {
  ScriptedStep s;
  s.kind = k;
  return s;
}

PlaybookRule rule(std::string contains, std::vector<ScriptedStep> steps) {
  PlaybookRule r;
  r.name = contains;
  r.match.contains = {std::move(contains)};
  r.steps = std::move(steps);
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("occupred-test-" + std::to_string(std::rand()) + "-" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

GatewayOptions no_sleep(std::vector<std::chrono::milliseconds>* log = nullptr) {
  GatewayOptions o;
  o.sleeper = [log](std::chrono::milliseconds d) {
    if (log) log->push_back(d);
  };
  return o;
}

}  // namespace

TEST_CASE("request validation") {
  auto r = req("hi");
  CHECK_NOTHROW(r.validate());
  r.temperature = 2.5;
  CHECK_THROWS_AS(r.validate(), InvalidArgument);
  r = req("hi");
  r.messages = {{Role::system, "only system"}};
  CHECK_THROWS_AS(r.validate(), InvalidArgument);
}

TEST_CASE("cache key") {
  const auto base = req("prompt");
  CHECK(request_digest(base) == request_digest(base));
  CHECK(request_digest(base) != request_digest(req("prompt", 1)));
  auto labelled = base;
  labelled.labels["user_id"] = "u1";
  CHECK(request_digest(base) == request_digest(labelled));
  auto seeded = base;
  seeded.sampling_seed = 5;
  CHECK(request_digest(base) != request_digest(seeded));
  auto warmer = base;
  warmer.temperature = 0.81;
  CHECK(request_digest(base) != request_digest(warmer));
  CHECK(request_digest(base).size() == 64);
}

TEST_CASE("complete: cache contract") {
  TempDir tmp;
  auto mock = std::make_shared<ScriptedMock>(Playbook{{rule("prompt", {say("first"), say("second")})}});
  auto opts = no_sleep();
  opts.cache_dir = tmp.path;
  Gateway gw(mock, opts);
  auto a = gw.complete(req("prompt"));
  auto b = gw.complete(req("prompt"));
  CHECK(a.text == "first");
  CHECK(b == a);
  CHECK(mock->calls() == 1);
  CHECK(gw.counters().cache_hits == 1);
  // a different attempt index is a different sample
  CHECK(gw.complete(req("prompt", 1)).text == "second");
  CHECK(mock->calls() == 2);

  // a fresh gateway over the same directory is served from disk
  auto mock2 = std::make_shared<ScriptedMock>(Playbook{});
  Gateway gw2(mock2, opts);
  CHECK(gw2.complete(req("prompt")) == a);
  CHECK(mock2->calls() == 0);
}

TEST_CASE("complete: retries") {
  SUBCASE("fail twice then succeed with three attempts") {
    std::vector<std::chrono::milliseconds> sleeps;
    auto mock = std::make_shared<ScriptedMock>(Playbook{{rule("p", {fail(), fail(ScriptedStep::Kind::rate_limited), say("ok")})}});
    Gateway gw(mock, no_sleep(&sleeps));
    CHECK(gw.complete(req("p")).text == "ok");
    CHECK(mock->calls() == 3);
    REQUIRE(sleeps.size() == 2);
    CHECK(sleeps[0] == std::chrono::milliseconds(500));
    CHECK(sleeps[1] == std::chrono::milliseconds(1000));
  }
  SUBCASE("always failing surfaces TransportError after max attempts") {
    auto mock = std::make_shared<ScriptedMock>(Playbook{{rule("p", {fail()})}});
    Gateway gw(mock, no_sleep());
    CHECK_THROWS_AS(gw.complete(req("p")), TransportError);
    CHECK(mock->calls() == 3);
  }
  SUBCASE("rate limit surfaces after the budget") {
    auto mock = std::make_shared<ScriptedMock>(Playbook{{rule("p", {fail(ScriptedStep::Kind::rate_limited)})}});
    Gateway gw(mock, no_sleep());
    CHECK_THROWS_AS(gw.complete(req("p")), RateLimited);
  }
  SUBCASE("malformed responses are not retried") {
    auto mock = std::make_shared<ScriptedMock>(Playbook{{rule("p", {fail(ScriptedStep::Kind::malformed), say("x")})}});
    Gateway gw(mock, no_sleep());
    CHECK_THROWS_AS(gw.complete(req("p")), MalformedResponse);
    CHECK(mock->calls() == 1);
  }
  SUBCASE("positive logprobs are malformed") {
    auto step = say("x");
    step.token_logprobs = std::vector<TokenLogprob>{{"x", 0.5}};
    auto mock = std::make_shared<ScriptedMock>(Playbook{{rule("p", {step})}});
    Gateway gw(mock, no_sleep());
    CHECK_THROWS_AS(gw.complete(req("p")), MalformedResponse);
  }
  SUBCASE("backoff is capped") {
    RetryPolicy p;
    CHECK(p.delay(1).count() == 500);
    CHECK(p.delay(4).count() == 4000);
    CHECK(p.delay(9).count() == 8000);
  }
}

TEST_CASE("complete_batch") {
  SUBCASE("order preserved under adversarial delays, in-flight bounded") {
    Playbook pb;
    for (int i = 0; i < 5; ++i) pb.rules.push_back(rule("item-" + std::to_string(i), {say("r" + std::to_string(i), (5 - i) * 15)}));
    auto mock = std::make_shared<ScriptedMock>(pb);
    Gateway gw(mock, no_sleep());
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 5; ++i) reqs.push_back(req("item-" + std::to_string(i)));
    auto out = gw.complete_batch(reqs, 2);
    REQUIRE(out.size() == 5);
    for (int i = 0; i < 5; ++i) {
      REQUIRE(out[i].ok());
      CHECK(out[i].response->text == "r" + std::to_string(i));
    }
    CHECK(mock->max_concurrent() <= 2);
    CHECK(mock->max_concurrent() >= 1);
  }
  SUBCASE("every completion-timing permutation keeps positional results") {
    std::vector<int> delays = {0, 10, 20};
    do {
      Playbook pb;
      for (int i = 0; i < 3; ++i) pb.rules.push_back(rule("k" + std::to_string(i), {say("v" + std::to_string(i), delays[i])}));
      Gateway gw(std::make_shared<ScriptedMock>(pb), no_sleep());
      auto out = gw.complete_batch({req("k0"), req("k1"), req("k2")}, 3);
      for (int i = 0; i < 3; ++i) CHECK(out[i].response->text == "v" + std::to_string(i));
    } while (std::next_permutation(delays.begin(), delays.end()));
  }
  SUBCASE("one failing item") {
    Playbook pb;
    for (int i = 0; i < 5; ++i) pb.rules.push_back(rule("item-" + std::to_string(i), {i == 3 ? fail() : say("ok")}));
    Gateway gw(std::make_shared<ScriptedMock>(pb), no_sleep());
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 5; ++i) reqs.push_back(req("item-" + std::to_string(i)));
    auto out = gw.complete_batch(reqs, 3);
    CHECK(std::count_if(out.begin(), out.end(), [](const CallResult& r) { return r.ok(); }) == 4);
    REQUIRE(out[3].error.has_value());
    CHECK(out[3].error->kind == "TransportError");
  }
  SUBCASE("max_in_flight = 1 is serial in input order") {
    Playbook pb{{rule("item", {say("x")})}};
    auto mock = std::make_shared<ScriptedMock>(pb);
    Gateway gw(mock, no_sleep());
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 6; ++i) reqs.push_back(req("item " + std::to_string(i)));
    gw.complete_batch(reqs, 1);
    auto t = mock->transcript();
    REQUIRE(t.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(t[i].messages[1].content == "item " + std::to_string(i));
    CHECK(mock->max_concurrent() == 1);
  }
  SUBCASE("identical requests are sent once and share the earliest result") {
    Playbook pb{{rule("same", {say("first"), say("second")})}};
    auto mock = std::make_shared<ScriptedMock>(pb);
    Gateway gw(mock, no_sleep());
    auto a = req("same");
    auto b = req("same");
    b.labels["user_id"] = "other";
    auto out = gw.complete_batch({a, req("same", 1), b}, 3);
    CHECK(mock->calls() == 2);
    CHECK(out[0].response == out[2].response);
    CHECK(mock->transcript().size() == 2);
  }
  SUBCASE("zero in flight rejected") {
    Gateway gw(std::make_shared<ScriptedMock>(Playbook{}), no_sleep());
    CHECK_THROWS_AS(gw.complete_batch({req("x")}, 0), InvalidArgument);
  }
}

TEST_CASE("scripted mock") {
  SUBCASE("pattern keyed canned reply") {
    ScriptedMock mock(Playbook{{rule("NEXT_OCCUPATION", {say("REASON: r\nNEXT_OCCUPATION: Pharmacists")})}});
    CHECK(mock.send(req("... NEXT_OCCUPATION: ...")).text.find("Pharmacists") != std::string::npos);
  }
  SUBCASE("ordered steps for one key") {
    ScriptedMock mock(Playbook{{rule("k", {say("wrong"), say("correct")})}});
    CHECK(mock.send(req("k")).text == "wrong");
    CHECK(mock.send(req("k")).text == "correct");
    CHECK(mock.send(req("k")).text == "correct");
  }
  SUBCASE("miss") {
    ScriptedMock mock(Playbook{{rule("k", {say("x")})}});
    CHECK_THROWS_AS(mock.send(req("other")), PlaybookMiss);
    auto r = rule("k", {say("x")});
    r.repeat_last = false;
    ScriptedMock once(Playbook{{r}});
    once.send(req("k"));
    CHECK_THROWS_AS(once.send(req("k")), PlaybookMiss);
    CHECK(once.transcript().back().outcome == "PlaybookMiss");
  }
  SUBCASE("label, attempt and digest matching") {
    PlaybookRule a;
    a.match.labels = {{"user_id", "u2"}};
    a.match.attempt_index = 1;
    a.steps = {say("u2-a1")};
    PlaybookRule d;
    d.match.digest = request_digest(req("exact"));
    d.steps = {say("by-digest")};
    ScriptedMock mock(Playbook{{a, d}});
    auto r = req("anything", 1);
    r.labels["user_id"] = "u2";
    CHECK(mock.send(r).text == "u2-a1");
    r.attempt_index = 0;
    CHECK_THROWS_AS(mock.send(r), PlaybookMiss);
    CHECK(mock.send(req("exact")).text == "by-digest");
  }
  SUBCASE("JSON round trip") {
    auto r = rule("k", {say("x", 3), fail(ScriptedStep::Kind::rate_limited)});
    r.match.labels = {{"stage", "forge"}};
    r.match.attempt_index = 2;
    r.repeat_last = false;
    Playbook pb{{r}};
    auto back = Playbook::from_json(pb.to_json());
    CHECK(back.to_json() == pb.to_json());
    CHECK(back.rules[0].steps[1].kind == ScriptedStep::Kind::rate_limited);
  }
}

TEST_CASE("HTTP backend against a local server") {
  httplib::Server server;
  std::string seen_auth;
  Json seen_body;
  int hits = 0;
  server.Post("/v1/chat/completions", [&](const httplib::Request& rq, httplib::Response& rs) {
    ++hits;
    seen_auth = rq.get_header_value("Authorization");
    seen_body = Json::parse(rq.body);
    if (hits == 1) {
      rs.status = 503;
      return;
    }
    rs.set_content(R"({"choices":[{"message":{"role":"assistant","content":"REASON: x\nNEXT_OCCUPATION: Pharmacists"},
      "finish_reason":"stop","logprobs":{"content":[{"token":"REASON","logprob":-0.25}]}}],
      "usage":{"prompt_tokens":12,"completion_tokens":7}})",
                   "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string secret = "sk-test-SECRET-9f8e7d";
  ::setenv("OCCUPRED_TEST_KEY", secret.c_str(), 1);
  EndpointConfig ep;
  ep.id = "gen";
  ep.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  ep.api_key_env = "OCCUPRED_TEST_KEY";
  ep.timeout = std::chrono::milliseconds(5000);

  TempDir tmp;
  auto opts = no_sleep();
  opts.cache_dir = tmp.path;
  Gateway gw(std::make_shared<HttpBackend>(std::vector<EndpointConfig>{ep}), opts);
  auto request = req("predict");
  request.sampling_seed = 42;
  request.logprobs = true;
  auto resp = gw.complete(request);
  server.stop();
  th.join();

  CHECK(hits == 2);  // 503 retried
  CHECK(resp.text == "REASON: x\nNEXT_OCCUPATION: Pharmacists");
  CHECK(resp.usage.prompt_tokens == 12);
  REQUIRE(resp.token_logprobs.has_value());
  CHECK((*resp.token_logprobs)[0].logprob == doctest::Approx(-0.25));
  CHECK(seen_auth == "Bearer " + secret);
  CHECK(seen_body["seed"] == 42);
  CHECK(seen_body["messages"][1]["content"] == "predict");
  CHECK(seen_body["logprobs"] == true);
  CHECK_FALSE(seen_body.contains("labels"));

  for (const auto& f : fs::recursive_directory_iterator(tmp.path)) {
    if (f.is_regular_file()) CHECK(read_file(f.path()).find(secret) == std::string::npos);
  }
  ::unsetenv("OCCUPRED_TEST_KEY");
  CHECK_THROWS_AS(HttpBackend({ep}).send(req("x")), TransportError);
}

TEST_CASE("response parsing") {
  CHECK_THROWS_AS(HttpBackend::parse_response_body("not json"), MalformedResponse);
  CHECK_THROWS_AS(HttpBackend::parse_response_body(R"({"choices":[]})"), MalformedResponse);
  auto r = HttpBackend::parse_response_body(R"({"choices":[{"message":{"content":"hi"},"finish_reason":"length"}]})");
  CHECK(r.text == "hi");
  CHECK(r.finish_reason == FinishReason::length);
  CHECK_FALSE(r.token_logprobs.has_value());
}
