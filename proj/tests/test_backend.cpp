#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "feedloop/backend.hpp"
#include "feedloop/errors.hpp"
#include "feedloop/types.hpp"
#include "helpers.hpp"

using namespace feedloop;
using nlohmann::json;

namespace {

Instruction make_instruction(const std::string& id, const std::string& prompt) {
  Instruction ins;
  ins.id = id;
  ins.prompt = prompt;
  return ins;
}

/// In-process HTTP stub. Each test installs one POST handler; the server
/// owns a random loopback port.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit StubServer(const std::string& path, Handler handler) {
    server_.Post(path, [handler = std::move(handler)](const httplib::Request& req,
                                                      httplib::Response& res) { handler(req, res); });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

ModelEndpoint http_endpoint(const std::string& base_url,
                            Modality modality = Modality::vision_text) {
  ModelEndpoint ep;
  ep.id = "under-test";
  ep.base_url = base_url;
  ep.model_name = "served-model";
  ep.modality = modality;
  return ep;
}

BackendOptions fast_options() {
  BackendOptions o;
  o.max_attempts = 3;
  o.initial_backoff_ms = 1;
  o.backoff_factor = 1.0;
  o.timeout_s = 5;
  return o;
}

}  // namespace

// ---------------------------------------------------------------------------
// mock backend: fixture lookup

TEST_CASE("fixture sample entries match on prompt, substring, and seed") {
  testutil::TempDir dir;
  json fixture;
  fixture["synthesize"] = false;
  fixture["sample"] = json::array({
      json{{"prompt", "exact question"}, {"seed", 3}, {"text", "seeded answer"}},
      json{{"prompt", "exact question"}, {"text", "any-seed answer"}},
      json{{"prompt_contains", "needle"}, {"text", "substring answer"}},
  });
  const std::string path = dir.file("f.json");
  testutil::write_file(path, fixture.dump());
  auto backend = make_backend(testutil::mock_endpoint(path));

  SamplingParams params;
  params.seed = 3;
  CHECK(backend->sample(make_instruction("i", "exact question"), params).text == "seeded answer");

  params.seed = 8;  // first entry requires seed 3, so the second wins
  CHECK(backend->sample(make_instruction("i", "exact question"), params).text == "any-seed answer");

  CHECK(backend->sample(make_instruction("i", "hay needle stack"), params).text ==
        "substring answer");

  CHECK_THROWS_AS(backend->sample(make_instruction("i", "unmatched"), params), BackendRefusal);
}

TEST_CASE("fixture file order decides between overlapping entries") {
  testutil::TempDir dir;
  json fixture;
  fixture["sample"] = json::array({
      json{{"prompt_contains", "alpha"}, {"text", "first"}},
      json{{"prompt_contains", "alpha beta"}, {"text", "second"}},
  });
  const std::string path = dir.file("f.json");
  testutil::write_file(path, fixture.dump());
  auto backend = make_backend(testutil::mock_endpoint(path));
  CHECK(backend->sample(make_instruction("i", "alpha beta"), SamplingParams{}).text == "first");
}

TEST_CASE("malformed fixture files fail at construction") {
  testutil::TempDir dir;
  const std::string path = dir.file("broken.json");
  testutil::write_file(path, "not json at all");
  CHECK_THROWS_AS(make_backend(testutil::mock_endpoint(path)), SchemaError);

  testutil::write_file(path, "[1,2,3]");
  CHECK_THROWS_AS(make_backend(testutil::mock_endpoint(path)), SchemaError);
}

TEST_CASE("fixture score entries validate token concatenation and logprob sign") {
  testutil::TempDir dir;
  json fixture;
  fixture["synthesize"] = false;
  fixture["score"] = json::array({
      json{{"text", "ab cd"},
           {"tokens", json::array({json{{"token", "ab"}, {"logprob", -0.5}},
                                   json{{"token", " cd"}, {"logprob", -1.25}}})}},
      json{{"text", "gap"},
           {"tokens", json::array({json{{"token", "ga"}, {"logprob", -0.1}}})}},
      json{{"text", "pos"},
           {"tokens", json::array({json{{"token", "pos"}, {"logprob", 0.5}}})}},
  });
  const std::string path = dir.file("f.json");
  testutil::write_file(path, fixture.dump());
  auto backend = make_backend(testutil::mock_endpoint(path));
  const Instruction ins = make_instruction("i", "q");

  const auto lp = backend->score_continuation(ins, "ab cd");
  REQUIRE(lp.size() == 2);
  CHECK(lp[0].token_text == "ab");
  CHECK(lp[0].logprob == -0.5);
  CHECK(lp[1].token_text == " cd");
  CHECK(lp[1].logprob == -1.25);

  // Tokens that do not rebuild the text are a lying fixture.
  CHECK_THROWS_AS(backend->score_continuation(ins, "gap"), BackendRefusal);
  // Positive logprobs are impossible.
  CHECK_THROWS_AS(backend->score_continuation(ins, "pos"), BackendRefusal);
  CHECK_THROWS_AS(backend->score_continuation(ins, ""), EmptyResponse);
}

TEST_CASE("fixture next_token entries are validated as a distribution") {
  testutil::TempDir dir;
  json fixture;
  fixture["synthesize"] = false;
  fixture["next_token"] = json::array({
      json{{"prompt", "ok"},
           {"entries", json::array({json{{"token", "Yes"}, {"p", 0.6}},
                                    json{{"token", "No"}, {"p", 0.3}}})}},
      json{{"prompt", "overflow"},
           {"entries", json::array({json{{"token", "Yes"}, {"p", 0.9}},
                                    json{{"token", "No"}, {"p", 0.4}}})}},
      json{{"prompt", "negative"},
           {"entries", json::array({json{{"token", "Yes"}, {"p", -0.1}}})}},
  });
  const std::string path = dir.file("f.json");
  testutil::write_file(path, fixture.dump());
  auto backend = make_backend(testutil::mock_endpoint(path));

  const auto dist = backend->next_token_distribution("ok", std::nullopt);
  REQUIRE(dist.entries.size() == 2);
  CHECK(dist.entries[0].first == "Yes");
  CHECK(dist.entries[0].second == 0.6);

  CHECK_THROWS_AS(backend->next_token_distribution("overflow", std::nullopt), BackendRefusal);
  CHECK_THROWS_AS(backend->next_token_distribution("negative", std::nullopt), BackendRefusal);
  CHECK_THROWS_AS(backend->next_token_distribution("", std::nullopt), PreconditionError);
}

TEST_CASE("empty fixture text is an EmptyResponse") {
  testutil::TempDir dir;
  json fixture;
  fixture["sample"] = json::array({json{{"prompt", "q"}, {"text", ""}}});
  const std::string path = dir.file("f.json");
  testutil::write_file(path, fixture.dump());
  auto backend = make_backend(testutil::mock_endpoint(path));
  CHECK_THROWS_AS(backend->sample(make_instruction("i", "q"), SamplingParams{}), EmptyResponse);
}

TEST_CASE("text-only endpoints reject image-bearing requests") {
  testutil::TempDir dir;
  const std::string path = testutil::write_synth_fixture(dir, "f.json");
  auto backend = make_backend(testutil::mock_endpoint(path, "m", Modality::text));

  Instruction ins = make_instruction("i", "describe");
  ins.image = "photo.png";
  CHECK_THROWS_AS(backend->sample(ins, SamplingParams{}), ModalityMismatch);
  CHECK_THROWS_AS(backend->score_continuation(ins, "text"), ModalityMismatch);
  CHECK_THROWS_AS(backend->next_token_distribution("q", ins.image), ModalityMismatch);
}

// ---------------------------------------------------------------------------
// mock backend: synthesis

TEST_CASE("synthesized samples are a pure function of request and fixture") {
  testutil::TempDir dir;
  const std::string path = testutil::write_synth_fixture(dir, "f.json", 42);
  auto backend = make_backend(testutil::mock_endpoint(path));
  const Instruction ins = make_instruction("i", "Describe the picture.");

  SamplingParams params;
  params.seed = 1;
  const std::string first = backend->sample(ins, params).text;
  const std::string again = backend->sample(ins, params).text;
  CHECK(first == again);

  params.seed = 2;
  const std::string other_seed = backend->sample(ins, params).text;
  CHECK(first != other_seed);

  // A different salt gives a different corpus.
  const std::string path2 = testutil::write_synth_fixture(dir, "g.json", 43);
  auto backend2 = make_backend(testutil::mock_endpoint(path2));
  params.seed = 1;
  CHECK(backend2->sample(ins, params).text != first);
}

TEST_CASE("synthesized next-token mass stays within a valid distribution") {
  testutil::TempDir dir;
  const std::string path = testutil::write_synth_fixture(dir, "f.json");
  auto backend = make_backend(testutil::mock_endpoint(path));
  for (int i = 0; i < 50; ++i) {
    const auto dist =
        backend->next_token_distribution("Is it true that item " + std::to_string(i) + "?",
                                         std::nullopt);
    double sum = 0.0;
    for (const auto& [token, p] : dist.entries) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      sum += p;
    }
    CHECK(sum <= 1.0 + 1e-9);
  }
}

TEST_CASE("synthesized score tokens rebuild the scored text exactly") {
  testutil::TempDir dir;
  const std::string path = testutil::write_synth_fixture(dir, "f.json");
  auto backend = make_backend(testutil::mock_endpoint(path));
  const std::string text = "A dog sits on the grass. The sign leans against a wall.";
  const auto lp = backend->score_continuation(make_instruction("i", "q"), text);
  std::string joined;
  for (const auto& t : lp) {
    joined += t.token_text;
    CHECK(t.logprob <= -1.0);
    CHECK(t.logprob >= -3.0);
  }
  CHECK(joined == text);
}

TEST_CASE("mock call counters track per-fixture usage") {
  testutil::TempDir dir;
  const std::string path = testutil::write_synth_fixture(dir, "counted.json");
  reset_mock_calls();
  auto backend = make_backend(testutil::mock_endpoint(path));
  const Instruction ins = make_instruction("i", "prompt");

  backend->sample(ins, SamplingParams{});
  backend->sample(ins, SamplingParams{});
  backend->score_continuation(ins, "some text");
  backend->next_token_distribution("q?", std::nullopt);

  const MockCallCounts counts = mock_calls_for(path);
  CHECK(counts.sample == 2);
  CHECK(counts.score == 1);
  CHECK(counts.next_token == 1);

  const MockCallCounts total = mock_calls_total();
  CHECK(total.sample >= 2);

  reset_mock_calls();
  CHECK(mock_calls_for(path).sample == 0);
}

// ---------------------------------------------------------------------------
// http backend

TEST_CASE("chat completion request carries the decoding parameters verbatim") {
  json seen;
  StubServer server("/v1/chat/completions", [&](const httplib::Request& req,
                                                httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(
        json{{"choices", json::array({json{{"message", json{{"content", "served reply"}}}}})}}
            .dump(),
        "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url()), fast_options());

  SamplingParams params;
  params.temperature = 0.25;
  params.top_p = 0.5;
  params.max_tokens = 99;
  params.seed = 1234;
  const auto out = backend->sample(make_instruction("i", "the prompt"), params);

  CHECK(out.text == "served reply");
  CHECK(out.generated_by == "under-test");
  CHECK(seen["model"] == "served-model");
  CHECK(seen["temperature"] == 0.25);
  CHECK(seen["top_p"] == 0.5);
  CHECK(seen["max_tokens"] == 99);
  CHECK(seen["seed"] == 1234);
  REQUIRE(seen["messages"].size() == 1);
  CHECK(seen["messages"][0]["role"] == "user");
  CHECK(seen["messages"][0]["content"] == "the prompt");
}

TEST_CASE("image requests become a two-part content array") {
  json seen;
  StubServer server("/v1/chat/completions", [&](const httplib::Request& req,
                                                httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(
        json{{"choices", json::array({json{{"message", json{{"content", "ok"}}}}})}}.dump(),
        "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url()), fast_options());

  Instruction ins = make_instruction("i", "look");
  ins.image = "http://images.example/cat.png";
  backend->sample(ins, SamplingParams{});

  const auto& content = seen["messages"][0]["content"];
  REQUIRE(content.is_array());
  REQUIRE(content.size() == 2);
  CHECK(content[0]["type"] == "text");
  CHECK(content[0]["text"] == "look");
  CHECK(content[1]["type"] == "image_url");
  CHECK(content[1]["image_url"]["url"] == "http://images.example/cat.png");
}

TEST_CASE("local image files are inlined as data URIs") {
  testutil::TempDir dir;
  const std::string img = dir.file("pic.jpg");
  testutil::write_file(img, "raw-bytes");

  json seen;
  StubServer server("/v1/chat/completions", [&](const httplib::Request& req,
                                                httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(
        json{{"choices", json::array({json{{"message", json{{"content", "ok"}}}}})}}.dump(),
        "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url()), fast_options());

  Instruction ins = make_instruction("i", "look");
  ins.image = img;
  backend->sample(ins, SamplingParams{});

  const std::string url = seen["messages"][0]["content"][1]["image_url"]["url"];
  CHECK(url.rfind("data:image/jpeg;base64,", 0) == 0);
  CHECK(url.find("cmF3LWJ5dGVz") != std::string::npos);  // base64("raw-bytes")
}

TEST_CASE("5xx responses are retried, then succeed") {
  std::atomic<int> hits{0};
  StubServer server("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (hits.fetch_add(1) < 2) {
      res.status = 503;
      return;
    }
    res.set_content(
        json{{"choices", json::array({json{{"message", json{{"content", "finally"}}}}})}}.dump(),
        "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url()), fast_options());
  CHECK(backend->sample(make_instruction("i", "q"), SamplingParams{}).text == "finally");
  CHECK(hits.load() == 3);
}

TEST_CASE("5xx exhausting the retry budget is a NetworkError") {
  std::atomic<int> hits{0};
  StubServer server("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    hits.fetch_add(1);
    res.status = 500;
  });
  auto backend = make_backend(http_endpoint(server.base_url()), fast_options());
  CHECK_THROWS_AS(backend->sample(make_instruction("i", "q"), SamplingParams{}), NetworkError);
  CHECK(hits.load() == 3);
}

TEST_CASE("4xx responses fail immediately without retry") {
  std::atomic<int> hits{0};
  StubServer server("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    hits.fetch_add(1);
    res.status = 404;
    res.set_content("no such model", "text/plain");
  });
  auto backend = make_backend(http_endpoint(server.base_url()), fast_options());
  CHECK_THROWS_AS(backend->sample(make_instruction("i", "q"), SamplingParams{}), BackendRefusal);
  CHECK(hits.load() == 1);
}

TEST_CASE("an unreachable host is a NetworkError after all attempts") {
  // Reserve a port, then close the listener so nothing answers.
  int dead_port = 0;
  {
    httplib::Server probe;
    dead_port = probe.bind_to_any_port("127.0.0.1");
  }
  BackendOptions opts = fast_options();
  opts.max_attempts = 2;
  auto backend =
      make_backend(http_endpoint("http://127.0.0.1:" + std::to_string(dead_port)), opts);
  CHECK_THROWS_AS(backend->sample(make_instruction("i", "q"), SamplingParams{}), NetworkError);
}

TEST_CASE("non-JSON 200 bodies are a refusal") {
  StubServer server("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>proxy page</html>", "text/html");
  });
  auto backend = make_backend(http_endpoint(server.base_url()), fast_options());
  CHECK_THROWS_AS(backend->sample(make_instruction("i", "q"), SamplingParams{}), BackendRefusal);
}

TEST_CASE("the auth_ref variable becomes a bearer header; unset is a config error") {
  std::string auth_seen;
  StubServer server("/v1/chat/completions", [&](const httplib::Request& req,
                                                httplib::Response& res) {
    auth_seen = req.get_header_value("Authorization");
    res.set_content(
        json{{"choices", json::array({json{{"message", json{{"content", "ok"}}}}})}}.dump(),
        "application/json");
  });

  ModelEndpoint ep = http_endpoint(server.base_url());
  ep.auth_ref = "FEEDLOOP_TEST_TOKEN";
  ::setenv("FEEDLOOP_TEST_TOKEN", "sekret", 1);
  auto backend = make_backend(ep, fast_options());
  backend->sample(make_instruction("i", "q"), SamplingParams{});
  CHECK(auth_seen == "Bearer sekret");

  ::unsetenv("FEEDLOOP_TEST_TOKEN");
  auto unlucky = make_backend(ep, fast_options());
  CHECK_THROWS_AS(unlucky->sample(make_instruction("i", "q"), SamplingParams{}), ConfigError);
}

TEST_CASE("https endpoints are rejected up front in this build") {
  CHECK_THROWS_AS(make_backend(http_endpoint("https://api.example.com"), fast_options()),
                  ConfigError);
  CHECK_THROWS_AS(make_backend(http_endpoint("ftp://api.example.com"), fast_options()),
                  ConfigError);
  CHECK_THROWS_AS(make_backend(http_endpoint("no-scheme-here"), fast_options()), ConfigError);
}

TEST_CASE("a base_url path prefix is prepended to every route") {
  std::string path_seen;
  StubServer server("/proxy/v1/chat/completions", [&](const httplib::Request& req,
                                                      httplib::Response& res) {
    path_seen = req.path;
    res.set_content(
        json{{"choices", json::array({json{{"message", json{{"content", "ok"}}}}})}}.dump(),
        "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url() + "/proxy/"), fast_options());
  backend->sample(make_instruction("i", "q"), SamplingParams{});
  CHECK(path_seen == "/proxy/v1/chat/completions");
}

TEST_CASE("next-token requests pin greedy single-token decoding") {
  json seen;
  StubServer server("/v1/chat/completions", [&](const httplib::Request& req,
                                                httplib::Response& res) {
    seen = json::parse(req.body);
    const json top = json::array({json{{"token", "Yes"}, {"logprob", -0.2231435513}},
                                  json{{"token", "No"}, {"logprob", -1.6094379124}}});
    res.set_content(
        json{{"choices",
              json::array({json{
                  {"logprobs", json{{"content", json::array({json{{"top_logprobs", top}}})}}}}})}}
            .dump(),
        "application/json");
  });
  BackendOptions opts = fast_options();
  opts.top_k = 7;
  auto backend = make_backend(http_endpoint(server.base_url()), opts);

  const auto dist = backend->next_token_distribution("Is it blue?", std::nullopt);
  CHECK(seen["temperature"] == 0.0);
  CHECK(seen["max_tokens"] == 1);
  CHECK(seen["logprobs"] == true);
  CHECK(seen["top_logprobs"] == 7);
  REQUIRE(dist.entries.size() == 2);
  CHECK(dist.entries[0].first == "Yes");
  CHECK(dist.entries[0].second == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(dist.entries[1].second == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("continuation scoring keeps only tokens after the prompt boundary") {
  // Server tokenization: "Q:\n" then "resp" "onse" with offsets 0, 3, 7.
  json seen;
  StubServer server("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    const json lp = json{{"tokens", json::array({"Q:\n", "resp", "onse"})},
                         {"token_logprobs", json::array({nullptr, -0.5, -0.75})},
                         {"text_offset", json::array({0, 3, 7})}};
    res.set_content(json{{"choices", json::array({json{{"logprobs", lp}}})}}.dump(),
                    "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url(), Modality::text), fast_options());

  const auto lp = backend->score_continuation(make_instruction("i", "Q:"), "response");
  CHECK(seen["echo"] == true);
  CHECK(seen["max_tokens"] == 0);
  CHECK(seen["prompt"] == "Q:\nresponse");
  REQUIRE(lp.size() == 2);
  CHECK(lp[0].token_text == "resp");
  CHECK(lp[0].logprob == -0.5);
  CHECK(lp[1].token_text == "onse");
  CHECK(lp[1].logprob == -0.75);
}

TEST_CASE("a token straddling the prompt boundary is a tokenization mismatch") {
  StubServer server("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    // One token covers "\nres": starts inside the prompt, ends inside the
    // response, so no clean boundary exists.
    const json lp = json{{"tokens", json::array({"Q:", "\nres", "ponse"})},
                         {"token_logprobs", json::array({nullptr, -0.5, -0.75})},
                         {"text_offset", json::array({0, 2, 6})}};
    res.set_content(json{{"choices", json::array({json{{"logprobs", lp}}})}}.dump(),
                    "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url(), Modality::text), fast_options());
  CHECK_THROWS_AS(backend->score_continuation(make_instruction("i", "Q:"), "response"),
                  TokenizationMismatch);
}

TEST_CASE("echoed tokens that disagree with the response text are rejected") {
  StubServer server("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    const json lp = json{{"tokens", json::array({"Q:\n", "other"})},
                         {"token_logprobs", json::array({nullptr, -0.5})},
                         {"text_offset", json::array({0, 3})}};
    res.set_content(json{{"choices", json::array({json{{"logprobs", lp}}})}}.dump(),
                    "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url(), Modality::text), fast_options());
  CHECK_THROWS_AS(backend->score_continuation(make_instruction("i", "Q:"), "response"),
                  TokenizationMismatch);
}

TEST_CASE("http continuation scoring refuses image-bearing instructions") {
  auto backend = make_backend(http_endpoint("http://127.0.0.1:1"), fast_options());
  Instruction ins = make_instruction("i", "q");
  ins.image = "x.png";
  CHECK_THROWS_AS(backend->score_continuation(ins, "text"), BackendRefusal);
}

TEST_CASE("a missing choices array in the chat reply is a refusal") {
  StubServer server("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"unexpected", true}}.dump(), "application/json");
  });
  auto backend = make_backend(http_endpoint(server.base_url()), fast_options());
  CHECK_THROWS_AS(backend->sample(make_instruction("i", "q"), SamplingParams{}), BackendRefusal);
}
