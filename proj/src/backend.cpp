#include "feedloop/backend.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "feedloop/errors.hpp"
#include "feedloop/log.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// shared helpers

/// Runtime-capped counting semaphore (std::counting_semaphore fixes the cap
/// at compile time).
class Gate {
 public:
  explicit Gate(int slots) : available_(slots > 0 ? slots : 1) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [this] { return available_ > 0; });
    --available_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int available_;
};

struct GateGuard {
  explicit GateGuard(Gate& g) : gate(g) { gate.acquire(); }
  ~GateGuard() { gate.release(); }
  Gate& gate;
};

void check_modality(const ModelEndpoint& ep, const std::optional<std::string>& image) {
  if (ep.modality == Modality::text && image.has_value()) {
    throw ModalityMismatch("endpoint " + ep.id + " is text-only but the request carries an image");
  }
}

void check_distribution(const NextTokenDistribution& dist, const std::string& origin) {
  double sum = 0.0;
  for (const auto& [token, p] : dist.entries) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw BackendRefusal(origin + ": probability " + std::to_string(p) + " for token \"" +
                           token + "\" outside [0,1]");
    }
    sum += p;
  }
  if (sum > 1.0 + 1e-6) {
    throw BackendRefusal(origin + ": probabilities sum to " + std::to_string(sum) + " > 1");
  }
}

/// Splits text into chunks of (whitespace run)(non-whitespace run) so the
/// chunks concatenate back to the input exactly.
std::vector<std::string> chunk_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const std::size_t start = i;
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// mock call counters

std::mutex g_counter_mutex;
std::map<std::string, MockCallCounts> g_counters;

void bump_counter(const std::string& fixture, long long MockCallCounts::* field) {
  std::lock_guard<std::mutex> lock(g_counter_mutex);
  g_counters[fixture].*field += 1;
}

// ---------------------------------------------------------------------------
// mock backend

class MockBackend : public Backend {
 public:
  MockBackend(ModelEndpoint ep, BackendOptions opts)
      : endpoint_(std::move(ep)), options_(opts), gate_(opts.max_concurrent) {
    fixture_path_ = endpoint_.mock_fixture_path();
    const std::string raw = util::read_text_file(fixture_path_);
    fixture_ = json::parse(raw, nullptr, false);
    if (fixture_.is_discarded() || !fixture_.is_object()) {
      throw SchemaError("mock fixture " + fixture_path_ + " is not a JSON object");
    }
    salt_ = fixture_.value("salt", 0LL);
    synthesize_ = fixture_.value("synthesize", true);
  }

  CandidateResponse sample(const Instruction& instruction, const SamplingParams& params) override {
    GateGuard guard(gate_);
    check_modality(endpoint_, instruction.image);
    bump_counter(fixture_path_, &MockCallCounts::sample);

    CandidateResponse out;
    out.text = lookup_sample(instruction, params);
    out.params = params;
    out.generated_by = endpoint_.id;
    if (out.text.empty()) throw EmptyResponse("mock produced empty text for " + instruction.id);
    return out;
  }

  std::vector<TokenLogprob> score_continuation(const Instruction& instruction,
                                               const std::string& response_text) override {
    GateGuard guard(gate_);
    check_modality(endpoint_, instruction.image);
    if (response_text.empty()) throw EmptyResponse("score_continuation on empty response_text");
    bump_counter(fixture_path_, &MockCallCounts::score);

    if (fixture_.contains("score")) {
      for (const auto& entry : fixture_["score"]) {
        if (entry.value("text", "") != response_text) continue;
        std::vector<TokenLogprob> out;
        std::string joined;
        for (const auto& tok : entry.at("tokens")) {
          TokenLogprob t;
          t.token_text = tok.at("token").get<std::string>();
          t.logprob = tok.at("logprob").get<double>();
          if (!(t.logprob <= 0.0) || !std::isfinite(t.logprob)) {
            throw BackendRefusal(fixture_path_ + ": score logprob must be finite and <= 0");
          }
          joined += t.token_text;
          out.push_back(std::move(t));
        }
        if (joined != response_text) {
          throw BackendRefusal(fixture_path_ + ": score tokens do not concatenate to text");
        }
        return out;
      }
    }
    if (!synthesize_) {
      throw BackendRefusal(fixture_path_ + ": no score entry for \"" + excerpt(response_text) +
                           "\" and synthesis is disabled");
    }
    return synthesize_score(response_text);
  }

  NextTokenDistribution next_token_distribution(const std::string& prompt,
                                                const std::optional<std::string>& image) override {
    GateGuard guard(gate_);
    check_modality(endpoint_, image);
    if (prompt.empty()) throw PreconditionError("next_token_distribution on empty prompt");
    bump_counter(fixture_path_, &MockCallCounts::next_token);

    if (fixture_.contains("next_token")) {
      for (const auto& entry : fixture_["next_token"]) {
        if (!prompt_matches(entry, prompt)) continue;
        NextTokenDistribution dist;
        for (const auto& e : entry.at("entries")) {
          dist.entries.emplace_back(e.at("token").get<std::string>(), e.at("p").get<double>());
        }
        dist.top_k = static_cast<int>(dist.entries.size());
        check_distribution(dist, fixture_path_);
        return dist;
      }
    }
    if (!synthesize_) {
      throw BackendRefusal(fixture_path_ + ": no next_token entry for \"" + excerpt(prompt) +
                           "\" and synthesis is disabled");
    }
    NextTokenDistribution dist = synthesize_next_token(prompt, image);
    check_distribution(dist, fixture_path_);
    return dist;
  }

  const ModelEndpoint& endpoint() const override { return endpoint_; }
  const BackendOptions& options() const override { return options_; }

 private:
  static bool prompt_matches(const json& entry, const std::string& prompt) {
    if (entry.contains("prompt")) return entry["prompt"].get<std::string>() == prompt;
    if (entry.contains("prompt_contains")) {
      return prompt.find(entry["prompt_contains"].get<std::string>()) != std::string::npos;
    }
    return false;
  }

  static std::string excerpt(const std::string& s) {
    return s.size() <= 60 ? s : s.substr(0, 57) + "...";
  }

  std::uint64_t mix(std::initializer_list<std::string> parts) const {
    std::uint64_t h = util::fnv1a64(std::to_string(salt_));
    h = util::fnv1a64(endpoint_.model_name, h);
    for (const auto& p : parts) {
      h = util::fnv1a64("\x1f", h);
      h = util::fnv1a64(p, h);
    }
    return h;
  }

  std::string lookup_sample(const Instruction& instruction, const SamplingParams& params) {
    if (fixture_.contains("sample")) {
      for (const auto& entry : fixture_["sample"]) {
        if (!prompt_matches(entry, instruction.prompt)) continue;
        if (entry.contains("seed") && entry["seed"].get<long long>() != params.seed) continue;
        if (entry.contains("image") &&
            (!instruction.image || *instruction.image != entry["image"].get<std::string>())) {
          continue;
        }
        return entry.at("text").get<std::string>();
      }
    }
    if (!synthesize_) {
      throw BackendRefusal(fixture_path_ + ": no sample entry for \"" +
                           excerpt(instruction.prompt) + "\" and synthesis is disabled");
    }
    return synthesize_sample(instruction, params);
  }

  // Recognizes the pipeline's own prompt shapes so a bare fixture file can
  // drive the whole loop end to end; everything is keyed on stable hashes so
  // repeated runs are byte-identical.
  std::string synthesize_sample(const Instruction& instruction, const SamplingParams& params) {
    const std::string& prompt = instruction.prompt;

    if (prompt.find("### Question-answer pair:") != std::string::npos) {
      return synthesize_fact_split(prompt);
    }
    if (prompt.find("### Declarative sentences:") != std::string::npos) {
      return synthesize_question_conversion(prompt);
    }
    if (prompt.find("additive 3-point scoring system") != std::string::npos) {
      const std::uint64_t h = mix({prompt});
      return "The response was checked against the image on each criterion.\n" +
             std::to_string(h % 4);
    }
    if (prompt.find("### Response 1:") != std::string::npos &&
        prompt.find("### Response 2:") != std::string::npos) {
      return synthesize_judge_review(prompt);
    }

    const std::uint64_t h =
        mix({prompt, instruction.image.value_or(""), std::to_string(params.seed)});
    return synthesize_sentences(h);
  }

  std::string synthesize_sentences(std::uint64_t h) const {
    static const char* subjects[] = {"A dog",   "The clock", "A woman", "The bus",
                                     "A child", "The sign",  "A bird",  "The table"};
    static const char* verbs[] = {"sits on",    "stands near",   "points at", "rests beside",
                                  "faces",      "leans against", "watches",   "holds"};
    static const char* objects[] = {"the grass",      "a red bench", "the window",
                                    "a wooden fence", "the street",  "a small tree",
                                    "the wall",       "a blue door"};
    const int count = 1 + static_cast<int>(h % 3);
    std::ostringstream out;
    for (int i = 0; i < count; ++i) {
      std::uint64_t hi = util::fnv1a64(std::to_string(i), h);
      if (i > 0) out << ' ';
      out << subjects[hi % 8] << ' ' << verbs[(hi / 8) % 8] << ' ' << objects[(hi / 64) % 8]
          << '.';
    }
    return out.str();
  }

  /// Replies to the fact-extraction template: one bullet per sentence of the
  /// answer section.
  std::string synthesize_fact_split(const std::string& prompt) const {
    const std::string marker = "\nAnswer: ";
    std::size_t pos = prompt.rfind(marker);
    std::string answer = pos == std::string::npos ? "" : prompt.substr(pos + marker.size());
    std::vector<std::string> sentences;
    std::string current;
    for (char ch : answer) {
      current.push_back(ch);
      if (ch == '.' || ch == '!' || ch == '?') {
        std::string t = util::trim(current);
        if (!t.empty()) sentences.push_back(t);
        current.clear();
      }
    }
    std::string tail = util::trim(current);
    if (!tail.empty()) sentences.push_back(tail + ".");
    if (sentences.empty()) sentences.push_back("The answer makes no factual statement.");
    std::ostringstream out;
    out << "### Facts:";
    for (const auto& s : sentences) out << "\n- " << s;
    return out.str();
  }

  /// Replies to the question-conversion template: one polar question per
  /// bulleted declarative sentence, preserving order and count.
  std::string synthesize_question_conversion(const std::string& prompt) const {
    const std::string marker = "### Declarative sentences:";
    std::size_t pos = prompt.find(marker);
    std::vector<std::string> claims;
    for (const auto& line : util::split_lines(prompt.substr(pos + marker.size()))) {
      std::string t = util::trim(line);
      if (t.rfind("- ", 0) == 0) claims.push_back(util::trim(t.substr(2)));
    }
    std::ostringstream out;
    out << "### Modified sentences:";
    for (auto claim : claims) {
      if (!claim.empty() && claim.back() == '.') claim.pop_back();
      out << "\n- Is it true that " << util::lowercase_first(claim) << "?";
    }
    return out.str();
  }

  /// Verdicts depend only on each presented response's own text, so swapping
  /// the presentation order flips every non-tie outcome exactly.
  std::string synthesize_judge_review(const std::string& prompt) const {
    const std::string r1 = section_between(prompt, "### Response 1:", "### Response 2:");
    const std::string r2 = section_between(prompt, "### Response 2:", "\nCompare ");
    const std::uint64_t h1 = mix({r1});
    const std::uint64_t h2 = mix({r2});
    const auto pick = [](std::uint64_t a, std::uint64_t b) -> const char* {
      if (a > b) return "1";
      if (b > a) return "2";
      return "tie";
    };
    std::ostringstream out;
    out << "Both responses were checked against the reference description.\n"
        << "Trustworthiness: " << pick(h1 % 7, h2 % 7) << "\n"
        << "Overall: " << pick((h1 / 7) % 5, (h2 / 7) % 5);
    return out.str();
  }

  static std::string section_between(const std::string& text, const std::string& begin,
                                     const std::string& end) {
    std::size_t b = text.find(begin);
    if (b == std::string::npos) return "";
    b += begin.size();
    std::size_t e = text.find(end, b);
    if (e == std::string::npos) e = text.size();
    return util::trim(text.substr(b, e - b));
  }

  NextTokenDistribution synthesize_next_token(const std::string& prompt,
                                              const std::optional<std::string>& image) const {
    const std::uint64_t h = mix({prompt, image.value_or("")});
    const double p_yes = 0.15 + static_cast<double>(h % 61) / 100.0;  // [0.15, 0.75]
    const double p_no = 0.90 - p_yes;
    NextTokenDistribution dist;
    dist.entries = {{"Yes", 0.7 * p_yes},
                    {"yes", 0.3 * p_yes},
                    {"No", 0.7 * p_no},
                    {"no", 0.3 * p_no},
                    {"Maybe", 0.05}};
    dist.top_k = 5;
    return dist;
  }

  std::vector<TokenLogprob> synthesize_score(const std::string& response_text) const {
    std::vector<TokenLogprob> out;
    std::size_t index = 0;
    for (auto& token : chunk_tokens(response_text)) {
      const std::uint64_t h = mix({token, std::to_string(index)});
      TokenLogprob t;
      t.token_text = std::move(token);
      t.logprob = -(1.0 + static_cast<double>(h % 2000) / 1000.0);  // [-3, -1]
      out.push_back(std::move(t));
      ++index;
    }
    return out;
  }

  ModelEndpoint endpoint_;
  BackendOptions options_;
  Gate gate_;
  std::string fixture_path_;
  json fixture_;
  long long salt_ = 0;
  bool synthesize_ = true;
};

// ---------------------------------------------------------------------------
// http backend

struct ParsedUrl {
  std::string origin;  // scheme://host[:port], what httplib::Client takes
  std::string prefix;  // path prefix, no trailing slash
};

ParsedUrl parse_base_url(const std::string& base_url) {
  const std::size_t scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("base_url \"" + base_url + "\" has no scheme");
  }
  const std::string scheme = base_url.substr(0, scheme_end);
  if (scheme == "https") {
    throw ConfigError("https endpoints need an SSL-enabled build; use http or mock");
  }
  if (scheme != "http") {
    throw ConfigError("unsupported scheme \"" + scheme + "\" in base_url");
  }
  const std::size_t path_start = base_url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.origin = base_url;
  } else {
    out.origin = base_url.substr(0, path_start);
    out.prefix = base_url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

std::string image_payload_url(const std::string& image_ref) {
  if (image_ref.rfind("http://", 0) == 0 || image_ref.rfind("https://", 0) == 0 ||
      image_ref.rfind("data:", 0) == 0) {
    return image_ref;
  }
  const std::string bytes = util::read_text_file(image_ref);
  std::string ext = "png";
  const std::size_t dot = image_ref.rfind('.');
  if (dot != std::string::npos) {
    std::string raw = image_ref.substr(dot + 1);
    for (auto& c : raw) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (raw == "jpg" || raw == "jpeg") {
      ext = "jpeg";
    } else if (raw == "png" || raw == "gif" || raw == "webp" || raw == "bmp") {
      ext = raw;
    }
  }
  return "data:image/" + ext + ";base64," +
         util::base64_encode(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
}

class HttpBackend : public Backend {
 public:
  HttpBackend(ModelEndpoint ep, BackendOptions opts)
      : endpoint_(std::move(ep)),
        options_(opts),
        gate_(opts.max_concurrent),
        url_(parse_base_url(endpoint_.base_url)) {}

  CandidateResponse sample(const Instruction& instruction, const SamplingParams& params) override {
    check_modality(endpoint_, instruction.image);
    json body;
    body["model"] = endpoint_.model_name;
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    body["max_tokens"] = params.max_tokens;
    body["seed"] = params.seed;
    body["messages"] = json::array({chat_user_message(instruction.prompt, instruction.image)});

    const json reply = post_json("/v1/chat/completions", body);
    std::string text;
    try {
      text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw BackendRefusal(endpoint_.id + ": chat completion reply lacks choices[0].message.content");
    }
    if (text.empty()) throw EmptyResponse(endpoint_.id + ": empty completion text");

    CandidateResponse out;
    out.text = std::move(text);
    out.params = params;
    out.generated_by = endpoint_.id;
    return out;
  }

  std::vector<TokenLogprob> score_continuation(const Instruction& instruction,
                                               const std::string& response_text) override {
    check_modality(endpoint_, instruction.image);
    if (response_text.empty()) throw EmptyResponse("score_continuation on empty response_text");
    if (instruction.image) {
      throw BackendRefusal(endpoint_.id +
                           ": continuation scoring over HTTP is text-only; echo-mode "
                           "completions carry no image payload");
    }

    const std::string context = instruction.prompt + "\n";
    json body;
    body["model"] = endpoint_.model_name;
    body["prompt"] = context + response_text;
    body["max_tokens"] = 0;
    body["echo"] = true;
    body["logprobs"] = 0;

    const json reply = post_json("/v1/completions", body);
    json lp;
    try {
      lp = reply.at("choices").at(0).at("logprobs");
    } catch (const json::exception&) {
      throw BackendRefusal(endpoint_.id + ": completion reply lacks choices[0].logprobs");
    }
    if (!lp.contains("tokens") || !lp.contains("token_logprobs") || !lp.contains("text_offset")) {
      throw BackendRefusal(endpoint_.id + ": logprobs block lacks tokens/token_logprobs/text_offset");
    }
    const auto& tokens = lp["tokens"];
    const auto& logprobs = lp["token_logprobs"];
    const auto& offsets = lp["text_offset"];
    if (tokens.size() != logprobs.size() || tokens.size() != offsets.size()) {
      throw BackendRefusal(endpoint_.id + ": ragged logprobs arrays");
    }

    std::vector<TokenLogprob> out;
    std::string joined;
    bool boundary_seen = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto off = offsets[i].get<std::size_t>();
      if (off < context.size()) continue;
      if (!boundary_seen) {
        if (off != context.size()) {
          throw TokenizationMismatch(endpoint_.id +
                                     ": a server token straddles the prompt/response boundary");
        }
        boundary_seen = true;
      }
      if (logprobs[i].is_null()) {
        throw BackendRefusal(endpoint_.id + ": null logprob inside the scored continuation");
      }
      TokenLogprob t;
      t.token_text = tokens[i].get<std::string>();
      t.logprob = logprobs[i].get<double>();
      joined += t.token_text;
      out.push_back(std::move(t));
    }
    if (joined != response_text) {
      throw TokenizationMismatch(endpoint_.id +
                                 ": echoed tokens do not concatenate to the response text");
    }
    return out;
  }

  NextTokenDistribution next_token_distribution(const std::string& prompt,
                                                const std::optional<std::string>& image) override {
    check_modality(endpoint_, image);
    if (prompt.empty()) throw PreconditionError("next_token_distribution on empty prompt");
    json body;
    body["model"] = endpoint_.model_name;
    body["temperature"] = 0.0;
    body["max_tokens"] = 1;
    body["logprobs"] = true;
    body["top_logprobs"] = options_.top_k;
    body["messages"] = json::array({chat_user_message(prompt, image)});

    const json reply = post_json("/v1/chat/completions", body);
    json top;
    try {
      top = reply.at("choices").at(0).at("logprobs").at("content").at(0).at("top_logprobs");
    } catch (const json::exception&) {
      throw BackendRefusal(endpoint_.id + ": reply lacks logprobs.content[0].top_logprobs");
    }
    NextTokenDistribution dist;
    for (const auto& e : top) {
      dist.entries.emplace_back(e.at("token").get<std::string>(),
                                std::exp(e.at("logprob").get<double>()));
    }
    dist.top_k = options_.top_k;
    check_distribution(dist, endpoint_.id);
    return dist;
  }

  const ModelEndpoint& endpoint() const override { return endpoint_; }
  const BackendOptions& options() const override { return options_; }

 private:
  static json chat_user_message(const std::string& prompt, const std::optional<std::string>& image) {
    json msg;
    msg["role"] = "user";
    if (!image) {
      msg["content"] = prompt;
      return msg;
    }
    msg["content"] = json::array(
        {json{{"type", "text"}, {"text", prompt}},
         json{{"type", "image_url"}, {"image_url", json{{"url", image_payload_url(*image)}}}}});
    return msg;
  }

  std::string auth_header() const {
    if (endpoint_.auth_ref.empty()) return "";
    const char* value = std::getenv(endpoint_.auth_ref.c_str());
    if (value == nullptr) {
      throw ConfigError("credential variable " + endpoint_.auth_ref + " named by endpoint " +
                        endpoint_.id + " is not set");
    }
    return std::string("Bearer ") + value;
  }

  /// One POST with bounded retries. The serialized body is built once; only
  /// connect errors, timeouts, and 5xx responses are retried.
  json post_json(const std::string& path, const json& body) {
    GateGuard guard(gate_);
    const std::string payload = body.dump();
    const std::string bearer = auth_header();
    const std::string full_path = url_.prefix + path;

    std::string last_failure;
    int backoff_ms = options_.initial_backoff_ms;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      if (attempt > 1) {
        log::debug("retrying " + full_path + " (attempt " + std::to_string(attempt) + ")");
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms = static_cast<int>(backoff_ms * options_.backoff_factor);
      }
      httplib::Client client(url_.origin);
      client.set_connection_timeout(options_.timeout_s, 0);
      client.set_read_timeout(options_.timeout_s, 0);
      client.set_write_timeout(options_.timeout_s, 0);
      httplib::Headers headers;
      if (!bearer.empty()) headers.emplace("Authorization", bearer);

      auto result = client.Post(full_path, headers, payload, "application/json");
      if (!result) {
        last_failure = "transport error: " + httplib::to_string(result.error());
        continue;
      }
      if (result->status >= 500) {
        last_failure = "server status " + std::to_string(result->status);
        continue;
      }
      if (result->status != 200) {
        throw BackendRefusal(endpoint_.id + ": status " + std::to_string(result->status) + " on " +
                             path + ": " + result->body.substr(0, 200));
      }
      json reply = json::parse(result->body, nullptr, false);
      if (reply.is_discarded()) {
        throw BackendRefusal(endpoint_.id + ": non-JSON body on " + path);
      }
      return reply;
    }
    throw NetworkError(endpoint_.id + ": " + path + " failed after " +
                       std::to_string(options_.max_attempts) + " attempts; last: " + last_failure);
  }

  ModelEndpoint endpoint_;
  BackendOptions options_;
  Gate gate_;
  ParsedUrl url_;
};

}  // namespace

std::shared_ptr<Backend> make_backend(const ModelEndpoint& endpoint, const BackendOptions& options) {
  if (endpoint.is_mock()) return std::make_shared<MockBackend>(endpoint, options);
  return std::make_shared<HttpBackend>(endpoint, options);
}

MockCallCounts mock_calls_for(const std::string& fixture_path) {
  std::lock_guard<std::mutex> lock(g_counter_mutex);
  auto it = g_counters.find(fixture_path);
  return it == g_counters.end() ? MockCallCounts{} : it->second;
}

MockCallCounts mock_calls_total() {
  std::lock_guard<std::mutex> lock(g_counter_mutex);
  MockCallCounts total;
  for (const auto& [path, c] : g_counters) {
    total.sample += c.sample;
    total.score += c.score;
    total.next_token += c.next_token;
  }
  return total;
}

void reset_mock_calls() {
  std::lock_guard<std::mutex> lock(g_counter_mutex);
  g_counters.clear();
}

}  // namespace feedloop
