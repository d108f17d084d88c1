#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "feedloop/types.hpp"

namespace feedloop {

struct BackendOptions {
  int max_attempts = 3;          // total tries per request, transient failures only
  int initial_backoff_ms = 1000; // doubled after each failed attempt
  double backoff_factor = 2.0;
  int max_concurrent = 4;        // in-flight request cap per backend handle
  int top_k = 20;                // next-token entries requested from the server
  int timeout_s = 120;
};

/**
 * Uniform contract over inference endpoints. Implementations are safe to
 * share across threads; every call owns its own connection state and the
 * handle enforces `max_concurrent` in-flight requests.
 */
class Backend {
 public:
  virtual ~Backend() = default;

  /// Samples one response. The returned record echoes `params` verbatim and
  /// carries the endpoint id in generated_by; response_id is left empty for
  /// the caller to assign.
  virtual CandidateResponse sample(const Instruction& instruction,
                                   const SamplingParams& params) = 0;

  /// Scores a fixed continuation of the instruction. Returns one entry per
  /// token of the endpoint's tokenization of response_text, in order; the
  /// token_text fields concatenate exactly to response_text.
  virtual std::vector<TokenLogprob> score_continuation(const Instruction& instruction,
                                                       const std::string& response_text) = 0;

  /// Top-k distribution over the next token after `prompt`.
  virtual NextTokenDistribution next_token_distribution(
      const std::string& prompt, const std::optional<std::string>& image) = 0;

  virtual const ModelEndpoint& endpoint() const = 0;
  virtual const BackendOptions& options() const = 0;
};

/// Builds a backend for the endpoint: mock:<fixture-path> URLs get the
/// deterministic local mock, anything else the HTTP client.
std::shared_ptr<Backend> make_backend(const ModelEndpoint& endpoint,
                                      const BackendOptions& options = {});

/// Call counters for mock backends, keyed by fixture path. Tests use these
/// to prove work was not repeated (e.g. resume must not re-sample).
struct MockCallCounts {
  long long sample = 0;
  long long score = 0;
  long long next_token = 0;
};

MockCallCounts mock_calls_for(const std::string& fixture_path);
MockCallCounts mock_calls_total();
void reset_mock_calls();

}  // namespace feedloop
