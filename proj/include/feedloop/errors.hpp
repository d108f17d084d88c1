#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace feedloop {

/**
 * Base class for all pipeline errors.
 *
 * `code()` is a stable machine-readable identifier; the CLI emits it in
 * its JSON error report, so codes are part of the external contract and
 * must not be renamed casually.
 */
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

// Backend / transport
struct NetworkError : Error {
  explicit NetworkError(const std::string& m) : Error("network_error", m) {}
};
struct ModalityMismatch : Error {
  explicit ModalityMismatch(const std::string& m) : Error("modality_mismatch", m) {}
};
struct BackendRefusal : Error {
  explicit BackendRefusal(const std::string& m) : Error("backend_refusal", m) {}
};
struct EmptyResponse : Error {
  explicit EmptyResponse(const std::string& m) : Error("empty_response", m) {}
};

// Annotation
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error("parse_error", m) {}
};
struct CountMismatch : Error {
  explicit CountMismatch(const std::string& m) : Error("count_mismatch", m) {}
};

// Pair construction
struct ExhaustedDataset : Error {
  explicit ExhaustedDataset(const std::string& m) : Error("exhausted_dataset", m) {}
};
struct IdCollision : Error {
  explicit IdCollision(const std::string& m) : Error("id_collision", m) {}
};

// Reward scoring
struct TokenizationMismatch : Error {
  explicit TokenizationMismatch(const std::string& m) : Error("tokenization_mismatch", m) {}
};
struct BonFailure : Error {
  explicit BonFailure(const std::string& m) : Error("bon_failure", m) {}
};

// Loop driver
struct TrainerTimeout : Error {
  explicit TrainerTimeout(const std::string& m) : Error("trainer_timeout", m) {}
};
struct TrainerFailed : Error {
  explicit TrainerFailed(const std::string& m) : Error("trainer_failed", m) {}
};
struct InsufficientInstructions : Error {
  explicit InsufficientInstructions(const std::string& m)
      : Error("insufficient_instructions", m) {}
};
struct CorruptCheckpoint : Error {
  explicit CorruptCheckpoint(const std::string& m) : Error("corrupt_checkpoint", m) {}
};

// Configuration / persistence
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config_error", m) {}
};
struct SchemaError : Error {
  explicit SchemaError(const std::string& m) : Error("schema_error", m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io_error", m) {}
};
struct PreconditionError : Error {
  explicit PreconditionError(const std::string& m) : Error("precondition_error", m) {}
};

}  // namespace feedloop
