#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "feedloop/types.hpp"

namespace testutil {

/// Unique directory under the system temp root, removed recursively on
/// destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

feedloop::ModelEndpoint mock_endpoint(
    const std::string& fixture_path, const std::string& id = "mock",
    feedloop::Modality modality = feedloop::Modality::vision_text,
    const std::string& model_name = "mock-model");

/// Writes a bare fixture that answers everything through deterministic
/// synthesis. Returns the fixture path.
std::string write_synth_fixture(const TempDir& dir, const std::string& name, long long salt = 0);

nlohmann::json instruction_record(const std::string& id, const std::string& prompt);

/// Writes an instructions.v1 file (with manifest) holding `count` simple
/// records ins-0 .. ins-<count-1>.
std::string write_instruction_file(const TempDir& dir, const std::string& name, int count);

}  // namespace testutil
