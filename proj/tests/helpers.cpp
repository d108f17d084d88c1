#include "helpers.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "feedloop/jsonl.hpp"

namespace testutil {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::ostringstream name;
  name << "feedloop-test-" << ::getpid() << "-" << counter.fetch_add(1);
  path_ = (fs::temp_directory_path() / name.str()).string();
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("test helper cannot open " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("test helper cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

feedloop::ModelEndpoint mock_endpoint(const std::string& fixture_path, const std::string& id,
                                      feedloop::Modality modality,
                                      const std::string& model_name) {
  feedloop::ModelEndpoint ep;
  ep.id = id;
  ep.base_url = "mock:" + fixture_path;
  ep.model_name = model_name;
  ep.modality = modality;
  return ep;
}

std::string write_synth_fixture(const TempDir& dir, const std::string& name, long long salt) {
  const std::string path = dir.file(name);
  nlohmann::json fixture;
  fixture["salt"] = salt;
  fixture["synthesize"] = true;
  write_file(path, fixture.dump() + "\n");
  return path;
}

nlohmann::json instruction_record(const std::string& id, const std::string& prompt) {
  return nlohmann::json{
      {"id", id}, {"prompt", prompt}, {"image", nullptr}, {"source_tag", "test"}};
}

std::string write_instruction_file(const TempDir& dir, const std::string& name, int count) {
  std::vector<nlohmann::json> records;
  records.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    records.push_back(instruction_record("ins-" + std::to_string(i),
                                         "Describe scene number " + std::to_string(i) + "."));
  }
  const std::string path = dir.file(name);
  feedloop::jsonl::write_records_atomic(path, records, "instructions.v1");
  return path;
}

}  // namespace testutil
