#include "feedloop/jsonl.hpp"

#include <filesystem>
#include <sstream>

#include "feedloop/errors.hpp"
#include "feedloop/util.hpp"

namespace feedloop::jsonl {

std::string manifest_path_for(const std::string& path) { return path + ".manifest.json"; }

std::vector<nlohmann::json> read_records(const std::string& path) {
  const std::string content = util::read_text_file(path);
  std::vector<nlohmann::json> records;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t nl = content.find('\n', start);
    std::string_view line = nl == std::string::npos
                                ? std::string_view(content).substr(start)
                                : std::string_view(content).substr(start, nl - start);
    ++line_no;
    if (util::trim_view(line).empty()) {
      throw SchemaError(path + ": blank line " + std::to_string(line_no));
    }
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) {
      throw SchemaError(path + ": line " + std::to_string(line_no) + " is not a JSON object");
    }
    records.push_back(std::move(rec));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return records;
}

std::vector<nlohmann::json> read_records_checked(const std::string& path,
                                                 const std::string& expected_schema) {
  auto records = read_records(path);
  const std::string mpath = manifest_path_for(path);
  if (std::filesystem::exists(mpath)) {
    nlohmann::json manifest = nlohmann::json::parse(util::read_text_file(mpath), nullptr, false);
    if (manifest.is_discarded() || !manifest.is_object()) {
      throw SchemaError(mpath + ": manifest is not a JSON object");
    }
    const std::string schema = manifest.value("schema", "");
    if (schema != expected_schema) {
      throw SchemaError(path + ": manifest schema \"" + schema + "\" != expected \"" +
                        expected_schema + "\"");
    }
    const std::size_t lines = manifest.value("lines", std::size_t{0});
    if (lines != records.size()) {
      throw SchemaError(path + ": manifest says " + std::to_string(lines) + " lines, file has " +
                        std::to_string(records.size()));
    }
  }
  return records;
}

void write_records_atomic(const std::string& path, const std::vector<nlohmann::json>& records,
                          const std::string& schema) {
  std::ostringstream out;
  for (const auto& rec : records) {
    out << rec.dump() << '\n';
  }
  util::write_text_file_atomic(path, out.str());
  nlohmann::json manifest;
  manifest["schema"] = schema;
  manifest["lines"] = records.size();
  util::write_text_file_atomic(manifest_path_for(path), manifest.dump(2) + "\n");
}

}  // namespace feedloop::jsonl
