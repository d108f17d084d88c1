#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace feedloop::jsonl {

/// Reads a JSONL file. Every line must parse as a JSON object; blank lines
/// are rejected so truncated or hand-mangled files fail loudly.
std::vector<nlohmann::json> read_records(const std::string& path);

/// Reads records and checks the sidecar manifest (when present) agrees on
/// schema name and line count. Throws SchemaError on mismatch.
std::vector<nlohmann::json> read_records_checked(const std::string& path,
                                                 const std::string& expected_schema);

/**
 * Writes one JSON object per line, atomically (temp file + rename), then a
 * sidecar "<path>.manifest.json" with {"schema": ..., "lines": N} so readers
 * can detect truncation and schema drift.
 */
void write_records_atomic(const std::string& path, const std::vector<nlohmann::json>& records,
                          const std::string& schema);

std::string manifest_path_for(const std::string& path);

}  // namespace feedloop::jsonl
