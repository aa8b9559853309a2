#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace trialsent {

using Json = nlohmann::json;

/// Reads a JSON-lines file; blank lines are skipped. Errors name the line.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

/// Writes one compact JSON document per line with a trailing newline.
/// Output is byte-stable for equal inputs.
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& doc);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Lowercase hex SHA-256 of a byte string / file contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace trialsent
