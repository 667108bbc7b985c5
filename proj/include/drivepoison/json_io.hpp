#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace drivepoison::json_io {

using nlohmann::json;

/// Appends an RFC 6901 reference token (escaping '~' and '/').
std::string child(const std::string& pointer, std::string_view key);
std::string child(const std::string& pointer, std::size_t index);

// Typed field access that reports failures as SchemaError at `pointer/key`.
const json& field(const json& obj, std::string_view key, const std::string& pointer);
std::string string_field(const json& obj, std::string_view key, const std::string& pointer);
double number_field(const json& obj, std::string_view key, const std::string& pointer);
long long integer_field(const json& obj, std::string_view key, const std::string& pointer);
bool bool_field(const json& obj, std::string_view key, const std::string& pointer);
const json& array_field(const json& obj, std::string_view key, const std::string& pointer);
const json& object_field(const json& obj, std::string_view key, const std::string& pointer);

void expect_object(const json& value, const std::string& pointer);
std::string expect_string(const json& value, const std::string& pointer);

/// Reads and parses a JSON file; IoError when unreadable, SchemaError("")
/// on malformed JSON.
json read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Writes `content` to `path`, creating parent directories. IoError on failure.
void write_text(const std::filesystem::path& path, std::string_view content);

}  // namespace drivepoison::json_io
