#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

namespace consor {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Line-oriented JSON event log. Events go to stderr unless redirected.
void set_event_sink(std::ostream* sink);
void log_event(const std::string& event, nlohmann::json fields = nlohmann::json::object());

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with sorted keys and a trailing newline, so identical
/// content always produces identical bytes.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace consor
