#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace segpipe {

/// Shortest decimal string that round-trips to the same double. Used for all
/// numeric CSV/JSON output so files are byte-identical across runs and
/// platforms. Throws on non-finite input; the toolkit never emits NaN/Inf.
std::string format_double(double value);

/// Writes content to a sibling temp file and renames it into place, so a
/// crash mid-write never leaves a truncated file at the target path.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_text_file(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Pretty-printed (indent 2) with trailing newline, written atomically.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace segpipe
