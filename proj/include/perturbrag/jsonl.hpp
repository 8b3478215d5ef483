#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace perturbrag::jsonl {

/// Calls `fn(record, line_number)` for every non-blank line of `path`.
/// Throws NotFoundError if the file cannot be opened and ParseError (with the
/// line number) on malformed JSON or when `fn` rejects the record.
void for_each(const std::filesystem::path& path,
              const std::function<void(const nlohmann::json&, std::size_t)>& fn);

/// Writes one compact JSON document per line, replacing the file.
void write(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

/// Appends one record and flushes.
void append(const std::filesystem::path& path, const nlohmann::json& record);

/// Compact, key-sorted serialization used wherever bytes must be stable.
std::string dump(const nlohmann::json& record);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Typed field access with ParseError on mismatch.
std::string require_string(const nlohmann::json& j, const char* key);
const nlohmann::json& require_array(const nlohmann::json& j, const char* key);

} // namespace perturbrag::jsonl
