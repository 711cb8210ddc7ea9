#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sallm {

using nlohmann::json;

std::string read_file(const std::filesystem::path& file);

// Writes through a sibling temp file and rename, so readers never see a
// half-written file.
void write_file_atomic(const std::filesystem::path& file, const std::string& content);

// One JSON object per line; blank lines are skipped on read.
std::vector<json> read_jsonl(const std::filesystem::path& file);
void write_jsonl(const std::filesystem::path& file, const std::vector<json>& rows);

// Fixed-format rendering of reals for keys and tables ("0.4" -> "0.40").
std::string format_fixed(double value, int decimals);

}  // namespace sallm
