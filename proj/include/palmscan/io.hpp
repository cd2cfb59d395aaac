#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace palmscan {

using Json = nlohmann::ordered_json;

namespace io {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& path);
// Writes through a sibling temp file and rename. Skips the write when the
// file already holds identical bytes; returns whether anything changed.
bool write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// One compact JSON document per line.
std::string to_jsonl(const std::vector<Json>& records);
std::vector<Json> parse_jsonl(std::string_view text, const std::string& source_name);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

// Two-space indented, trailing newline.
std::string dump_pretty(const Json& doc);

// Fixed-precision decimal, used where numbers become part of file names.
std::string fixed(double v, int decimals);

}  // namespace io
}  // namespace palmscan
