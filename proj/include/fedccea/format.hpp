#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace fedccea {

// Shortest text that always round-trips: 17 significant digits.
std::string format_real(double value);

std::string hex64(std::uint64_t value);

// Write text atomically enough for our purposes: truncate, write, check.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace fedccea
