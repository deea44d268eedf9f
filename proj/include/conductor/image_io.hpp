#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace conductor {

/// Encodes 8-bit RGBA rows (top row first) as PNG. Output is deterministic
/// for identical input.
std::vector<std::uint8_t> encodePng(int width, int height, std::span<const std::uint8_t> rgba);

void writeBinary(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace conductor
