#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbev/world/world.hpp"

namespace fbev::world {

// 8-bit RGB PNG. Errors throw std::runtime_error naming the path.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Binary 8-bit PGM (P5).
void write_pgm(const std::string& path, int rows, int cols, const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> read_pgm(const std::string& path, int& rows, int& cols);

}  // namespace fbev::world
