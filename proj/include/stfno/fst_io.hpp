#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stfno/grid.hpp"

namespace stfno {

// FST1 layout:
//   "FST1"
//   u32 c, u32 t, u32 ny, u32 nx, u32 name_table_bytes   (little-endian)
//   name table: UTF-8 JSON {channels, dt, t0, dx, dy, periodic_x, periodic_y}
//   c*t*ny*nx little-endian f32 values in [c, t, y, x] order
//
// Values are stored as f32, so a write/read round trip rounds to single precision.

void write_fst(const std::filesystem::path& path, const FieldStack& fs);
FieldStack read_fst(const std::filesystem::path& path);

void write_fst(std::ostream& os, const FieldStack& fs);
FieldStack read_fst(std::istream& is);

/// Land masks are single-channel FST1 files holding 0 (ocean) / 1 (land).
void write_mask(const std::filesystem::path& path, const LandMask& mask, const Grid& grid);
LandMask read_mask(const std::filesystem::path& path);

namespace le {

void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f32(std::ostream& os, float v);
void put_f64(std::ostream& os, double v);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
float get_f32(std::istream& is);
double get_f64(std::istream& is);
void get_bytes(std::istream& is, char* dst, std::size_t n);

}  // namespace le

}  // namespace stfno
