#pragma once

#include <filesystem>
#include <iosfwd>

#include "casseg/grid.hpp"

namespace casseg {

/// Flat binary grid format ("CASG"):
///
///   bytes 0..3   magic "CASG"
///   u32          height        (little-endian)
///   u32          width
///   u32          channels
///   u8           dtype tag: 0 = float64, 1 = int32
///   payload      height*width*channels values, row-major and
///                channel-interleaved, little-endian
///
/// ImageGrid uses dtype 0; RegionMap uses dtype 1 with channels = 1.

void save_grid(const std::filesystem::path& path, const ImageGrid& grid);
ImageGrid load_grid(const std::filesystem::path& path);

void save_region_map(const std::filesystem::path& path, const RegionMap& map);
RegionMap load_region_map(const std::filesystem::path& path);

void write_grid(std::ostream& out, const ImageGrid& grid);
ImageGrid read_grid(std::istream& in);
void write_region_map(std::ostream& out, const RegionMap& map);
RegionMap read_region_map(std::istream& in);

}  // namespace casseg
