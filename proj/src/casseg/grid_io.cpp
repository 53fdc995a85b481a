#include "casseg/grid_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "CASG serialization assumes a little-endian host");

namespace casseg {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'S', 'G'};
constexpr uint8_t kDtypeF64 = 0;
constexpr uint8_t kDtypeI32 = 1;

struct Header {
  uint32_t height = 0, width = 0, channels = 0;
  uint8_t dtype = 0;
};

void write_header(std::ostream& out, const Header& h) {
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&h.height), 4);
  out.write(reinterpret_cast<const char*>(&h.width), 4);
  out.write(reinterpret_cast<const char*>(&h.channels), 4);
  out.write(reinterpret_cast<const char*>(&h.dtype), 1);
}

Header read_header(std::istream& in) {
  char magic[4];
  Header h;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("CASG: bad magic");
  in.read(reinterpret_cast<char*>(&h.height), 4);
  in.read(reinterpret_cast<char*>(&h.width), 4);
  in.read(reinterpret_cast<char*>(&h.channels), 4);
  in.read(reinterpret_cast<char*>(&h.dtype), 1);
  if (!in) throw std::runtime_error("CASG: truncated header");
  if (h.height == 0 || h.width == 0 || h.channels == 0)
    throw std::runtime_error("CASG: zero dimension in header");
  return h;
}

template <typename T>
std::ofstream open_out(const T& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + std::string(path.string()));
  return out;
}

template <typename T>
std::ifstream open_in(const T& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + std::string(path.string()));
  return in;
}

}  // namespace

void write_grid(std::ostream& out, const ImageGrid& grid) {
  write_header(out, {static_cast<uint32_t>(grid.height), static_cast<uint32_t>(grid.width),
                     static_cast<uint32_t>(grid.channels), kDtypeF64});
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("CASG: write failed");
}

ImageGrid read_grid(std::istream& in) {
  const Header h = read_header(in);
  if (h.dtype != kDtypeF64) throw std::runtime_error("CASG: expected float64 payload");
  ImageGrid grid(static_cast<int>(h.height), static_cast<int>(h.width),
                 static_cast<int>(h.channels));
  in.read(reinterpret_cast<char*>(grid.values.data()),
          static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("CASG: truncated payload");
  require_finite(grid);
  return grid;
}

void write_region_map(std::ostream& out, const RegionMap& map) {
  write_header(out, {static_cast<uint32_t>(map.height()), static_cast<uint32_t>(map.width()), 1,
                     kDtypeI32});
  out.write(reinterpret_cast<const char*>(map.ids().data()),
            static_cast<std::streamsize>(map.ids().size() * sizeof(int32_t)));
  if (!out) throw std::runtime_error("CASG: write failed");
}

RegionMap read_region_map(std::istream& in) {
  const Header h = read_header(in);
  if (h.dtype != kDtypeI32 || h.channels != 1)
    throw std::runtime_error("CASG: expected single-channel int32 payload");
  std::vector<int32_t> ids(static_cast<size_t>(h.height) * h.width);
  in.read(reinterpret_cast<char*>(ids.data()),
          static_cast<std::streamsize>(ids.size() * sizeof(int32_t)));
  if (!in) throw std::runtime_error("CASG: truncated payload");
  return RegionMap(static_cast<int>(h.height), static_cast<int>(h.width), std::move(ids));
}

void save_grid(const std::filesystem::path& path, const ImageGrid& grid) {
  auto out = open_out(path);
  write_grid(out, grid);
}

ImageGrid load_grid(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_grid(in);
}

void save_region_map(const std::filesystem::path& path, const RegionMap& map) {
  auto out = open_out(path);
  write_region_map(out, map);
}

RegionMap load_region_map(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_region_map(in);
}

}  // namespace casseg
