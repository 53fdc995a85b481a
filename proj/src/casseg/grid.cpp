#include "casseg/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace casseg {

ImageGrid::ImageGrid(int h, int w, int c) : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || c < 1)
    throw std::invalid_argument("ImageGrid: dimensions must be >= 1");
  values.assign(static_cast<size_t>(value_count()), 0.0);
}

bool is_softmax_field(const ImageGrid& grid, double tol) {
  const int64_t pixels = grid.pixel_count();
  for (int64_t p = 0; p < pixels; ++p) {
    double sum = 0.0;
    for (int c = 0; c < grid.channels; ++c) {
      const double v = grid.values[p * grid.channels + c];
      if (!(v >= 0.0 && v <= 1.0)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

void require_softmax_field(const ImageGrid& grid, double tol) {
  if (!is_softmax_field(grid, tol))
    throw std::invalid_argument("softmax field invalid: entries outside [0,1] or pixel sums != 1");
}

void require_finite(const ImageGrid& grid) {
  for (const double v : grid.values)
    if (!std::isfinite(v)) throw std::invalid_argument("grid contains non-finite values");
}

RegionMap::RegionMap(int height, int width, std::vector<int32_t> ids)
    : height_(height), width_(width), ids_(std::move(ids)) {
  if (height < 1 || width < 1) throw std::invalid_argument("RegionMap: dimensions must be >= 1");
  if (ids_.size() != static_cast<size_t>(pixel_count()))
    throw std::invalid_argument("RegionMap: id buffer size does not match dimensions");

  int32_t max_id = -1;
  for (const int32_t id : ids_) {
    if (id < 0) throw std::invalid_argument("RegionMap: negative region id");
    if (id > max_id) max_id = id;
  }
  region_count_ = max_id + 1;
  sizes_.assign(static_cast<size_t>(region_count_), 0);
  for (const int32_t id : ids_) ++sizes_[static_cast<size_t>(id)];
  for (int32_t i = 0; i < region_count_; ++i) {
    if (sizes_[static_cast<size_t>(i)] == 0)
      throw std::invalid_argument("RegionMap: region id " + std::to_string(i) +
                                  " is empty (ids must be contiguous)");
  }
}

RegionMap RegionMap::from_labels(int height, int width, std::span<const int32_t> labels) {
  std::unordered_map<int32_t, int32_t> remap;
  std::vector<int32_t> ids(labels.size());
  int32_t next = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], next);
    if (inserted) ++next;
    ids[i] = it->second;
  }
  return RegionMap(height, width, std::move(ids));
}

RegionStats compute_region_stats(const ImageGrid& field, const RegionMap& regions) {
  if (field.height != regions.height() || field.width != regions.width())
    throw std::invalid_argument("compute_region_stats: field and region map dimensions differ");

  const int n = regions.region_count();
  const int m = field.channels;
  RegionStats stats;
  stats.sizes = regions.sizes();
  stats.channels = m;
  stats.means.assign(static_cast<size_t>(n) * m, 0.0);

  const int64_t pixels = field.pixel_count();
  const auto& ids = regions.ids();
  for (int64_t p = 0; p < pixels; ++p) {
    double* acc = &stats.means[static_cast<size_t>(ids[p]) * m];
    const double* v = &field.values[p * m];
    for (int c = 0; c < m; ++c) acc[c] += v[c];
  }
  for (int i = 0; i < n; ++i) {
    const double inv = 1.0 / static_cast<double>(stats.sizes[static_cast<size_t>(i)]);
    for (int c = 0; c < m; ++c) stats.means[static_cast<size_t>(i) * m + c] *= inv;
  }
  return stats;
}

RegionMap permute_region_ids(const RegionMap& regions, std::span<const int32_t> perm) {
  const int n = regions.region_count();
  if (perm.size() != static_cast<size_t>(n))
    throw std::invalid_argument("permute_region_ids: permutation size mismatch");
  std::vector<bool> seen(static_cast<size_t>(n), false);
  for (const int32_t target : perm) {
    if (target < 0 || target >= n || seen[static_cast<size_t>(target)])
      throw std::invalid_argument("permute_region_ids: not a bijection on {0..N-1}");
    seen[static_cast<size_t>(target)] = true;
  }
  std::vector<int32_t> ids(regions.ids().size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = perm[static_cast<size_t>(regions.ids()[i])];
  return RegionMap(regions.height(), regions.width(), std::move(ids));
}

}  // namespace casseg
