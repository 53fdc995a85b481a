#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace casseg {

/// Dense H x W x C grid of doubles, row-major and channel-interleaved:
/// values[(y * width + x) * channels + c].
///
/// Grids are plain values; operations on them are pure functions. Internal
/// reductions always run in a fixed sequential order so results are
/// bit-reproducible.
struct ImageGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  ImageGrid() = default;
  ImageGrid(int h, int w, int c);

  int64_t pixel_count() const { return static_cast<int64_t>(height) * width; }
  int64_t value_count() const { return pixel_count() * channels; }

  double& at(int y, int x, int c) {
    return values[(static_cast<int64_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return values[(static_cast<int64_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const ImageGrid& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  bool operator==(const ImageGrid&) const = default;
};

/// A softmax output field is an ImageGrid whose per-pixel channel vectors lie
/// on the probability simplex. Validity is checked with is_softmax_field at
/// API boundaries rather than encoded in the type: gradient checking needs to
/// evaluate losses at perturbed, off-simplex points.
using SoftmaxField = ImageGrid;

bool is_softmax_field(const ImageGrid& grid, double tol = 1e-9);
void require_softmax_field(const ImageGrid& grid, double tol = 1e-9);

/// Throws if any value is non-finite.
void require_finite(const ImageGrid& grid);

/// Ground-truth partition: one integer region id per pixel. Ids are exactly
/// {0, ..., region_count()-1} with every id nonempty; the constructor rejects
/// anything else. Use from_labels to normalize an arbitrary label image.
class RegionMap {
 public:
  RegionMap(int height, int width, std::vector<int32_t> ids);

  /// Remaps arbitrary labels to contiguous ids in order of first appearance.
  static RegionMap from_labels(int height, int width, std::span<const int32_t> labels);

  int height() const { return height_; }
  int width() const { return width_; }
  int region_count() const { return region_count_; }
  int64_t pixel_count() const { return static_cast<int64_t>(height_) * width_; }

  int32_t id_at(int y, int x) const { return ids_[static_cast<int64_t>(y) * width_ + x]; }
  const std::vector<int32_t>& ids() const { return ids_; }
  const std::vector<int64_t>& sizes() const { return sizes_; }

  bool operator==(const RegionMap& other) const = default;

 private:
  int height_;
  int width_;
  int region_count_;
  std::vector<int32_t> ids_;
  std::vector<int64_t> sizes_;
};

/// Per-region pixel counts and channel-wise descriptor means.
struct RegionStats {
  std::vector<int64_t> sizes;  // one per region
  std::vector<double> means;   // region-major, channels per region
  int channels = 0;

  int region_count() const { return static_cast<int>(sizes.size()); }
  double mean(int region, int channel) const {
    return means[static_cast<size_t>(region) * channels + channel];
  }
};

/// Single pass over all pixels, O(pixels * channels). Accumulation order is
/// raster order, so the result for a given partition does not depend on how
/// its regions are numbered.
RegionStats compute_region_stats(const ImageGrid& field, const RegionMap& regions);

/// Relabels regions through a bijection on {0..N-1}.
RegionMap permute_region_ids(const RegionMap& regions, std::span<const int32_t> perm);

}  // namespace casseg
