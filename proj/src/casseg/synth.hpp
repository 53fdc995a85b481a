#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "casseg/grid.hpp"

namespace casseg {

/// One 2-D point of the toy imbalance problem. class_id 0 is the majority
/// cluster around (1, 0); class_id 1 the minority cluster around (0, 1).
struct ToyPoint {
  double x0 = 0.0;
  double x1 = 0.0;
  int class_id = 0;

  bool operator==(const ToyPoint&) const = default;
};

struct ToyDataset {
  std::vector<ToyPoint> train;
  std::vector<ToyPoint> test;
};

/// Two independently drawn point sets (train, test), each with n1 majority
/// and n2 minority points under isotropic Gaussian noise. var is the
/// per-component variance (std = sqrt(var)). Deterministic per seed.
ToyDataset gen_toy_gaussians(int n1, int n2, double var, uint64_t seed);

/// One synthetic training image: appearance grid, ground-truth regions, and
/// a per-region class id (0 background, 1 foreground) used by CE/CACE.
struct SynthSample {
  ImageGrid image;
  RegionMap regions;
  std::vector<int32_t> class_labels;
  bool fidelity_flag = false;  // labels inverted relative to the geometry

  bool operator==(const SynthSample&) const = default;
};

/// Random ellipses / rectangles over a background. Each region gets a mean
/// color (pairwise L2 distance >= 0.5) plus Gaussian noise of the given
/// sigma, so appearance rather than position separates regions. Samples
/// whose smallest region ends up under 16 pixels are redrawn.
std::vector<SynthSample> gen_shapes(int count, int size, int regions_per_image, double noise,
                                    uint64_t seed);

/// Inverts class_labels (0 <-> 1) on exactly round(fraction * n) samples,
/// chosen uniformly per seed. Region geometry is untouched; fidelity_flag
/// toggles, so applying the same flip twice is the identity.
std::vector<SynthSample> flip_labels(const std::vector<SynthSample>& samples, double fraction,
                                     uint64_t seed);

/// Subtract the per-image mean, divide by the standard deviation, then
/// divide by 255.0. Throws on zero variance.
ImageGrid standardize(const ImageGrid& image);

/// Dataset directory layout: index.json plus one pair of flat binary grids
/// (image, regions) per sample.
void save_dataset(const std::string& dir, const std::vector<SynthSample>& samples);
std::vector<SynthSample> load_dataset(const std::string& dir);

}  // namespace casseg
