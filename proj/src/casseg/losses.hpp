#pragma once

#include "casseg/grid.hpp"

namespace casseg {

struct CasConfig {
  /// Weight on the within-region variance term; 1 - alpha weighs the
  /// between-region mean-separation term.
  double alpha = 0.1;
};

/// Per-pixel, per-channel dLoss/ds, laid out like the field it differentiates.
using GradField = ImageGrid;

struct LossBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Class-agnostic segmentation loss:
///
///   sum_i (alpha / |r_i|) sum_{x in r_i} ||s(x) - mean_i||^2
///   - (1 - alpha) sum_{i != j} ||mean_i - mean_j||^2
///
/// The pair sum runs over ordered pairs, i.e. each unordered pair counts
/// twice. The per-pixel term is accumulated in raster order and the pair
/// terms are accumulated in ascending value order, so the result is
/// bit-identical under any relabeling of the regions.
double cas_forward(const ImageGrid& field, const RegionMap& regions, const CasConfig& cfg);

/// Analytic gradient of cas_forward with respect to the field. For a pixel y
/// in region k and channel m:
///
///   (2 alpha / |r_k|) (s_m(y) - mean_km)
///   - (4 (1-alpha) / |r_k|) sum_{j != k} (mean_km - mean_jm)
///
/// Inner sums use the same relabeling-independent accumulation order as the
/// forward pass.
GradField cas_backward(const ImageGrid& field, const RegionMap& regions, const CasConfig& cfg);

/// Mean pixelwise negative log-likelihood, -log s_{label(x)}(x), with the
/// probability clamped below at 1e-12. Label ids index channels and must be
/// < field.channels.
double ce_forward(const ImageGrid& field, const RegionMap& labels);

/// d/ds of ce_forward: -[m == label(x)] / (P * s_m(x)). Where the clamp is
/// active (s below 1e-12) the forward is flat, so the gradient is zero.
GradField ce_backward(const ImageGrid& field, const RegionMap& labels);

struct CaceResult {
  double value = 0.0;
  /// True when the inverted label assignment achieved the minimum. Ties go
  /// to the labels as given.
  bool flipped_won = false;
};

/// Class-agnostic cross-entropy for binary problems (2 channels): the smaller
/// of the cross-entropy under the given labels and under the inverted labels.
CaceResult cace_forward(const ImageGrid& field, const RegionMap& labels);

/// Gradient of the winning assignment of cace_forward.
GradField cace_backward(const ImageGrid& field, const RegionMap& labels);

/// Attainable range of cas_forward over valid softmax fields:
///   upper = alpha * N * (1 - 1/M)       (max per-region simplex variance)
///   lower = -2 (1-alpha) * N * (N-1)    (ordered pairs times simplex diameter^2)
LossBounds cas_bounds(int region_count, const CasConfig& cfg, int channels);

}  // namespace casseg
