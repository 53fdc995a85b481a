#pragma once

#include <span>
#include <string>
#include <vector>

#include "casseg/grid.hpp"

namespace casseg {

struct BinaryMap {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> values;  // strictly 0 or 1

  BinaryMap() = default;
  BinaryMap(int h, int w) : height(h), width(w), values(static_cast<size_t>(h) * w, 0) {}
  int64_t pixel_count() const { return static_cast<int64_t>(height) * width; }
  uint8_t at(int y, int x) const { return values[static_cast<int64_t>(y) * width + x]; }
};

/// Adaptive thresholding of a single-channel saliency map in [0,1]:
/// B = S > T with T = 2 * mean(S), T clamped to at most 1 - 1e-12 so a
/// perfect all-ones map binarizes to all ones.
BinaryMap binarize(const ImageGrid& saliency);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

PrecisionRecall precision_recall(const BinaryMap& predicted, const BinaryMap& truth);

/// Weighted harmonic mean of precision and recall,
/// (1 + b2) P R / (b2 P + R); 0 when the denominator vanishes.
double f_beta(const BinaryMap& predicted, const BinaryMap& truth, double beta_sq = 0.3);

/// Mean absolute error between a saliency map in [0,1] and a binary mask.
double mae(const ImageGrid& saliency, const BinaryMap& truth);

/// Picks the output channel most correlated (Pearson, pooled over all pixels
/// of all validation pairs) with the ground-truth masks. Zero-variance
/// channels score -inf; ties break toward the lower index.
int select_salient_channel(std::span<const ImageGrid> outputs, std::span<const BinaryMap> truths);

/// Fraction of pixel pairs on which two partitions agree (joined in both or
/// separated in both). Contingency-table computation, O(P + Na*Nb).
double rand_index(const RegionMap& a, const RegionMap& b);

/// H(A|B) + H(B|A) in nats; 0 log 0 := 0.
double variation_of_information(const RegionMap& a, const RegionMap& b);

/// Sum over ground-truth regions of (|g| / P) * max_p IoU(g, p).
double gt_covering(const RegionMap& predicted, const RegionMap& truth);

/// F1 of greedily matched boundary pixels. A pixel is boundary when a
/// 4-neighbor lies in a different region; matches are one-to-one within
/// Euclidean distance tol. Greedy matching lower-bounds the optimal
/// assignment.
double boundary_f(const RegionMap& predicted, const RegionMap& truth, double tol = 2.0);

/// All evaluation metrics for one prediction/ground-truth pairing.
/// Serializes to a single JSON object and a CSV row; the column order is
/// fixed: f_beta, mae, precision, recall, rand_index,
/// variation_of_information, gt_covering, boundary_f.
struct MetricsReport {
  double f_beta = 0.0;
  double mae = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double rand_index = 0.0;
  double variation_of_information = 0.0;
  double gt_covering = 0.0;
  double boundary_f = 0.0;

  static std::string csv_header();
  std::string csv_row() const;
  std::string to_json() const;
};

}  // namespace casseg
