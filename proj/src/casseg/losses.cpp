#include "casseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace casseg {

namespace {

constexpr double kLogFloor = 1e-12;

void check_cas_inputs(const ImageGrid& field, const RegionMap& regions, const CasConfig& cfg) {
  if (field.height != regions.height() || field.width != regions.width())
    throw std::invalid_argument("cas: field and region map dimensions differ");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("cas: alpha must lie in [0, 1]");
}

void check_label_inputs(const ImageGrid& field, const RegionMap& labels) {
  if (field.height != labels.height() || field.width != labels.width())
    throw std::invalid_argument("ce: field and label map dimensions differ");
  if (labels.region_count() > field.channels)
    throw std::invalid_argument("ce: label id exceeds channel count");
}

/// Sums values in ascending order. The sorted sequence is determined by the
/// multiset alone, so the sum is bit-identical however the inputs were
/// produced or ordered.
double canonical_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (const double t : terms) sum += t;
  return sum;
}

double squared_distance(const RegionStats& stats, int i, int j) {
  double d2 = 0.0;
  for (int c = 0; c < stats.channels; ++c) {
    const double d = stats.mean(i, c) - stats.mean(j, c);
    d2 += d * d;
  }
  return d2;
}

double ce_raw(const ImageGrid& field, const std::vector<int32_t>& ids, bool flip) {
  const int m = field.channels;
  const int64_t pixels = field.pixel_count();
  double sum = 0.0;
  for (int64_t p = 0; p < pixels; ++p) {
    const int32_t label = flip ? 1 - ids[p] : ids[p];
    const double v = std::max(field.values[p * m + label], kLogFloor);
    sum += -std::log(v);
  }
  return sum / static_cast<double>(pixels);
}

GradField ce_grad_raw(const ImageGrid& field, const std::vector<int32_t>& ids, bool flip) {
  const int m = field.channels;
  const int64_t pixels = field.pixel_count();
  GradField grad(field.height, field.width, m);
  const double inv_pixels = 1.0 / static_cast<double>(pixels);
  for (int64_t p = 0; p < pixels; ++p) {
    const int32_t label = flip ? 1 - ids[p] : ids[p];
    const double v = field.values[p * m + label];
    if (v > kLogFloor) grad.values[p * m + label] = -inv_pixels / v;
  }
  return grad;
}

void check_cace_inputs(const ImageGrid& field, const RegionMap& labels) {
  check_label_inputs(field, labels);
  if (field.channels != 2)
    throw std::invalid_argument("cace: defined for 2 channels only");
  if (labels.region_count() > 2)
    throw std::invalid_argument("cace: labels must be binary");
}

}  // namespace

double cas_forward(const ImageGrid& field, const RegionMap& regions, const CasConfig& cfg) {
  check_cas_inputs(field, regions, cfg);
  const RegionStats stats = compute_region_stats(field, regions);
  const int n = regions.region_count();
  const int m = field.channels;

  double uniformer = 0.0;
  const int64_t pixels = field.pixel_count();
  const auto& ids = regions.ids();
  for (int64_t p = 0; p < pixels; ++p) {
    const int32_t id = ids[p];
    const double* v = &field.values[p * m];
    const double* mu = &stats.means[static_cast<size_t>(id) * m];
    double d2 = 0.0;
    for (int c = 0; c < m; ++c) {
      const double d = v[c] - mu[c];
      d2 += d * d;
    }
    uniformer += cfg.alpha / static_cast<double>(stats.sizes[static_cast<size_t>(id)]) * d2;
  }

  std::vector<double> pair_terms;
  pair_terms.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pair_terms.push_back(squared_distance(stats, i, j));
  // x2: the loss counts ordered pairs, every unordered pair appears twice.
  const double discriminator = 2.0 * canonical_sum(pair_terms);

  return uniformer - (1.0 - cfg.alpha) * discriminator;
}

GradField cas_backward(const ImageGrid& field, const RegionMap& regions, const CasConfig& cfg) {
  check_cas_inputs(field, regions, cfg);
  const RegionStats stats = compute_region_stats(field, regions);
  const int n = regions.region_count();
  const int m = field.channels;

  // mean_sep[k][c] = sum_{j != k} (mean_kc - mean_jc), accumulated in
  // ascending value order per (k, c) so the sum ignores region numbering.
  std::vector<double> mean_sep(static_cast<size_t>(n) * m, 0.0);
  std::vector<double> diffs(static_cast<size_t>(n) - 1);
  for (int k = 0; k < n; ++k) {
    for (int c = 0; c < m; ++c) {
      size_t idx = 0;
      for (int j = 0; j < n; ++j) {
        if (j == k) continue;
        diffs[idx++] = stats.mean(k, c) - stats.mean(j, c);
      }
      mean_sep[static_cast<size_t>(k) * m + c] = canonical_sum(diffs);
    }
  }

  GradField grad(field.height, field.width, m);
  const int64_t pixels = field.pixel_count();
  const auto& ids = regions.ids();
  for (int64_t p = 0; p < pixels; ++p) {
    const int32_t k = ids[p];
    const double inv_size = 1.0 / static_cast<double>(stats.sizes[static_cast<size_t>(k)]);
    const double* v = &field.values[p * m];
    const double* mu = &stats.means[static_cast<size_t>(k) * m];
    const double* sep = &mean_sep[static_cast<size_t>(k) * m];
    double* g = &grad.values[p * m];
    for (int c = 0; c < m; ++c) {
      g[c] = 2.0 * cfg.alpha * inv_size * (v[c] - mu[c]) -
             4.0 * (1.0 - cfg.alpha) * inv_size * sep[c];
    }
  }
  return grad;
}

double ce_forward(const ImageGrid& field, const RegionMap& labels) {
  check_label_inputs(field, labels);
  return ce_raw(field, labels.ids(), /*flip=*/false);
}

GradField ce_backward(const ImageGrid& field, const RegionMap& labels) {
  check_label_inputs(field, labels);
  return ce_grad_raw(field, labels.ids(), /*flip=*/false);
}

CaceResult cace_forward(const ImageGrid& field, const RegionMap& labels) {
  check_cace_inputs(field, labels);
  const double as_given = ce_raw(field, labels.ids(), false);
  const double flipped = ce_raw(field, labels.ids(), true);
  if (flipped < as_given) return {flipped, true};
  return {as_given, false};
}

GradField cace_backward(const ImageGrid& field, const RegionMap& labels) {
  const CaceResult result = cace_forward(field, labels);
  return ce_grad_raw(field, labels.ids(), result.flipped_won);
}

LossBounds cas_bounds(int region_count, const CasConfig& cfg, int channels) {
  if (region_count < 1) throw std::invalid_argument("cas_bounds: region count must be >= 1");
  if (channels < 2) throw std::invalid_argument("cas_bounds: channel count must be >= 2");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("cas_bounds: alpha must lie in [0, 1]");
  const double n = static_cast<double>(region_count);
  LossBounds bounds;
  bounds.upper = cfg.alpha * n * (1.0 - 1.0 / static_cast<double>(channels));
  bounds.lower = -2.0 * (1.0 - cfg.alpha) * n * (n - 1.0);
  return bounds;
}

}  // namespace casseg
