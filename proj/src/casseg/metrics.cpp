#include "casseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "casseg/format.hpp"
#include "json.hpp"

namespace casseg {

namespace {

void check_single_channel(const ImageGrid& g, const char* what) {
  if (g.channels != 1) {
    throw std::invalid_argument(std::string(what) + ": expected a single-channel map, got " +
                                std::to_string(g.channels) + " channels");
  }
  if (g.pixel_count() == 0) {
    throw std::invalid_argument(std::string(what) + ": empty map");
  }
}

void check_same_plane(int h1, int w1, int h2, int w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch, " + std::to_string(h1) +
                                "x" + std::to_string(w1) + " vs " + std::to_string(h2) + "x" +
                                std::to_string(w2));
  }
}

void check_binary(const BinaryMap& b, const char* what) {
  if (b.height <= 0 || b.width <= 0 ||
      b.values.size() != static_cast<size_t>(b.pixel_count())) {
    throw std::invalid_argument(std::string(what) + ": malformed binary map");
  }
  for (uint8_t v : b.values) {
    if (v > 1) throw std::invalid_argument(std::string(what) + ": binary map holds values other than 0/1");
  }
}

int64_t pairs(int64_t n) { return n * (n - 1) / 2; }

// Joint region counts. counts[ia * nb + ib] = #pixels with a-id ia and b-id ib.
std::vector<int64_t> contingency(const RegionMap& a, const RegionMap& b) {
  check_same_plane(a.height(), a.width(), b.height(), b.width(), "contingency");
  const int64_t p = a.pixel_count();
  const int nb = b.region_count();
  std::vector<int64_t> counts(static_cast<size_t>(a.region_count()) * nb, 0);
  for (int64_t i = 0; i < p; ++i) {
    counts[static_cast<size_t>(a.ids()[i]) * nb + b.ids()[i]]++;
  }
  return counts;
}

}  // namespace

BinaryMap binarize(const ImageGrid& saliency) {
  check_single_channel(saliency, "binarize");
  double sum = 0.0;
  for (double v : saliency.values) {
    if (v < 0.0 || v > 1.0) {
      throw std::invalid_argument("binarize: saliency values must lie in [0,1]");
    }
    sum += v;
  }
  double threshold = 2.0 * sum / static_cast<double>(saliency.pixel_count());
  threshold = std::min(threshold, 1.0 - 1e-12);
  BinaryMap out(saliency.height, saliency.width);
  for (size_t i = 0; i < saliency.values.size(); ++i) {
    out.values[i] = saliency.values[i] > threshold ? 1 : 0;
  }
  return out;
}

PrecisionRecall precision_recall(const BinaryMap& predicted, const BinaryMap& truth) {
  check_binary(predicted, "precision_recall");
  check_binary(truth, "precision_recall");
  check_same_plane(predicted.height, predicted.width, truth.height, truth.width,
                   "precision_recall");
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predicted.values.size(); ++i) {
    const bool p = predicted.values[i] != 0;
    const bool t = truth.values[i] != 0;
    if (p && t) tp++;
    else if (p) fp++;
    else if (t) fn++;
  }
  PrecisionRecall pr;
  pr.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  pr.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return pr;
}

double f_beta(const BinaryMap& predicted, const BinaryMap& truth, double beta_sq) {
  if (!(beta_sq >= 0.0) || !std::isfinite(beta_sq)) {
    throw std::invalid_argument("f_beta: beta_sq must be finite and non-negative");
  }
  const PrecisionRecall pr = precision_recall(predicted, truth);
  const double den = beta_sq * pr.precision + pr.recall;
  if (den == 0.0) return 0.0;
  return (1.0 + beta_sq) * pr.precision * pr.recall / den;
}

double mae(const ImageGrid& saliency, const BinaryMap& truth) {
  check_single_channel(saliency, "mae");
  check_binary(truth, "mae");
  check_same_plane(saliency.height, saliency.width, truth.height, truth.width, "mae");
  double sum = 0.0;
  for (size_t i = 0; i < saliency.values.size(); ++i) {
    sum += std::fabs(saliency.values[i] - static_cast<double>(truth.values[i]));
  }
  return sum / static_cast<double>(saliency.pixel_count());
}

int select_salient_channel(std::span<const ImageGrid> outputs,
                           std::span<const BinaryMap> truths) {
  if (outputs.empty() || outputs.size() != truths.size()) {
    throw std::invalid_argument("select_salient_channel: need equal, non-zero output/truth counts");
  }
  const int channels = outputs[0].channels;
  for (size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].channels != channels) {
      throw std::invalid_argument("select_salient_channel: inconsistent channel counts");
    }
    check_binary(truths[i], "select_salient_channel");
    check_same_plane(outputs[i].height, outputs[i].width, truths[i].height, truths[i].width,
                     "select_salient_channel");
  }

  double best = -std::numeric_limits<double>::infinity();
  int best_channel = -1;
  for (int c = 0; c < channels; ++c) {
    // Pooled Pearson correlation across every pixel of every pair.
    double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < outputs.size(); ++i) {
      const ImageGrid& g = outputs[i];
      const int64_t p = g.pixel_count();
      for (int64_t px = 0; px < p; ++px) {
        const double x = g.values[px * channels + c];
        const double y = static_cast<double>(truths[i].values[px]);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        n++;
      }
    }
    const double nd = static_cast<double>(n);
    const double vx = nd * sxx - sx * sx;
    const double vy = nd * syy - sy * sy;
    double score;
    if (vx <= 0.0 || vy <= 0.0) {
      score = -std::numeric_limits<double>::infinity();
    } else {
      score = (nd * sxy - sx * sy) / std::sqrt(vx * vy);
    }
    if (score > best) {
      best = score;
      best_channel = c;
    }
  }
  if (best_channel < 0 || !std::isfinite(best)) {
    throw std::runtime_error("select_salient_channel: no channel has a finite correlation");
  }
  return best_channel;
}

double rand_index(const RegionMap& a, const RegionMap& b) {
  const int64_t p = a.pixel_count();
  if (p < 2) return 1.0;
  const std::vector<int64_t> counts = contingency(a, b);
  const int na = a.region_count();
  const int nb = b.region_count();

  int64_t both = 0;
  for (int64_t c : counts) both += pairs(c);
  int64_t in_a = 0;
  for (int64_t s : a.sizes()) in_a += pairs(s);
  int64_t in_b = 0;
  for (int64_t s : b.sizes()) in_b += pairs(s);
  (void)na;
  (void)nb;

  const int64_t total = pairs(p);
  // agreements = pairs joined in both + pairs separated in both
  const int64_t agree = total - in_a - in_b + 2 * both;
  return static_cast<double>(agree) / static_cast<double>(total);
}

double variation_of_information(const RegionMap& a, const RegionMap& b) {
  const std::vector<int64_t> counts = contingency(a, b);
  const int nb = b.region_count();
  const double p = static_cast<double>(a.pixel_count());
  double vi = 0.0;
  for (int ia = 0; ia < a.region_count(); ++ia) {
    for (int ib = 0; ib < nb; ++ib) {
      const int64_t nij = counts[static_cast<size_t>(ia) * nb + ib];
      if (nij == 0) continue;  // 0 log 0 contributes nothing
      const double pij = static_cast<double>(nij) / p;
      const double pa = static_cast<double>(a.sizes()[ia]) / p;
      const double pb = static_cast<double>(b.sizes()[ib]) / p;
      vi -= pij * (std::log(pij / pa) + std::log(pij / pb));
    }
  }
  // Identical partitions can leave a tiny negative residue.
  return vi < 0.0 ? 0.0 : vi;
}

double gt_covering(const RegionMap& predicted, const RegionMap& truth) {
  const std::vector<int64_t> counts = contingency(truth, predicted);
  const int np = predicted.region_count();
  double weighted = 0.0;
  for (int g = 0; g < truth.region_count(); ++g) {
    const int64_t gsize = truth.sizes()[g];
    double best_iou = 0.0;
    for (int r = 0; r < np; ++r) {
      const int64_t inter = counts[static_cast<size_t>(g) * np + r];
      if (inter == 0) continue;
      const int64_t uni = gsize + predicted.sizes()[r] - inter;
      const double iou = static_cast<double>(inter) / static_cast<double>(uni);
      if (iou > best_iou) best_iou = iou;
    }
    weighted += static_cast<double>(gsize) * best_iou;
  }
  // One division at the end keeps equal-partition inputs at exactly 1.
  return weighted / static_cast<double>(truth.pixel_count());
}

namespace {

struct PixelCoord {
  int y;
  int x;
};

std::vector<PixelCoord> boundary_pixels(const RegionMap& m) {
  std::vector<PixelCoord> out;
  const int h = m.height();
  const int w = m.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int32_t id = m.ids()[static_cast<int64_t>(y) * w + x];
      const bool edge =
          (y > 0 && m.ids()[static_cast<int64_t>(y - 1) * w + x] != id) ||
          (y + 1 < h && m.ids()[static_cast<int64_t>(y + 1) * w + x] != id) ||
          (x > 0 && m.ids()[static_cast<int64_t>(y) * w + x - 1] != id) ||
          (x + 1 < w && m.ids()[static_cast<int64_t>(y) * w + x + 1] != id);
      if (edge) out.push_back({y, x});
    }
  }
  return out;
}

}  // namespace

double boundary_f(const RegionMap& predicted, const RegionMap& truth, double tol) {
  check_same_plane(predicted.height(), predicted.width(), truth.height(), truth.width(),
                   "boundary_f");
  if (!(tol >= 0.0) || !std::isfinite(tol)) {
    throw std::invalid_argument("boundary_f: tol must be finite and non-negative");
  }
  const std::vector<PixelCoord> bp = boundary_pixels(predicted);
  const std::vector<PixelCoord> bt = boundary_pixels(truth);
  if (bp.empty() && bt.empty()) return 1.0;
  if (bp.empty() || bt.empty()) return 0.0;

  // Candidate displacements sorted by distance, then raster order, so each
  // predicted pixel greedily takes the nearest free truth pixel and distance
  // ties resolve deterministically.
  struct Offset {
    int dy;
    int dx;
    double d2;
  };
  std::vector<Offset> offsets;
  const int reach = static_cast<int>(std::floor(tol));
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      const double d2 = static_cast<double>(dy) * dy + static_cast<double>(dx) * dx;
      if (d2 <= tol * tol) offsets.push_back({dy, dx, d2});
    }
  }
  std::sort(offsets.begin(), offsets.end(), [](const Offset& a, const Offset& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.dy != b.dy) return a.dy < b.dy;
    return a.dx < b.dx;
  });

  const int h = truth.height();
  const int w = truth.width();
  std::vector<uint8_t> is_truth_boundary(static_cast<size_t>(h) * w, 0);
  for (const PixelCoord& c : bt) {
    is_truth_boundary[static_cast<size_t>(c.y) * w + c.x] = 1;
  }
  std::vector<uint8_t> taken(static_cast<size_t>(h) * w, 0);

  int64_t matched = 0;
  for (const PixelCoord& c : bp) {
    for (const Offset& o : offsets) {
      const int ny = c.y + o.dy;
      const int nx = c.x + o.dx;
      if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
      const size_t idx = static_cast<size_t>(ny) * w + nx;
      if (is_truth_boundary[idx] && !taken[idx]) {
        taken[idx] = 1;
        matched++;
        break;
      }
    }
  }

  const double prec = static_cast<double>(matched) / static_cast<double>(bp.size());
  const double rec = static_cast<double>(matched) / static_cast<double>(bt.size());
  if (prec + rec == 0.0) return 0.0;
  return 2.0 * prec * rec / (prec + rec);
}

std::string MetricsReport::csv_header() {
  return "f_beta,mae,precision,recall,rand_index,variation_of_information,gt_covering,boundary_f";
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os << fmt_g17(f_beta) << ',' << fmt_g17(mae) << ',' << fmt_g17(precision) << ','
     << fmt_g17(recall) << ',' << fmt_g17(rand_index) << ','
     << fmt_g17(variation_of_information) << ',' << fmt_g17(gt_covering) << ','
     << fmt_g17(boundary_f);
  return os.str();
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["f_beta"] = f_beta;
  j["mae"] = mae;
  j["precision"] = precision;
  j["recall"] = recall;
  j["rand_index"] = rand_index;
  j["variation_of_information"] = variation_of_information;
  j["gt_covering"] = gt_covering;
  j["boundary_f"] = boundary_f;
  return j.dump(2);
}

}  // namespace casseg
