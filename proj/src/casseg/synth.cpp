#include "casseg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "casseg/grid_io.hpp"
#include "casseg/rng.hpp"
#include "json.hpp"

namespace casseg {

ToyDataset gen_toy_gaussians(int n1, int n2, double var, uint64_t seed) {
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("gen_toy_gaussians: class counts must be >= 1");
  if (!(var >= 0.0) || !std::isfinite(var)) {
    throw std::invalid_argument("gen_toy_gaussians: variance must be finite and non-negative");
  }
  const double stddev = std::sqrt(var);
  Rng rng(seed);
  ToyDataset ds;
  auto draw_set = [&](std::vector<ToyPoint>& out) {
    out.reserve(static_cast<size_t>(n1) + n2);
    for (int i = 0; i < n1; ++i) {
      out.push_back({rng.normal(1.0, stddev), rng.normal(0.0, stddev), 0});
    }
    for (int i = 0; i < n2; ++i) {
      out.push_back({rng.normal(0.0, stddev), rng.normal(1.0, stddev), 1});
    }
  };
  draw_set(ds.train);
  draw_set(ds.test);
  return ds;
}

namespace {

constexpr int kMinRegionPixels = 16;
constexpr int kMaxAttempts = 1000;

// Backgrounds are dim, shapes bright. The exact hue still varies per image,
// but class identity stays learnable from appearance across a dataset, the
// way salient objects differ statistically from backgrounds in real photos.
constexpr double kBackgroundLow = 0.05;
constexpr double kBackgroundHigh = 0.45;
constexpr double kForegroundLow = 0.55;
constexpr double kForegroundHigh = 0.95;
constexpr double kMinForegroundDistance = 0.3;

std::vector<std::array<double, 3>> draw_region_colors(Rng& rng, int regions) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::array<double, 3>> colors(regions);
    for (int i = 0; i < regions; ++i) {
      const double lo = i == 0 ? kBackgroundLow : kForegroundLow;
      const double hi = i == 0 ? kBackgroundHigh : kForegroundHigh;
      colors[i] = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
    }
    bool ok = true;
    for (int i = 1; i < regions && ok; ++i) {
      for (int j = i + 1; j < regions && ok; ++j) {
        double d2 = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double d = colors[i][k] - colors[j][k];
          d2 += d * d;
        }
        ok = d2 >= kMinForegroundDistance * kMinForegroundDistance;
      }
    }
    if (ok) return colors;
  }
  throw std::runtime_error("gen_shapes: could not draw separated region colors");
}

SynthSample gen_one_sample(Rng& rng, int size, int regions_per_image, double noise) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<int32_t> ids(static_cast<size_t>(size) * size, 0);
    for (int32_t region = 1; region < regions_per_image; ++region) {
      const bool ellipse = rng.uniform_int(0, 1) == 0;
      const double cx = rng.uniform(0.2 * size, 0.8 * size);
      const double cy = rng.uniform(0.2 * size, 0.8 * size);
      const double rx = rng.uniform(size / 8.0, size / 3.0);
      const double ry = rng.uniform(size / 8.0, size / 3.0);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double dx = (x + 0.5 - cx) / rx;
          const double dy = (y + 0.5 - cy) / ry;
          const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                      : std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0;
          if (inside) ids[static_cast<size_t>(y) * size + x] = region;
        }
      }
    }

    std::vector<int64_t> sizes(regions_per_image, 0);
    for (int32_t id : ids) sizes[id]++;
    // A shape may fall mostly off-canvas or get buried under a later one.
    if (*std::min_element(sizes.begin(), sizes.end()) < kMinRegionPixels) continue;

    const auto colors = draw_region_colors(rng, regions_per_image);
    ImageGrid image(size, size, 3);
    for (size_t p = 0; p < ids.size(); ++p) {
      for (int c = 0; c < 3; ++c) {
        image.values[p * 3 + c] = colors[ids[p]][c] + noise * rng.normal(0.0, 1.0);
      }
    }
    std::vector<int32_t> labels(regions_per_image, 1);
    labels[0] = 0;  // background
    return SynthSample{std::move(image), RegionMap(size, size, std::move(ids)), std::move(labels),
                       false};
  }
  throw std::runtime_error("gen_shapes: exceeded resampling attempts");
}

}  // namespace

std::vector<SynthSample> gen_shapes(int count, int size, int regions_per_image, double noise,
                                    uint64_t seed) {
  if (count < 1) throw std::invalid_argument("gen_shapes: count must be >= 1");
  if (size < 16) throw std::invalid_argument("gen_shapes: size must be >= 16");
  if (regions_per_image < 2 || regions_per_image > 3) {
    throw std::invalid_argument("gen_shapes: regions_per_image must be 2 or 3");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw std::invalid_argument("gen_shapes: noise must be finite and non-negative");
  }
  Rng base(seed);
  std::vector<SynthSample> samples;
  samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng = base.derive(static_cast<uint64_t>(i));
    samples.push_back(gen_one_sample(rng, size, regions_per_image, noise));
  }
  return samples;
}

std::vector<SynthSample> flip_labels(const std::vector<SynthSample>& samples, double fraction,
                                     uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("flip_labels: fraction must lie in [0, 1]");
  }
  for (const SynthSample& s : samples) {
    for (int32_t l : s.class_labels) {
      if (l != 0 && l != 1) throw std::invalid_argument("flip_labels: class labels must be binary");
    }
  }

  const int64_t n = static_cast<int64_t>(samples.size());
  const int64_t k = std::llround(fraction * static_cast<double>(n));
  std::vector<int64_t> order(n);
  for (int64_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (int64_t i = 0; i < k; ++i) {
    std::swap(order[i], order[rng.uniform_int(i, n - 1)]);
  }

  std::vector<SynthSample> out = samples;
  for (int64_t i = 0; i < k; ++i) {
    SynthSample& s = out[order[i]];
    for (int32_t& l : s.class_labels) l = 1 - l;
    s.fidelity_flag = !s.fidelity_flag;
  }
  return out;
}

ImageGrid standardize(const ImageGrid& image) {
  if (image.values.empty()) throw std::invalid_argument("standardize: empty image");
  double mean = 0.0;
  for (double v : image.values) mean += v;
  mean /= static_cast<double>(image.values.size());
  double var = 0.0;
  for (double v : image.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(image.values.size());
  if (var == 0.0) throw std::invalid_argument("standardize: image has zero variance");
  const double inv = 1.0 / (std::sqrt(var) * 255.0);
  ImageGrid out(image.height, image.width, image.channels);
  for (size_t i = 0; i < image.values.size(); ++i) {
    out.values[i] = (image.values[i] - mean) * inv;
  }
  return out;
}

void save_dataset(const std::string& dir, const std::vector<SynthSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json index;
  index["format"] = "casseg-dataset";
  index["version"] = 1;
  index["count"] = samples.size();
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "sample_%04zu", i);
    const std::string image_name = std::string(stem) + "_image.casg";
    const std::string regions_name = std::string(stem) + "_regions.casg";
    save_grid(fs::path(dir) / image_name, samples[i].image);
    save_region_map(fs::path(dir) / regions_name, samples[i].regions);
    nlohmann::ordered_json js;
    js["id"] = i;
    js["image"] = image_name;
    js["regions"] = regions_name;
    js["class_labels"] = samples[i].class_labels;
    js["fidelity_flag"] = samples[i].fidelity_flag;
    list.push_back(js);
  }
  index["samples"] = list;
  std::ofstream out(fs::path(dir) / "index.json", std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot write index in " + dir);
  out << index.dump(2) << '\n';
  if (!out) throw std::runtime_error("save_dataset: index write failed in " + dir);
}

std::vector<SynthSample> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "index.json", std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open index in " + dir);
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("load_dataset: bad index: ") + e.what());
  }
  if (index.value("format", "") != "casseg-dataset") {
    throw std::runtime_error("load_dataset: not a dataset index");
  }
  std::vector<SynthSample> samples;
  for (const auto& js : index.at("samples")) {
    SynthSample s{load_grid(fs::path(dir) / js.at("image").get<std::string>()),
                  load_region_map(fs::path(dir) / js.at("regions").get<std::string>()),
                  js.at("class_labels").get<std::vector<int32_t>>(),
                  js.at("fidelity_flag").get<bool>()};
    if (static_cast<int>(s.class_labels.size()) != s.regions.region_count()) {
      throw std::runtime_error("load_dataset: class label count does not match regions");
    }
    if (s.image.height != s.regions.height() || s.image.width != s.regions.width()) {
      throw std::runtime_error("load_dataset: image and region shapes differ");
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace casseg
