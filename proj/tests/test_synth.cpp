#include <cmath>
#include <fstream>
#include <set>

#include "casseg/synth.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace casseg;

TEST_CASE("toy gaussians: counts, ordering, and class centers") {
  const ToyDataset ds = gen_toy_gaussians(40, 7, 0.2, 123);
  REQUIRE(ds.train.size() == 47);
  REQUIRE(ds.test.size() == 47);
  for (int i = 0; i < 40; ++i) CHECK(ds.train[i].class_id == 0);
  for (int i = 40; i < 47; ++i) CHECK(ds.train[i].class_id == 1);

  SUBCASE("zero variance collapses onto the centers") {
    const ToyDataset exact = gen_toy_gaussians(3, 2, 0.0, 9);
    for (const auto& p : exact.train) {
      if (p.class_id == 0) {
        CHECK(p.x0 == 1.0);
        CHECK(p.x1 == 0.0);
      } else {
        CHECK(p.x0 == 0.0);
        CHECK(p.x1 == 1.0);
      }
    }
  }
  SUBCASE("sample moments approach the population values") {
    const ToyDataset big = gen_toy_gaussians(4000, 4000, 0.2, 321);
    double m0 = 0.0, m1 = 0.0, v0 = 0.0;
    for (int i = 0; i < 4000; ++i) {
      m0 += big.train[i].x0;
      m1 += big.train[i].x1;
    }
    m0 /= 4000.0;
    m1 /= 4000.0;
    for (int i = 0; i < 4000; ++i) {
      v0 += (big.train[i].x0 - m0) * (big.train[i].x0 - m0);
    }
    v0 /= 4000.0;
    CHECK(std::fabs(m0 - 1.0) < 0.02);
    CHECK(std::fabs(m1 - 0.0) < 0.02);
    CHECK(std::fabs(v0 - 0.2) < 0.02);
  }
  SUBCASE("train and test are distinct draws; seeds reproduce") {
    CHECK(ds.train != ds.test);
    const ToyDataset again = gen_toy_gaussians(40, 7, 0.2, 123);
    CHECK(again.train == ds.train);
    CHECK(again.test == ds.test);
    const ToyDataset other = gen_toy_gaussians(40, 7, 0.2, 124);
    CHECK(other.train != ds.train);
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(gen_toy_gaussians(0, 5, 0.2, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_toy_gaussians(5, 5, -1.0, 1), std::invalid_argument);
  }
}

TEST_CASE("gen_shapes produces well-formed samples") {
  const auto samples = gen_shapes(6, 24, 2, 0.05, 42);
  REQUIRE(samples.size() == 6);
  for (const auto& s : samples) {
    CHECK(s.image.height == 24);
    CHECK(s.image.width == 24);
    CHECK(s.image.channels == 3);
    CHECK(s.regions.region_count() == 2);
    CHECK(s.class_labels == std::vector<int32_t>{0, 1});
    CHECK_FALSE(s.fidelity_flag);
    for (int64_t size : s.regions.sizes()) CHECK(size >= 16);
    for (double v : s.image.values) CHECK(std::isfinite(v));
  }
  CHECK(samples[0].regions.ids() != samples[1].regions.ids());

  SUBCASE("three-region variant") {
    const auto tri = gen_shapes(4, 24, 3, 0.05, 7);
    for (const auto& s : tri) {
      CHECK(s.regions.region_count() == 3);
      CHECK(s.class_labels == std::vector<int32_t>{0, 1, 1});
    }
  }
  SUBCASE("seeds reproduce bit-exactly") {
    const auto again = gen_shapes(6, 24, 2, 0.05, 42);
    CHECK(again == samples);
    CHECK(gen_shapes(6, 24, 2, 0.05, 43) != samples);
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(gen_shapes(0, 24, 2, 0.05, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_shapes(2, 8, 2, 0.05, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_shapes(2, 24, 5, 0.05, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_shapes(2, 24, 2, -0.1, 1), std::invalid_argument);
  }
}

TEST_CASE("noiseless shapes have constant, dim-vs-bright region colors") {
  const auto samples = gen_shapes(5, 24, 3, 0.0, 11);
  for (const auto& s : samples) {
    // recover the per-region colors; with noise 0 they must be constant
    std::vector<std::vector<double>> colors(3, std::vector<double>(3, -1.0));
    for (int64_t p = 0; p < s.regions.pixel_count(); ++p) {
      const int id = s.regions.ids()[p];
      for (int c = 0; c < 3; ++c) {
        const double v = s.image.values[p * 3 + c];
        if (colors[id][c] < 0.0) colors[id][c] = v;
        CHECK(v == colors[id][c]);
      }
    }
    // background dim, every shape bright: the class cue the nets train on
    for (int c = 0; c < 3; ++c) {
      CHECK(colors[0][c] < 0.5);
      CHECK(colors[1][c] > 0.5);
      CHECK(colors[2][c] > 0.5);
    }
    // the two foreground colors stay mutually separated
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = colors[1][c] - colors[2][c];
      d2 += d * d;
    }
    CHECK(d2 >= 0.09);
  }
}

TEST_CASE("flip_labels flips exactly the requested fraction and nothing else") {
  const auto samples = gen_shapes(10, 24, 2, 0.05, 3);

  SUBCASE("fraction 0 is the identity") { CHECK(flip_labels(samples, 0.0, 5) == samples); }
  SUBCASE("fraction 1 inverts every label") {
    const auto flipped = flip_labels(samples, 1.0, 5);
    for (size_t i = 0; i < samples.size(); ++i) {
      CHECK(flipped[i].class_labels == std::vector<int32_t>{1, 0});
      CHECK(flipped[i].fidelity_flag);
      CHECK(flipped[i].regions == samples[i].regions);   // geometry untouched
      CHECK(flipped[i].image.values == samples[i].image.values);
    }
  }
  SUBCASE("intermediate fractions flip round(fraction * n) samples") {
    const auto flipped = flip_labels(samples, 0.3, 5);
    int count = 0;
    for (const auto& s : flipped) count += s.fidelity_flag ? 1 : 0;
    CHECK(count == 3);
  }
  SUBCASE("the same flip twice is the identity") {
    const auto once = flip_labels(samples, 0.4, 17);
    const auto twice = flip_labels(once, 0.4, 17);
    CHECK(twice == samples);
  }
  SUBCASE("different seeds choose different subsets") {
    auto mask = [](const std::vector<SynthSample>& v) {
      std::vector<bool> m;
      for (const auto& s : v) m.push_back(s.fidelity_flag);
      return m;
    };
    // 10 choose 5 is large; identical picks across two seeds would be rare
    const auto a = mask(flip_labels(samples, 0.5, 1));
    const auto b = mask(flip_labels(samples, 0.5, 2));
    const auto c = mask(flip_labels(samples, 0.5, 3));
    CHECK((a != b || b != c));
  }
  SUBCASE("fraction outside [0, 1] is rejected") {
    CHECK_THROWS_AS(flip_labels(samples, -0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(flip_labels(samples, 1.1, 1), std::invalid_argument);
  }
}

TEST_CASE("standardize centers, scales, and rejects constant images") {
  Rng rng(202);
  ImageGrid img(8, 8, 3);
  for (auto& v : img.values) v = rng.uniform(0.0, 255.0);

  const ImageGrid out = standardize(img);
  double mean = 0.0;
  for (double v : out.values) mean += v;
  mean /= double(out.values.size());
  double var = 0.0;
  for (double v : out.values) var += (v - mean) * (v - mean);
  var /= double(out.values.size());
  CHECK(std::fabs(mean) < 1e-15);
  CHECK(std::sqrt(var) == doctest::Approx(1.0 / 255.0).epsilon(1e-12));

  SUBCASE("affine changes of the input do not change the output") {
    ImageGrid scaled = img;
    for (auto& v : scaled.values) v = 3.5 * v - 100.0;
    const ImageGrid out2 = standardize(scaled);
    for (size_t i = 0; i < out.values.size(); ++i) {
      CHECK(out2.values[i] == doctest::Approx(out.values[i]).epsilon(1e-12));
    }
  }
  SUBCASE("zero variance throws") {
    ImageGrid flat(4, 4, 1);
    for (auto& v : flat.values) v = 9.0;
    CHECK_THROWS_AS(standardize(flat), std::invalid_argument);
  }
}

TEST_CASE("datasets round trip through the directory format") {
  testutil::TempDir tmp("dataset");
  auto samples = gen_shapes(4, 24, 2, 0.05, 8);
  samples = flip_labels(samples, 0.5, 2);
  save_dataset(tmp.str(), samples);

  CHECK(std::filesystem::exists(tmp.path / "index.json"));
  CHECK(load_dataset(tmp.str()) == samples);

  SUBCASE("missing directory fails cleanly") {
    CHECK_THROWS_AS(load_dataset(tmp.str() + "/absent"), std::runtime_error);
  }
  SUBCASE("foreign json is rejected") {
    std::ofstream(tmp.path / "index.json") << "{\"format\": \"something-else\"}";
    CHECK_THROWS_AS(load_dataset(tmp.str()), std::runtime_error);
  }
  SUBCASE("label-count mismatch is rejected") {
    // truncate sample 0's label list in the index
    std::ifstream in(tmp.path / "index.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto labels_pos = text.find("\"class_labels\":");
    REQUIRE(labels_pos != std::string::npos);
    const auto open = text.find('[', labels_pos);
    const auto close = text.find(']', open);
    text.replace(open, close - open + 1, "[0]");
    std::ofstream(tmp.path / "index.json") << text;
    CHECK_THROWS_AS(load_dataset(tmp.str()), std::runtime_error);
  }
}
