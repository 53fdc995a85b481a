#include <cmath>
#include <map>
#include <vector>

#include "casseg/metrics.hpp"
#include "casseg/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace casseg;

namespace {

BinaryMap random_binary(Rng& rng, int h, int w) {
  BinaryMap m(h, w);
  for (auto& v : m.values) v = rng.uniform_int(0, 1) ? 1 : 0;
  return m;
}

double f_beta_naive(const BinaryMap& pred, const BinaryMap& truth, double b2) {
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.values.size(); ++i) {
    tp += pred.values[i] && truth.values[i];
    fp += pred.values[i] && !truth.values[i];
    fn += !pred.values[i] && truth.values[i];
  }
  const double p = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
  const double r = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
  const double denom = b2 * p + r;
  return denom == 0.0 ? 0.0 : (1.0 + b2) * p * r / denom;
}

// All-pairs Rand index, O(P^2). P = 256 keeps this fast enough.
double rand_naive(const RegionMap& a, const RegionMap& b) {
  const int64_t P = a.pixel_count();
  int64_t agree = 0, total = 0;
  for (int64_t i = 0; i < P; ++i) {
    for (int64_t j = i + 1; j < P; ++j) {
      const bool same_a = a.ids()[i] == a.ids()[j];
      const bool same_b = b.ids()[i] == b.ids()[j];
      agree += same_a == same_b;
      total++;
    }
  }
  return total == 0 ? 1.0 : double(agree) / double(total);
}

double vi_naive(const RegionMap& a, const RegionMap& b) {
  const double P = double(a.pixel_count());
  std::map<std::pair<int, int>, int64_t> joint;
  std::map<int, int64_t> ca, cb;
  for (int64_t p = 0; p < a.pixel_count(); ++p) {
    joint[{a.ids()[p], b.ids()[p]}]++;
    ca[a.ids()[p]]++;
    cb[b.ids()[p]]++;
  }
  double h_a_given_b = 0.0, h_b_given_a = 0.0;
  for (const auto& [key, nij] : joint) {
    const double pij = nij / P;
    h_a_given_b -= pij * std::log(pij / (cb[key.second] / P));
    h_b_given_a -= pij * std::log(pij / (ca[key.first] / P));
  }
  return h_a_given_b + h_b_given_a;
}

double covering_naive(const RegionMap& pred, const RegionMap& truth) {
  const int64_t P = truth.pixel_count();
  double total = 0.0;
  for (int g = 0; g < truth.region_count(); ++g) {
    double best = 0.0;
    for (int q = 0; q < pred.region_count(); ++q) {
      int64_t inter = 0, uni = 0;
      for (int64_t p = 0; p < P; ++p) {
        const bool in_g = truth.ids()[p] == g;
        const bool in_q = pred.ids()[p] == q;
        inter += in_g && in_q;
        uni += in_g || in_q;
      }
      if (uni > 0) best = std::max(best, double(inter) / double(uni));
    }
    total += double(truth.sizes()[g]) * best;
  }
  return total / double(P);
}

}  // namespace

TEST_CASE("binarize applies the doubled-mean threshold") {
  ImageGrid s(1, 4, 1);
  s.values = {0.1, 0.2, 0.3, 0.8};  // mean 0.35, threshold 0.7
  BinaryMap b = binarize(s);
  CHECK(b.values == std::vector<uint8_t>{0, 0, 0, 1});

  SUBCASE("threshold clamps so an all-ones map stays all ones") {
    for (auto& v : s.values) v = 1.0;
    CHECK(binarize(s).values == std::vector<uint8_t>{1, 1, 1, 1});
  }
  SUBCASE("all-equal gray map binarizes to nothing") {
    for (auto& v : s.values) v = 0.4;  // threshold 0.8
    CHECK(binarize(s).values == std::vector<uint8_t>{0, 0, 0, 0});
  }
  SUBCASE("rejects values outside [0, 1] and multichannel input") {
    s.values[0] = 1.5;
    CHECK_THROWS_AS(binarize(s), std::invalid_argument);
    CHECK_THROWS_AS(binarize(ImageGrid(1, 4, 2)), std::invalid_argument);
  }
}

TEST_CASE("precision, recall, and f_beta match the confusion-matrix oracle") {
  Rng rng(301);
  for (int trial = 0; trial < 40; ++trial) {
    BinaryMap pred = random_binary(rng, 16, 16);
    BinaryMap truth = random_binary(rng, 16, 16);
    const double b2 = rng.uniform(0.1, 2.0);
    CHECK(testutil::rel_err(f_beta(pred, truth, b2), f_beta_naive(pred, truth, b2)) < 1e-12);

    const PrecisionRecall pr = precision_recall(pred, truth);
    CHECK(pr.precision >= 0.0);
    CHECK(pr.precision <= 1.0);
    CHECK(pr.recall >= 0.0);
    CHECK(pr.recall <= 1.0);
  }

  SUBCASE("hand case") {
    BinaryMap pred(1, 4), truth(1, 4);
    pred.values = {1, 1, 0, 0};
    truth.values = {1, 0, 1, 0};
    const PrecisionRecall pr = precision_recall(pred, truth);
    CHECK(pr.precision == 0.5);
    CHECK(pr.recall == 0.5);
    // (1+b2) * 0.25 / (0.5 b2 + 0.5) with b2 = 0.3
    CHECK(f_beta(pred, truth) == doctest::Approx(1.3 * 0.25 / 0.65).epsilon(1e-15));
  }
  SUBCASE("degenerate empty maps") {
    BinaryMap zero(2, 2), ones(2, 2);
    ones.values = {1, 1, 1, 1};
    CHECK(f_beta(zero, zero) == 0.0);  // no positives anywhere: undefined -> 0
    CHECK(f_beta(zero, ones) == 0.0);
    CHECK(f_beta(ones, ones) == 1.0);
  }
}

TEST_CASE("mae matches the direct mean of absolute differences") {
  Rng rng(302);
  ImageGrid s(16, 16, 1);
  for (auto& v : s.values) v = rng.next_double();
  BinaryMap t = random_binary(rng, 16, 16);
  double want = 0.0;
  for (size_t i = 0; i < s.values.size(); ++i) want += std::fabs(s.values[i] - t.values[i]);
  want /= double(s.values.size());
  CHECK(testutil::rel_err(mae(s, t), want) < 1e-15);
  CHECK(mae(s, t) >= 0.0);
  CHECK(mae(s, t) <= 1.0);
}

TEST_CASE("rand_index matches the all-pairs oracle") {
  Rng rng(303);
  for (int trial = 0; trial < 15; ++trial) {
    RegionMap a = testutil::random_regions(rng, 16, 16, 2 + int(rng.uniform_int(0, 3)));
    RegionMap b = testutil::random_regions(rng, 16, 16, 2 + int(rng.uniform_int(0, 3)));
    CHECK(testutil::rel_err(rand_index(a, b), rand_naive(a, b)) < 1e-12);
    CHECK(rand_index(a, b) == doctest::Approx(rand_index(b, a)).epsilon(1e-15));
  }
  RegionMap m = testutil::random_regions(rng, 8, 8, 3);
  CHECK(rand_index(m, m) == 1.0);
  RegionMap single(1, 1, {0});
  CHECK(rand_index(single, single) == 1.0);  // no pairs: vacuous agreement
}

TEST_CASE("variation_of_information matches the entropy oracle") {
  Rng rng(304);
  for (int trial = 0; trial < 15; ++trial) {
    RegionMap a = testutil::random_regions(rng, 16, 16, 2 + int(rng.uniform_int(0, 3)));
    RegionMap b = testutil::random_regions(rng, 16, 16, 2 + int(rng.uniform_int(0, 3)));
    const double got = variation_of_information(a, b);
    CHECK(std::fabs(got - vi_naive(a, b)) < 1e-12);
    CHECK(got >= 0.0);
    CHECK(std::fabs(got - variation_of_information(b, a)) < 1e-12);
  }

  SUBCASE("identical partitions have zero information distance") {
    RegionMap m = testutil::random_regions(rng, 8, 8, 4);
    CHECK(variation_of_information(m, m) == 0.0);
  }
  SUBCASE("halves vs quadrants is exactly one bit (in nats)") {
    // B refines A, so H(A|B) = 0 and H(B|A) = log 2.
    std::vector<int32_t> halves(64), quads(64);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        halves[y * 8 + x] = y < 4 ? 0 : 1;
        quads[y * 8 + x] = (y < 4 ? 0 : 2) + (x < 4 ? 0 : 1);
      }
    }
    RegionMap a(8, 8, std::move(halves));
    RegionMap b(8, 8, std::move(quads));
    CHECK(variation_of_information(a, b) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("gt_covering matches the IoU oracle and is asymmetric") {
  Rng rng(305);
  for (int trial = 0; trial < 10; ++trial) {
    RegionMap pred = testutil::random_regions(rng, 16, 16, 2 + int(rng.uniform_int(0, 2)));
    RegionMap truth = testutil::random_regions(rng, 16, 16, 2 + int(rng.uniform_int(0, 2)));
    CHECK(testutil::rel_err(gt_covering(pred, truth), covering_naive(pred, truth)) < 1e-12);
    const double c = gt_covering(pred, truth);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
  RegionMap m = testutil::random_regions(rng, 8, 8, 3);
  CHECK(gt_covering(m, m) == 1.0);

  RegionMap halves(2, 2, {0, 0, 1, 1});
  RegionMap quads(2, 2, {0, 1, 2, 3});
  CHECK(gt_covering(quads, halves) == doctest::Approx(0.5).epsilon(1e-15));

  // size weighting makes the direction matter
  RegionMap lopsided(1, 4, {0, 0, 0, 1});
  RegionMap whole(1, 4, {0, 0, 0, 0});
  CHECK(gt_covering(whole, lopsided) == doctest::Approx(0.75 * 0.75 + 0.25 * 0.25).epsilon(1e-15));
  CHECK(gt_covering(lopsided, whole) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("boundary_f on exact, shifted, and degenerate boundaries") {
  auto vertical_split = [](int w, int split) {
    std::vector<int32_t> ids(8 * w);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < w; ++x) ids[y * w + x] = x < split ? 0 : 1;
    }
    return RegionMap(8, w, std::move(ids));
  };

  SUBCASE("identical partitions score 1") {
    RegionMap m = vertical_split(8, 4);
    CHECK(boundary_f(m, m) == 1.0);
  }
  SUBCASE("both boundary-free score 1") {
    RegionMap flat(4, 4, std::vector<int32_t>(16, 0));
    CHECK(boundary_f(flat, flat) == 1.0);
  }
  SUBCASE("boundary against no boundary scores 0") {
    RegionMap flat(8, 8, std::vector<int32_t>(64, 0));
    CHECK(boundary_f(vertical_split(8, 4), flat) == 0.0);
    CHECK(boundary_f(flat, vertical_split(8, 4)) == 0.0);
  }
  SUBCASE("a one-pixel shift stays within the default tolerance") {
    CHECK(boundary_f(vertical_split(8, 4), vertical_split(8, 5)) == 1.0);
  }
  SUBCASE("a shift beyond the tolerance leaves pixels unmatched") {
    const double f = boundary_f(vertical_split(12, 3), vertical_split(12, 9), 2.0);
    CHECK(f < 1.0);
    CHECK(f >= 0.0);
  }
  SUBCASE("fuzzed values stay in [0, 1]") {
    Rng rng(306);
    for (int trial = 0; trial < 20; ++trial) {
      RegionMap a = testutil::random_regions(rng, 10, 10, 2 + int(rng.uniform_int(0, 2)));
      RegionMap b = testutil::random_regions(rng, 10, 10, 2 + int(rng.uniform_int(0, 2)));
      const double f = boundary_f(a, b);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
  }
}

TEST_CASE("select_salient_channel finds the mask-correlated channel") {
  Rng rng(307);
  BinaryMap mask = random_binary(rng, 8, 8);
  ImageGrid out(8, 8, 3);
  for (int64_t p = 0; p < out.pixel_count(); ++p) {
    const double m = mask.values[p];
    out.values[p * 3 + 0] = rng.next_double();          // noise
    out.values[p * 3 + 1] = 0.1 + 0.8 * (1.0 - m);      // anti-correlated
    out.values[p * 3 + 2] = 0.1 + 0.8 * m;              // correlated
  }
  std::vector<ImageGrid> outs = {out};
  std::vector<BinaryMap> masks = {mask};
  CHECK(select_salient_channel(outs, masks) == 2);

  SUBCASE("zero-variance channels are ignored") {
    for (int64_t p = 0; p < out.pixel_count(); ++p) out.values[p * 3 + 2] = 0.5;
    outs[0] = out;
    // channel 1 has |r| larger than the noise channel, sign notwithstanding?
    // no: correlation is signed, so the noise channel wins over the
    // anti-correlated one
    CHECK(select_salient_channel(outs, masks) == 0);
  }
  SUBCASE("throws when every channel is constant") {
    ImageGrid flat(4, 4, 2);
    for (auto& v : flat.values) v = 0.25;
    std::vector<ImageGrid> fouts = {flat};
    BinaryMap m2 = random_binary(rng, 4, 4);
    std::vector<BinaryMap> fmasks = {m2};
    CHECK_THROWS_AS(select_salient_channel(fouts, fmasks), std::runtime_error);
  }
  SUBCASE("pools over several validation pairs") {
    // channel 0 correlates on image A but anti-correlates twice as hard on
    // image B; channel 1 correlates mildly on both
    BinaryMap mask_b = random_binary(rng, 8, 8);
    ImageGrid out_b(8, 8, 3);
    for (int64_t p = 0; p < out_b.pixel_count(); ++p) {
      const double mb = mask_b.values[p];
      out_b.values[p * 3 + 0] = 0.9 - 0.8 * mb;
      out_b.values[p * 3 + 1] = 0.4 + 0.2 * mb;
      out_b.values[p * 3 + 2] = 0.5;
    }
    ImageGrid out_a(8, 8, 3);
    for (int64_t p = 0; p < out_a.pixel_count(); ++p) {
      const double ma = mask.values[p];
      out_a.values[p * 3 + 0] = 0.1 + 0.8 * ma;
      out_a.values[p * 3 + 1] = 0.4 + 0.2 * ma;
      out_a.values[p * 3 + 2] = 0.5;
    }
    std::vector<ImageGrid> pouts = {out_a, out_b};
    std::vector<BinaryMap> pmasks = {mask, mask_b};
    CHECK(select_salient_channel(pouts, pmasks) == 1);
  }
}

TEST_CASE("MetricsReport serialization has the documented column order") {
  MetricsReport r;
  r.f_beta = 0.5;
  r.mae = 0.25;
  r.boundary_f = 1.0;
  CHECK(MetricsReport::csv_header() ==
        "f_beta,mae,precision,recall,rand_index,variation_of_information,gt_covering,boundary_f");
  CHECK(r.csv_row() == "0.5,0.25,0,0,0,0,0,1");
  const std::string js = r.to_json();
  CHECK(js.find("\"f_beta\"") != std::string::npos);
  CHECK(js.find("\"boundary_f\"") != std::string::npos);
}
