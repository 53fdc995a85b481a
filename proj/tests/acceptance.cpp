// Acceptance suite. Each numbered criterion prints one [PASS]/[FAIL] line
// with its measured evidence and elapsed time; the process exits nonzero if
// any criterion fails. argv[1] must name the CLI binary, which the
// determinism criterion invokes like a user would.
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "casseg/grid.hpp"
#include "casseg/harness.hpp"
#include "casseg/harness_detail.hpp"
#include "casseg/losses.hpp"
#include "casseg/metrics.hpp"
#include "casseg/nnet.hpp"
#include "casseg/rng.hpp"
#include "casseg/synth.hpp"

using namespace casseg;
namespace fs = std::filesystem;

namespace {

std::string g_cli_path;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct Instance {
  SoftmaxField field;
  RegionMap regions;
};

Instance random_instance(Rng& rng, int max_hw, int max_regions, int max_channels) {
  const int h = static_cast<int>(rng.uniform_int(1, max_hw));
  const int w = static_cast<int>(rng.uniform_int(1, max_hw));
  const int m = static_cast<int>(rng.uniform_int(2, max_channels));
  const int64_t pixels = static_cast<int64_t>(h) * w;
  const int n = static_cast<int>(rng.uniform_int(1, std::min<int64_t>(max_regions, pixels)));

  std::vector<int32_t> ids(pixels);
  for (int32_t& id : ids) id = static_cast<int32_t>(rng.uniform_int(0, n - 1));
  for (int i = 0; i < n; ++i) ids[i] = i;

  ImageGrid field(h, w, m);
  for (int64_t p = 0; p < pixels; ++p) {
    double sum = 0.0;
    for (int c = 0; c < m; ++c) {
      const double e = std::exp(rng.uniform(-3.0, 3.0));
      field.values[p * m + c] = e;
      sum += e;
    }
    for (int c = 0; c < m; ++c) field.values[p * m + c] /= sum;
  }
  return {std::move(field), RegionMap(h, w, std::move(ids))};
}

/// Central differences on the raw field entries.
GradField field_fd(const std::function<double(const ImageGrid&)>& f, const ImageGrid& field,
                   double eps) {
  ImageGrid work = field;
  GradField g(field.height, field.width, field.channels);
  for (size_t k = 0; k < work.values.size(); ++k) {
    const double saved = work.values[k];
    work.values[k] = saved + eps;
    const double hi = f(work);
    work.values[k] = saved - eps;
    const double lo = f(work);
    work.values[k] = saved;
    g.values[k] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

/* ---- 1: analytic gradient vs central differences --------------------- */

Outcome criterion_gradient() {
  Rng rng(101);
  double worst_loss = 0.0;
  for (int t = 0; t < 50; ++t) {
    const CasConfig cfg{rng.uniform(0.05, 0.95)};
    const Instance inst = random_instance(rng, 8, 4, 4);
    const GradField analytic = cas_backward(inst.field, inst.regions, cfg);
    const GradField numeric = field_fd(
        [&](const ImageGrid& f) { return cas_forward(f, inst.regions, cfg); }, inst.field, 1e-6);
    for (size_t k = 0; k < analytic.values.size(); ++k) {
      worst_loss = std::max(worst_loss, rel_err(analytic.values[k], numeric.values[k]));
    }
  }

  double worst_net = 0.0;
  for (int t = 0; t < 6; ++t) {
    const CasConfig cfg{0.1};
    const Instance inst = random_instance(rng, 5, 4, 4);
    ImageGrid input(inst.field.height, inst.field.width, 2);
    for (double& v : input.values) v = rng.uniform(-1.0, 1.0);
    const NetSpec spec = {LayerSpec::dense(2, 10), LayerSpec::relu(),
                          LayerSpec::dense(10, inst.field.channels), LayerSpec::softmax()};
    const ModelParams params = init_params(spec, 2, rng.next_u64());

    ForwardCache cache;
    const SoftmaxField out = forward(params, spec, input, &cache);
    const std::vector<double> analytic =
        flatten_grads(backward(params, spec, cache, cas_backward(out, inst.regions, cfg)));
    const std::vector<double> numeric = finite_difference_grad(
        [&](const ModelParams& p) {
          return cas_forward(forward(p, spec, input), inst.regions, cfg);
        },
        params, 1e-6);
    for (size_t k = 0; k < analytic.size(); ++k) {
      worst_net = std::max(worst_net, rel_err(analytic[k], numeric[k]));
    }
  }

  return {worst_loss < 1e-6 && worst_net < 1e-5,
          "max rel err: loss-level " + num(worst_loss) + " (< 1e-6), through net " +
              num(worst_net) + " (< 1e-5), 50 + 6 instances"};
}

/* ---- 2: exact invariance under region relabeling / label flip --------- */

Outcome criterion_class_agnosticism() {
  Rng rng(202);
  int exact = 0, flip_exact = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const CasConfig cfg{rng.uniform(0.0, 1.0)};
    const Instance inst = random_instance(rng, 8, 4, 4);
    const int n = inst.regions.region_count();
    std::vector<int32_t> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    const RegionMap permuted = permute_region_ids(inst.regions, perm);

    const bool value_ok =
        cas_forward(inst.field, inst.regions, cfg) == cas_forward(inst.field, permuted, cfg);
    const bool grad_ok = cas_backward(inst.field, inst.regions, cfg).values ==
                         cas_backward(inst.field, permuted, cfg).values;
    if (value_ok && grad_ok) exact++;

    // two-channel instance with binary labels for the cace flip check; at
    // least two pixels so both classes appear and the flipped map stays a
    // contiguous id set
    const int h = static_cast<int>(rng.uniform_int(1, 8));
    const int w = static_cast<int>(rng.uniform_int(2, 8));
    ImageGrid field2(h, w, 2);
    for (int64_t p = 0; p < field2.pixel_count(); ++p) {
      const double a = rng.uniform(1e-6, 1.0 - 1e-6);
      field2.values[p * 2] = a;
      field2.values[p * 2 + 1] = 1.0 - a;
    }
    std::vector<int32_t> labels(static_cast<size_t>(h) * w);
    for (int32_t& v : labels) v = static_cast<int32_t>(rng.uniform_int(0, 1));
    labels[0] = 0;
    labels[1] = 1;
    std::vector<int32_t> inverted(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) inverted[i] = 1 - labels[i];
    const RegionMap as_given(h, w, std::move(labels));
    const RegionMap flipped(h, w, std::move(inverted));
    if (cace_forward(field2, as_given).value == cace_forward(field2, flipped).value) {
      flip_exact++;
    }
  }
  return {exact == trials && flip_exact == trials,
          std::to_string(exact) + "/" + std::to_string(trials) +
              " bit-identical under relabeling, " + std::to_string(flip_exact) + "/" +
              std::to_string(trials) + " under label flip"};
}

/* ---- 3: boundedness ---------------------------------------------------- */

Outcome criterion_bounds() {
  Rng rng(303);
  int inside = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const CasConfig cfg{rng.uniform(0.0, 1.0)};
    const Instance inst = random_instance(rng, 8, 4, 4);
    const double v = cas_forward(inst.field, inst.regions, cfg);
    const LossBounds b = cas_bounds(inst.regions.region_count(), cfg, inst.field.channels);
    if (v >= b.lower && v <= b.upper) inside++;
  }

  // every logged value of a real training run
  ExperimentConfig cfg;
  cfg.steps = 150;
  cfg.batch_size = 4;
  cfg.seed = 3;
  cfg.data.count = 8;
  cfg.data.test_count = 2;
  cfg.data.size = 16;
  const detail::ShapesData data = detail::prepare_shapes_data(cfg);
  const TrainResult tr = detail::train_on(cfg, detail::shapes_net(3, 2), data.train);
  const LossBounds b = cas_bounds(2, CasConfig{cfg.alpha}, 2);
  size_t logged_inside = 0;
  for (double v : tr.log.losses) {
    if (v >= b.lower && v <= b.upper) logged_inside++;
  }

  // the analytic minimum, attained exactly by a one-hot two-region field
  ImageGrid onehot(1, 2, 2);
  onehot.values = {1.0, 0.0, 0.0, 1.0};
  const RegionMap two(1, 2, {0, 1});
  const double attained = cas_forward(onehot, two, CasConfig{0.1});

  const bool pass = inside == trials && logged_inside == tr.log.losses.size() &&
                    attained == -3.6;
  return {pass, std::to_string(inside) + "/" + std::to_string(trials) + " fuzzed, " +
                    std::to_string(logged_inside) + "/" + std::to_string(tr.log.losses.size()) +
                    " logged values in bounds; one-hot minimum " + num(attained) +
                    " == -3.6 exactly"};
}

/* ---- 4: sparsity at the discriminator optimum ------------------------- */

Outcome criterion_sparsity() {
  // 0.01-step grid over pairs of 2-channel simplex points
  double best = 0.0;
  std::vector<std::pair<int, int>> argmax;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const double p = i / 100.0;
      const double q = j / 100.0;
      const double d = 2.0 * (p - q) * (p - q);
      if (d > best) {
        best = d;
        argmax.clear();
      }
      if (d == best) argmax.emplace_back(i, j);
    }
  }
  const bool corners = best == 2.0 && argmax.size() == 2 &&
                       argmax[0] == std::pair<int, int>(0, 100) &&
                       argmax[1] == std::pair<int, int>(100, 0);

  // training pushes outputs to the corners
  ExperimentConfig cfg = ExperimentConfig::from_json(preset_config("properties"));
  const detail::ShapesData data = detail::prepare_shapes_data(cfg);
  const TrainResult tr = detail::train_on(cfg, detail::shapes_net(3, 2), data.train);

  int64_t confident = 0, pixels = 0;
  double sum_sep = 0.0;
  for (const SynthSample& s : data.test) {
    const SoftmaxField out = forward(tr.params, tr.spec, s.image);
    for (int64_t p = 0; p < out.pixel_count(); ++p) {
      const double a = out.values[p * 2];
      if (std::max(a, 1.0 - a) >= 0.95) confident++;
      pixels++;
    }
    const RegionStats stats = compute_region_stats(out, s.regions);
    double d2 = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double d = stats.mean(0, c) - stats.mean(1, c);
      d2 += d * d;
    }
    sum_sep += d2;
  }
  const double frac = static_cast<double>(confident) / static_cast<double>(pixels);
  const double mean_sep = sum_sep / static_cast<double>(data.test.size());

  return {corners && frac >= 0.90 && mean_sep >= 1.8,
          "grid max " + num(best) + " at the 2 one-hot pairs; " + num(100.0 * frac) +
              "% pixels with max prob >= 0.95 (need 90%); mean region-mean separation " +
              num(mean_sep) + " (need >= 1.8)"};
}

/* ---- 5: toy class imbalance ------------------------------------------- */

Outcome criterion_toy_imbalance() {
  ExperimentConfig cfg = ExperimentConfig::from_json(preset_config("toy-imbalance"));
  double ce_majority = 0.0, cas_minority = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    cfg.seed = static_cast<uint64_t>(s);
    const ToyImbalanceResult r = run_toy_imbalance(cfg);
    const double total = static_cast<double>(r.ce.total());
    ce_majority += static_cast<double>(r.ce.counts[0][0] + r.ce.counts[1][0]) / total;
    cas_minority += static_cast<double>(r.cas.counts[1][1]);
  }
  ce_majority /= seeds;
  cas_minority /= seeds;
  return {ce_majority >= 0.999 && cas_minority >= 8.0,
          "5-seed means: ce predicts the majority class for " + num(100.0 * ce_majority) +
              "% of 10010 test points (need >= 99.9%), cas recovers " + num(cas_minority) +
              "/10 minority points (need >= 8)"};
}

/* ---- 6: robustness to label flips -------------------------------------- */

Outcome criterion_fidelity() {
  ExperimentConfig cfg = ExperimentConfig::from_json(preset_config("fidelity-sweep"));
  cfg.fractions = {0.0, 0.02, 0.5};
  cfg.jobs = std::max(1u, std::min(9u, std::thread::hardware_concurrency()));
  const std::vector<CellResult> cells = run_fidelity_sweep(cfg);

  std::map<std::string, double> f;
  for (const CellResult& c : cells) f[c.name] = c.metrics.f_beta;

  const double cas_drift = std::fabs(f.at("cas_flip0.5") - f.at("cas_flip0"));
  const double ce_drop = f.at("ce_flip0") - f.at("ce_flip0.5");
  const double clean_gap = std::fabs(f.at("ce_flip0.02") - f.at("cas_flip0.02"));

  return {cas_drift <= 0.05 && ce_drop >= 0.3 && clean_gap <= 0.05,
          "at 50% flips: cas F moves " + num(cas_drift) + " (<= 0.05), ce F drops " +
              num(ce_drop) + " (>= 0.3); at 2%: |ce - cas| = " + num(clean_gap) + " (<= 0.05)"};
}

/* ---- 7: metric kernels vs naive oracles -------------------------------- */

double f_beta_naive(const BinaryMap& pred, const BinaryMap& truth, double b2) {
  double tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.values.size(); ++i) {
    tp += pred.values[i] && truth.values[i];
    fp += pred.values[i] && !truth.values[i];
    fn += !pred.values[i] && truth.values[i];
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  const double denom = b2 * precision + recall;
  return denom > 0 ? (1.0 + b2) * precision * recall / denom : 0.0;
}

double rand_index_naive(const RegionMap& a, const RegionMap& b) {
  const int64_t p = a.pixel_count();
  int64_t agree = 0;
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = i + 1; j < p; ++j) {
      const bool same_a = a.ids()[i] == a.ids()[j];
      const bool same_b = b.ids()[i] == b.ids()[j];
      if (same_a == same_b) agree++;
    }
  }
  return static_cast<double>(agree) / (static_cast<double>(p) * (p - 1) / 2.0);
}

double vi_naive(const RegionMap& a, const RegionMap& b) {
  const int64_t p = a.pixel_count();
  std::map<std::pair<int32_t, int32_t>, double> joint;
  std::map<int32_t, double> pa, pb;
  for (int64_t i = 0; i < p; ++i) {
    joint[{a.ids()[i], b.ids()[i]}] += 1.0 / p;
    pa[a.ids()[i]] += 1.0 / p;
    pb[b.ids()[i]] += 1.0 / p;
  }
  double h_a = 0.0, h_b = 0.0, mi = 0.0;
  for (const auto& [id, q] : pa) h_a -= q * std::log(q);
  for (const auto& [id, q] : pb) h_b -= q * std::log(q);
  for (const auto& [ids, q] : joint) mi += q * std::log(q / (pa[ids.first] * pb[ids.second]));
  return h_a + h_b - 2.0 * mi;
}

double covering_naive(const RegionMap& pred, const RegionMap& truth) {
  const int64_t p = truth.pixel_count();
  double total = 0.0;
  for (int32_t g = 0; g < truth.region_count(); ++g) {
    double best = 0.0;
    for (int32_t r = 0; r < pred.region_count(); ++r) {
      int64_t inter = 0, uni = 0;
      for (int64_t i = 0; i < p; ++i) {
        const bool in_g = truth.ids()[i] == g;
        const bool in_r = pred.ids()[i] == r;
        inter += in_g && in_r;
        uni += in_g || in_r;
      }
      if (uni > 0) best = std::max(best, static_cast<double>(inter) / uni);
    }
    int64_t size_g = 0;
    for (int64_t i = 0; i < p; ++i) size_g += truth.ids()[i] == g;
    total += static_cast<double>(size_g) / p * best;
  }
  return total;
}

Outcome criterion_metric_oracles() {
  Rng rng(707);
  double worst = 0.0;
  bool ranges_ok = true;
  for (int t = 0; t < 40; ++t) {
    BinaryMap pred(16, 16), truth(16, 16);
    for (auto& v : pred.values) v = static_cast<uint8_t>(rng.uniform_int(0, 1));
    for (auto& v : truth.values) v = static_cast<uint8_t>(rng.uniform_int(0, 1));
    ImageGrid saliency(16, 16, 1);
    for (double& v : saliency.values) v = rng.uniform(0.0, 1.0);

    worst = std::max(worst, std::fabs(f_beta(pred, truth, 0.3) - f_beta_naive(pred, truth, 0.3)));
    double naive_mae = 0.0;
    for (size_t i = 0; i < saliency.values.size(); ++i) {
      naive_mae += std::fabs(saliency.values[i] - truth.values[i]);
    }
    naive_mae /= static_cast<double>(saliency.values.size());
    worst = std::max(worst, std::fabs(mae(saliency, truth) - naive_mae));

    const int na = static_cast<int>(rng.uniform_int(1, 5));
    const int nb = static_cast<int>(rng.uniform_int(1, 5));
    std::vector<int32_t> ids_a(256), ids_b(256);
    for (auto& id : ids_a) id = static_cast<int32_t>(rng.uniform_int(0, na - 1));
    for (auto& id : ids_b) id = static_cast<int32_t>(rng.uniform_int(0, nb - 1));
    for (int i = 0; i < na; ++i) ids_a[i] = i;
    for (int i = 0; i < nb; ++i) ids_b[i] = i;
    const RegionMap a(16, 16, std::move(ids_a));
    const RegionMap b(16, 16, std::move(ids_b));

    const double ri = rand_index(a, b);
    const double vi = variation_of_information(a, b);
    const double cov = gt_covering(a, b);
    const double bf = boundary_f(a, b);
    worst = std::max(worst, std::fabs(ri - rand_index_naive(a, b)));
    worst = std::max(worst, std::fabs(vi - vi_naive(a, b)));
    worst = std::max(worst, std::fabs(cov - covering_naive(a, b)));

    const double log_p = std::log(256.0);
    ranges_ok = ranges_ok && ri >= 0.0 && ri <= 1.0;
    ranges_ok = ranges_ok && vi >= 0.0 && vi <= 2.0 * log_p;
    ranges_ok = ranges_ok && cov >= 0.0 && cov <= 1.0;
    ranges_ok = ranges_ok && bf >= 0.0 && bf <= 1.0;
    const double fb = f_beta(pred, truth, 0.3);
    ranges_ok = ranges_ok && fb >= 0.0 && fb <= 1.0;
    const double m = mae(saliency, truth);
    ranges_ok = ranges_ok && m >= 0.0 && m <= 1.0;
  }
  return {worst <= 1e-12 && ranges_ok,
          "worst oracle deviation " + num(worst) + " (<= 1e-12) over 40 random 16x16 "
          "instances; all range invariants hold"};
}

/* ---- 8: near-linear forward cost in the pixel count -------------------- */

Outcome criterion_scaling() {
  Rng rng(808);
  auto build = [&](int side) {
    ImageGrid field(side, side, 3);
    const int64_t pixels = field.pixel_count();
    std::vector<int32_t> ids(pixels);
    for (int64_t p = 0; p < pixels; ++p) {
      double sum = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double e = std::exp(rng.uniform(-3.0, 3.0));
        field.values[p * 3 + c] = e;
        sum += e;
      }
      for (int c = 0; c < 3; ++c) field.values[p * 3 + c] /= sum;
      ids[p] = static_cast<int32_t>(rng.uniform_int(0, 3));
    }
    for (int i = 0; i < 4; ++i) ids[i] = i;
    return Instance{std::move(field), RegionMap(side, side, std::move(ids))};
  };
  auto best_of = [](const Instance& inst, int reps) {
    const CasConfig cfg{0.1};
    double best = 1e300;
    volatile double sink = 0.0;
    for (int r = 0; r < reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      sink = sink + cas_forward(inst.field, inst.regions, cfg);
      const auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
  };

  const Instance small = build(256);   // 2^16 pixels
  const Instance large = build(512);   // 2^18 pixels
  const double t_small = best_of(small, 5);
  const double t_large = best_of(large, 5);
  const double ratio = t_large / t_small;
  return {ratio < 6.0, "time(2^18 px) / time(2^16 px) = " + num(ratio) + " (< 6); " +
                           num(t_small * 1e3) + " ms vs " + num(t_large * 1e3) + " ms, N=4 M=3"};
}

/* ---- 9: byte-identical reruns ------------------------------------------ */

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<unreadable " + p.string() + ">";
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome criterion_determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("casseg_accept_" + std::to_string(getpid()));
  fs::create_directories(root);
  bool pass = true;
  std::string detail;
  for (const char* preset : {"texture-metrics", "toy-imbalance"}) {
    for (const char* run : {"a", "b"}) {
      const std::string cmd = g_cli_path + " experiment --preset " + preset + " --out " +
                              (root / (std::string(preset) + "_" + run)).string() +
                              " >/dev/null 2>&1";
      const int rc = std::system(cmd.c_str());
      if (rc == -1 || !WIFEXITED(rc) || WEXITSTATUS(rc) != 0) {
        pass = false;
        detail += std::string(preset) + ": cli exit " + std::to_string(WEXITSTATUS(rc)) + "; ";
      }
    }
    for (const char* f : {"metrics.csv", "report.json"}) {
      const bool same = slurp(root / (std::string(preset) + "_a") / f) ==
                        slurp(root / (std::string(preset) + "_b") / f);
      if (!same) pass = false;
      detail += std::string(preset) + "/" + f + (same ? " identical; " : " DIFFERS; ");
    }
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-cli-binary>\n", argv[0]);
    return 2;
  }
  g_cli_path = argv[1];

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", criterion_gradient},
      {"class-agnosticism (relabeling invariance)", criterion_class_agnosticism},
      {"boundedness", criterion_bounds},
      {"sparsity at the discriminator optimum", criterion_sparsity},
      {"toy class imbalance", criterion_toy_imbalance},
      {"robustness to label flips", criterion_fidelity},
      {"metric kernels vs naive oracles", criterion_metric_oracles},
      {"near-linear forward scaling", criterion_scaling},
      {"byte-identical reruns", criterion_determinism},
  };

  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %zu. %s: %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) failed++;
  }

  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
