#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <utility>

#include "casseg/format.hpp"
#include "casseg/harness.hpp"
#include "casseg/harness_detail.hpp"
#include "casseg/losses.hpp"
#include "casseg/rng.hpp"

namespace casseg {

int64_t ConfusionMatrix::total() const {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

double ConfusionMatrix::accuracy() const {
  const int64_t t = total();
  if (t == 0) return 0.0;
  return static_cast<double>(counts[0][0] + counts[1][1]) / static_cast<double>(t);
}

nlohmann::ordered_json ConfusionMatrix::to_json() const {
  nlohmann::ordered_json j;
  j["counts"] = {{counts[0][0], counts[0][1]}, {counts[1][0], counts[1][1]}};
  j["accuracy"] = accuracy();
  return j;
}

namespace {

using detail::aligned_channel;
using detail::class_label_map;
using detail::derive_seed;
using detail::evaluate_average;
using detail::foreground_mask;
using detail::prepare_shapes_data;
using detail::shapes_net;
using detail::train_on;

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return std::string(buf);
}

void require_converged(const TrainResult& tr, const std::string& cell) {
  if (tr.log.diverged_at >= 0) {
    throw std::runtime_error(cell + ": loss diverged at step " +
                             std::to_string(tr.log.diverged_at));
  }
}

/// Packs a point list into a single 1 x n two-channel grid whose regions are
/// the classes, so the image losses and metrics apply unchanged.
SynthSample toy_sample(const std::vector<ToyPoint>& points) {
  const int n = static_cast<int>(points.size());
  ImageGrid image(1, n, 2);
  std::vector<int32_t> ids(n);
  for (int i = 0; i < n; ++i) {
    image.values[static_cast<size_t>(i) * 2] = points[i].x0;
    image.values[static_cast<size_t>(i) * 2 + 1] = points[i].x1;
    ids[i] = points[i].class_id;
  }
  return SynthSample{std::move(image), RegionMap(1, n, std::move(ids)), {0, 1}, false};
}

ConfusionMatrix toy_confusion(const TrainResult& tr, const SynthSample& test, int class1_channel) {
  ConfusionMatrix cm;
  const SoftmaxField out = forward(tr.params, tr.spec, test.image);
  for (int64_t p = 0; p < out.pixel_count(); ++p) {
    const double* v = &out.values[p * out.channels];
    int best = 0;
    for (int c = 1; c < out.channels; ++c) {
      if (v[c] > v[best]) best = c;
    }
    const int predicted = best == class1_channel ? 1 : 0;
    cm.counts[test.regions.ids()[p]][predicted]++;
  }
  return cm;
}

}  // namespace

ToyImbalanceResult run_toy_imbalance(const ExperimentConfig& cfg) {
  cfg.validate();
  const ToyDataset ds = gen_toy_gaussians(cfg.data.toy_n1, cfg.data.toy_n2, cfg.data.toy_var,
                                          derive_seed(cfg.seed, detail::kToyData));
  const SynthSample train_s = toy_sample(ds.train);
  const SynthSample test_s = toy_sample(ds.test);
  const NetSpec spec = detail::toy_net();

  // Both losses see the identical full-batch sample and the identical
  // initialization; only the training signal differs.
  ExperimentConfig run_cfg = cfg;
  run_cfg.batch_size = 1;

  run_cfg.loss = LossKind::ce;
  const TrainResult ce_tr = train_on(run_cfg, spec, {train_s});
  require_converged(ce_tr, "toy ce");

  run_cfg.loss = LossKind::cas;
  const TrainResult cas_tr = train_on(run_cfg, spec, {train_s});
  require_converged(cas_tr, "toy cas");

  // CAS channels carry no class meaning; align on a stratified fifth of the
  // training points (they stay in the training set, the slice is only read).
  const int vm = std::max<int>(1, static_cast<int>(std::llround(0.2 * cfg.data.toy_n1)));
  const int vn = std::max<int>(1, static_cast<int>(std::llround(0.2 * cfg.data.toy_n2)));
  std::vector<ToyPoint> val_points(ds.train.begin(), ds.train.begin() + vm);
  val_points.insert(val_points.end(), ds.train.begin() + cfg.data.toy_n1,
                    ds.train.begin() + cfg.data.toy_n1 + vn);
  const SynthSample val_s = toy_sample(val_points);
  const int cas_channel =
      select_salient_channel(std::vector<ImageGrid>{forward(cas_tr.params, spec, val_s.image)},
                             std::vector<BinaryMap>{foreground_mask(val_s)});

  ToyImbalanceResult result;
  result.ce = toy_confusion(ce_tr, test_s, 1);
  result.cas = toy_confusion(cas_tr, test_s, cas_channel);
  result.ce_log = ce_tr.log;
  result.cas_log = cas_tr.log;
  const std::vector<SynthSample> test_set = {test_s};
  result.ce_metrics = evaluate_average(ce_tr, test_set, 1, nullptr);
  result.cas_metrics = evaluate_average(cas_tr, test_set, cas_channel, nullptr);
  return result;
}

std::vector<CellResult> run_fidelity_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.data.regions_per_image != 2) {
    throw std::invalid_argument("fidelity sweep: needs 2-region data so cace applies");
  }
  const LossKind losses[] = {LossKind::cas, LossKind::ce, LossKind::cace};
  std::vector<std::pair<double, LossKind>> grid;
  for (double f : cfg.fractions) {
    for (LossKind l : losses) grid.emplace_back(f, l);
  }

  std::vector<CellResult> cells(grid.size());
  detail::run_parallel(cfg.jobs, static_cast<int>(grid.size()), [&](int i) {
    const auto [fraction, loss] = grid[i];
    ExperimentConfig cell_cfg = cfg;
    cell_cfg.flip_fraction = fraction;
    cell_cfg.loss = loss;
    const detail::ShapesData data = prepare_shapes_data(cell_cfg);
    const TrainResult tr = train_on(cell_cfg, shapes_net(3, 2), data.train);

    CellResult& r = cells[i];
    r.name = loss_name(loss) + "_flip" + short_num(fraction);
    require_converged(tr, r.name);
    r.loss = loss;
    r.alpha = cfg.alpha;
    r.fraction = fraction;
    r.log = tr.log;
    const int channel = aligned_channel(tr, data.val, loss);
    r.metrics = evaluate_average(tr, data.test, channel, &r.within_region_var);
  });
  return cells;
}

std::vector<CellResult> run_alpha_ablation(const ExperimentConfig& cfg) {
  cfg.validate();
  for (double a : cfg.alphas) {
    if (!(a > 0.0 && a < 1.0)) {
      throw std::invalid_argument("alpha ablation: alphas must lie strictly inside (0, 1)");
    }
  }

  std::vector<CellResult> cells(cfg.alphas.size());
  detail::run_parallel(cfg.jobs, static_cast<int>(cfg.alphas.size()), [&](int i) {
    ExperimentConfig cell_cfg = cfg;
    cell_cfg.loss = LossKind::cas;
    cell_cfg.alpha = cfg.alphas[i];
    const detail::ShapesData data = prepare_shapes_data(cell_cfg);
    const TrainResult tr =
        train_on(cell_cfg, shapes_net(3, cfg.data.regions_per_image), data.train);

    CellResult& r = cells[i];
    r.name = "cas_alpha" + short_num(cfg.alphas[i]);
    require_converged(tr, r.name);
    r.loss = LossKind::cas;
    r.alpha = cfg.alphas[i];
    r.fraction = cfg.flip_fraction;
    r.log = tr.log;
    const int channel = aligned_channel(tr, data.val, LossKind::cas);
    r.metrics = evaluate_average(tr, data.test, channel, &r.within_region_var);
  });
  return cells;
}

std::vector<CellResult> run_texture_metrics(const ExperimentConfig& cfg) {
  cfg.validate();
  const detail::ShapesData data = prepare_shapes_data(cfg);
  const TrainResult tr = train_on(cfg, shapes_net(3, cfg.data.regions_per_image), data.train);

  CellResult r;
  r.name = loss_name(cfg.loss) + "_texture";
  require_converged(tr, r.name);
  r.loss = cfg.loss;
  r.alpha = cfg.alpha;
  r.fraction = cfg.flip_fraction;
  r.log = tr.log;
  const int channel = aligned_channel(tr, data.val, cfg.loss);
  r.metrics = evaluate_average(tr, data.test, channel, &r.within_region_var);
  return {r};
}

namespace {

struct FuzzInstance {
  SoftmaxField field;
  RegionMap regions;
};

FuzzInstance random_instance(Rng& rng, int max_hw, int max_regions, int max_channels) {
  const int h = static_cast<int>(rng.uniform_int(1, max_hw));
  const int w = static_cast<int>(rng.uniform_int(1, max_hw));
  const int m = static_cast<int>(rng.uniform_int(2, max_channels));
  const int64_t pixels = static_cast<int64_t>(h) * w;
  const int n = static_cast<int>(rng.uniform_int(1, std::min<int64_t>(max_regions, pixels)));

  std::vector<int32_t> ids(pixels);
  for (int32_t& id : ids) id = static_cast<int32_t>(rng.uniform_int(0, n - 1));
  for (int i = 0; i < n; ++i) ids[i] = i;  // every id occupied

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

RegionMap random_binary_labels(Rng& rng, int h, int w) {
  const int64_t pixels = static_cast<int64_t>(h) * w;
  std::vector<int32_t> ids(pixels);
  for (int32_t& id : ids) id = static_cast<int32_t>(rng.uniform_int(0, 1));
  ids[0] = 0;
  if (pixels > 1) ids[1] = 1;
  return RegionMap(h, w, std::move(ids));
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

/// Central differences on the field entries themselves.
GradField field_fd_grad(const std::function<double(const ImageGrid&)>& f, const ImageGrid& field,
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

}  // namespace

bool PropertyReport::all_pass() const {
  for (const PropertyEntry& e : entries) {
    if (!e.pass) return false;
  }
  return true;
}

nlohmann::ordered_json PropertyReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const PropertyEntry& e : entries) {
    nlohmann::ordered_json je;
    je["name"] = e.name;
    je["pass"] = e.pass;
    je["detail"] = e.detail;
    arr.push_back(je);
  }
  j["entries"] = arr;
  j["all_pass"] = all_pass();
  return j;
}

PropertyReport run_property_checks(const ExperimentConfig& cfg) {
  cfg.validate();
  PropertyReport rep;
  Rng rng(derive_seed(cfg.seed, detail::kPropertyFuzz));
  const CasConfig cas_cfg{cfg.alpha};

  {  // relabeling regions must not move a single bit
    int exact = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
      FuzzInstance inst = random_instance(rng, 8, 4, 4);
      const int n = inst.regions.region_count();
      std::vector<int32_t> perm(n);
      for (int i = 0; i < n; ++i) perm[i] = i;
      for (int i = n - 1; i > 0; --i) {
        std::swap(perm[i], perm[rng.uniform_int(0, i)]);
      }
      const RegionMap permuted = permute_region_ids(inst.regions, perm);
      const bool value_ok =
          cas_forward(inst.field, inst.regions, cas_cfg) ==
          cas_forward(inst.field, permuted, cas_cfg);
      const bool grad_ok = cas_backward(inst.field, inst.regions, cas_cfg).values ==
                           cas_backward(inst.field, permuted, cas_cfg).values;
      if (value_ok && grad_ok) exact++;
    }
    rep.entries.push_back({"permutation_invariance", exact == trials,
                           std::to_string(exact) + "/" + std::to_string(trials) +
                               " instances bit-identical under relabeling"});
  }

  {  // analytic gradients vs central differences, at the loss level
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      FuzzInstance inst = random_instance(rng, 6, 4, 4);
      const GradField analytic = cas_backward(inst.field, inst.regions, cas_cfg);
      const GradField numeric = field_fd_grad(
          [&](const ImageGrid& f) { return cas_forward(f, inst.regions, cas_cfg); }, inst.field,
          1e-6);
      for (size_t k = 0; k < analytic.values.size(); ++k) {
        worst = std::max(worst, rel_err(analytic.values[k], numeric.values[k]));
      }

      const RegionMap labels = random_binary_labels(rng, inst.field.height, inst.field.width);
      const GradField ce_analytic = ce_backward(inst.field, labels);
      const GradField ce_numeric = field_fd_grad(
          [&](const ImageGrid& f) { return ce_forward(f, labels); }, inst.field, 1e-6);
      for (size_t k = 0; k < ce_analytic.values.size(); ++k) {
        worst = std::max(worst, rel_err(ce_analytic.values[k], ce_numeric.values[k]));
      }

      if (inst.field.channels == 2) {
        const GradField cace_analytic = cace_backward(inst.field, labels);
        const GradField cace_numeric = field_fd_grad(
            [&](const ImageGrid& f) { return cace_forward(f, labels).value; }, inst.field, 1e-6);
        for (size_t k = 0; k < cace_analytic.values.size(); ++k) {
          worst = std::max(worst, rel_err(cace_analytic.values[k], cace_numeric.values[k]));
        }
      }
    }
    rep.entries.push_back({"gradient_check_losses", worst < 1e-6,
                           "max relative error " + fmt_g17(worst) + " (tolerance 1e-6)"});
  }

  {  // end to end through a network
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
      FuzzInstance inst = random_instance(rng, 4, 3, 3);
      ImageGrid input(inst.field.height, inst.field.width, 3);
      for (double& v : input.values) v = rng.uniform(-1.0, 1.0);
      const NetSpec spec = {LayerSpec::dense(3, 5), LayerSpec::relu(),
                            LayerSpec::dense(5, inst.field.channels), LayerSpec::softmax()};
      const ModelParams params = init_params(spec, 3, rng.next_u64());

      auto loss_of = [&](const ModelParams& p) {
        return cas_forward(forward(p, spec, input), inst.regions, cas_cfg);
      };
      ForwardCache cache;
      const SoftmaxField out = forward(params, spec, input, &cache);
      const std::vector<double> analytic =
          flatten_grads(backward(params, spec, cache, cas_backward(out, inst.regions, cas_cfg)));
      const std::vector<double> numeric = finite_difference_grad(loss_of, params, 1e-6);
      for (size_t k = 0; k < analytic.size(); ++k) {
        worst = std::max(worst, rel_err(analytic[k], numeric[k]));
      }
    }
    rep.entries.push_back({"gradient_check_net", worst < 1e-5,
                           "max relative error " + fmt_g17(worst) + " (tolerance 1e-5)"});
  }

  {  // fuzzed values stay inside the provable interval
    double worst_violation = 0.0;
    for (int t = 0; t < 200; ++t) {
      FuzzInstance inst = random_instance(rng, 8, 4, 4);
      const double v = cas_forward(inst.field, inst.regions, cas_cfg);
      const LossBounds b =
          cas_bounds(inst.regions.region_count(), cas_cfg, inst.field.channels);
      worst_violation = std::max(worst_violation, b.lower - v);
      worst_violation = std::max(worst_violation, v - b.upper);
    }
    rep.entries.push_back({"bounds_fuzz", worst_violation <= 1e-9,
                           "worst bound violation " + fmt_g17(worst_violation) +
                               " over 200 random fields"});
  }

  {  // one real training run: logged losses bounded, output sparse
    ExperimentConfig train_cfg = cfg;
    train_cfg.loss = LossKind::cas;
    const detail::ShapesData data = prepare_shapes_data(train_cfg);
    const TrainResult tr =
        train_on(train_cfg, shapes_net(3, cfg.data.regions_per_image), data.train);
    require_converged(tr, "properties training run");

    const LossBounds b = cas_bounds(cfg.data.regions_per_image, cas_cfg,
                                    cfg.data.regions_per_image);
    const double slack = 1e-9 * (1.0 + std::max(std::fabs(b.lower), std::fabs(b.upper)));
    bool bounded = true;
    for (double v : tr.log.losses) {
      if (v < b.lower - slack || v > b.upper + slack) bounded = false;
    }
    rep.entries.push_back({"bounds_trainlog", bounded,
                           std::to_string(tr.log.losses.size()) + " logged values vs [" +
                               fmt_g17(b.lower) + ", " + fmt_g17(b.upper) + "]"});

    int64_t confident = 0, pixels = 0;
    for (const SynthSample& s : data.test) {
      const SoftmaxField out = forward(tr.params, tr.spec, s.image);
      for (int64_t p = 0; p < out.pixel_count(); ++p) {
        double mx = 0.0;
        for (int c = 0; c < out.channels; ++c) {
          mx = std::max(mx, out.values[p * out.channels + c]);
        }
        if (mx >= 0.95) confident++;
        pixels++;
      }
    }
    const double fraction = static_cast<double>(confident) / static_cast<double>(pixels);
    rep.entries.push_back({"sparsity", fraction >= 0.90,
                           "fraction of pixels with max-channel prob >= 0.95: " +
                               fmt_g17(fraction) + " (needs >= 0.9)"});
  }

  {  // the discriminator is maximized exactly at distinct simplex corners
    double best = 0.0;
    std::vector<std::pair<int, int>> argmax;
    for (int i = 0; i <= 100; ++i) {
      for (int j = 0; j <= 100; ++j) {
        const double p = i / 100.0;
        const double q = j / 100.0;
        const double d = (p - q) * (p - q) + ((1.0 - p) - (1.0 - q)) * ((1.0 - p) - (1.0 - q));
        if (d > best) {
          best = d;
          argmax.clear();
        }
        if (d == best) argmax.emplace_back(i, j);
      }
    }
    const bool corners_only =
        best == 2.0 && argmax.size() == 2 &&
        ((argmax[0] == std::pair<int, int>(0, 100) && argmax[1] == std::pair<int, int>(100, 0)));
    rep.entries.push_back({"discriminator_corners", corners_only,
                           "grid max " + fmt_g17(best) + " attained at " +
                               std::to_string(argmax.size()) + " points (expect 2.0 at the two "
                               "distinct one-hot pairs)"});
  }

  return rep;
}

GradCheckResult run_grad_check(uint64_t seed) {
  Rng rng(derive_seed(seed, detail::kPropertyFuzz));
  GradCheckResult result;

  for (int t = 0; t < 20; ++t) {
    const CasConfig cas_cfg{rng.uniform(0.05, 0.95)};
    FuzzInstance inst = random_instance(rng, 6, 4, 4);
    const RegionMap labels = random_binary_labels(rng, inst.field.height, inst.field.width);

    const GradField cas_num = field_fd_grad(
        [&](const ImageGrid& f) { return cas_forward(f, inst.regions, cas_cfg); }, inst.field,
        1e-6);
    const GradField cas_ana = cas_backward(inst.field, inst.regions, cas_cfg);
    for (size_t k = 0; k < cas_ana.values.size(); ++k) {
      result.loss_level_err = std::max(result.loss_level_err,
                                       rel_err(cas_ana.values[k], cas_num.values[k]));
    }

    const GradField ce_num = field_fd_grad(
        [&](const ImageGrid& f) { return ce_forward(f, labels); }, inst.field, 1e-6);
    const GradField ce_ana = ce_backward(inst.field, labels);
    for (size_t k = 0; k < ce_ana.values.size(); ++k) {
      result.loss_level_err =
          std::max(result.loss_level_err, rel_err(ce_ana.values[k], ce_num.values[k]));
    }

    if (inst.field.channels == 2) {
      const GradField cace_num = field_fd_grad(
          [&](const ImageGrid& f) { return cace_forward(f, labels).value; }, inst.field, 1e-6);
      const GradField cace_ana = cace_backward(inst.field, labels);
      for (size_t k = 0; k < cace_ana.values.size(); ++k) {
        result.loss_level_err =
            std::max(result.loss_level_err, rel_err(cace_ana.values[k], cace_num.values[k]));
      }
    }
  }

  for (int t = 0; t < 6; ++t) {
    const CasConfig cas_cfg{rng.uniform(0.05, 0.95)};
    FuzzInstance inst = random_instance(rng, 4, 3, 2);
    const RegionMap labels = random_binary_labels(rng, inst.field.height, inst.field.width);
    ImageGrid input(inst.field.height, inst.field.width, 3);
    for (double& v : input.values) v = rng.uniform(-1.0, 1.0);
    const NetSpec spec = {LayerSpec::dense(3, 5), LayerSpec::relu(), LayerSpec::dense(5, 2),
                          LayerSpec::softmax()};
    const ModelParams params = init_params(spec, 3, rng.next_u64());
    const LossKind kind = static_cast<LossKind>(t % 3);

    auto loss_of = [&](const ModelParams& p) {
      const SoftmaxField out = forward(p, spec, input);
      switch (kind) {
        case LossKind::cas: return cas_forward(out, inst.regions, cas_cfg);
        case LossKind::ce: return ce_forward(out, labels);
        case LossKind::cace: return cace_forward(out, labels).value;
      }
      throw std::logic_error("unreachable");
    };
    ForwardCache cache;
    const SoftmaxField out = forward(params, spec, input, &cache);
    GradField upstream;
    switch (kind) {
      case LossKind::cas: upstream = cas_backward(out, inst.regions, cas_cfg); break;
      case LossKind::ce: upstream = ce_backward(out, labels); break;
      case LossKind::cace: upstream = cace_backward(out, labels); break;
    }
    const std::vector<double> analytic = flatten_grads(backward(params, spec, cache, upstream));
    const std::vector<double> numeric = finite_difference_grad(loss_of, params, 1e-6);
    for (size_t k = 0; k < analytic.size(); ++k) {
      result.net_err = std::max(result.net_err, rel_err(analytic[k], numeric[k]));
    }
  }
  return result;
}

void generate_dataset(const nlohmann::json& gen_cfg, const std::string& out_dir) {
  if (!gen_cfg.is_object()) throw std::invalid_argument("gen-data: config must be a JSON object");
  const std::string kind = gen_cfg.value("kind", "shapes");
  const uint64_t seed = gen_cfg.value("seed", static_cast<uint64_t>(0));
  if (kind == "shapes") {
    for (auto it = gen_cfg.begin(); it != gen_cfg.end(); ++it) {
      const std::string& k = it.key();
      if (k != "kind" && k != "seed" && k != "count" && k != "size" &&
          k != "regions_per_image" && k != "noise" && k != "flip_fraction") {
        throw std::invalid_argument("gen-data: unknown key '" + k + "'");
      }
    }
    std::vector<SynthSample> samples =
        gen_shapes(gen_cfg.value("count", 30), gen_cfg.value("size", 64),
                   gen_cfg.value("regions_per_image", 2), gen_cfg.value("noise", 0.1),
                   derive_seed(seed, detail::kTrainData));
    const double flip = gen_cfg.value("flip_fraction", 0.0);
    if (flip != 0.0) samples = flip_labels(samples, flip, derive_seed(seed, detail::kFlip));
    save_dataset(out_dir, samples);
  } else if (kind == "toy") {
    for (auto it = gen_cfg.begin(); it != gen_cfg.end(); ++it) {
      const std::string& k = it.key();
      if (k != "kind" && k != "seed" && k != "n1" && k != "n2" && k != "var") {
        throw std::invalid_argument("gen-data: unknown key '" + k + "'");
      }
    }
    const ToyDataset ds =
        gen_toy_gaussians(gen_cfg.value("n1", 10000), gen_cfg.value("n2", 10),
                          gen_cfg.value("var", 0.2), derive_seed(seed, detail::kToyData));
    save_dataset(out_dir, {toy_sample(ds.train), toy_sample(ds.test)});
  } else {
    throw std::invalid_argument("gen-data: unknown kind '" + kind + "' (expected shapes or toy)");
  }
}

void evaluate_dataset(const std::string& checkpoint_dir, const std::string& dataset_dir,
                      const nlohmann::json& eval_cfg, const std::string& out_dir) {
  if (!eval_cfg.is_object()) throw std::invalid_argument("eval: config must be a JSON object");
  for (auto it = eval_cfg.begin(); it != eval_cfg.end(); ++it) {
    const std::string& k = it.key();
    if (k != "loss" && k != "standardize" && k != "seed") {
      throw std::invalid_argument("eval: unknown key '" + k + "'");
    }
  }
  const LossKind loss = loss_from_name(eval_cfg.value("loss", "cas"));
  const bool apply_standardize = eval_cfg.value("standardize", true);

  const Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  std::vector<SynthSample> samples = load_dataset(dataset_dir);
  if (samples.empty()) throw std::runtime_error("eval: dataset is empty");
  for (SynthSample& s : samples) {
    if (s.image.channels != ckpt.input_channels) {
      throw std::invalid_argument("eval: dataset channels do not match the checkpoint");
    }
    if (apply_standardize) s.image = standardize(s.image);
  }

  TrainResult tr;
  tr.spec = ckpt.spec;
  tr.params = ckpt.params;
  const int channel = aligned_channel(tr, samples, loss);

  std::vector<CellResult> cells;
  for (size_t i = 0; i < samples.size(); ++i) {
    CellResult r;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%04zu", i);
    r.name = buf;
    r.loss = loss;
    r.metrics = evaluate_average(tr, {samples[i]}, channel, &r.within_region_var);
    cells.push_back(std::move(r));
  }
  CellResult mean;
  mean.name = "mean";
  mean.loss = loss;
  mean.metrics = evaluate_average(tr, samples, channel, &mean.within_region_var);
  cells.push_back(std::move(mean));

  ExperimentConfig header_cfg;
  header_cfg.experiment = "eval";
  header_cfg.loss = loss;
  header_cfg.seed = eval_cfg.value("seed", static_cast<uint64_t>(0));

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  detail::write_text_atomic((fs::path(out_dir) / "metrics.csv").string(),
                            detail::metrics_csv(cells, header_cfg));
  nlohmann::ordered_json report;
  report["checkpoint"] = checkpoint_dir;
  report["dataset"] = dataset_dir;
  report["loss"] = loss_name(loss);
  report["standardize"] = apply_standardize;
  report["aligned_channel"] = channel;
  report["cells"] = detail::cells_json(cells);
  detail::write_text_atomic((fs::path(out_dir) / "report.json").string(), report.dump(2) + "\n");
}

namespace {

std::string utc_now_iso() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

const CellResult* find_cell(const std::vector<CellResult>& cells, LossKind loss, double fraction) {
  for (const CellResult& c : cells) {
    if (c.loss == loss && c.fraction == fraction) return &c;
  }
  return nullptr;
}

nlohmann::ordered_json fidelity_comparisons(const std::vector<CellResult>& cells,
                                            const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  if (cfg.fractions.empty()) return j;
  const double lo = *std::min_element(cfg.fractions.begin(), cfg.fractions.end());
  const double hi = *std::max_element(cfg.fractions.begin(), cfg.fractions.end());
  for (LossKind l : {LossKind::cas, LossKind::ce, LossKind::cace}) {
    const CellResult* first = find_cell(cells, l, lo);
    const CellResult* last = find_cell(cells, l, hi);
    if (!first || !last) continue;
    nlohmann::ordered_json e;
    e["fraction_low"] = lo;
    e["fraction_high"] = hi;
    e["f_beta_low"] = first->metrics.f_beta;
    e["f_beta_high"] = last->metrics.f_beta;
    e["f_beta_drop"] = first->metrics.f_beta - last->metrics.f_beta;
    j[loss_name(l)] = e;
  }
  return j;
}

}  // namespace

bool run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.out_dir.empty()) {
    throw std::invalid_argument("run_experiment: an output directory is required");
  }
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<CellResult> cells;
  nlohmann::ordered_json report;
  report["config"] = cfg.to_json();
  // The delivery directory is not an experiment parameter; keeping it out of
  // report.json lets reruns into different directories compare byte-equal.
  report["config"].erase("out_dir");
  bool ok = true;

  if (cfg.experiment == "train") {
    const TrainResult tr = train(cfg);  // writes checkpoint/ and trainlog.csv
    const detail::ShapesData data = prepare_shapes_data(cfg);
    CellResult r;
    r.name = loss_name(cfg.loss);
    r.loss = cfg.loss;
    r.alpha = cfg.alpha;
    r.fraction = cfg.flip_fraction;
    r.log = tr.log;
    const int channel = aligned_channel(tr, data.val, cfg.loss);
    r.metrics = evaluate_average(tr, data.test, channel, &r.within_region_var);
    cells.push_back(std::move(r));
  } else if (cfg.experiment == "toy-imbalance") {
    const ToyImbalanceResult toy = run_toy_imbalance(cfg);
    CellResult ce_cell;
    ce_cell.name = "ce";
    ce_cell.loss = LossKind::ce;
    ce_cell.alpha = cfg.alpha;
    ce_cell.log = toy.ce_log;
    ce_cell.metrics = toy.ce_metrics;
    CellResult cas_cell;
    cas_cell.name = "cas";
    cas_cell.loss = LossKind::cas;
    cas_cell.alpha = cfg.alpha;
    cas_cell.log = toy.cas_log;
    cas_cell.metrics = toy.cas_metrics;
    cells.push_back(std::move(ce_cell));
    cells.push_back(std::move(cas_cell));
    nlohmann::ordered_json jt;
    jt["ce"] = toy.ce.to_json();
    jt["cas"] = toy.cas.to_json();
    report["toy"] = jt;
  } else if (cfg.experiment == "fidelity-sweep") {
    cells = run_fidelity_sweep(cfg);
    report["comparisons"] = fidelity_comparisons(cells, cfg);
  } else if (cfg.experiment == "alpha-sweep") {
    cells = run_alpha_ablation(cfg);
  } else if (cfg.experiment == "properties") {
    const PropertyReport pr = run_property_checks(cfg);
    report["properties"] = pr.to_json();
    ok = pr.all_pass();
  } else if (cfg.experiment == "texture-metrics") {
    cells = run_texture_metrics(cfg);
  }

  report["cells"] = detail::cells_json(cells);

  detail::write_text_atomic((fs::path(cfg.out_dir) / "metrics.csv").string(),
                            detail::metrics_csv(cells, cfg));
  detail::write_text_atomic((fs::path(cfg.out_dir) / "trainlog.csv").string(),
                            detail::trainlog_csv(cells));
  detail::write_text_atomic((fs::path(cfg.out_dir) / "report.json").string(),
                            report.dump(2) + "\n");
  detail::write_text_atomic((fs::path(cfg.out_dir) / "curve.svg").string(),
                            detail::curve_svg(cells, cfg.experiment));

  // Anything time-dependent stays out of the deterministic files.
  nlohmann::ordered_json meta;
  meta["created_utc"] = utc_now_iso();
  meta["out_dir"] = cfg.out_dir;
  meta["total_wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::ordered_json cell_times;
  for (const CellResult& c : cells) cell_times[c.name] = c.log.wall_time_seconds;
  meta["cell_wall_seconds"] = cell_times;
  detail::write_text_atomic((fs::path(cfg.out_dir) / "meta.json").string(), meta.dump(2) + "\n");

  return ok;
}

}  // namespace casseg
