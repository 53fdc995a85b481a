#include "casseg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "casseg/format.hpp"
#include "casseg/harness_detail.hpp"
#include "casseg/losses.hpp"
#include "casseg/rng.hpp"

namespace casseg {

std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::cas: return "cas";
    case LossKind::ce: return "ce";
    case LossKind::cace: return "cace";
  }
  throw std::logic_error("loss_name: unknown loss kind");
}

LossKind loss_from_name(const std::string& name) {
  if (name == "cas") return LossKind::cas;
  if (name == "ce") return LossKind::ce;
  if (name == "cace") return LossKind::cace;
  throw std::invalid_argument("config: unknown loss '" + name + "' (expected cas, ce, or cace)");
}

namespace {

const char* const kExperiments[] = {"train",       "toy-imbalance", "fidelity-sweep",
                                    "alpha-sweep", "properties",    "texture-metrics"};

bool known_experiment(const std::string& name) {
  for (const char* e : kExperiments) {
    if (name == e) return true;
  }
  return false;
}

void check_known_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                      const char* prefix) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::invalid_argument("config: unknown key '" + std::string(prefix) + it.key() + "'");
    }
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    check_known_keys(j,
                     {"experiment", "loss", "alpha", "lr", "steps", "batch_size", "seed",
                      "flip_fraction", "fractions", "alphas", "data", "out_dir", "jobs"},
                     "");
    cfg.experiment = j.value("experiment", cfg.experiment);
    if (j.contains("loss")) cfg.loss = loss_from_name(j.at("loss").get<std::string>());
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.flip_fraction = j.value("flip_fraction", cfg.flip_fraction);
    if (j.contains("fractions")) cfg.fractions = j.at("fractions").get<std::vector<double>>();
    if (j.contains("alphas")) cfg.alphas = j.at("alphas").get<std::vector<double>>();
    if (j.contains("data")) {
      const nlohmann::json& d = j.at("data");
      check_known_keys(d,
                       {"count", "test_count", "size", "regions_per_image", "noise", "toy_n1",
                        "toy_n2", "toy_var"},
                       "data.");
      cfg.data.count = d.value("count", cfg.data.count);
      cfg.data.test_count = d.value("test_count", cfg.data.test_count);
      cfg.data.size = d.value("size", cfg.data.size);
      cfg.data.regions_per_image = d.value("regions_per_image", cfg.data.regions_per_image);
      cfg.data.noise = d.value("noise", cfg.data.noise);
      cfg.data.toy_n1 = d.value("toy_n1", cfg.data.toy_n1);
      cfg.data.toy_n2 = d.value("toy_n2", cfg.data.toy_n2);
      cfg.data.toy_var = d.value("toy_var", cfg.data.toy_var);
    }
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.jobs = j.value("jobs", cfg.jobs);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["experiment"] = experiment;
  j["loss"] = loss_name(loss);
  j["alpha"] = alpha;
  j["lr"] = lr;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["flip_fraction"] = flip_fraction;
  j["fractions"] = fractions;
  j["alphas"] = alphas;
  nlohmann::ordered_json d;
  d["count"] = data.count;
  d["test_count"] = data.test_count;
  d["size"] = data.size;
  d["regions_per_image"] = data.regions_per_image;
  d["noise"] = data.noise;
  d["toy_n1"] = data.toy_n1;
  d["toy_n2"] = data.toy_n2;
  d["toy_var"] = data.toy_var;
  j["data"] = d;
  j["out_dir"] = out_dir;
  j["jobs"] = jobs;
  return j;
}

void ExperimentConfig::validate() const {
  if (!known_experiment(experiment)) {
    throw std::invalid_argument("config: unknown experiment '" + experiment + "'");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("config: alpha must lie in [0, 1]");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("config: lr must be positive and finite");
  }
  if (steps < 0) throw std::invalid_argument("config: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(flip_fraction >= 0.0 && flip_fraction <= 1.0)) {
    throw std::invalid_argument("config: flip_fraction must lie in [0, 1]");
  }
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw std::invalid_argument("config: fractions entries must lie in [0, 1]");
    }
  }
  for (double a : alphas) {
    if (!std::isfinite(a)) throw std::invalid_argument("config: alphas entries must be finite");
  }
  if (data.count < 2) throw std::invalid_argument("config: data.count must be >= 2");
  if (data.test_count < 1) throw std::invalid_argument("config: data.test_count must be >= 1");
  if (data.size < 16) throw std::invalid_argument("config: data.size must be >= 16");
  if (data.regions_per_image < 2 || data.regions_per_image > 3) {
    throw std::invalid_argument("config: data.regions_per_image must be 2 or 3");
  }
  if (!(data.noise >= 0.0) || !std::isfinite(data.noise)) {
    throw std::invalid_argument("config: data.noise must be finite and non-negative");
  }
  if (data.toy_n1 < 1 || data.toy_n2 < 1) {
    throw std::invalid_argument("config: toy class counts must be >= 1");
  }
  if (!(data.toy_var >= 0.0) || !std::isfinite(data.toy_var)) {
    throw std::invalid_argument("config: data.toy_var must be finite and non-negative");
  }
  if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
  if (loss == LossKind::cace && data.regions_per_image != 2) {
    throw std::invalid_argument("config: cace needs binary data (regions_per_image = 2)");
  }
}

void set_dotted(nlohmann::json& j, const std::string& dotted, const std::string& raw_value) {
  if (dotted.empty()) throw std::invalid_argument("override: empty key");
  nlohmann::json* node = &j;
  size_t start = 0;
  for (;;) {
    const size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw std::invalid_argument("override: malformed key '" + dotted + "'");
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(raw_value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(raw_value) : parsed;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null()) {
      throw std::invalid_argument("override: '" + key + "' is not an object");
    }
    start = dot + 1;
  }
}

std::vector<std::string> preset_names() {
  return {"toy-imbalance", "fidelity-sweep", "alpha-sweep", "properties", "texture-metrics"};
}

nlohmann::ordered_json preset_config(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "toy-imbalance") {
    cfg.experiment = "toy-imbalance";
    cfg.steps = 2000;
    cfg.batch_size = 1;  // one full-batch grid
  } else if (name == "fidelity-sweep") {
    cfg.experiment = "fidelity-sweep";
    cfg.data.count = 40;  // 2% of the 32-sample train split still flips one sample
  } else if (name == "alpha-sweep") {
    cfg.experiment = "alpha-sweep";
  } else if (name == "properties") {
    cfg.experiment = "properties";
    cfg.steps = 1000;  // the sparsity check wants a comfortably converged net
  } else if (name == "texture-metrics") {
    cfg.experiment = "texture-metrics";
    cfg.steps = 300;
    cfg.data.regions_per_image = 3;
    cfg.data.count = 20;
    cfg.data.test_count = 8;
  } else {
    std::string valid;
    for (const std::string& p : preset_names()) valid += (valid.empty() ? "" : ", ") + p;
    throw std::invalid_argument("unknown preset '" + name + "' (expected one of: " + valid + ")");
  }
  return cfg.to_json();
}

namespace detail {

uint64_t derive_seed(uint64_t seed, uint64_t stream) { return Rng(seed).derive(stream).seed(); }

ShapesData prepare_shapes_data(const ExperimentConfig& cfg) {
  ShapesData data;
  std::vector<SynthSample> pool =
      gen_shapes(cfg.data.count, cfg.data.size, cfg.data.regions_per_image, cfg.data.noise,
                 derive_seed(cfg.seed, kTrainData));
  for (SynthSample& s : pool) s.image = standardize(s.image);

  // Clean validation slice comes off the end before any flipping, so channel
  // alignment never sees corrupted labels.
  const int64_t n = static_cast<int64_t>(pool.size());
  int64_t val_count = std::llround(0.2 * static_cast<double>(n));
  val_count = std::clamp<int64_t>(val_count, 1, n - 1);
  data.val.assign(pool.end() - val_count, pool.end());
  pool.erase(pool.end() - val_count, pool.end());
  data.train = flip_labels(pool, cfg.flip_fraction, derive_seed(cfg.seed, kFlip));

  data.test = gen_shapes(cfg.data.test_count, cfg.data.size, cfg.data.regions_per_image,
                         cfg.data.noise, derive_seed(cfg.seed, kTestData));
  for (SynthSample& s : data.test) s.image = standardize(s.image);
  return data;
}

RegionMap class_label_map(const SynthSample& s) {
  std::vector<int32_t> ids(s.regions.ids().size());
  for (size_t p = 0; p < ids.size(); ++p) {
    ids[p] = s.class_labels[s.regions.ids()[p]];
  }
  return RegionMap(s.regions.height(), s.regions.width(), std::move(ids));
}

BinaryMap foreground_mask(const SynthSample& s) {
  BinaryMap m(s.regions.height(), s.regions.width());
  for (size_t p = 0; p < m.values.size(); ++p) {
    m.values[p] = s.class_labels[s.regions.ids()[p]] == 1 ? 1 : 0;
  }
  return m;
}

NetSpec shapes_net(int in_channels, int out_channels) {
  return {LayerSpec::conv3x3(in_channels, 8), LayerSpec::relu(), LayerSpec::conv3x3(8, 8),
          LayerSpec::relu(),                  LayerSpec::dense(8, out_channels),
          LayerSpec::softmax()};
}

NetSpec toy_net() {
  return {LayerSpec::dense(2, 10), LayerSpec::relu(), LayerSpec::dense(10, 2),
          LayerSpec::softmax()};
}

namespace {

struct LossEval {
  double value = 0.0;
  GradField grad;
};

LossEval eval_loss(LossKind kind, const SoftmaxField& out, const SynthSample& s,
                   const RegionMap* label_map, double alpha) {
  LossEval e;
  switch (kind) {
    case LossKind::cas:
      e.value = cas_forward(out, s.regions, CasConfig{alpha});
      e.grad = cas_backward(out, s.regions, CasConfig{alpha});
      break;
    case LossKind::ce:
      e.value = ce_forward(out, *label_map);
      e.grad = ce_backward(out, *label_map);
      break;
    case LossKind::cace:
      e.value = cace_forward(out, *label_map).value;
      e.grad = cace_backward(out, *label_map);
      break;
  }
  return e;
}

void check_cas_in_bounds(double value, const SynthSample& s, double alpha, int channels,
                         int step) {
  const LossBounds b = cas_bounds(s.regions.region_count(), CasConfig{alpha}, channels);
  const double slack = 1e-9 * (1.0 + std::max(std::fabs(b.lower), std::fabs(b.upper)));
  if (value < b.lower - slack || value > b.upper + slack) {
    throw std::logic_error("train: CAS value " + fmt_g17(value) + " at step " +
                           std::to_string(step) + " escapes provable bounds [" +
                           fmt_g17(b.lower) + ", " + fmt_g17(b.upper) + "]; this is a bug");
  }
}

}  // namespace

TrainResult train_on(const ExperimentConfig& cfg, const NetSpec& spec,
                     const std::vector<SynthSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("train: no training samples");
  const int in_channels = samples[0].image.channels;
  validate_spec(spec, in_channels);

  std::vector<RegionMap> label_maps;
  if (cfg.loss != LossKind::cas) {
    label_maps.reserve(samples.size());
    for (const SynthSample& s : samples) label_maps.push_back(class_label_map(s));
  }

  TrainResult tr;
  tr.spec = spec;
  tr.params = init_params(spec, in_channels, derive_seed(cfg.seed, kInitParams));
  AdamState adam = init_adam(tr.params, cfg.lr);
  Rng batch_rng(derive_seed(cfg.seed, kBatchOrder));

  const auto t0 = std::chrono::steady_clock::now();
  const int64_t n = static_cast<int64_t>(samples.size());
  bool stop_armed = false;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<LayerParams> acc(spec.size());
    for (size_t i = 0; i < spec.size(); ++i) {
      acc[i].weights.assign(tr.params.layers[i].weights.size(), 0.0);
      acc[i].bias.assign(tr.params.layers[i].bias.size(), 0.0);
    }

    double batch_loss = 0.0;
    bool diverged = false;
    for (int b = 0; b < cfg.batch_size && !diverged; ++b) {
      const int64_t idx = batch_rng.uniform_int(0, n - 1);
      const SynthSample& s = samples[idx];
      ForwardCache cache;
      const SoftmaxField out = forward(tr.params, spec, s.image, &cache);
      const RegionMap* lm = label_maps.empty() ? nullptr : &label_maps[idx];
      const LossEval e = eval_loss(cfg.loss, out, s, lm, cfg.alpha);
      if (!std::isfinite(e.value)) {
        tr.log.diverged_at = step;
        diverged = true;
        break;
      }
      if (cfg.loss == LossKind::cas) {
        check_cas_in_bounds(e.value, s, cfg.alpha, out.channels, step);
      }
      batch_loss += e.value;
      const std::vector<LayerParams> grads = backward(tr.params, spec, cache, e.grad);
      for (size_t i = 0; i < acc.size(); ++i) {
        for (size_t k = 0; k < acc[i].weights.size(); ++k) {
          acc[i].weights[k] += grads[i].weights[k];
        }
        for (size_t k = 0; k < acc[i].bias.size(); ++k) acc[i].bias[k] += grads[i].bias[k];
      }
    }
    if (diverged) break;

    const double scale = 1.0 / static_cast<double>(cfg.batch_size);
    batch_loss *= scale;
    for (LayerParams& lp : acc) {
      for (double& w : lp.weights) w *= scale;
      for (double& b : lp.bias) b *= scale;
    }
    adam_step(tr.params, acc, adam);
    tr.log.losses.push_back(batch_loss);

    // Early stop when the 50-step loss improvement falls under 1e-5. Two
    // guards keep it from misfiring: the rule arms only after the loss has
    // moved at least 1e-3 from its start (CAS begins on a near-flat saddle
    // where per-step progress is tiny but compounding), and it compares
    // 50-step window means rather than two samples (batch losses are noisy
    // enough that single-sample differences dip below threshold mid-descent).
    const std::vector<double>& ls = tr.log.losses;
    const size_t t = ls.size() - 1;
    if (!stop_armed && ls.front() - ls.back() >= 1e-3) stop_armed = true;
    if (stop_armed && ls.size() >= 100) {
      double prev = 0.0, last = 0.0;
      for (size_t i = ls.size() - 100; i < ls.size() - 50; ++i) prev += ls[i];
      for (size_t i = ls.size() - 50; i < ls.size(); ++i) last += ls[i];
      if ((prev - last) / 50.0 < 1e-5) {
        tr.log.early_stopped_at = static_cast<int64_t>(t);
        break;
      }
    }
  }
  tr.log.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return tr;
}

int aligned_channel(const TrainResult& tr, const std::vector<SynthSample>& val, LossKind loss) {
  if (loss == LossKind::ce) return 1;  // the class-1 channel is the saliency channel
  std::vector<ImageGrid> outputs;
  std::vector<BinaryMap> masks;
  outputs.reserve(val.size());
  masks.reserve(val.size());
  for (const SynthSample& s : val) {
    outputs.push_back(forward(tr.params, tr.spec, s.image));
    masks.push_back(foreground_mask(s));
  }
  return select_salient_channel(outputs, masks);
}

ImageGrid slice_channel(const ImageGrid& grid, int channel) {
  if (channel < 0 || channel >= grid.channels) {
    throw std::invalid_argument("slice_channel: channel out of range");
  }
  ImageGrid out(grid.height, grid.width, 1);
  for (int64_t p = 0; p < grid.pixel_count(); ++p) {
    out.values[p] = grid.values[p * grid.channels + channel];
  }
  return out;
}

RegionMap argmax_regions(const ImageGrid& field) {
  std::vector<int32_t> labels(field.pixel_count());
  for (int64_t p = 0; p < field.pixel_count(); ++p) {
    const double* v = &field.values[p * field.channels];
    int best = 0;
    for (int c = 1; c < field.channels; ++c) {
      if (v[c] > v[best]) best = c;
    }
    labels[p] = best;
  }
  return RegionMap::from_labels(field.height, field.width, labels);
}

MetricsReport evaluate_average(const TrainResult& tr, const std::vector<SynthSample>& test,
                               int channel, double* within_region_var) {
  if (test.empty()) throw std::invalid_argument("evaluate: no test samples");
  MetricsReport sum;
  double wrv = 0.0;
  for (const SynthSample& s : test) {
    const SoftmaxField out = forward(tr.params, tr.spec, s.image);
    const ImageGrid saliency = slice_channel(out, channel);
    const BinaryMap predicted = binarize(saliency);
    const BinaryMap truth = foreground_mask(s);
    const PrecisionRecall pr = precision_recall(predicted, truth);
    const RegionMap pred_regions = argmax_regions(out);

    sum.f_beta += f_beta(predicted, truth);
    sum.mae += mae(saliency, truth);
    sum.precision += pr.precision;
    sum.recall += pr.recall;
    sum.rand_index += rand_index(pred_regions, s.regions);
    sum.variation_of_information += variation_of_information(pred_regions, s.regions);
    sum.gt_covering += gt_covering(pred_regions, s.regions);
    sum.boundary_f += boundary_f(pred_regions, s.regions);

    const RegionStats stats = compute_region_stats(out, s.regions);
    double acc = 0.0;
    for (int64_t p = 0; p < out.pixel_count(); ++p) {
      const int32_t r = s.regions.ids()[p];
      for (int c = 0; c < out.channels; ++c) {
        const double d = out.values[p * out.channels + c] - stats.mean(r, c);
        acc += d * d;
      }
    }
    wrv += acc / static_cast<double>(out.pixel_count());
  }
  const double inv = 1.0 / static_cast<double>(test.size());
  sum.f_beta *= inv;
  sum.mae *= inv;
  sum.precision *= inv;
  sum.recall *= inv;
  sum.rand_index *= inv;
  sum.variation_of_information *= inv;
  sum.gt_covering *= inv;
  sum.boundary_f *= inv;
  if (within_region_var) *within_region_var = wrv * inv;
  return sum;
}

void run_parallel(int jobs, int n, const std::function<void(int)>& fn) {
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (int i = 0; i < jobs; ++i) workers.emplace_back(worker);
  for (std::thread& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string metrics_csv(const std::vector<CellResult>& cells, const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "cell,experiment,loss,alpha,fraction,seed," << MetricsReport::csv_header()
     << ",within_region_var\n";
  for (const CellResult& c : cells) {
    os << c.name << ',' << cfg.experiment << ',' << loss_name(c.loss) << ',' << fmt_g17(c.alpha)
       << ',' << fmt_g17(c.fraction) << ',' << cfg.seed << ',' << c.metrics.csv_row() << ','
       << fmt_g17(c.within_region_var) << '\n';
  }
  return os.str();
}

std::string trainlog_csv(const std::vector<CellResult>& cells) {
  std::ostringstream os;
  os << "cell,step,loss\n";
  for (const CellResult& c : cells) {
    for (size_t t = 0; t < c.log.losses.size(); ++t) {
      os << c.name << ',' << t << ',' << fmt_g17(c.log.losses[t]) << '\n';
    }
  }
  return os.str();
}

nlohmann::ordered_json cells_json(const std::vector<CellResult>& cells) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const CellResult& c : cells) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["loss"] = loss_name(c.loss);
    jc["alpha"] = c.alpha;
    jc["fraction"] = c.fraction;
    jc["steps_run"] = c.log.losses.size();
    jc["early_stopped_at"] = c.log.early_stopped_at;
    jc["diverged_at"] = c.log.diverged_at;
    if (!c.log.losses.empty()) {
      jc["initial_loss"] = c.log.losses.front();
      jc["final_loss"] = c.log.losses.back();
    }
    jc["metrics"] = nlohmann::ordered_json::parse(c.metrics.to_json());
    jc["within_region_var"] = c.within_region_var;
    arr.push_back(jc);
  }
  return arr;
}

std::string curve_svg(const std::vector<CellResult>& cells, const std::string& title) {
  constexpr double kWidth = 720, kHeight = 480;
  constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  int64_t max_steps = 0;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const CellResult& c : cells) {
    max_steps = std::max<int64_t>(max_steps, static_cast<int64_t>(c.log.losses.size()));
    for (double v : c.log.losses) {
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!any) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double x_max = std::max<int64_t>(max_steps - 1, 1);

  auto xpix = [&](double step) { return kLeft + plot_w * (step / x_max); };
  auto ypix = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };

  static const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  constexpr int kPaletteSize = 8;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "  <rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "  <text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  // axes
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
     << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double fx = t / 5.0;
    const double sx = fx * x_max;
    const double px = xpix(sx);
    os << "  <line x1=\"" << num(px) << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << num(px)
       << "\" y2=\"" << kTop + plot_h + 5 << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << num(px) << "\" y=\"" << kTop + plot_h + 20
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << num(std::round(sx)) << "</text>\n";
    const double vy = lo + fx * (hi - lo);
    const double py = ypix(vy);
    os << "  <line x1=\"" << kLeft - 5 << "\" y1=\"" << num(py) << "\" x2=\"" << kLeft
       << "\" y2=\"" << num(py) << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << kLeft - 8 << "\" y=\"" << num(py + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(vy)
       << "</text>\n";
  }
  os << "  <text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">step</text>\n";
  os << "  <text x=\"18\" y=\"" << kTop + plot_h / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
     << "transform=\"rotate(-90 18 " << kTop + plot_h / 2 << ")\">loss</text>\n";

  for (size_t ci = 0; ci < cells.size(); ++ci) {
    const std::vector<double>& losses = cells[ci].log.losses;
    if (losses.empty()) continue;
    const char* color = kPalette[ci % kPaletteSize];
    os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t t = 0; t < losses.size(); ++t) {
      if (t) os << ' ';
      os << num(xpix(static_cast<double>(t))) << ',' << num(ypix(losses[t]));
    }
    os << "\"/>\n";
    const double ly = kTop + 14 + 16 * static_cast<double>(ci);
    os << "  <line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << num(ly - 4) << "\" x2=\""
       << kLeft + plot_w - 130 << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "  <text x=\"" << kLeft + plot_w - 124 << "\" y=\"" << num(ly)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << cells[ci].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace detail

TrainResult train(const ExperimentConfig& cfg) {
  cfg.validate();
  const detail::ShapesData data = detail::prepare_shapes_data(cfg);
  TrainResult tr =
      detail::train_on(cfg, detail::shapes_net(3, cfg.data.regions_per_image), data.train);

  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::string ckpt_dir = (fs::path(cfg.out_dir) / "checkpoint").string();
    Checkpoint ckpt;
    ckpt.spec = tr.spec;
    ckpt.input_channels = 3;
    ckpt.params = tr.params;
    ckpt.step = static_cast<int64_t>(tr.log.losses.size());
    save_checkpoint(ckpt_dir, ckpt);
    tr.log.checkpoint_dir = ckpt_dir;

    CellResult cell;
    cell.name = loss_name(cfg.loss);
    cell.loss = cfg.loss;
    cell.alpha = cfg.alpha;
    cell.fraction = cfg.flip_fraction;
    cell.log = tr.log;
    detail::write_text_atomic((fs::path(cfg.out_dir) / "trainlog.csv").string(),
                              detail::trainlog_csv({cell}));
  }

  if (tr.log.diverged_at >= 0) {
    throw std::runtime_error("train: loss diverged at step " +
                             std::to_string(tr.log.diverged_at));
  }
  return tr;
}

}  // namespace casseg
