#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "casseg/metrics.hpp"
#include "casseg/nnet.hpp"
#include "casseg/synth.hpp"
#include "json.hpp"

namespace casseg {

enum class LossKind { cas, ce, cace };

std::string loss_name(LossKind kind);
LossKind loss_from_name(const std::string& name);

/// Dataset parameters. count is the full training pool; the last 20% is
/// carved off as a clean validation split before any label flipping.
struct DataConfig {
  int count = 30;
  int test_count = 12;
  int size = 32;
  int regions_per_image = 2;
  double noise = 0.1;
  // toy imbalance problem only
  int toy_n1 = 10000;
  int toy_n2 = 10;
  double toy_var = 0.2;
};

/// Full experiment description. Serializes to a flat JSON document; the CLI
/// overrides single fields through dotted paths (e.g. data.count=50).
/// The training budget is counted in steps, not epochs: one step is one
/// optimizer update on one batch.
struct ExperimentConfig {
  std::string experiment = "train";  // train | toy-imbalance | fidelity-sweep |
                                     // alpha-sweep | properties | texture-metrics
  LossKind loss = LossKind::cas;
  double alpha = 0.1;
  double lr = 1e-3;
  int steps = 500;
  int batch_size = 8;
  uint64_t seed = 0;
  double flip_fraction = 0.0;
  std::vector<double> fractions = {0.0, 0.02, 0.05, 0.10, 0.30, 0.50};
  std::vector<double> alphas = {0.01, 0.1, 0.3, 0.5, 0.9};
  DataConfig data;
  std::string out_dir;
  int jobs = 1;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
  void validate() const;
};

/// Sets a dotted-path key in a config document. The raw value is parsed as
/// JSON when possible and treated as a string otherwise.
void set_dotted(nlohmann::json& j, const std::string& dotted, const std::string& raw_value);

/// Built-in experiment configurations by preset name.
nlohmann::ordered_json preset_config(const std::string& name);
std::vector<std::string> preset_names();

struct TrainLog {
  std::vector<double> losses;  // one batch loss per completed step
  double wall_time_seconds = 0.0;
  int64_t early_stopped_at = -1;  // step index where the 50-step rule fired
  int64_t diverged_at = -1;       // step index of the first non-finite loss
  std::string checkpoint_dir;
};

struct TrainResult {
  NetSpec spec;
  ModelParams params;
  TrainLog log;
};

/// Trains the standard small conv net on gen_shapes data per the config.
/// Writes checkpoint/ and trainlog.csv under cfg.out_dir when set. CAS
/// losses are checked against cas_bounds online; a violation aborts, since
/// it can only be a bug. Non-finite loss aborts with the step recorded.
TrainResult train(const ExperimentConfig& cfg);

/// Confusion counts over the two toy classes; rows are true classes,
/// columns predictions.
struct ConfusionMatrix {
  int64_t counts[2][2] = {{0, 0}, {0, 0}};

  int64_t total() const;
  double accuracy() const;
  nlohmann::ordered_json to_json() const;
};

struct ToyImbalanceResult {
  ConfusionMatrix ce;
  ConfusionMatrix cas;
  TrainLog ce_log;
  TrainLog cas_log;
  MetricsReport ce_metrics;  // test points scored as a 1 x P segmentation
  MetricsReport cas_metrics;
};

/// Trains the 2-layer, 10-hidden-unit net on the imbalanced Gaussian pair
/// under CE and under CAS, then evaluates both on the held-out test points.
ToyImbalanceResult run_toy_imbalance(const ExperimentConfig& cfg);

/// One sweep cell: a trained loss evaluated on clean test data.
struct CellResult {
  std::string name;
  LossKind loss = LossKind::cas;
  double alpha = 0.1;
  double fraction = 0.0;
  MetricsReport metrics;
  double within_region_var = 0.0;  // mean || s(x) - mean of s over x's region ||^2
  TrainLog log;
};

/// Label-fidelity sweep: every loss crossed with every flip fraction,
/// trained on corrupted labels and scored on clean test data.
std::vector<CellResult> run_fidelity_sweep(const ExperimentConfig& cfg);

/// CAS alpha ablation on identical data and seed per alpha value.
/// Requires every alpha in (0, 1).
std::vector<CellResult> run_alpha_ablation(const ExperimentConfig& cfg);

/// CAS on 3-region data, scored with the region/contour metrics.
std::vector<CellResult> run_texture_metrics(const ExperimentConfig& cfg);

struct PropertyEntry {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct PropertyReport {
  std::vector<PropertyEntry> entries;

  bool all_pass() const;
  nlohmann::ordered_json to_json() const;
};

/// Executable checks of the loss's claimed properties: permutation
/// invariance, analytic-vs-numeric gradients, bounds over a real training
/// log, post-training sparsity, and the discriminator corner search.
/// Failures are report entries, not errors.
PropertyReport run_property_checks(const ExperimentConfig& cfg);

/// Dispatches on cfg.experiment, runs it, and writes metrics.csv,
/// trainlog.csv, report.json, curve.svg, and meta.json under cfg.out_dir.
/// Returns false when a property check failed (the files are still
/// written).
bool run_experiment(const ExperimentConfig& cfg);

struct GradCheckResult {
  double loss_level_err = 0.0;  // analytic vs numeric at the loss itself
  double net_err = 0.0;         // end to end through a small network
};

/// Fuzzed analytic-vs-central-difference comparison for all three losses,
/// standalone and through a network. Tolerances: 1e-6 loss-level, 1e-5
/// end-to-end.
GradCheckResult run_grad_check(uint64_t seed);

/// Writes a dataset directory. gen_cfg keys: kind ("shapes" or "toy"),
/// seed, and the generator's parameters (shapes: count, size,
/// regions_per_image, noise, flip_fraction; toy: n1, n2, var). A toy
/// dataset is stored as two 1 x n samples: id 0 train, id 1 test.
void generate_dataset(const nlohmann::json& gen_cfg, const std::string& out_dir);

/// Scores a saved checkpoint against a saved dataset and writes
/// metrics.csv (one row per sample plus a mean row) and report.json.
/// eval_cfg keys: loss, standardize (default true), seed. Channel
/// alignment runs on the evaluated samples themselves.
void evaluate_dataset(const std::string& checkpoint_dir, const std::string& dataset_dir,
                      const nlohmann::json& eval_cfg, const std::string& out_dir);

}  // namespace casseg
