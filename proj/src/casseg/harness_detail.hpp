#pragma once

// Internals shared between the trainer and the experiment drivers. Not part
// of the library surface.

#include <functional>
#include <string>
#include <vector>

#include "casseg/harness.hpp"

namespace casseg::detail {

// Stable sub-stream tags for seed derivation, so adding a consumer never
// shifts another consumer's stream.
enum SeedStream : uint64_t {
  kTrainData = 1,
  kInitParams = 2,
  kBatchOrder = 3,
  kTestData = 4,
  kFlip = 5,
  kToyData = 11,
  kPropertyFuzz = 21,
};

uint64_t derive_seed(uint64_t seed, uint64_t stream);

struct ShapesData {
  std::vector<SynthSample> train;  // labels flipped per cfg.flip_fraction
  std::vector<SynthSample> val;    // clean, carved off before flipping
  std::vector<SynthSample> test;   // clean, independent seed stream
};

/// Generates, standardizes, and splits the shapes dataset for a config.
ShapesData prepare_shapes_data(const ExperimentConfig& cfg);

/// Per-pixel class ids (0/1) induced by a sample's per-region labels.
RegionMap class_label_map(const SynthSample& s);

/// Binary mask of class-1 pixels.
BinaryMap foreground_mask(const SynthSample& s);

NetSpec shapes_net(int in_channels, int out_channels);
NetSpec toy_net();

/// Core training loop over a fixed sample list; pure apart from rng streams
/// derived from cfg.seed. Does not touch the filesystem.
TrainResult train_on(const ExperimentConfig& cfg, const NetSpec& spec,
                     const std::vector<SynthSample>& samples);

/// Output channel to read saliency from: channel 1 for CE (the class-1
/// channel), select_salient_channel over the validation split otherwise.
int aligned_channel(const TrainResult& tr, const std::vector<SynthSample>& val, LossKind loss);

/// Mean MetricsReport over the test samples, plus the mean within-region
/// output variance if requested.
MetricsReport evaluate_average(const TrainResult& tr, const std::vector<SynthSample>& test,
                               int channel, double* within_region_var);

/// Extracts one channel as a single-channel grid.
ImageGrid slice_channel(const ImageGrid& grid, int channel);

/// Argmax-channel partition of a softmax field, normalized by first
/// appearance.
RegionMap argmax_regions(const ImageGrid& field);

/// Runs fn(0..n-1) on up to jobs worker threads. Exceptions are rethrown
/// on the caller thread after all workers finish.
void run_parallel(int jobs, int n, const std::function<void(int)>& fn);

void write_text_atomic(const std::string& path, const std::string& content);

std::string metrics_csv(const std::vector<CellResult>& cells, const ExperimentConfig& cfg);
std::string trainlog_csv(const std::vector<CellResult>& cells);
std::string curve_svg(const std::vector<CellResult>& cells, const std::string& title);
nlohmann::ordered_json cells_json(const std::vector<CellResult>& cells);

}  // namespace casseg::detail
