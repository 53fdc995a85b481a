#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "casseg/grid.hpp"
#include "casseg/losses.hpp"

namespace casseg {

enum class LayerKind { dense, conv3x3, relu, softmax_per_pixel };

/// One layer of a network description. dense mixes channels per pixel
/// (weights out x in); conv3x3 is a 3x3 convolution with zero "same"
/// padding (weights out x in x 3 x 3); relu and softmax_per_pixel carry no
/// parameters.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in_channels = 0;
  int out_channels = 0;

  static LayerSpec dense(int in, int out) { return {LayerKind::dense, in, out}; }
  static LayerSpec conv3x3(int in, int out) { return {LayerKind::conv3x3, in, out}; }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0}; }
  static LayerSpec softmax() { return {LayerKind::softmax_per_pixel, 0, 0}; }

  bool operator==(const LayerSpec&) const = default;
};

using NetSpec = std::vector<LayerSpec>;

/// Checks that layer shapes compose from the given input channel count and
/// that the net ends in softmax_per_pixel. Returns the output channel count.
int validate_spec(const NetSpec& spec, int input_channels);

struct LayerParams {
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const LayerParams&) const = default;
};

struct ModelParams {
  std::vector<LayerParams> layers;  // empty entries for relu / softmax
  uint64_t rng_seed = 0;

  bool operator==(const ModelParams&) const = default;
};

/// Glorot-uniform initialization: weights uniform in [-a, a] with
/// a = sqrt(6 / (fan_in + fan_out)), biases zero. Draw order is fixed
/// (layer by layer, index order), so a seed pins every weight.
ModelParams init_params(const NetSpec& spec, int input_channels, uint64_t seed);

/// Activations retained by forward for use in backward.
/// activations[0] is the input; activations[i + 1] the output of layer i.
struct ForwardCache {
  std::vector<ImageGrid> activations;
};

/// Runs the network. Output of the final softmax layer is a valid
/// SoftmaxField. Pass a cache to keep intermediate activations.
SoftmaxField forward(const ModelParams& params, const NetSpec& spec, const ImageGrid& input,
                     ForwardCache* cache = nullptr);

/// Reverse-mode gradients of (loss o forward) given d loss / d output.
/// Returns per-layer parameter gradients shaped like the parameters.
/// input_grad, when non-null, receives d loss / d input.
std::vector<LayerParams> backward(const ModelParams& params, const NetSpec& spec,
                                  const ForwardCache& cache, const GradField& upstream,
                                  ImageGrid* input_grad = nullptr);

struct AdamState {
  int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<LayerParams> m;
  std::vector<LayerParams> v;
};

AdamState init_adam(const ModelParams& params, double lr = 1e-3);

/// Standard Adam with bias correction. Throws on shape mismatch or
/// non-finite gradient entries.
void adam_step(ModelParams& params, const std::vector<LayerParams>& grads, AdamState& state);

/// Parameters flattened in the canonical order (per layer: weights, then
/// bias). set_flat_params writes the same order back.
std::vector<double> flatten_params(const ModelParams& params);
std::vector<double> flatten_grads(const std::vector<LayerParams>& grads);
void set_flat_params(ModelParams& params, const std::vector<double>& flat);

/// Central-difference gradient of loss_fn over every parameter entry, in
/// flatten_params order. The oracle against which backward is tested.
std::vector<double> finite_difference_grad(const std::function<double(const ModelParams&)>& loss_fn,
                                           const ModelParams& params, double eps = 1e-6);

/// Checkpoints: a manifest.json (layer specs, input channels, rng seed,
/// step count) plus one flat binary grid per parameter tensor, all inside
/// the given directory.
struct Checkpoint {
  NetSpec spec;
  int input_channels = 0;
  ModelParams params;
  int64_t step = 0;
};

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace casseg
