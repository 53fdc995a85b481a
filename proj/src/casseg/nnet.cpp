#include "casseg/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "casseg/grid_io.hpp"
#include "casseg/rng.hpp"
#include "json.hpp"

namespace casseg {

namespace {

bool has_params(LayerKind k) { return k == LayerKind::dense || k == LayerKind::conv3x3; }

size_t weight_count(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::dense:
      return static_cast<size_t>(s.out_channels) * s.in_channels;
    case LayerKind::conv3x3:
      return static_cast<size_t>(s.out_channels) * s.in_channels * 9;
    default:
      return 0;
  }
}

void check_params_match(const ModelParams& params, const NetSpec& spec, const char* what) {
  if (params.layers.size() != spec.size()) {
    throw std::invalid_argument(std::string(what) + ": parameter/spec layer count mismatch");
  }
  for (size_t i = 0; i < spec.size(); ++i) {
    const size_t wn = weight_count(spec[i]);
    const size_t bn = has_params(spec[i].kind) ? static_cast<size_t>(spec[i].out_channels) : 0;
    if (params.layers[i].weights.size() != wn || params.layers[i].bias.size() != bn) {
      throw std::invalid_argument(std::string(what) + ": tensor shape mismatch at layer " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

int validate_spec(const NetSpec& spec, int input_channels) {
  if (spec.empty()) throw std::invalid_argument("validate_spec: empty network");
  if (input_channels <= 0) throw std::invalid_argument("validate_spec: input channels must be positive");
  int channels = input_channels;
  for (size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& s = spec[i];
    switch (s.kind) {
      case LayerKind::dense:
      case LayerKind::conv3x3:
        if (s.in_channels != channels) {
          throw std::invalid_argument("validate_spec: layer " + std::to_string(i) + " expects " +
                                      std::to_string(s.in_channels) + " channels, gets " +
                                      std::to_string(channels));
        }
        if (s.out_channels <= 0) {
          throw std::invalid_argument("validate_spec: layer " + std::to_string(i) +
                                      " output channels must be positive");
        }
        channels = s.out_channels;
        break;
      case LayerKind::relu:
      case LayerKind::softmax_per_pixel:
        break;
    }
  }
  if (spec.back().kind != LayerKind::softmax_per_pixel) {
    throw std::invalid_argument("validate_spec: network must end in softmax_per_pixel");
  }
  return channels;
}

ModelParams init_params(const NetSpec& spec, int input_channels, uint64_t seed) {
  validate_spec(spec, input_channels);
  Rng rng(seed);
  ModelParams params;
  params.rng_seed = seed;
  params.layers.resize(spec.size());
  for (size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& s = spec[i];
    if (!has_params(s.kind)) continue;
    const int fan_in = s.kind == LayerKind::dense ? s.in_channels : s.in_channels * 9;
    const int fan_out = s.kind == LayerKind::dense ? s.out_channels : s.out_channels * 9;
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    LayerParams& lp = params.layers[i];
    lp.weights.resize(weight_count(s));
    for (double& w : lp.weights) w = rng.uniform(-a, a);
    lp.bias.assign(static_cast<size_t>(s.out_channels), 0.0);
  }
  return params;
}

namespace {

ImageGrid dense_forward(const LayerParams& lp, const LayerSpec& s, const ImageGrid& in) {
  ImageGrid out(in.height, in.width, s.out_channels);
  const int64_t pixels = in.pixel_count();
  for (int64_t p = 0; p < pixels; ++p) {
    const double* x = &in.values[p * s.in_channels];
    double* y = &out.values[p * s.out_channels];
    for (int oc = 0; oc < s.out_channels; ++oc) {
      double acc = lp.bias[oc];
      const double* w = &lp.weights[static_cast<size_t>(oc) * s.in_channels];
      for (int ic = 0; ic < s.in_channels; ++ic) acc += w[ic] * x[ic];
      y[oc] = acc;
    }
  }
  return out;
}

ImageGrid conv_forward(const LayerParams& lp, const LayerSpec& s, const ImageGrid& in) {
  ImageGrid out(in.height, in.width, s.out_channels);
  const int h = in.height, w = in.width;
  const int ci = s.in_channels, co = s.out_channels;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* dst = &out.values[(static_cast<int64_t>(y) * w + x) * co];
      for (int oc = 0; oc < co; ++oc) dst[oc] = lp.bias[oc];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = y + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = x + kx - 1;
          if (ix < 0 || ix >= w) continue;
          const double* src = &in.values[(static_cast<int64_t>(iy) * w + ix) * ci];
          for (int oc = 0; oc < co; ++oc) {
            const double* wk = &lp.weights[((static_cast<size_t>(oc) * ci) * 9)];
            double acc = 0.0;
            for (int ic = 0; ic < ci; ++ic) {
              acc += wk[static_cast<size_t>(ic) * 9 + ky * 3 + kx] * src[ic];
            }
            dst[oc] += acc;
          }
        }
      }
    }
  }
  return out;
}

ImageGrid relu_forward(const ImageGrid& in) {
  ImageGrid out = in;
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  return out;
}

ImageGrid softmax_forward(const ImageGrid& in) {
  ImageGrid out(in.height, in.width, in.channels);
  const int m = in.channels;
  const int64_t pixels = in.pixel_count();
  for (int64_t p = 0; p < pixels; ++p) {
    const double* x = &in.values[p * m];
    double* y = &out.values[p * m];
    double mx = x[0];
    for (int c = 1; c < m; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (int c = 0; c < m; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    for (int c = 0; c < m; ++c) y[c] /= sum;
  }
  return out;
}

}  // namespace

SoftmaxField forward(const ModelParams& params, const NetSpec& spec, const ImageGrid& input,
                     ForwardCache* cache) {
  if (validate_spec(spec, input.channels) <= 0) {
    throw std::invalid_argument("forward: invalid spec");
  }
  check_params_match(params, spec, "forward");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  ImageGrid cur = input;
  for (size_t i = 0; i < spec.size(); ++i) {
    switch (spec[i].kind) {
      case LayerKind::dense:
        cur = dense_forward(params.layers[i], spec[i], cur);
        break;
      case LayerKind::conv3x3:
        cur = conv_forward(params.layers[i], spec[i], cur);
        break;
      case LayerKind::relu:
        cur = relu_forward(cur);
        break;
      case LayerKind::softmax_per_pixel:
        cur = softmax_forward(cur);
        break;
    }
    if (cache) cache->activations.push_back(cur);
  }
  return cur;
}

namespace {

void dense_backward(const LayerParams& lp, const LayerSpec& s, const ImageGrid& in,
                    const ImageGrid& up, LayerParams& grad, ImageGrid& down) {
  const int64_t pixels = in.pixel_count();
  for (int64_t p = 0; p < pixels; ++p) {
    const double* x = &in.values[p * s.in_channels];
    const double* g = &up.values[p * s.out_channels];
    double* dx = &down.values[p * s.in_channels];
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const double go = g[oc];
      grad.bias[oc] += go;
      double* gw = &grad.weights[static_cast<size_t>(oc) * s.in_channels];
      const double* w = &lp.weights[static_cast<size_t>(oc) * s.in_channels];
      for (int ic = 0; ic < s.in_channels; ++ic) {
        gw[ic] += go * x[ic];
        dx[ic] += go * w[ic];
      }
    }
  }
}

void conv_backward(const LayerParams& lp, const LayerSpec& s, const ImageGrid& in,
                   const ImageGrid& up, LayerParams& grad, ImageGrid& down) {
  const int h = in.height, w = in.width;
  const int ci = s.in_channels, co = s.out_channels;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* g = &up.values[(static_cast<int64_t>(y) * w + x) * co];
      for (int oc = 0; oc < co; ++oc) grad.bias[oc] += g[oc];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = y + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = x + kx - 1;
          if (ix < 0 || ix >= w) continue;
          const double* src = &in.values[(static_cast<int64_t>(iy) * w + ix) * ci];
          double* dst = &down.values[(static_cast<int64_t>(iy) * w + ix) * ci];
          for (int oc = 0; oc < co; ++oc) {
            const double go = g[oc];
            for (int ic = 0; ic < ci; ++ic) {
              const size_t wi = (static_cast<size_t>(oc) * ci + ic) * 9 + ky * 3 + kx;
              grad.weights[wi] += go * src[ic];
              dst[ic] += go * lp.weights[wi];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::vector<LayerParams> backward(const ModelParams& params, const NetSpec& spec,
                                  const ForwardCache& cache, const GradField& upstream,
                                  ImageGrid* input_grad) {
  check_params_match(params, spec, "backward");
  if (cache.activations.size() != spec.size() + 1) {
    throw std::invalid_argument("backward: cache does not match spec (stale forward?)");
  }
  const ImageGrid& out = cache.activations.back();
  if (!upstream.same_shape(out)) {
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  }

  std::vector<LayerParams> grads(spec.size());
  for (size_t i = 0; i < spec.size(); ++i) {
    grads[i].weights.assign(params.layers[i].weights.size(), 0.0);
    grads[i].bias.assign(params.layers[i].bias.size(), 0.0);
  }

  ImageGrid g = upstream;
  for (size_t ri = spec.size(); ri-- > 0;) {
    const ImageGrid& in = cache.activations[ri];
    const ImageGrid& produced = cache.activations[ri + 1];
    switch (spec[ri].kind) {
      case LayerKind::dense: {
        ImageGrid down(in.height, in.width, in.channels);
        dense_backward(params.layers[ri], spec[ri], in, g, grads[ri], down);
        g = std::move(down);
        break;
      }
      case LayerKind::conv3x3: {
        ImageGrid down(in.height, in.width, in.channels);
        conv_backward(params.layers[ri], spec[ri], in, g, grads[ri], down);
        g = std::move(down);
        break;
      }
      case LayerKind::relu: {
        for (size_t k = 0; k < g.values.size(); ++k) {
          // subgradient 0 at the kink
          if (in.values[k] <= 0.0) g.values[k] = 0.0;
        }
        break;
      }
      case LayerKind::softmax_per_pixel: {
        const int m = produced.channels;
        const int64_t pixels = produced.pixel_count();
        for (int64_t p = 0; p < pixels; ++p) {
          const double* y = &produced.values[p * m];
          double* gp = &g.values[p * m];
          double dot = 0.0;
          for (int c = 0; c < m; ++c) dot += gp[c] * y[c];
          for (int c = 0; c < m; ++c) gp[c] = y[c] * (gp[c] - dot);
        }
        break;
      }
    }
  }
  if (input_grad) *input_grad = std::move(g);
  return grads;
}

AdamState init_adam(const ModelParams& params, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("init_adam: lr must be positive and finite");
  }
  AdamState st;
  st.lr = lr;
  st.m.resize(params.layers.size());
  st.v.resize(params.layers.size());
  for (size_t i = 0; i < params.layers.size(); ++i) {
    st.m[i].weights.assign(params.layers[i].weights.size(), 0.0);
    st.m[i].bias.assign(params.layers[i].bias.size(), 0.0);
    st.v[i].weights.assign(params.layers[i].weights.size(), 0.0);
    st.v[i].bias.assign(params.layers[i].bias.size(), 0.0);
  }
  return st;
}

namespace {

void adam_update_array(std::vector<double>& p, const std::vector<double>& g,
                       std::vector<double>& m, std::vector<double>& v, const AdamState& st,
                       double bc1, double bc2) {
  for (size_t k = 0; k < p.size(); ++k) {
    if (!std::isfinite(g[k])) {
      throw std::runtime_error("adam_step: non-finite gradient entry");
    }
    m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * g[k];
    v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * g[k] * g[k];
    const double mh = m[k] / bc1;
    const double vh = v[k] / bc2;
    p[k] -= st.lr * mh / (std::sqrt(vh) + st.epsilon);
  }
}

}  // namespace

void adam_step(ModelParams& params, const std::vector<LayerParams>& grads, AdamState& state) {
  if (grads.size() != params.layers.size() || state.m.size() != params.layers.size()) {
    throw std::invalid_argument("adam_step: layer count mismatch");
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].weights.size() != params.layers[i].weights.size() ||
        grads[i].bias.size() != params.layers[i].bias.size()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch at layer " +
                                  std::to_string(i));
    }
  }
  state.step++;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < grads.size(); ++i) {
    adam_update_array(params.layers[i].weights, grads[i].weights, state.m[i].weights,
                      state.v[i].weights, state, bc1, bc2);
    adam_update_array(params.layers[i].bias, grads[i].bias, state.m[i].bias, state.v[i].bias,
                      state, bc1, bc2);
  }
}

std::vector<double> flatten_params(const ModelParams& params) {
  std::vector<double> flat;
  for (const LayerParams& lp : params.layers) {
    flat.insert(flat.end(), lp.weights.begin(), lp.weights.end());
    flat.insert(flat.end(), lp.bias.begin(), lp.bias.end());
  }
  return flat;
}

std::vector<double> flatten_grads(const std::vector<LayerParams>& grads) {
  std::vector<double> flat;
  for (const LayerParams& lp : grads) {
    flat.insert(flat.end(), lp.weights.begin(), lp.weights.end());
    flat.insert(flat.end(), lp.bias.begin(), lp.bias.end());
  }
  return flat;
}

void set_flat_params(ModelParams& params, const std::vector<double>& flat) {
  size_t k = 0;
  for (LayerParams& lp : params.layers) {
    for (double& w : lp.weights) {
      if (k >= flat.size()) throw std::invalid_argument("set_flat_params: too few values");
      w = flat[k++];
    }
    for (double& b : lp.bias) {
      if (k >= flat.size()) throw std::invalid_argument("set_flat_params: too few values");
      b = flat[k++];
    }
  }
  if (k != flat.size()) throw std::invalid_argument("set_flat_params: too many values");
}

std::vector<double> finite_difference_grad(const std::function<double(const ModelParams&)>& loss_fn,
                                           const ModelParams& params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_grad: eps must be positive");
  ModelParams work = params;
  std::vector<double> grad;
  for (LayerParams& lp : work.layers) {
    for (std::vector<double>* arr : {&lp.weights, &lp.bias}) {
      for (double& entry : *arr) {
        const double saved = entry;
        entry = saved + eps;
        const double hi = loss_fn(work);
        entry = saved - eps;
        const double lo = loss_fn(work);
        entry = saved;
        if (!std::isfinite(hi) || !std::isfinite(lo)) {
          throw std::runtime_error("finite_difference_grad: loss not finite at probe point");
        }
        grad.push_back((hi - lo) / (2.0 * eps));
      }
    }
  }
  return grad;
}

namespace {

std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::relu: return "relu";
    case LayerKind::softmax_per_pixel: return "softmax_per_pixel";
  }
  throw std::logic_error("kind_name: unknown layer kind");
}

LayerKind kind_from_name(const std::string& name) {
  if (name == "dense") return LayerKind::dense;
  if (name == "conv3x3") return LayerKind::conv3x3;
  if (name == "relu") return LayerKind::relu;
  if (name == "softmax_per_pixel") return LayerKind::softmax_per_pixel;
  throw std::runtime_error("checkpoint: unknown layer kind '" + name + "'");
}

ImageGrid tensor_as_grid(const std::vector<double>& v) {
  ImageGrid g(1, static_cast<int>(v.size()), 1);
  g.values = v;
  return g;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  validate_spec(ckpt.spec, ckpt.input_channels);
  check_params_match(ckpt.params, ckpt.spec, "save_checkpoint");
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::ordered_json manifest;
  manifest["format"] = "casseg-checkpoint";
  manifest["version"] = 1;
  manifest["input_channels"] = ckpt.input_channels;
  manifest["rng_seed"] = ckpt.params.rng_seed;
  manifest["step"] = ckpt.step;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (size_t i = 0; i < ckpt.spec.size(); ++i) {
    const LayerSpec& s = ckpt.spec[i];
    nlohmann::ordered_json jl;
    jl["kind"] = kind_name(s.kind);
    if (has_params(s.kind)) {
      jl["in"] = s.in_channels;
      jl["out"] = s.out_channels;
      const std::string stem = "layer_" + std::to_string(i);
      save_grid(fs::path(dir) / (stem + "_weights.casg"),
                tensor_as_grid(ckpt.params.layers[i].weights));
      save_grid(fs::path(dir) / (stem + "_bias.casg"), tensor_as_grid(ckpt.params.layers[i].bias));
      jl["weights"] = stem + "_weights.casg";
      jl["bias"] = stem + "_bias.casg";
    }
    layers.push_back(jl);
  }
  manifest["layers"] = layers;

  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write manifest in " + dir);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("save_checkpoint: manifest write failed in " + dir);
}

Checkpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("load_checkpoint: bad manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "casseg-checkpoint") {
    throw std::runtime_error("load_checkpoint: not a checkpoint manifest");
  }

  Checkpoint ckpt;
  ckpt.input_channels = manifest.at("input_channels").get<int>();
  ckpt.step = manifest.at("step").get<int64_t>();
  ckpt.params.rng_seed = manifest.at("rng_seed").get<uint64_t>();
  for (const auto& jl : manifest.at("layers")) {
    LayerSpec s;
    s.kind = kind_from_name(jl.at("kind").get<std::string>());
    LayerParams lp;
    if (has_params(s.kind)) {
      s.in_channels = jl.at("in").get<int>();
      s.out_channels = jl.at("out").get<int>();
      const ImageGrid w = load_grid((fs::path(dir) / jl.at("weights").get<std::string>()).string());
      const ImageGrid b = load_grid((fs::path(dir) / jl.at("bias").get<std::string>()).string());
      lp.weights = w.values;
      lp.bias = b.values;
    }
    ckpt.spec.push_back(s);
    ckpt.params.layers.push_back(std::move(lp));
  }
  validate_spec(ckpt.spec, ckpt.input_channels);
  check_params_match(ckpt.params, ckpt.spec, "load_checkpoint");
  return ckpt;
}

}  // namespace casseg
