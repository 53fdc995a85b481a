#include "casseg/casseg.h"

#include <cstring>
#include <exception>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "casseg/grid.hpp"
#include "casseg/grid_io.hpp"
#include "casseg/harness.hpp"
#include "casseg/losses.hpp"
#include "casseg/metrics.hpp"
#include "json.hpp"

struct casseg_grid {
  casseg::ImageGrid v;
};

struct casseg_region_map {
  casseg::RegionMap v;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

/// Runs fn, translating exceptions to status codes. io_errors controls how
/// std::runtime_error is classified: file-touching entry points report it
/// as CASSEG_ERR_IO, pure computation as CASSEG_ERR_RUNTIME.
template <typename Fn>
casseg_status guarded(bool io_errors, Fn&& fn) {
  try {
    fn();
    return CASSEG_OK;
  } catch (const std::invalid_argument& e) {
    set_error(e.what());
    return CASSEG_ERR_INVALID_ARGUMENT;
  } catch (const nlohmann::json::exception& e) {
    set_error(e.what());
    return CASSEG_ERR_INVALID_ARGUMENT;
  } catch (const std::runtime_error& e) {
    set_error(e.what());
    return io_errors ? CASSEG_ERR_IO : CASSEG_ERR_RUNTIME;
  } catch (const std::exception& e) {
    set_error(e.what());
    return CASSEG_ERR_RUNTIME;
  } catch (...) {
    set_error("unknown error");
    return CASSEG_ERR_RUNTIME;
  }
}

casseg_status fail_invalid(const char* msg) {
  set_error(msg);
  return CASSEG_ERR_INVALID_ARGUMENT;
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

casseg::BinaryMap to_binary(const casseg::ImageGrid& g, const char* what) {
  if (g.channels != 1) {
    throw std::invalid_argument(std::string(what) + ": binary map must be single-channel");
  }
  casseg::BinaryMap b(g.height, g.width);
  for (size_t i = 0; i < g.values.size(); ++i) {
    if (g.values[i] == 0.0) {
      b.values[i] = 0;
    } else if (g.values[i] == 1.0) {
      b.values[i] = 1;
    } else {
      throw std::invalid_argument(std::string(what) + ": binary map must hold exactly 0 or 1");
    }
  }
  return b;
}

casseg::ImageGrid from_binary(const casseg::BinaryMap& b) {
  casseg::ImageGrid g(b.height, b.width, 1);
  for (size_t i = 0; i < b.values.size(); ++i) g.values[i] = static_cast<double>(b.values[i]);
  return g;
}

nlohmann::json parse_config(const char* config_json, const char* what) {
  if (!config_json) return nlohmann::json::object();
  nlohmann::json j = nlohmann::json::parse(config_json, nullptr, false);
  if (j.is_discarded()) {
    throw std::invalid_argument(std::string(what) + ": config is not valid JSON");
  }
  return j;
}

}  // namespace

extern "C" {

const char* casseg_version(void) { return "1.0.0"; }

const char* casseg_last_error(void) { return g_last_error.c_str(); }

void casseg_string_free(char* s) { delete[] s; }

/* ---- grids ------------------------------------------------------------ */

casseg_status casseg_grid_create(int height, int width, int channels, const double* values,
                                 casseg_grid** out) {
  if (!out) return fail_invalid("casseg_grid_create: out is NULL");
  return guarded(false, [&] {
    casseg::ImageGrid g(height, width, channels);
    if (values) std::memcpy(g.values.data(), values, g.values.size() * sizeof(double));
    casseg::require_finite(g);
    *out = new casseg_grid{std::move(g)};
  });
}

void casseg_grid_free(casseg_grid* grid) { delete grid; }

casseg_status casseg_grid_shape(const casseg_grid* grid, int* height, int* width, int* channels) {
  if (!grid) return fail_invalid("casseg_grid_shape: grid is NULL");
  if (height) *height = grid->v.height;
  if (width) *width = grid->v.width;
  if (channels) *channels = grid->v.channels;
  return CASSEG_OK;
}

const double* casseg_grid_data(const casseg_grid* grid) {
  return grid ? grid->v.values.data() : nullptr;
}

casseg_status casseg_grid_save(const casseg_grid* grid, const char* path) {
  if (!grid || !path) return fail_invalid("casseg_grid_save: NULL argument");
  return guarded(true, [&] { casseg::save_grid(path, grid->v); });
}

casseg_status casseg_grid_load(const char* path, casseg_grid** out) {
  if (!path || !out) return fail_invalid("casseg_grid_load: NULL argument");
  return guarded(true, [&] { *out = new casseg_grid{casseg::load_grid(path)}; });
}

/* ---- region maps ------------------------------------------------------ */

casseg_status casseg_region_map_create(int height, int width, const int32_t* ids,
                                       casseg_region_map** out) {
  if (!ids || !out) return fail_invalid("casseg_region_map_create: NULL argument");
  return guarded(false, [&] {
    if (height <= 0 || width <= 0) {
      throw std::invalid_argument("casseg_region_map_create: non-positive dimensions");
    }
    std::vector<int32_t> v(ids, ids + static_cast<int64_t>(height) * width);
    *out = new casseg_region_map{casseg::RegionMap(height, width, std::move(v))};
  });
}

casseg_status casseg_region_map_from_labels(int height, int width, const int32_t* labels,
                                            casseg_region_map** out) {
  if (!labels || !out) return fail_invalid("casseg_region_map_from_labels: NULL argument");
  return guarded(false, [&] {
    if (height <= 0 || width <= 0) {
      throw std::invalid_argument("casseg_region_map_from_labels: non-positive dimensions");
    }
    std::span<const int32_t> span(labels, static_cast<size_t>(height) * width);
    *out = new casseg_region_map{casseg::RegionMap::from_labels(height, width, span)};
  });
}

void casseg_region_map_free(casseg_region_map* map) { delete map; }

casseg_status casseg_region_map_shape(const casseg_region_map* map, int* height, int* width,
                                      int* region_count) {
  if (!map) return fail_invalid("casseg_region_map_shape: map is NULL");
  if (height) *height = map->v.height();
  if (width) *width = map->v.width();
  if (region_count) *region_count = map->v.region_count();
  return CASSEG_OK;
}

const int32_t* casseg_region_map_ids(const casseg_region_map* map) {
  return map ? map->v.ids().data() : nullptr;
}

casseg_status casseg_region_map_save(const casseg_region_map* map, const char* path) {
  if (!map || !path) return fail_invalid("casseg_region_map_save: NULL argument");
  return guarded(true, [&] { casseg::save_region_map(path, map->v); });
}

casseg_status casseg_region_map_load(const char* path, casseg_region_map** out) {
  if (!path || !out) return fail_invalid("casseg_region_map_load: NULL argument");
  return guarded(true, [&] { *out = new casseg_region_map{casseg::load_region_map(path)}; });
}

casseg_status casseg_region_map_permute(const casseg_region_map* map, const int32_t* perm,
                                        casseg_region_map** out) {
  if (!map || !perm || !out) return fail_invalid("casseg_region_map_permute: NULL argument");
  return guarded(false, [&] {
    std::span<const int32_t> span(perm, static_cast<size_t>(map->v.region_count()));
    *out = new casseg_region_map{casseg::permute_region_ids(map->v, span)};
  });
}

/* ---- region statistics ------------------------------------------------ */

casseg_status casseg_region_stats(const casseg_grid* field, const casseg_region_map* regions,
                                  double* means, int64_t* sizes) {
  if (!field || !regions) return fail_invalid("casseg_region_stats: NULL argument");
  return guarded(false, [&] {
    const casseg::RegionStats stats = casseg::compute_region_stats(field->v, regions->v);
    if (means) {
      std::memcpy(means, stats.means.data(), stats.means.size() * sizeof(double));
    }
    if (sizes) {
      std::memcpy(sizes, stats.sizes.data(), stats.sizes.size() * sizeof(int64_t));
    }
  });
}

/* ---- losses ------------------------------------------------------------ */

casseg_status casseg_cas_forward(const casseg_grid* field, const casseg_region_map* regions,
                                 double alpha, double* value) {
  if (!field || !regions || !value) return fail_invalid("casseg_cas_forward: NULL argument");
  return guarded(false,
                 [&] { *value = casseg::cas_forward(field->v, regions->v, {alpha}); });
}

casseg_status casseg_cas_backward(const casseg_grid* field, const casseg_region_map* regions,
                                  double alpha, casseg_grid** grad) {
  if (!field || !regions || !grad) return fail_invalid("casseg_cas_backward: NULL argument");
  return guarded(false, [&] {
    *grad = new casseg_grid{casseg::cas_backward(field->v, regions->v, {alpha})};
  });
}

casseg_status casseg_cas_bounds(int region_count, int channels, double alpha, double* lower,
                                double* upper) {
  return guarded(false, [&] {
    const casseg::LossBounds b = casseg::cas_bounds(region_count, {alpha}, channels);
    if (lower) *lower = b.lower;
    if (upper) *upper = b.upper;
  });
}

casseg_status casseg_ce_forward(const casseg_grid* field, const casseg_region_map* labels,
                                double* value) {
  if (!field || !labels || !value) return fail_invalid("casseg_ce_forward: NULL argument");
  return guarded(false, [&] { *value = casseg::ce_forward(field->v, labels->v); });
}

casseg_status casseg_ce_backward(const casseg_grid* field, const casseg_region_map* labels,
                                 casseg_grid** grad) {
  if (!field || !labels || !grad) return fail_invalid("casseg_ce_backward: NULL argument");
  return guarded(false,
                 [&] { *grad = new casseg_grid{casseg::ce_backward(field->v, labels->v)}; });
}

casseg_status casseg_cace_forward(const casseg_grid* field, const casseg_region_map* labels,
                                  double* value, int* flipped_won) {
  if (!field || !labels || !value) return fail_invalid("casseg_cace_forward: NULL argument");
  return guarded(false, [&] {
    const casseg::CaceResult r = casseg::cace_forward(field->v, labels->v);
    *value = r.value;
    if (flipped_won) *flipped_won = r.flipped_won ? 1 : 0;
  });
}

casseg_status casseg_cace_backward(const casseg_grid* field, const casseg_region_map* labels,
                                   casseg_grid** grad) {
  if (!field || !labels || !grad) return fail_invalid("casseg_cace_backward: NULL argument");
  return guarded(false,
                 [&] { *grad = new casseg_grid{casseg::cace_backward(field->v, labels->v)}; });
}

/* ---- metrics ----------------------------------------------------------- */

casseg_status casseg_binarize(const casseg_grid* saliency, casseg_grid** binary) {
  if (!saliency || !binary) return fail_invalid("casseg_binarize: NULL argument");
  return guarded(false, [&] {
    *binary = new casseg_grid{from_binary(casseg::binarize(saliency->v))};
  });
}

casseg_status casseg_f_beta(const casseg_grid* predicted, const casseg_grid* truth,
                            double beta_sq, double* value) {
  if (!predicted || !truth || !value) return fail_invalid("casseg_f_beta: NULL argument");
  return guarded(false, [&] {
    *value = casseg::f_beta(to_binary(predicted->v, "casseg_f_beta"),
                            to_binary(truth->v, "casseg_f_beta"), beta_sq);
  });
}

casseg_status casseg_mae(const casseg_grid* saliency, const casseg_grid* truth, double* value) {
  if (!saliency || !truth || !value) return fail_invalid("casseg_mae: NULL argument");
  return guarded(false,
                 [&] { *value = casseg::mae(saliency->v, to_binary(truth->v, "casseg_mae")); });
}

casseg_status casseg_precision_recall(const casseg_grid* predicted, const casseg_grid* truth,
                                      double* precision, double* recall) {
  if (!predicted || !truth) return fail_invalid("casseg_precision_recall: NULL argument");
  return guarded(false, [&] {
    const casseg::PrecisionRecall pr =
        casseg::precision_recall(to_binary(predicted->v, "casseg_precision_recall"),
                                 to_binary(truth->v, "casseg_precision_recall"));
    if (precision) *precision = pr.precision;
    if (recall) *recall = pr.recall;
  });
}

casseg_status casseg_rand_index(const casseg_region_map* a, const casseg_region_map* b,
                                double* value) {
  if (!a || !b || !value) return fail_invalid("casseg_rand_index: NULL argument");
  return guarded(false, [&] { *value = casseg::rand_index(a->v, b->v); });
}

casseg_status casseg_variation_of_information(const casseg_region_map* a,
                                              const casseg_region_map* b, double* value) {
  if (!a || !b || !value) return fail_invalid("casseg_variation_of_information: NULL argument");
  return guarded(false, [&] { *value = casseg::variation_of_information(a->v, b->v); });
}

casseg_status casseg_gt_covering(const casseg_region_map* predicted,
                                 const casseg_region_map* truth, double* value) {
  if (!predicted || !truth || !value) return fail_invalid("casseg_gt_covering: NULL argument");
  return guarded(false, [&] { *value = casseg::gt_covering(predicted->v, truth->v); });
}

casseg_status casseg_boundary_f(const casseg_region_map* predicted,
                                const casseg_region_map* truth, double tol, double* value) {
  if (!predicted || !truth || !value) return fail_invalid("casseg_boundary_f: NULL argument");
  return guarded(false, [&] { *value = casseg::boundary_f(predicted->v, truth->v, tol); });
}

/* ---- harness ----------------------------------------------------------- */

casseg_status casseg_default_config(char** json_out) {
  if (!json_out) return fail_invalid("casseg_default_config: json_out is NULL");
  return guarded(false, [&] {
    *json_out = copy_string(casseg::ExperimentConfig{}.to_json().dump(2));
  });
}

casseg_status casseg_preset_config(const char* name, char** json_out) {
  if (!name || !json_out) return fail_invalid("casseg_preset_config: NULL argument");
  return guarded(false, [&] { *json_out = copy_string(casseg::preset_config(name).dump(2)); });
}

casseg_status casseg_config_set(const char* config_json, const char* key, const char* value,
                                char** json_out) {
  if (!config_json || !key || !value || !json_out) {
    return fail_invalid("casseg_config_set: NULL argument");
  }
  return guarded(false, [&] {
    nlohmann::json j = parse_config(config_json, "casseg_config_set");
    casseg::set_dotted(j, key, value);
    *json_out = copy_string(j.dump(2));
  });
}

casseg_status casseg_run_experiment(const char* config_json, const char* out_dir,
                                    int* all_pass) {
  if (!config_json || !out_dir) return fail_invalid("casseg_run_experiment: NULL argument");
  return guarded(true, [&] {
    nlohmann::json j = parse_config(config_json, "casseg_run_experiment");
    j["out_dir"] = out_dir;
    const casseg::ExperimentConfig cfg = casseg::ExperimentConfig::from_json(j);
    const bool ok = casseg::run_experiment(cfg);
    if (all_pass) *all_pass = ok ? 1 : 0;
  });
}

casseg_status casseg_generate_dataset(const char* config_json, const char* out_dir) {
  if (!config_json || !out_dir) return fail_invalid("casseg_generate_dataset: NULL argument");
  return guarded(true, [&] {
    casseg::generate_dataset(parse_config(config_json, "casseg_generate_dataset"), out_dir);
  });
}

casseg_status casseg_evaluate(const char* checkpoint_dir, const char* dataset_dir,
                              const char* config_json, const char* out_dir) {
  if (!checkpoint_dir || !dataset_dir || !out_dir) {
    return fail_invalid("casseg_evaluate: NULL argument");
  }
  return guarded(true, [&] {
    casseg::evaluate_dataset(checkpoint_dir, dataset_dir,
                             parse_config(config_json, "casseg_evaluate"), out_dir);
  });
}

casseg_status casseg_grad_check(uint64_t seed, double* loss_level_err, double* net_err) {
  return guarded(false, [&] {
    const casseg::GradCheckResult r = casseg::run_grad_check(seed);
    if (loss_level_err) *loss_level_err = r.loss_level_err;
    if (net_err) *net_err = r.net_err;
  });
}

}  // extern "C"
