// Command-line front end. Talks to the library exclusively through the C
// API so it doubles as a smoke test of the shared-library surface.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "casseg/casseg.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // experiment/property failure, IO trouble
constexpr int kExitUsage = 2;    // bad flags or config

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  uint64_t seed = 0;
  int jobs = 0;
  std::vector<std::string> overrides;
  bool seed_given = false;
  bool jobs_given = false;
};

void add_common(CLI::App* sub, CommonArgs& args, bool with_preset) {
  sub->add_option("--config", args.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  if (with_preset) {
    sub->add_option("--preset", args.preset,
                    "built-in config: toy-imbalance, fidelity-sweep, alpha-sweep, properties, "
                    "texture-metrics");
  }
  sub->add_option("--seed", args.seed, "rng seed");
  sub->add_option("--out", args.out_dir, "output directory (default: $CASSEG_OUT_DIR or runs/)");
  sub->add_option("--jobs", args.jobs, "parallel experiment cells");
  sub->add_option("--set", args.overrides, "config override as dotted.path=value (repeatable)");
}

int report_status(casseg_status st) {
  std::fprintf(stderr, "error: %s\n", casseg_last_error());
  return st == CASSEG_ERR_INVALID_ARGUMENT ? kExitUsage : kExitFailure;
}

/// Owns a C string from the library and exposes it as std::string.
struct OwnedJson {
  std::string text;

  static bool take(char* raw, OwnedJson& out) {
    if (!raw) return false;
    out.text.assign(raw);
    casseg_string_free(raw);
    return true;
  }
};

bool read_file(const std::string& path, std::string& content) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream os;
  os << in.rdbuf();
  content = os.str();
  return true;
}

int apply_set(std::string& json, const std::string& key, const std::string& value) {
  char* raw = nullptr;
  const casseg_status st = casseg_config_set(json.c_str(), key.c_str(), value.c_str(), &raw);
  if (st != CASSEG_OK) return report_status(st);
  OwnedJson owned;
  OwnedJson::take(raw, owned);
  json = owned.text;
  return kExitOk;
}

int apply_overrides(std::string& json, const CommonArgs& args) {
  for (const std::string& kv : args.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "error: --set expects dotted.path=value, got '%s'\n", kv.c_str());
      return kExitUsage;
    }
    const int rc = apply_set(json, kv.substr(0, eq), kv.substr(eq + 1));
    if (rc != kExitOk) return rc;
  }
  if (args.seed_given) {
    const int rc = apply_set(json, "seed", std::to_string(args.seed));
    if (rc != kExitOk) return rc;
  }
  if (args.jobs_given) {
    const int rc = apply_set(json, "jobs", std::to_string(args.jobs));
    if (rc != kExitOk) return rc;
  }
  return kExitOk;
}

std::string default_out_dir(const std::string& name, const CommonArgs& args) {
  std::string root = "runs";
  if (const char* env = std::getenv("CASSEG_OUT_DIR"); env && *env) root = env;
  std::string dir = root + "/" + name;
  if (args.seed_given) dir += "-seed" + std::to_string(args.seed);
  return dir;
}

int run_experiment_config(const CommonArgs& args, const std::string& fallback_name,
                          const std::string& force_experiment) {
  std::string json;
  if (!args.preset.empty() && !args.config_path.empty()) {
    std::fprintf(stderr, "error: --preset and --config are mutually exclusive\n");
    return kExitUsage;
  }
  if (!args.preset.empty()) {
    char* raw = nullptr;
    const casseg_status st = casseg_preset_config(args.preset.c_str(), &raw);
    if (st != CASSEG_OK) return report_status(st);
    OwnedJson owned;
    OwnedJson::take(raw, owned);
    json = owned.text;
  } else if (!args.config_path.empty()) {
    if (!read_file(args.config_path, json)) {
      std::fprintf(stderr, "error: cannot read config file '%s'\n", args.config_path.c_str());
      return kExitUsage;
    }
  } else {
    char* raw = nullptr;
    const casseg_status st = casseg_default_config(&raw);
    if (st != CASSEG_OK) return report_status(st);
    OwnedJson owned;
    OwnedJson::take(raw, owned);
    json = owned.text;
  }

  if (!force_experiment.empty()) {
    const int rc = apply_set(json, "experiment", force_experiment);
    if (rc != kExitOk) return rc;
  }
  const int rc = apply_overrides(json, args);
  if (rc != kExitOk) return rc;

  const std::string name = !args.preset.empty() ? args.preset : fallback_name;
  const std::string out = args.out_dir.empty() ? default_out_dir(name, args) : args.out_dir;

  int all_pass = 1;
  const casseg_status st = casseg_run_experiment(json.c_str(), out.c_str(), &all_pass);
  if (st != CASSEG_OK) return report_status(st);
  std::fprintf(stderr, "results written to %s\n", out.c_str());
  if (!all_pass) {
    std::fprintf(stderr, "one or more property checks failed; see report.json\n");
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-agnostic segmentation losses, metrics, and experiments"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  std::string gen_kind = "shapes";
  int gen_count = -1;
  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset directory");
  add_common(gen, gen_args, false);
  gen->add_option("--kind", gen_kind, "dataset kind: shapes or toy");
  gen->add_option("--count", gen_count, "sample count (shapes)");

  CommonArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train one model per the config");
  add_common(train, train_args, false);

  CommonArgs eval_args;
  std::string eval_checkpoint, eval_data;
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint against a dataset");
  add_common(eval, eval_args, false);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();

  CommonArgs exp_args;
  CLI::App* experiment = app.add_subcommand("experiment", "run a preset or configured experiment");
  add_common(experiment, exp_args, true);

  CommonArgs grad_args;
  CLI::App* grad = app.add_subcommand("grad-check", "compare analytic and numeric gradients");
  grad->add_option("--seed", grad_args.seed, "rng seed");

  CommonArgs prop_args;
  CLI::App* props = app.add_subcommand("check-properties", "run the loss property checks");
  add_common(props, prop_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  gen_args.seed_given = gen->count("--seed") > 0;
  train_args.seed_given = train->count("--seed") > 0;
  train_args.jobs_given = train->count("--jobs") > 0;
  eval_args.seed_given = eval->count("--seed") > 0;
  exp_args.seed_given = experiment->count("--seed") > 0;
  exp_args.jobs_given = experiment->count("--jobs") > 0;
  prop_args.seed_given = props->count("--seed") > 0;
  prop_args.jobs_given = props->count("--jobs") > 0;

  if (gen->parsed()) {
    std::string json = "{}";
    if (!gen_args.config_path.empty() && !read_file(gen_args.config_path, json)) {
      std::fprintf(stderr, "error: cannot read config file '%s'\n", gen_args.config_path.c_str());
      return kExitUsage;
    }
    int rc = apply_set(json, "kind", gen_kind);
    if (rc != kExitOk) return rc;
    if (gen->count("--count") > 0) {
      rc = apply_set(json, "count", std::to_string(gen_count));
      if (rc != kExitOk) return rc;
    }
    rc = apply_overrides(json, gen_args);
    if (rc != kExitOk) return rc;
    const std::string out = gen_args.out_dir.empty()
                                ? default_out_dir("dataset-" + gen_kind, gen_args)
                                : gen_args.out_dir;
    const casseg_status st = casseg_generate_dataset(json.c_str(), out.c_str());
    if (st != CASSEG_OK) return report_status(st);
    std::fprintf(stderr, "dataset written to %s\n", out.c_str());
    return kExitOk;
  }

  if (train->parsed()) {
    return run_experiment_config(train_args, "train", "train");
  }

  if (eval->parsed()) {
    std::string json = "{}";
    if (!eval_args.config_path.empty() && !read_file(eval_args.config_path, json)) {
      std::fprintf(stderr, "error: cannot read config file '%s'\n", eval_args.config_path.c_str());
      return kExitUsage;
    }
    const int rc = apply_overrides(json, eval_args);
    if (rc != kExitOk) return rc;
    const std::string out =
        eval_args.out_dir.empty() ? default_out_dir("eval", eval_args) : eval_args.out_dir;
    const casseg_status st =
        casseg_evaluate(eval_checkpoint.c_str(), eval_data.c_str(), json.c_str(), out.c_str());
    if (st != CASSEG_OK) return report_status(st);
    std::fprintf(stderr, "evaluation written to %s\n", out.c_str());
    return kExitOk;
  }

  if (experiment->parsed()) {
    return run_experiment_config(exp_args, "experiment", "");
  }

  if (grad->parsed()) {
    double loss_err = 0.0, net_err = 0.0;
    const casseg_status st = casseg_grad_check(grad_args.seed, &loss_err, &net_err);
    if (st != CASSEG_OK) return report_status(st);
    std::printf("max relative error, loss level: %.3e (tolerance 1e-6)\n", loss_err);
    std::printf("max relative error, through network: %.3e (tolerance 1e-5)\n", net_err);
    const bool ok = loss_err < 1e-6 && net_err < 1e-5;
    std::printf("%s\n", ok ? "PASS" : "FAIL");
    return ok ? kExitOk : kExitFailure;
  }

  if (props->parsed()) {
    return run_experiment_config(prop_args, "properties", "properties");
  }

  std::fprintf(stderr, "error: no subcommand\n");
  return kExitUsage;
}
