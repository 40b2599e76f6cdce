#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mupm/analysis.hpp"
#include "mupm/error.hpp"
#include "mupm/estimation.hpp"
#include "mupm/io.hpp"
#include "mupm/json_io.hpp"
#include "mupm/model.hpp"
#include "mupm/perturbation.hpp"

namespace mupm {

inline constexpr int kConfigSchemaVersion = 1;

// Everything one experiment needs. Relative paths are kept as written and
// resolved against `base_dir` (the directory of the config file).
struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t global_seed = 0;
  std::string dataset;
  ModelSpec model;
  PerturbationSpec perturbation;
  EstimationConfig estimation;
  std::size_t k_folds = 5;
  std::vector<std::size_t> n_list = kDefaultSweepSizes;
  std::string output_dir = "out";

  fs::path base_dir;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  }
  fs::path dataset_path() const { return resolve(dataset); }
  fs::path output_path() const { return resolve(output_dir); }

  // The model spec with a replay path resolved against base_dir.
  ModelSpec resolved_model() const {
    ModelSpec m = model;
    if (m.kind == ModelKind::kReplay) m.replay_path = resolve(m.replay_path).string();
    return m;
  }
};

inline json estimation_config_to_json(const EstimationConfig& c) {
  return json{{"n_resamples", c.n_resamples},
              {"benchmark_repeats", c.benchmark_repeats},
              {"encode_hard", c.encode_hard},
              {"reduction", std::string(to_string(c.reduction))},
              {"threads", c.threads}};
}

inline EstimationConfig estimation_config_from_json(const json& j) {
  EstimationConfig c;
  try {
    c.n_resamples = j.value("n_resamples", c.n_resamples);
    c.benchmark_repeats = j.value("benchmark_repeats", c.benchmark_repeats);
    c.encode_hard = j.value("encode_hard", c.encode_hard);
    c.reduction = parse_reduction(j.value("reduction", std::string("per-dimension")));
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("estimation config: ") + e.what());
  }
  return c;
}

inline json run_config_to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["global_seed"] = c.global_seed;
  j["dataset"] = c.dataset;
  j["model"] = model_spec_to_json(c.model);
  j["perturbation"] = perturbation_spec_to_json(c.perturbation);
  j["estimation"] = estimation_config_to_json(c.estimation);
  j["k_folds"] = c.k_folds;
  j["n_list"] = c.n_list;
  j["output_dir"] = c.output_dir;
  return j;
}

inline void validate(const RunConfig& c) {
  validate(c.model);
  validate(c.perturbation);
  validate(c.estimation);
  require(c.k_folds >= 1, ErrorCode::kConfig, "k_folds must be >= 1");
  require(!c.n_list.empty(), ErrorCode::kConfig, "n_list is empty");
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    require(c.n_list[i] >= 2, ErrorCode::kConfig, "n_list entries must be >= 2");
    require(i == 0 || c.n_list[i] > c.n_list[i - 1], ErrorCode::kConfig,
            "n_list must be strictly increasing");
  }
}

// Parses without touching the filesystem beyond the synonym table reference.
inline RunConfig run_config_from_json(const json& j, const fs::path& base_dir = {}) {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    c.schema_version = j.at("schema_version").get<int>();
    require(c.schema_version == kConfigSchemaVersion, ErrorCode::kConfig,
            "unsupported schema_version " + std::to_string(c.schema_version));
    c.global_seed = j.value("global_seed", std::uint64_t{0});
    c.dataset = j.at("dataset").get<std::string>();
    c.model = model_spec_from_json(j.at("model"));
    c.perturbation = perturbation_spec_from_json(j.at("perturbation"), base_dir);
    if (j.contains("estimation")) c.estimation = estimation_config_from_json(j.at("estimation"));
    c.k_folds = j.value("k_folds", c.k_folds);
    if (j.contains("n_list")) c.n_list = j.at("n_list").get<std::vector<std::size_t>>();
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

// Loads a config file and checks that the dataset it names exists.
inline RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParseFailure || e.code() == ErrorCode::kIoFailure) {
      throw Error(ErrorCode::kConfig, e.message());
    }
    throw;
  }
  RunConfig c = run_config_from_json(j, path.parent_path());
  require(fs::exists(c.dataset_path()), ErrorCode::kConfig,
          "dataset '" + c.dataset_path().string() + "' does not exist");
  return c;
}

}  // namespace mupm
