// mupm: command-line front end for uncertainty estimation, MUPM fitting and
// the downstream analyses.
//
// Exit codes: 0 ok, 1 config/usage, 2 IO or missing artifact, 3 model,
// 4 numerical.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mupm/adapters.hpp"
#include "mupm/analysis.hpp"
#include "mupm/calibration.hpp"
#include "mupm/config.hpp"
#include "mupm/estimation.hpp"
#include "mupm/manifest.hpp"
#include "mupm/regression.hpp"
#include "mupm/replay.hpp"
#include "mupm/report.hpp"
#include "mupm/stats.hpp"
#include "mupm/synthetic_data.hpp"

namespace {

using namespace mupm;

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("MUPM_LOG");
    const std::string v = env ? env : "info";
    if (v == "error") return Level::kError;
    if (v == "warn") return Level::kWarn;
    if (v == "debug") return Level::kDebug;
    return Level::kInfo;
  }();
  return level;
}

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidSpec:
    case ErrorCode::kInvalidArgument:
      return 1;
    case ErrorCode::kIoFailure:
    case ErrorCode::kMissingArtifact:
    case ErrorCode::kParseFailure:
    case ErrorCode::kDuplicateKey:
      return 2;
    case ErrorCode::kHttpFailure:
    case ErrorCode::kReplayMiss:
    case ErrorCode::kNonFiniteOutput:
    case ErrorCode::kUnsupportedKind:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kInconsistentK:
    case ErrorCode::kEmptyAfterSubset:
      return 3;
    default:
      return 4;
  }
}

// Options shared by most commands; unset values fall back to the config.
struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string reduction;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "Run configuration (JSON)");
  if (needs_config) opt->required();
  cmd->add_option("--out", c.out, "Output directory (default: config output_dir)");
  cmd->add_option("--seed", c.seed, "Global seed override");
  cmd->add_option("--threads", c.threads, "Worker thread cap");
  cmd->add_option("--reduction", c.reduction, "per-dimension or l2-norm")
      ->check(CLI::IsMember({"per-dimension", "l2-norm"}));
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = load_run_config(c.config);
  if (c.seed) cfg.global_seed = *c.seed;
  if (c.threads) cfg.estimation.threads = *c.threads;
  if (!c.reduction.empty()) cfg.estimation.reduction = parse_reduction(c.reduction);
  return cfg;
}

fs::path out_dir(const Common& c, const RunConfig* cfg) {
  if (!c.out.empty()) return c.out;
  if (cfg) return cfg->output_path();
  return ".";
}

fs::path need(const fs::path& p) {
  if (!fs::exists(p)) fail(ErrorCode::kMissingArtifact, "missing artifact '" + p.string() + "'");
  return p;
}

Reduction reduction_of(const Common& c, const RunConfig* cfg) {
  if (!c.reduction.empty()) return parse_reduction(c.reduction);
  return cfg ? cfg->estimation.reduction : Reduction::kPerDimension;
}

std::vector<std::string> ids_of(const Dataset& data) {
  std::vector<std::string> ids;
  for (const auto& p : data) ids.push_back(p.id);
  return ids;
}

// Benchmark vectors aligned with `ids`, from a benchmark CSV.
std::vector<std::vector<double>> align_benchmark(const BenchmarkTable& t,
                                                 const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < t.ids.size(); ++i) index[t.ids[i]] = i;
  std::vector<std::vector<double>> out;
  for (const auto& id : ids) {
    auto it = index.find(id);
    require(it != index.end(), ErrorCode::kLengthMismatch,
            "benchmark has no entry for sample '" + id + "'");
    out.push_back(t.values[it->second]);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenerateOpts {
  std::string out = "demo";
  std::string kind = "synthetic-linear";
  std::size_t samples = 60;
  std::size_t classes = 3;
  std::size_t image_dim = 2;
  std::size_t text_dim = 2;
  std::uint64_t seed = 1;
  double q = 0.0;
  double g = 1.0;
  double joint_correlation = 0.5;
  double label_noise = 0.0;
};

int cmd_generate(const GenerateOpts& o) {
  ScenarioOptions so;
  so.kind = parse_model_kind(o.kind);
  require(is_synthetic(so.kind), ErrorCode::kConfig, "generate supports synthetic kinds only");
  so.num_classes = o.classes;
  so.image_dim = o.image_dim;
  so.text_dim = o.text_dim;
  so.num_samples = o.samples;
  so.seed = o.seed;
  so.q = o.q;
  so.g = o.g;
  so.joint_correlation = o.joint_correlation;
  so.label_noise = o.label_noise;
  const Scenario s = make_scenario(so);

  const fs::path dir = o.out;
  write_dataset(dir / "dataset.jsonl", s.data);
  RunConfig cfg;
  cfg.global_seed = o.seed;
  cfg.dataset = "dataset.jsonl";
  cfg.model = s.model;
  cfg.perturbation = s.perturbation;
  cfg.output_dir = "results";
  write_json_file(dir / "config.json", run_config_to_json(cfg));
  log(Level::kInfo, "wrote " + std::to_string(s.data.size()) + " samples and config to " +
                        dir.string());
  return 0;
}

// ---------------------------------------------------------------------------

struct EstimateOpts {
  Common common;
  bool export_manifest = false;
  std::vector<std::string> replay;
};

int cmd_estimate(const EstimateOpts& o) {
  const RunConfig cfg = load_config(o.common);
  const fs::path dir = out_dir(o.common, &cfg);
  const Dataset data = read_dataset(cfg.dataset_path());

  if (o.export_manifest) {
    const auto n = export_manifest(
        build_manifest(data, cfg.perturbation, cfg.estimation, cfg.global_seed),
        dir / "manifest.jsonl");
    const auto nb = export_manifest(
        build_benchmark_manifest(data, cfg.perturbation, cfg.estimation, cfg.global_seed),
        dir / "benchmark_manifest.jsonl");
    log(Level::kInfo, "exported " + std::to_string(n) + " manifest entries and " +
                          std::to_string(nb) + " benchmark entries to " + dir.string());
    return 0;
  }

  std::unique_ptr<Model> model;
  bool have_benchmark = true;
  if (!o.replay.empty()) {
    std::vector<ReplayTable> tables;
    for (const auto& p : o.replay) tables.push_back(import_outputs(need(p)));
    auto table = merge_tables(std::move(tables));
    const EvalKey probe{data.front().id, Branch::kJoint, cfg.estimation.n_resamples};
    have_benchmark = table.outputs.count(probe) > 0;
    if (!have_benchmark) log(Level::kWarn, "replay outputs hold no benchmark repeats; skipping benchmark.csv");
    model = std::make_unique<ReplayModel>(std::move(table));
  } else {
    model = make_model(cfg.resolved_model());
  }

  const auto records =
      estimate_dataset(*model, data, cfg.perturbation, cfg.estimation, cfg.global_seed);
  atomic_write(dir / "uncertainties.csv", records_to_csv(records));
  log(Level::kInfo, "wrote " + std::to_string(records.size()) + " records to " +
                        (dir / "uncertainties.csv").string());
  if (have_benchmark) {
    const auto bench =
        benchmark_overall(*model, data, cfg.perturbation, cfg.estimation, cfg.global_seed);
    atomic_write(dir / "benchmark.csv", benchmark_to_csv(ids_of(data), bench));
    log(Level::kInfo, "wrote benchmark (" + std::to_string(cfg.estimation.benchmark_repeats) +
                          " repeats) to " + (dir / "benchmark.csv").string());
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct FitOpts {
  Common common;
  std::string uncertainties;
  std::string benchmark;
  std::optional<std::size_t> k_folds;
  bool drop_zero_columns = false;
};

int cmd_fit(const FitOpts& o) {
  std::optional<RunConfig> cfg;
  if (!o.common.config.empty()) cfg = load_config(o.common);
  const fs::path dir = out_dir(o.common, cfg ? &*cfg : nullptr);
  const fs::path unc = o.uncertainties.empty() ? dir / "uncertainties.csv" : fs::path(o.uncertainties);
  const fs::path bpath = o.benchmark.empty() ? dir / "benchmark.csv" : fs::path(o.benchmark);
  const auto records = records_from_csv(need(unc));
  const auto table = benchmark_from_csv(need(bpath));
  const Reduction red = reduction_of(o.common, cfg ? &*cfg : nullptr);
  const std::size_t k = o.k_folds.value_or(cfg ? cfg->k_folds : 5);
  const std::uint64_t seed = o.common.seed.value_or(cfg ? cfg->global_seed : 0);

  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.sample_id);
  const auto bench = align_benchmark(table, ids);

  const FoldFits ff = fit_folds(records, k, seed, red, {o.drop_zero_columns});
  const auto paired = pair_with_benchmark(ff.averaged, records, bench);
  const double r2 = r_squared(paired.predicted, paired.benchmark);

  json j;
  j["reduction"] = std::string(to_string(red));
  j["k_folds"] = k;
  json folds = json::array();
  for (std::size_t f = 0; f < ff.fits.size(); ++f) {
    json fj = fit_to_json(ff.fits[f]);
    std::vector<std::string> fold_ids;
    for (std::size_t i : ff.folds[f]) fold_ids.push_back(records[i].sample_id);
    fj["samples"] = fold_ids;
    folds.push_back(fj);
  }
  j["folds"] = folds;
  j["averaged"] = fit_to_json(ff.averaged);
  j["averaged"]["fold_std"] = ff.fold_std;
  j["r_squared_benchmark"] = r2;

  // ECE column is filled in by calibrate.
  j["table_row"] = table_row(ff.averaged, r2);
  write_json_file(dir / "fit.json", j);

  std::string pred = "sample_id,dim,predicted,benchmark\n";
  std::size_t pos = 0;
  for (const auto& r : records) {
    const auto p = predict_overall(ff.averaged, r);
    for (std::size_t d = 0; d < p.values.size(); ++d, ++pos) {
      pred += r.sample_id + "," + std::to_string(d) + "," + format_double(p.values[d]) + "," +
              format_double(paired.benchmark[pos]) + "\n";
    }
  }
  atomic_write(dir / "predictions.csv", pred);
  std::cout << "b1 (|s2_I|) | b2 (|s2_T|) | b3 (|s_I s_T|) | R2 | ECE\n" << j["table_row"].get<std::string>() << "\n";
  return 0;
}

MupmFit load_averaged_fit(const fs::path& path) {
  const json j = read_json_file(need(path));
  require(j.contains("averaged"), ErrorCode::kParseFailure, path.string() + ": no averaged fit");
  return fit_from_json(j.at("averaged"));
}

// ---------------------------------------------------------------------------

struct CalibrateOpts {
  Common common;
  std::string fit;
  std::size_t bins = 10;
};

int cmd_calibrate(const CalibrateOpts& o) {
  const RunConfig cfg = load_config(o.common);
  const fs::path dir = out_dir(o.common, &cfg);
  const fs::path fit_path = o.fit.empty() ? dir / "fit.json" : fs::path(o.fit);
  const MupmFit fit = load_averaged_fit(fit_path);
  const auto records = records_from_csv(need(dir / "uncertainties.csv"));
  const Dataset data = read_dataset(cfg.dataset_path());
  const auto model = make_model(cfg.resolved_model());

  std::map<std::string, const UncertaintyRecord*> by_id;
  for (const auto& r : records) by_id[r.sample_id] = &r;
  std::vector<CalibrationSample> samples(data.size());
  parallel_for(data.size(), cfg.estimation.threads, [&](std::size_t i) {
    const auto& pair = data[i];
    auto it = by_id.find(pair.id);
    require(it != by_id.end(), ErrorCode::kLengthMismatch,
            "no uncertainty record for sample '" + pair.id + "'");
    const auto y = model->evaluate(pair, {pair.id, Branch::kJoint, 0});
    samples[i] = {pair.id, static_cast<int>(argmax(y.values)) == pair.label,
                  l2_norm(predict_overall(fit, *it->second).values)};
  });
  const auto rep = ece(samples, o.bins);
  write_json_file(dir / "calibration.json", calibration_to_json(rep));
  atomic_write(dir / "calibration_bins.csv", calibration_bins_csv(rep));

  json fj = read_json_file(fit_path);
  if (fj.contains("averaged") && fj.contains("r_squared_benchmark")) {
    fj["table_row"] = table_row(fit_from_json(fj.at("averaged")),
                                fj.at("r_squared_benchmark").get<double>(), rep.ece);
    fj["ece"] = rep.ece;
    write_json_file(fit_path, fj);
  }
  std::cout << "ECE " << format_double(rep.ece) << " over " << rep.n_samples << " samples\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct AnovaOpts {
  Common common;
  std::vector<std::string> fits;
  double alpha = 0.05;
};

int cmd_anova(const AnovaOpts& o) {
  std::vector<std::vector<MupmFit>> conditions;
  for (const auto& p : o.fits) {
    const json j = read_json_file(need(p));
    require(j.contains("folds"), ErrorCode::kParseFailure, p + ": no fold fits");
    std::vector<MupmFit> fits;
    for (const auto& f : j.at("folds")) fits.push_back(fit_from_json(f));
    conditions.push_back(std::move(fits));
  }
  const auto res = coefficient_anova(conditions);
  json j;
  j["conditions"] = o.fits;
  j["alpha"] = o.alpha;
  const char* names[] = {"beta1", "beta2", "beta3"};
  for (std::size_t c = 0; c < 3; ++c) {
    json a = anova_to_json(res[c]);
    a["significant"] = res[c].p_value < o.alpha;
    j[names[c]] = a;
    std::cout << names[c] << ": F=" << format_double(res[c].f_statistic)
              << " p=" << format_double(res[c].p_value) << "\n";
  }
  write_json_file(out_dir(o.common, nullptr) / "anova.json", j);
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepOpts {
  Common common;
  std::string fit;
  std::string n_list;
  std::optional<std::size_t> samples;
};

std::vector<std::size_t> parse_n_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& f : split(s, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(f, &used);
      require(used == f.size() && v >= 2, ErrorCode::kConfig, "bad n-list entry '" + f + "'");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      fail(ErrorCode::kConfig, "bad n-list entry '" + f + "'");
    }
  }
  return out;
}

int cmd_sweep(const SweepOpts& o) {
  const RunConfig cfg = load_config(o.common);
  const fs::path dir = out_dir(o.common, &cfg);
  const MupmFit fit = load_averaged_fit(o.fit.empty() ? dir / "fit.json" : fs::path(o.fit));
  Dataset data = read_dataset(cfg.dataset_path());
  if (o.samples && *o.samples < data.size()) data.resize(*o.samples);
  const auto n_list = o.n_list.empty() ? cfg.n_list : parse_n_list(o.n_list);
  const auto model = make_model(cfg.resolved_model());

  std::optional<std::vector<std::vector<double>>> bench;
  if (fs::exists(dir / "benchmark.csv")) {
    bench = align_benchmark(benchmark_from_csv(dir / "benchmark.csv"), ids_of(data));
  }
  const auto res = sweep_resample_size(*model, data, cfg.perturbation, cfg.estimation, fit,
                                       n_list, cfg.global_seed, bench);
  atomic_write(dir / "sweep.csv", sweep_to_csv(res));
  std::string b = "sample_id,benchmark_norm\n";
  for (std::size_t i = 0; i < data.size(); ++i)
    b += data[i].id + "," + format_double(res.benchmark_norms[i]) + "\n";
  atomic_write(dir / "sweep_benchmark.csv", b);
  log(Level::kInfo, "sweep over " + std::to_string(n_list.size()) + " sizes written to " +
                        (dir / "sweep.csv").string());
  return 0;
}

// ---------------------------------------------------------------------------

struct RedundancyOpts {
  Common common;
  std::string fit;
  double tau_beta = 0.05;
  double tau_cov = 0.05;
};

int cmd_redundancy(const RedundancyOpts& o) {
  std::optional<RunConfig> cfg;
  if (!o.common.config.empty()) cfg = load_config(o.common);
  const fs::path dir = out_dir(o.common, cfg ? &*cfg : nullptr);
  const MupmFit fit = load_averaged_fit(o.fit.empty() ? dir / "fit.json" : fs::path(o.fit));
  const auto records = records_from_csv(need(dir / "uncertainties.csv"));
  const auto rep = detect_redundancy(fit, records, o.tau_beta, o.tau_cov);
  write_json_file(dir / "redundancy.json", redundancy_to_json(rep));
  std::cout << "image: " << to_string(rep.image.verdict) << "\ntext: " << to_string(rep.text.verdict)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct AblateOpts {
  Common common;
  double neutral_image = 0.0;
  std::int64_t neutral_token = 0;
};

int cmd_ablate(const AblateOpts& o) {
  const RunConfig cfg = load_config(o.common);
  const fs::path dir = out_dir(o.common, &cfg);
  const Dataset data = read_dataset(cfg.dataset_path());
  const auto model = make_model(cfg.resolved_model());
  const auto folds = kfold_split(data.size(), cfg.k_folds, cfg.global_seed);
  const auto res = ablation_study(*model, data, folds, {o.neutral_image, o.neutral_token},
                                  cfg.estimation.threads);
  atomic_write(dir / "ablation.csv", ablation_to_csv(res));
  write_json_file(dir / "ablation.json", ablation_to_json(res));
  std::cout << "image-only " << fixed2(res.image_only.mean) << ", text-only "
            << fixed2(res.text_only.mean) << ", both " << fixed2(res.both.mean) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct DerivativeOpts {
  Common common;
  double h = 1e-4;
  std::optional<std::size_t> samples;
};

int cmd_derivatives(const DerivativeOpts& o) {
  const RunConfig cfg = load_config(o.common);
  const fs::path dir = out_dir(o.common, &cfg);
  Dataset data = read_dataset(cfg.dataset_path());
  if (o.samples && *o.samples < data.size()) data.resize(*o.samples);
  const auto model = make_model(cfg.resolved_model());
  const auto res = probe_derivatives(*model, data, o.h, &cfg.perturbation, cfg.global_seed);
  write_json_file(dir / "derivatives.json", probe_to_json(res));
  std::string csv = "sample_id,image,text,image_joint,text_joint\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    csv += data[i].id + "," + format_double(res.image_per_sample[i]) + "," +
           format_double(res.text_per_sample[i]) + "," +
           format_double(res.image_joint_per_sample[i]) + "," +
           format_double(res.text_joint_per_sample[i]) + "\n";
  }
  atomic_write(dir / "derivatives.csv", csv);
  auto ratio = [](const MeanStd& m) { return m.mean != 0.0 ? m.std / m.mean : 0.0; };
  std::cout << "image |d| mean " << format_double(res.image.mean) << " std/mean "
            << format_double(ratio(res.image)) << "\ntext |d| mean "
            << format_double(res.text.mean) << " std/mean " << format_double(ratio(res.text))
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_report(const Common& c) {
  const fs::path dir = out_dir(c, nullptr);
  const auto sweep = read_sweep_csv(need(dir / "sweep.csv"));
  double bench_mean = sweep.front().benchmark_mean;
  if (fs::exists(dir / "sweep_benchmark.csv")) {
    bench_mean = mean(read_benchmark_norms_csv(dir / "sweep_benchmark.csv"));
  }
  atomic_write(dir / "report.svg", render_sweep_svg(sweep, bench_mean));

  json summary;
  summary["benchmark_mean"] = bench_mean;
  json pts = json::array();
  for (const auto& r : sweep)
    pts.push_back({{"n", r.n}, {"mean_norm", r.mean_norm}, {"std_norm", r.std_norm},
                   {"mean_abs_deviation", r.mean_abs_deviation}});
  summary["sweep"] = pts;

  if (fs::exists(dir / "ablation.csv")) {
    const auto rows = read_ablation_csv(dir / "ablation.csv");
    atomic_write(dir / "ablation.svg", render_ablation_svg(rows));
    summary["ablation"] = svg_metadata(render_ablation_svg(rows), "ablation-data");
  } else {
    log(Level::kWarn, "no ablation.csv in " + dir.string() + "; skipping the box summary");
  }
  for (const char* name : {"fit.json", "calibration.json", "redundancy.json", "anova.json"}) {
    if (!fs::exists(dir / name)) continue;
    const json j = read_json_file(dir / name);
    const std::string key = fs::path(name).stem().string();
    if (key == "fit") {
      summary["fit"] = {{"beta", j.at("averaged").at("beta")},
                        {"r_squared_benchmark", j.value("r_squared_benchmark", 0.0)},
                        {"table_row", j.value("table_row", std::string())}};
    } else if (key == "calibration") {
      summary["ece"] = j.at("ece");
    } else {
      summary[key] = j;
    }
  }
  write_json_file(dir / "summary.json", summary);
  log(Level::kInfo, "report written to " + (dir / "report.svg").string());
  return 0;
}

// ---------------------------------------------------------------------------

struct ManifestOpts {
  Common common;
  std::string manifest;
  std::string output;
  std::vector<std::string> replay;
};

int cmd_manifest_export(const ManifestOpts& o) {
  EstimateOpts e;
  e.common = o.common;
  e.export_manifest = true;
  return cmd_estimate(e);
}

int cmd_manifest_import(const ManifestOpts& o) {
  std::vector<ReplayTable> tables;
  for (const auto& p : o.replay) tables.push_back(import_outputs(need(p)));
  const auto table = merge_tables(std::move(tables));
  std::map<std::string, std::size_t> per_branch;
  for (const auto& [key, v] : table.outputs) ++per_branch[std::string(to_string(key.branch))];
  json j{{"records", table.outputs.size()}, {"output_dim", table.output_dim}};
  for (const auto& [b, n] : per_branch) j["per_branch"][b] = n;
  std::cout << j.dump(2) << "\n";
  return 0;
}

// Evaluates a manifest with the configured model: the in-process stand-in for
// an external run.
int cmd_manifest_run(const ManifestOpts& o) {
  const RunConfig cfg = load_config(o.common);
  const auto entries = read_manifest(need(o.manifest));
  const auto model = make_model(cfg.resolved_model());
  const auto n = write_outputs(run_manifest(*model, entries, cfg.estimation.threads), o.output);
  log(Level::kInfo, "wrote " + std::to_string(n) + " outputs to " + o.output);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mupm: multimodal uncertainty propagation"};
  app.require_subcommand(1);

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic dataset and a matching config");
  g->add_option("--out", gen.out, "Directory to create");
  g->add_option("--kind", gen.kind, "synthetic-linear, synthetic-softmax or synthetic-saturating");
  g->add_option("--samples", gen.samples);
  g->add_option("--classes", gen.classes);
  g->add_option("--image-dim", gen.image_dim);
  g->add_option("--text-dim", gen.text_dim);
  g->add_option("--seed", gen.seed);
  g->add_option("--q", gen.q, "Softmax interaction coefficient");
  g->add_option("--g", gen.g, "Saturating gain");
  g->add_option("--joint-correlation", gen.joint_correlation);
  g->add_option("--label-noise", gen.label_noise);

  EstimateOpts est;
  auto* e = app.add_subcommand("estimate", "Per-sample branch variances and benchmark");
  add_common(e, est.common, true);
  e->add_flag("--export-manifest", est.export_manifest, "Write the evaluation manifest instead");
  e->add_option("--replay", est.replay, "Outputs JSONL from an external run (repeatable)");

  FitOpts fit;
  auto* f = app.add_subcommand("fit", "Fold-wise MUPM fits and R^2 against the benchmark");
  add_common(f, fit.common, false);
  f->add_option("--uncertainties", fit.uncertainties);
  f->add_option("--benchmark", fit.benchmark);
  f->add_option("--k-folds", fit.k_folds);
  f->add_flag("--drop-zero-columns", fit.drop_zero_columns,
              "Fit around regressors that are identically zero");

  CalibrateOpts cal;
  auto* c = app.add_subcommand("calibrate", "Expected calibration error of the fitted model");
  add_common(c, cal.common, true);
  c->add_option("--fit", cal.fit);
  c->add_option("--bins", cal.bins);

  AnovaOpts an;
  auto* a = app.add_subcommand("anova", "One-way ANOVA of coefficients across conditions");
  add_common(a, an.common, false);
  a->add_option("--fits", an.fits, "fit.json per condition")->required()->expected(2, -1);
  a->add_option("--alpha", an.alpha);

  SweepOpts sw;
  auto* s = app.add_subcommand("sweep", "Predicted overall uncertainty across resample sizes");
  add_common(s, sw.common, true);
  s->add_option("--fit", sw.fit);
  s->add_option("--n-list", sw.n_list, "Comma-separated resample sizes");
  s->add_option("--samples", sw.samples, "Use only the first N samples");

  RedundancyOpts red;
  auto* r = app.add_subcommand("redundancy", "Redundant-modality verdicts");
  add_common(r, red.common, false);
  r->add_option("--fit", red.fit);
  r->add_option("--tau-beta", red.tau_beta);
  r->add_option("--tau-cov", red.tau_cov);

  AblateOpts abl;
  auto* ab = app.add_subcommand("ablate", "Accuracy with one modality replaced");
  add_common(ab, abl.common, true);
  ab->add_option("--neutral-image", abl.neutral_image);
  ab->add_option("--neutral-token", abl.neutral_token);

  DerivativeOpts der;
  auto* d = app.add_subcommand("derivatives", "Finite-difference derivative probe");
  add_common(d, der.common, true);
  d->add_option("--step", der.h, "Finite-difference step");
  d->add_option("--samples", der.samples);

  Common rep;
  auto* rp = app.add_subcommand("report", "SVG charts and summary.json from an output directory");
  add_common(rp, rep, false);

  ManifestOpts man;
  auto* m = app.add_subcommand("manifest", "Manifest export, import and in-process execution");
  m->require_subcommand(1);
  auto* mx = m->add_subcommand("export", "Write manifest.jsonl and benchmark_manifest.jsonl");
  add_common(mx, man.common, true);
  auto* mi = m->add_subcommand("import", "Validate and summarize output files");
  mi->add_option("--replay", man.replay)->required();
  auto* mr = m->add_subcommand("run", "Evaluate a manifest with the configured model");
  add_common(mr, man.common, true);
  mr->add_option("--manifest", man.manifest)->required();
  mr->add_option("--output", man.output)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*e) return cmd_estimate(est);
    if (*f) return cmd_fit(fit);
    if (*c) return cmd_calibrate(cal);
    if (*a) return cmd_anova(an);
    if (*s) return cmd_sweep(sw);
    if (*r) return cmd_redundancy(red);
    if (*ab) return cmd_ablate(abl);
    if (*d) return cmd_derivatives(der);
    if (*rp) return cmd_report(rep);
    if (*mx) return cmd_manifest_export(man);
    if (*mi) return cmd_manifest_import(man);
    if (*mr) return cmd_manifest_run(man);
  } catch (const Error& err) {
    log(Level::kError, err.what());
    return exit_code(err.code());
  } catch (const std::exception& err) {
    log(Level::kError, err.what());
    return 2;
  }
  return 0;
}
