#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mupm/calibration.hpp"
#include "mupm/error.hpp"
#include "mupm/estimation.hpp"
#include "mupm/io.hpp"
#include "mupm/linalg.hpp"
#include "mupm/model.hpp"
#include "mupm/regression.hpp"

namespace mupm {

inline const std::vector<std::size_t> kDefaultSweepSizes = {2, 5, 8, 11, 14, 17, 20, 23};

// ---------------------------------------------------------------------------
// Resample-size sweep

struct SweepPoint {
  std::size_t n = 0;
  double mean_norm = 0.0;  // mean over samples of ||predicted overall||_2
  double std_norm = 0.0;
  // mean_i | ||pred_i|| - ||bench_i|| |
  double mean_abs_deviation = 0.0;
  // mean_i ||pred_i|| - mean_i ||bench_i||: the gap between the sweep curve
  // and the benchmark line.
  double mean_gap = 0.0;
  std::vector<double> norms;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<double> benchmark_norms;
  double benchmark_mean = 0.0;
  double benchmark_std = 0.0;
};

inline std::vector<double> benchmark_norms(const std::vector<std::vector<double>>& bench) {
  std::vector<double> out;
  out.reserve(bench.size());
  for (const auto& b : bench) out.push_back(l2_norm(b));
  return out;
}

// Re-estimates the single-modality branches with each resample size and
// predicts the overall uncertainty with one fixed fit. `benchmark` is the
// per-sample benchmark_overall for `subset`; it is computed when absent.
inline SweepResult sweep_resample_size(
    const Model& model, const Dataset& subset, const PerturbationSpec& pspec,
    const EstimationConfig& cfg, const MupmFit& fit, const std::vector<std::size_t>& n_list,
    std::uint64_t seed,
    std::optional<std::vector<std::vector<double>>> benchmark = std::nullopt) {
  require(!subset.empty(), ErrorCode::kEmptyInput, "sweep subset is empty");
  require(!n_list.empty(), ErrorCode::kInvalidArgument, "sweep list is empty");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    require(n_list[i] >= 2, ErrorCode::kInvalidArgument, "sweep sizes must be >= 2");
    require(i == 0 || n_list[i] > n_list[i - 1], ErrorCode::kInvalidArgument,
            "sweep sizes must be strictly increasing");
  }
  if (!benchmark) benchmark = benchmark_overall(model, subset, pspec, cfg, seed);
  require(benchmark->size() == subset.size(), ErrorCode::kLengthMismatch,
          "benchmark does not match the sweep subset");

  SweepResult res;
  res.benchmark_norms = benchmark_norms(*benchmark);
  const auto bstats = mean_std(res.benchmark_norms);
  res.benchmark_mean = bstats.mean;
  res.benchmark_std = bstats.std;

  for (std::size_t n : n_list) {
    EstimationConfig c = cfg;
    c.n_resamples = n;
    const auto records = estimate_dataset(model, subset, pspec, c, seed, false);
    SweepPoint pt;
    pt.n = n;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto p = predict_overall(fit, records[i]);
      const double norm = l2_norm(p.values);
      pt.norms.push_back(norm);
      pt.mean_abs_deviation += std::abs(norm - res.benchmark_norms[i]);
    }
    pt.mean_abs_deviation /= static_cast<double>(records.size());
    const auto s = mean_std(pt.norms);
    pt.mean_norm = s.mean;
    pt.std_norm = s.std;
    pt.mean_gap = pt.mean_norm - res.benchmark_mean;
    res.points.push_back(std::move(pt));
  }
  return res;
}

inline std::string sweep_to_csv(const SweepResult& r) {
  std::string out = "n,mean_norm,std_norm,mean_abs_deviation,mean_gap,benchmark_mean\n";
  for (const auto& p : r.points) {
    out += std::to_string(p.n) + "," + format_double(p.mean_norm) + "," +
           format_double(p.std_norm) + "," + format_double(p.mean_abs_deviation) + "," +
           format_double(p.mean_gap) + "," + format_double(r.benchmark_mean) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Redundancy

enum class Verdict { kRedundant, kNotRedundant, kInconclusive };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kRedundant: return "redundant";
    case Verdict::kNotRedundant: return "not-redundant";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct ModalityRedundancy {
  double coefficient = 0.0;
  // beta_j * rms(regressor_j) / rms(target)
  double standardized_coefficient = 0.0;
  // beta_j * mean(regressor_j) / sum over all terms
  double share = 0.0;
  Verdict verdict = Verdict::kInconclusive;
};

struct RedundancyReport {
  ModalityRedundancy image;
  ModalityRedundancy text;
  double covariance_contribution = 0.0;               // beta3 * mean(cov_term)
  double standardized_covariance_contribution = 0.0;  // divided by mean(target)
  double tau_beta = 0.05;
  double tau_cov = 0.05;
};

// A modality is redundant when its standardized coefficient and the
// standardized covariance contribution are both below their thresholds,
// not-redundant when neither is, and inconclusive otherwise or when the
// records carry no signal at all.
inline RedundancyReport detect_redundancy(const MupmFit& fit,
                                          const std::vector<UncertaintyRecord>& records,
                                          double tau_beta = 0.05, double tau_cov = 0.05) {
  RedundancyReport rep;
  rep.tau_beta = tau_beta;
  rep.tau_cov = tau_cov;
  rep.image.coefficient = fit.beta[0];
  rep.text.coefficient = fit.beta[1];
  const Design d = build_design(records, fit.reduction);
  const auto m = static_cast<double>(d.X.rows);

  std::array<double, 3> col_mean{}, col_rms{};
  for (std::size_t i = 0; i < d.X.rows; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      col_mean[j] += d.X(i, j);
      col_rms[j] += d.X(i, j) * d.X(i, j);
    }
  double y_mean = 0.0, y_rms = 0.0;
  for (double v : d.y) {
    y_mean += v;
    y_rms += v * v;
  }
  for (std::size_t j = 0; j < 3; ++j) {
    col_mean[j] /= m;
    col_rms[j] = std::sqrt(col_rms[j] / m);
  }
  y_mean /= m;
  y_rms = std::sqrt(y_rms / m);

  rep.covariance_contribution = fit.beta[2] * col_mean[2];
  if (d.all_zero || y_rms == 0.0) return rep;

  rep.standardized_covariance_contribution =
      y_mean != 0.0 ? rep.covariance_contribution / y_mean : 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < 3; ++j) total += fit.beta[j] * col_mean[j];

  auto assess = [&](ModalityRedundancy& mr, std::size_t j) {
    mr.standardized_coefficient = fit.beta[j] * col_rms[j] / y_rms;
    mr.share = total != 0.0 ? fit.beta[j] * col_mean[j] / total : 0.0;
    const bool low_coef = std::abs(mr.standardized_coefficient) < tau_beta;
    const bool low_cov = std::abs(rep.standardized_covariance_contribution) < tau_cov;
    mr.verdict = low_coef && low_cov     ? Verdict::kRedundant
                 : !low_coef && !low_cov ? Verdict::kNotRedundant
                                         : Verdict::kInconclusive;
  };
  assess(rep.image, 0);
  assess(rep.text, 1);
  return rep;
}

inline json redundancy_to_json(const RedundancyReport& r) {
  auto mod = [](const ModalityRedundancy& m) {
    return json{{"coefficient", m.coefficient},
                {"standardized_coefficient", m.standardized_coefficient},
                {"share", m.share},
                {"verdict", std::string(to_string(m.verdict))}};
  };
  return json{{"image", mod(r.image)},
              {"text", mod(r.text)},
              {"covariance_contribution", r.covariance_contribution},
              {"standardized_covariance_contribution", r.standardized_covariance_contribution},
              {"tau_beta", r.tau_beta},
              {"tau_cov", r.tau_cov}};
}

// ---------------------------------------------------------------------------
// Modality ablation

enum class AblationMode { kImageOnly, kTextOnly, kBoth };

inline std::string_view to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kImageOnly: return "image-only";
    case AblationMode::kTextOnly: return "text-only";
    case AblationMode::kBoth: return "both";
  }
  return "both";
}

// Stand-ins for a removed modality: a zero tensor of the original shape and a
// one-token marker sequence.
struct NeutralElements {
  double image_fill = 0.0;
  std::int64_t text_marker = 0;
};

struct ModeAccuracy {
  AblationMode mode = AblationMode::kBoth;
  std::vector<double> fold_accuracy;
  std::vector<std::size_t> fold_sizes;
  double mean = 0.0;
  double std = 0.0;
  double pooled = 0.0;
};

struct AblationResult {
  ModeAccuracy image_only;
  ModeAccuracy text_only;
  ModeAccuracy both;
};

inline InputPair ablate_input(const InputPair& pair, AblationMode mode,
                              const NeutralElements& neutral) {
  InputPair out = pair;
  if (mode == AblationMode::kImageOnly) out.text = {neutral.text_marker};
  if (mode == AblationMode::kTextOnly) {
    std::fill(out.image.data.begin(), out.image.data.end(), neutral.image_fill);
  }
  return out;
}

inline ModeAccuracy ablate_modality(const Model& model, const Dataset& dataset,
                                    AblationMode mode,
                                    const std::vector<std::vector<std::size_t>>& folds,
                                    const NeutralElements& neutral = {},
                                    std::size_t threads = 1) {
  require(!folds.empty(), ErrorCode::kInvalidArgument, "no folds");
  std::vector<int> correct(dataset.size(), 0);
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const InputPair in = ablate_input(dataset[i], mode, neutral);
    const auto y = model.evaluate(in, {dataset[i].id, Branch::kJoint, 0});
    correct[i] = static_cast<int>(argmax(y.values)) == dataset[i].label ? 1 : 0;
  });
  ModeAccuracy acc;
  acc.mode = mode;
  std::size_t hits = 0, total = 0;
  for (const auto& fold : folds) {
    require(!fold.empty(), ErrorCode::kInvalidArgument, "empty fold");
    std::size_t h = 0;
    for (std::size_t i : fold) {
      require(i < dataset.size(), ErrorCode::kInvalidArgument, "fold index out of range");
      h += static_cast<std::size_t>(correct[i]);
    }
    acc.fold_accuracy.push_back(static_cast<double>(h) / static_cast<double>(fold.size()));
    acc.fold_sizes.push_back(fold.size());
    hits += h;
    total += fold.size();
  }
  const auto s = mean_std(acc.fold_accuracy);
  acc.mean = s.mean;
  acc.std = s.std;
  acc.pooled = static_cast<double>(hits) / static_cast<double>(total);
  return acc;
}

inline AblationResult ablation_study(const Model& model, const Dataset& dataset,
                                     const std::vector<std::vector<std::size_t>>& folds,
                                     const NeutralElements& neutral = {},
                                     std::size_t threads = 1) {
  return {ablate_modality(model, dataset, AblationMode::kImageOnly, folds, neutral, threads),
          ablate_modality(model, dataset, AblationMode::kTextOnly, folds, neutral, threads),
          ablate_modality(model, dataset, AblationMode::kBoth, folds, neutral, threads)};
}

inline std::string ablation_to_csv(const AblationResult& r) {
  std::string out = "mode,fold,size,accuracy\n";
  for (const auto* m : {&r.image_only, &r.text_only, &r.both}) {
    for (std::size_t f = 0; f < m->fold_accuracy.size(); ++f) {
      out += std::string(to_string(m->mode)) + "," + std::to_string(f) + "," +
             std::to_string(m->fold_sizes[f]) + "," + format_double(m->fold_accuracy[f]) + "\n";
    }
  }
  return out;
}

inline json ablation_to_json(const AblationResult& r) {
  json j;
  for (const auto* m : {&r.image_only, &r.text_only, &r.both}) {
    j[std::string(to_string(m->mode))] = {{"mean", m->mean},
                                          {"std", m->std},
                                          {"pooled", m->pooled},
                                          {"fold_accuracy", m->fold_accuracy}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Finite-difference derivative probe

struct DerivativeProbeResult {
  // Per-sample mean |dF_k/dx_j| over all (k, j), at the original inputs.
  std::vector<double> image_per_sample;
  std::vector<double> text_per_sample;
  // Same at one jointly perturbed replicate of each sample.
  std::vector<double> image_joint_per_sample;
  std::vector<double> text_joint_per_sample;
  MeanStd image;        // a_I proxy
  MeanStd text;         // b_T proxy
  MeanStd image_joint;  // a proxy
  MeanStd text_joint;   // b proxy
  double h = 1e-4;
};

namespace detail {

inline double mean_abs_central_difference(const SyntheticModel& model,
                                          std::vector<double> x, std::vector<double> y,
                                          bool wrt_image, double h) {
  auto& v = wrt_image ? x : y;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double orig = v[j];
    v[j] = orig + h;
    const auto up = model.evaluate_features(x, y);
    v[j] = orig - h;
    const auto down = model.evaluate_features(x, y);
    v[j] = orig;
    for (std::size_t k = 0; k < up.size(); ++k) {
      const double d = (up[k] - down[k]) / (2.0 * h);
      require(std::isfinite(d), ErrorCode::kNonFiniteDifference,
              "non-finite finite difference");
      acc += std::abs(d);
      ++count;
    }
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace detail

// Central differences in the model's continuous input space (image elements
// and text features). Joint-point statistics need a perturbation spec.
inline DerivativeProbeResult probe_derivatives(const Model& model, const Dataset& samples,
                                               double h = 1e-4,
                                               const PerturbationSpec* pspec = nullptr,
                                               std::uint64_t seed = 0) {
  require(h > 0.0 && std::isfinite(h), ErrorCode::kInvalidArgument, "step h must be > 0");
  const auto* synth = dynamic_cast<const SyntheticModel*>(&model);
  if (synth == nullptr) {
    fail(ErrorCode::kUnsupportedKind,
         "derivative probe needs continuous input access (synthetic models)");
  }
  DerivativeProbeResult res;
  res.h = h;
  for (const auto& pair : samples) {
    const auto y = synth->text_features(pair.text);
    res.image_per_sample.push_back(
        detail::mean_abs_central_difference(*synth, pair.image.data, y, true, h));
    res.text_per_sample.push_back(
        detail::mean_abs_central_difference(*synth, pair.image.data, y, false, h));
    if (pspec) {
      const InputPair jp = replicate_input(pair, Branch::kJoint, *pspec, seed, 0);
      const auto jy = synth->text_features(jp.text);
      res.image_joint_per_sample.push_back(
          detail::mean_abs_central_difference(*synth, jp.image.data, jy, true, h));
      res.text_joint_per_sample.push_back(
          detail::mean_abs_central_difference(*synth, jp.image.data, jy, false, h));
    }
  }
  res.image = mean_std(res.image_per_sample);
  res.text = mean_std(res.text_per_sample);
  res.image_joint = mean_std(res.image_joint_per_sample);
  res.text_joint = mean_std(res.text_joint_per_sample);
  return res;
}

inline json probe_to_json(const DerivativeProbeResult& r) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  return json{{"h", r.h},
              {"image", ms(r.image)},
              {"text", ms(r.text)},
              {"image_joint", ms(r.image_joint)},
              {"text_joint", ms(r.text_joint)},
              {"n_samples", r.image_per_sample.size()}};
}

}  // namespace mupm
