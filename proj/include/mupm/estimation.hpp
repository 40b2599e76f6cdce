#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mupm/error.hpp"
#include "mupm/io.hpp"
#include "mupm/linalg.hpp"
#include "mupm/manifest.hpp"
#include "mupm/model.hpp"
#include "mupm/parallel.hpp"
#include "mupm/perturbation.hpp"
#include "mupm/rng.hpp"
#include "mupm/types.hpp"

namespace mupm {

enum class Reduction { kPerDimension, kL2Norm };

inline std::string_view to_string(Reduction r) {
  return r == Reduction::kPerDimension ? "per-dimension" : "l2-norm";
}

inline Reduction parse_reduction(std::string_view s) {
  if (s == "per-dimension") return Reduction::kPerDimension;
  if (s == "l2-norm") return Reduction::kL2Norm;
  fail(ErrorCode::kConfig, "unknown reduction '" + std::string(s) + "'");
}

struct EstimationConfig {
  std::size_t n_resamples = 20;
  std::size_t benchmark_repeats = 100;
  bool encode_hard = false;
  Reduction reduction = Reduction::kPerDimension;
  std::size_t threads = 1;
};

inline void validate(const EstimationConfig& cfg) {
  require(cfg.n_resamples >= 2, ErrorCode::kInvalidSpec, "n_resamples must be >= 2");
  require(cfg.benchmark_repeats >= cfg.n_resamples, ErrorCode::kInvalidSpec,
          "benchmark_repeats must be >= n_resamples");
}

struct UncertaintyRecord {
  std::string sample_id;
  std::vector<double> var_image;
  std::vector<double> var_text;
  std::vector<double> var_joint;
  std::vector<double> cov_term;  // sqrt(var_image) * sqrt(var_text)
  std::vector<double> paired_corr;
  // True where paired_corr is undefined (a branch has zero spread); the
  // corresponding paired_corr entry is 0.
  std::vector<bool> degenerate;

  std::size_t dim() const { return var_joint.size(); }
  bool operator==(const UncertaintyRecord&) const = default;
};

// Builds the inputs of replicate j of a branch. Image-only keeps the original
// text, text-only keeps the original image, joint perturbs both with coupled
// latents. Stream keys are scoped by branch, so the branches never share draws.
inline InputPair replicate_input(const InputPair& pair, Branch branch,
                                 const PerturbationSpec& pspec, std::uint64_t seed,
                                 std::size_t replicate, std::uint64_t repeat = 0) {
  StreamKey key;
  key.global_seed = seed;
  key.sample_id = pair.id;
  key.scope = scope_of(branch);
  key.replicate = replicate;
  key.repeat = repeat;
  InputPair out;
  out.id = pair.id;
  out.label = pair.label;
  switch (branch) {
    case Branch::kImageOnly: {
      RngStream rng(key.with_modality(Modality::kImage));
      out.image = perturb_image(pair.image, pspec, rng);
      out.text = pair.text;
      break;
    }
    case Branch::kTextOnly: {
      RngStream rng(key.with_modality(Modality::kText));
      out.image = pair.image;
      out.text = perturb_text(pair.text, pspec, rng);
      break;
    }
    case Branch::kJoint: {
      auto [image, text] = perturb_joint(pair, pspec, key);
      out.image = std::move(image);
      out.text = std::move(text);
      break;
    }
  }
  return out;
}

namespace detail {

[[noreturn]] inline void rethrow_annotated(const Error& e, const EvalKey& key) {
  throw Error(e.code(), e.message() + " [at " + describe(key) + "]");
}

}  // namespace detail

// n x K matrix of branch outputs; row j is replicate j. Benchmark repeat r
// evaluates under replicate keys r * n + j so every evaluation has its own key.
inline Matrix run_branch(const Model& model, const InputPair& pair, Branch branch,
                         const PerturbationSpec& pspec, const EstimationConfig& cfg,
                         std::uint64_t seed, std::uint64_t repeat = 0) {
  validate(pspec);
  require(cfg.n_resamples >= 2, ErrorCode::kInvalidSpec, "n_resamples must be >= 2");
  Matrix out;
  for (std::size_t j = 0; j < cfg.n_resamples; ++j) {
    const EvalKey key{pair.id, branch, static_cast<std::size_t>(repeat) * cfg.n_resamples + j};
    OutputVector y;
    try {
      const InputPair input = replicate_input(pair, branch, pspec, seed, j, repeat);
      y = model.evaluate(input, key);
    } catch (const Error& e) {
      detail::rethrow_annotated(e, key);
    }
    if (cfg.encode_hard) y = one_hot(y);
    if (j == 0) {
      out = Matrix(cfg.n_resamples, y.size());
    } else if (y.size() != out.cols) {
      fail(ErrorCode::kInconsistentK, "output length changed at " + detail::describe(key));
    }
    std::copy(y.values.begin(), y.values.end(), out.row(j).begin());
  }
  return out;
}

// Unbiased per-column variance (denominator n - 1).
inline std::vector<double> sample_variance(const Matrix& m) {
  require(m.rows >= 2, ErrorCode::kTooFewReplicates,
          "sample variance needs at least 2 replicates, got " + std::to_string(m.rows));
  std::vector<double> out(m.cols);
  for (std::size_t k = 0; k < m.cols; ++k) {
    // shifted by the first replicate so identical outputs give exactly 0
    const double shift = m(0, k);
    double mean = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) mean += m(r, k) - shift;
    mean /= static_cast<double>(m.rows);
    double ss = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) {
      const double d = (m(r, k) - shift) - mean;
      ss += d * d;
    }
    out[k] = ss / static_cast<double>(m.rows - 1);
  }
  return out;
}

struct PairedCorrelation {
  std::vector<double> corr;
  std::vector<bool> degenerate;
};

// Column-wise Pearson correlation between two equally shaped matrices.
inline PairedCorrelation paired_correlation(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows && a.cols == b.cols, ErrorCode::kDimensionMismatch,
          "paired correlation needs equally shaped matrices");
  PairedCorrelation out{std::vector<double>(a.cols, 0.0), std::vector<bool>(a.cols, false)};
  const auto n = static_cast<double>(a.rows);
  for (std::size_t k = 0; k < a.cols; ++k) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) {
      ma += a(r, k);
      mb += b(r, k);
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) {
      const double da = a(r, k) - ma;
      const double db = b(r, k) - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) {
      out.degenerate[k] = true;
      continue;
    }
    out.corr[k] = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  }
  return out;
}

inline UncertaintyRecord make_record(const std::string& sample_id, const Matrix& image_rows,
                                     const Matrix& text_rows, const Matrix* joint_rows) {
  UncertaintyRecord rec;
  rec.sample_id = sample_id;
  rec.var_image = sample_variance(image_rows);
  rec.var_text = sample_variance(text_rows);
  require(rec.var_image.size() == rec.var_text.size(), ErrorCode::kInconsistentK,
          "branch output lengths differ for sample '" + sample_id + "'");
  rec.var_joint = joint_rows ? sample_variance(*joint_rows)
                             : std::vector<double>(rec.var_image.size(), 0.0);
  require(rec.var_joint.size() == rec.var_image.size(), ErrorCode::kInconsistentK,
          "branch output lengths differ for sample '" + sample_id + "'");
  rec.cov_term.resize(rec.var_image.size());
  for (std::size_t k = 0; k < rec.cov_term.size(); ++k) {
    rec.cov_term[k] = std::sqrt(rec.var_image[k]) * std::sqrt(rec.var_text[k]);
  }
  auto pc = paired_correlation(image_rows, text_rows);
  rec.paired_corr = std::move(pc.corr);
  rec.degenerate = std::move(pc.degenerate);
  return rec;
}

// Runs all three branches for one sample. With include_joint = false the joint
// branch is skipped and var_joint is left at zero.
inline UncertaintyRecord estimate_sample(const Model& model, const InputPair& pair,
                                         const PerturbationSpec& pspec,
                                         const EstimationConfig& cfg, std::uint64_t seed,
                                         bool include_joint = true) {
  const Matrix image_rows = run_branch(model, pair, Branch::kImageOnly, pspec, cfg, seed);
  const Matrix text_rows = run_branch(model, pair, Branch::kTextOnly, pspec, cfg, seed);
  if (!include_joint) return make_record(pair.id, image_rows, text_rows, nullptr);
  const Matrix joint_rows = run_branch(model, pair, Branch::kJoint, pspec, cfg, seed);
  return make_record(pair.id, image_rows, text_rows, &joint_rows);
}

inline std::vector<UncertaintyRecord> estimate_dataset(const Model& model,
                                                       const Dataset& dataset,
                                                       const PerturbationSpec& pspec,
                                                       const EstimationConfig& cfg,
                                                       std::uint64_t seed,
                                                       bool include_joint = true) {
  require(!dataset.empty(), ErrorCode::kEmptyInput, "dataset is empty");
  std::vector<UncertaintyRecord> out(dataset.size());
  parallel_for(dataset.size(), cfg.threads, [&](std::size_t i) {
    out[i] = estimate_sample(model, dataset[i], pspec, cfg, seed, include_joint);
  });
  return out;
}

// Per-sample average of var_joint over benchmark_repeats independent joint
// estimations of n_resamples replicates each.
inline std::vector<std::vector<double>> benchmark_overall(const Model& model,
                                                          const Dataset& dataset,
                                                          const PerturbationSpec& pspec,
                                                          const EstimationConfig& cfg,
                                                          std::uint64_t seed) {
  require(cfg.benchmark_repeats >= 2, ErrorCode::kInvalidSpec,
          "benchmark_repeats must be >= 2");
  std::vector<std::vector<double>> out(dataset.size());
  parallel_for(dataset.size(), cfg.threads, [&](std::size_t i) {
    std::vector<double> acc;
    for (std::size_t r = 0; r < cfg.benchmark_repeats; ++r) {
      const auto v = sample_variance(
          run_branch(model, dataset[i], Branch::kJoint, pspec, cfg, seed, r + 1));
      if (acc.empty()) acc.assign(v.size(), 0.0);
      for (std::size_t k = 0; k < v.size(); ++k) acc[k] += v[k];
    }
    for (double& v : acc) v /= static_cast<double>(cfg.benchmark_repeats);
    out[i] = std::move(acc);
  });
  return out;
}

// Every perturbed input the three branches would evaluate, in
// (sample, branch, replicate) order.
inline std::vector<ManifestEntry> build_manifest(const Dataset& dataset,
                                                 const PerturbationSpec& pspec,
                                                 const EstimationConfig& cfg,
                                                 std::uint64_t seed) {
  std::vector<ManifestEntry> entries;
  entries.reserve(dataset.size() * 3 * cfg.n_resamples);
  for (const auto& pair : dataset) {
    for (Branch b : kAllBranches) {
      for (std::size_t j = 0; j < cfg.n_resamples; ++j) {
        InputPair in = replicate_input(pair, b, pspec, seed, j);
        entries.push_back({pair.id, b, j, std::move(in.image), std::move(in.text)});
      }
    }
  }
  return entries;
}

// Joint-branch inputs of every benchmark repeat, keyed as run_branch keys them.
inline std::vector<ManifestEntry> build_benchmark_manifest(const Dataset& dataset,
                                                           const PerturbationSpec& pspec,
                                                           const EstimationConfig& cfg,
                                                           std::uint64_t seed) {
  std::vector<ManifestEntry> entries;
  entries.reserve(dataset.size() * cfg.benchmark_repeats * cfg.n_resamples);
  for (const auto& pair : dataset) {
    for (std::size_t r = 1; r <= cfg.benchmark_repeats; ++r) {
      for (std::size_t j = 0; j < cfg.n_resamples; ++j) {
        InputPair in = replicate_input(pair, Branch::kJoint, pspec, seed, j, r);
        entries.push_back({pair.id, Branch::kJoint, r * cfg.n_resamples + j,
                           std::move(in.image), std::move(in.text)});
      }
    }
  }
  return entries;
}

// Evaluates a manifest with a model, producing the records an external run
// would return.
inline std::vector<OutputRecord> run_manifest(const Model& model,
                                              const std::vector<ManifestEntry>& entries,
                                              std::size_t threads = 1) {
  std::vector<OutputRecord> out(entries.size());
  parallel_for(entries.size(), threads, [&](std::size_t i) {
    const auto& e = entries[i];
    InputPair pair;
    pair.id = e.sample_id;
    pair.image = e.image;
    pair.text = e.text;
    out[i] = {e.sample_id, e.branch, e.replicate, model.evaluate(pair, e.key()).values};
  });
  return out;
}

// CSV: sample_id,dim,var_image,var_text,var_joint,cov_term,paired_corr,degenerate_flag
inline std::string records_to_csv(const std::vector<UncertaintyRecord>& records) {
  std::string out =
      "sample_id,dim,var_image,var_text,var_joint,cov_term,paired_corr,degenerate_flag\n";
  for (const auto& r : records) {
    for (std::size_t k = 0; k < r.dim(); ++k) {
      out += r.sample_id + "," + std::to_string(k) + "," + format_double(r.var_image[k]) +
             "," + format_double(r.var_text[k]) + "," + format_double(r.var_joint[k]) +
             "," + format_double(r.cov_term[k]) + "," + format_double(r.paired_corr[k]) +
             "," + (r.degenerate[k] ? "1" : "0") + "\n";
    }
  }
  return out;
}

inline std::vector<UncertaintyRecord> records_from_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  require(!lines.empty(), ErrorCode::kParseFailure, path.string() + ": missing header");
  std::vector<UncertaintyRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 8) fail(ErrorCode::kParseFailure, where + ": expected 8 columns");
    if (out.empty() || out.back().sample_id != f[0]) {
      out.emplace_back();
      out.back().sample_id = f[0];
    }
    auto& r = out.back();
    const auto dim = static_cast<std::size_t>(parse_double(f[1], where));
    require(dim == r.var_image.size(), ErrorCode::kParseFailure,
            where + ": dimensions of a sample must be contiguous and ordered");
    r.var_image.push_back(parse_double(f[2], where));
    r.var_text.push_back(parse_double(f[3], where));
    r.var_joint.push_back(parse_double(f[4], where));
    r.cov_term.push_back(parse_double(f[5], where));
    r.paired_corr.push_back(parse_double(f[6], where));
    r.degenerate.push_back(f[7] == "1");
  }
  return out;
}

inline std::string benchmark_to_csv(const std::vector<std::string>& ids,
                                    const std::vector<std::vector<double>>& bench) {
  std::string out = "sample_id,dim,benchmark\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t k = 0; k < bench[i].size(); ++k) {
      out += ids[i] + "," + std::to_string(k) + "," + format_double(bench[i][k]) + "\n";
    }
  }
  return out;
}

struct BenchmarkTable {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> values;
};

inline BenchmarkTable benchmark_from_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  require(!lines.empty(), ErrorCode::kParseFailure, path.string() + ": missing header");
  BenchmarkTable t;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 3) fail(ErrorCode::kParseFailure, where + ": expected 3 columns");
    if (t.ids.empty() || t.ids.back() != f[0]) {
      t.ids.push_back(f[0]);
      t.values.emplace_back();
    }
    t.values.back().push_back(parse_double(f[2], where));
  }
  return t;
}

}  // namespace mupm
