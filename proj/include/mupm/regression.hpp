#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mupm/calibration.hpp"
#include "mupm/error.hpp"
#include "mupm/estimation.hpp"
#include "mupm/io.hpp"
#include "mupm/linalg.hpp"

namespace mupm {

inline constexpr double kMaxGramCondition = 1e12;

// Regression data for the propagation model: columns are
// (var_image, var_text, cov_term), target is var_joint.
struct Design {
  Matrix X;
  std::vector<double> y;
  Reduction reduction = Reduction::kPerDimension;
  bool all_zero = false;
};

inline Design build_design(const std::vector<UncertaintyRecord>& records,
                           Reduction reduction) {
  require(!records.empty(), ErrorCode::kEmptyInput, "no uncertainty records");
  Design d;
  d.reduction = reduction;
  if (reduction == Reduction::kPerDimension) {
    std::size_t m = 0;
    for (const auto& r : records) m += r.dim();
    d.X = Matrix(m, 3);
    d.y.reserve(m);
    std::size_t row = 0;
    for (const auto& r : records) {
      for (std::size_t k = 0; k < r.dim(); ++k, ++row) {
        d.X(row, 0) = r.var_image[k];
        d.X(row, 1) = r.var_text[k];
        d.X(row, 2) = r.cov_term[k];
        d.y.push_back(r.var_joint[k]);
      }
    }
  } else {
    d.X = Matrix(records.size(), 3);
    for (std::size_t i = 0; i < records.size(); ++i) {
      d.X(i, 0) = l2_norm(records[i].var_image);
      d.X(i, 1) = l2_norm(records[i].var_text);
      d.X(i, 2) = l2_norm(records[i].cov_term);
      d.y.push_back(l2_norm(records[i].var_joint));
    }
  }
  d.all_zero = std::all_of(d.X.data.begin(), d.X.data.end(), [](double v) { return v == 0.0; });
  return d;
}

struct NormSummary {
  double var_image = 0.0;  // ||mean s^2_I||_2
  double var_text = 0.0;   // ||mean s^2_T||_2
  double cov_term = 0.0;   // ||mean s_I s_T||_2
};

struct MupmFit {
  std::array<double, 3> beta{};
  std::array<double, 3> standard_error{};
  // Columns excluded because they were identically zero; their beta is 0.
  std::array<bool, 3> dropped{};
  double r_squared = 0.0;  // in-sample, centered
  double residual_std = 0.0;
  std::size_t n_observations = 0;
  Reduction reduction = Reduction::kPerDimension;
  NormSummary norms;
  double clamp_rate = 0.0;
};

namespace detail {

// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
  const std::size_t n = a.rows;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-300) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  return ev;
}

struct QrSolution {
  std::vector<double> beta;
  Matrix r;  // p x p upper triangular factor
};

// Least squares by Householder QR: X = QR, R beta = Q^T y.
inline QrSolution householder_solve(Matrix a, std::vector<double> b) {
  const std::size_t m = a.rows;
  const std::size_t p = a.cols;
  for (std::size_t k = 0; k < p; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a(k, k) > 0 ? -norm : norm;
    std::vector<double> v(m - k);
    for (std::size_t i = k; i < m; ++i) v[i - k] = a(i, k);
    v[0] -= alpha;
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    if (vnorm2 == 0.0) continue;
    for (std::size_t j = k; j < p; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += v[i - k] * a(i, j);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = k; i < m; ++i) a(i, j) -= f * v[i - k];
    }
    double dot = 0.0;
    for (std::size_t i = k; i < m; ++i) dot += v[i - k] * b[i];
    const double f = 2.0 * dot / vnorm2;
    for (std::size_t i = k; i < m; ++i) b[i] -= f * v[i - k];
  }
  QrSolution out;
  out.r = Matrix(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i; j < p; ++j) out.r(i, j) = a(i, j);
  out.beta.assign(p, 0.0);
  for (std::size_t i = p; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < p; ++j) s -= out.r(i, j) * out.beta[j];
    out.beta[i] = s / out.r(i, i);
  }
  return out;
}

// Inverse of R^T R from the triangular factor.
inline Matrix gram_inverse(const Matrix& r) {
  const std::size_t p = r.rows;
  Matrix rinv(p, p);
  for (std::size_t j = 0; j < p; ++j) {
    rinv(j, j) = 1.0 / r(j, j);
    for (std::size_t i = j; i-- > 0;) {
      double s = 0.0;
      for (std::size_t k = i + 1; k <= j; ++k) s += r(i, k) * rinv(k, j);
      rinv(i, j) = -s / r(i, i);
    }
  }
  Matrix out(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = std::max(i, j); k < p; ++k) s += rinv(i, k) * rinv(j, k);
      out(i, j) = s;
    }
  return out;
}

}  // namespace detail

inline std::vector<double> residuals(const Matrix& X, std::span<const double> y,
                                     std::span<const double> beta) {
  std::vector<double> r(y.begin(), y.end());
  const auto xb = matvec(X, beta);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= xb[i];
  return r;
}

// max_j |sum_i X_ij r_i|
inline double residual_orthogonality(const Matrix& X, std::span<const double> r) {
  double worst = 0.0;
  for (std::size_t j = 0; j < X.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) s += X(i, j) * r[i];
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

struct FitOptions {
  // Fit only the non-zero columns instead of rejecting a design with an
  // identically zero column (e.g. a modality the model ignores).
  bool drop_zero_columns = false;
};

// Ordinary least squares without intercept on a three-column design.
inline MupmFit fit_ols(const Matrix& X, std::span<const double> y, FitOptions opts = {}) {
  require(X.cols == 3, ErrorCode::kDimensionMismatch, "design must have 3 columns");
  require(X.rows == y.size(), ErrorCode::kLengthMismatch, "design and target lengths differ");
  require(X.rows >= 3, ErrorCode::kTooFewObservations,
          "need at least 3 observations, got " + std::to_string(X.rows));
  for (double v : X.data)
    require(std::isfinite(v), ErrorCode::kDegenerateDesign, "non-finite design entry");
  for (double v : y)
    require(std::isfinite(v), ErrorCode::kDegenerateDesign, "non-finite target entry");

  MupmFit fit;
  fit.n_observations = X.rows;
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < 3; ++j) {
    bool zero = true;
    for (std::size_t i = 0; i < X.rows && zero; ++i) zero = X(i, j) == 0.0;
    if (zero) {
      if (!opts.drop_zero_columns) {
        fail(ErrorCode::kDegenerateDesign, "design column " + std::to_string(j + 1) +
                                               " is identically zero");
      }
      fit.dropped[j] = true;
    } else {
      active.push_back(j);
    }
  }
  require(!active.empty(), ErrorCode::kDegenerateDesign, "every design column is zero");

  Matrix A(X.rows, active.size());
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t c = 0; c < active.size(); ++c) A(i, c) = X(i, active[c]);

  auto qr = detail::householder_solve(A, {y.begin(), y.end()});
  // Condition of X^T X, from the eigenvalues of R^T R.
  Matrix gram(active.size(), active.size());
  for (std::size_t i = 0; i < gram.rows; ++i)
    for (std::size_t j = 0; j < gram.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k <= std::min(i, j); ++k) s += qr.r(k, i) * qr.r(k, j);
      gram(i, j) = s;
    }
  const auto ev = detail::symmetric_eigenvalues(gram);
  const double lmax = *std::max_element(ev.begin(), ev.end());
  const double lmin = *std::min_element(ev.begin(), ev.end());
  if (!(lmin > 0.0) || lmax / lmin >= kMaxGramCondition) {
    fail(ErrorCode::kDegenerateDesign, "design is rank deficient (condition number of X^T X " +
                                           format_double(lmin > 0 ? lmax / lmin : INFINITY) +
                                           ")");
  }
  for (std::size_t c = 0; c < active.size(); ++c) {
    require(qr.r(c, c) != 0.0, ErrorCode::kDegenerateDesign, "singular triangular factor");
  }

  // One step of iterative refinement keeps X^T r at rounding level.
  auto r = residuals(A, y, qr.beta);
  const auto corr = detail::householder_solve(A, r);
  for (std::size_t c = 0; c < active.size(); ++c) qr.beta[c] += corr.beta[c];
  r = residuals(A, y, qr.beta);

  double rss = 0.0;
  for (double v : r) rss += v * v;
  const double ybar = mean(y);
  double tss = 0.0;
  for (double v : y) tss += (v - ybar) * (v - ybar);
  fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : 0.0);
  const double dof = static_cast<double>(X.rows) - static_cast<double>(active.size());
  fit.residual_std = dof > 0 ? std::sqrt(rss / dof) : 0.0;

  const Matrix cov = detail::gram_inverse(qr.r);
  for (std::size_t c = 0; c < active.size(); ++c) {
    fit.beta[active[c]] = qr.beta[c];
    fit.standard_error[active[c]] = fit.residual_std * std::sqrt(std::max(0.0, cov(c, c)));
  }
  return fit;
}

inline NormSummary norm_summary(const std::vector<UncertaintyRecord>& records) {
  NormSummary s;
  if (records.empty()) return s;
  const std::size_t k = records.front().dim();
  std::vector<double> mi(k, 0.0), mt(k, 0.0), mc(k, 0.0);
  for (const auto& r : records) {
    require(r.dim() == k, ErrorCode::kInconsistentK, "records have different K");
    for (std::size_t d = 0; d < k; ++d) {
      mi[d] += r.var_image[d];
      mt[d] += r.var_text[d];
      mc[d] += r.cov_term[d];
    }
  }
  const auto n = static_cast<double>(records.size());
  for (std::size_t d = 0; d < k; ++d) {
    mi[d] /= n;
    mt[d] /= n;
    mc[d] /= n;
  }
  s.var_image = l2_norm(mi);
  s.var_text = l2_norm(mt);
  s.cov_term = l2_norm(mc);
  return s;
}

struct Prediction {
  std::vector<double> values;
  std::vector<bool> clamped;

  bool any_clamped() const {
    return std::any_of(clamped.begin(), clamped.end(), [](bool b) { return b; });
  }
};

// beta1 var_image + beta2 var_text + beta3 cov_term, clamped at zero. In
// l2-norm mode the regressors are the vector norms and the result is scalar.
inline Prediction predict_overall(const MupmFit& fit, const UncertaintyRecord& record,
                                  Reduction reduction) {
  if (reduction != fit.reduction) {
    fail(ErrorCode::kReductionMismatch,
         "fit uses " + std::string(to_string(fit.reduction)) + ", record requested as " +
             std::string(to_string(reduction)));
  }
  Prediction p;
  auto eval = [&](double vi, double vt, double ct) {
    const double v = fit.beta[0] * vi + fit.beta[1] * vt + fit.beta[2] * ct;
    p.values.push_back(std::max(0.0, v));
    p.clamped.push_back(v < 0.0);
  };
  if (reduction == Reduction::kPerDimension) {
    for (std::size_t k = 0; k < record.dim(); ++k) {
      eval(record.var_image[k], record.var_text[k], record.cov_term[k]);
    }
  } else {
    eval(l2_norm(record.var_image), l2_norm(record.var_text), l2_norm(record.cov_term));
  }
  return p;
}

inline Prediction predict_overall(const MupmFit& fit, const UncertaintyRecord& record) {
  return predict_overall(fit, record, fit.reduction);
}

// Builds the design, fits it, and fills the norm summaries and clamp rate.
inline MupmFit fit_mupm(const std::vector<UncertaintyRecord>& records, Reduction reduction,
                        FitOptions opts = {}) {
  const Design d = build_design(records, reduction);
  if (d.all_zero) fail(ErrorCode::kDegenerateDesign, "all uncertainty records are zero");
  MupmFit fit = fit_ols(d.X, d.y, opts);
  fit.reduction = reduction;
  fit.norms = norm_summary(records);
  std::size_t clamped = 0, total = 0;
  for (const auto& r : records) {
    const auto p = predict_overall(fit, r);
    for (bool c : p.clamped) clamped += c ? 1 : 0;
    total += p.values.size();
  }
  fit.clamp_rate = total ? static_cast<double>(clamped) / static_cast<double>(total) : 0.0;
  return fit;
}

// One fit per fold, each on that fold's samples, plus their average. The
// averaged fit carries the across-fold std of each coefficient in
// `fold_std` and the mean per-fold standard error in `standard_error`.
struct FoldFits {
  std::vector<MupmFit> fits;
  std::vector<std::vector<std::size_t>> folds;
  MupmFit averaged;
  std::array<double, 3> fold_std{};
};

inline FoldFits fit_folds(const std::vector<UncertaintyRecord>& records, std::size_t k,
                          std::uint64_t seed, Reduction reduction, FitOptions opts = {}) {
  FoldFits out;
  out.folds = kfold_split(records.size(), k, seed);
  for (std::size_t f = 0; f < out.folds.size(); ++f) {
    std::vector<UncertaintyRecord> subset;
    for (std::size_t i : out.folds[f]) subset.push_back(records[i]);
    try {
      out.fits.push_back(fit_mupm(subset, reduction, opts));
    } catch (const Error& e) {
      throw Error(e.code(), "fold " + std::to_string(f) + ": " + e.message());
    }
  }
  MupmFit& avg = out.averaged;
  avg.reduction = reduction;
  avg.norms = norm_summary(records);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> b;
    double se = 0.0;
    bool dropped = true;
    for (const auto& fit : out.fits) {
      b.push_back(fit.beta[c]);
      se += fit.standard_error[c];
      dropped = dropped && fit.dropped[c];
    }
    const auto ms = mean_std(b);
    avg.beta[c] = ms.mean;
    out.fold_std[c] = ms.std;
    avg.standard_error[c] = se / static_cast<double>(out.fits.size());
    avg.dropped[c] = dropped;
  }
  for (const auto& fit : out.fits) {
    avg.n_observations += fit.n_observations;
    avg.r_squared += fit.r_squared / static_cast<double>(out.fits.size());
    avg.residual_std += fit.residual_std / static_cast<double>(out.fits.size());
  }
  std::size_t clamped = 0, total = 0;
  for (const auto& r : records) {
    const auto p = predict_overall(avg, r);
    for (bool c : p.clamped) clamped += c ? 1 : 0;
    total += p.values.size();
  }
  avg.clamp_rate = total ? static_cast<double>(clamped) / static_cast<double>(total) : 0.0;
  return out;
}

inline double r_squared(std::span<const double> predictions, std::span<const double> benchmark) {
  require(predictions.size() == benchmark.size(), ErrorCode::kLengthMismatch,
          "predictions and benchmark lengths differ");
  require(benchmark.size() >= 2, ErrorCode::kLengthMismatch, "need at least 2 values");
  const double bbar = mean(benchmark);
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < benchmark.size(); ++i) {
    sse += (benchmark[i] - predictions[i]) * (benchmark[i] - predictions[i]);
    sst += (benchmark[i] - bbar) * (benchmark[i] - bbar);
  }
  require(sst > 0.0, ErrorCode::kConstantBenchmark, "benchmark is constant");
  return 1.0 - sse / sst;
}

// Flattened predictions and benchmark values in matching order, ready for
// r_squared. Per-dimension mode yields one value per (sample, dim).
struct PairedValues {
  std::vector<double> predicted;
  std::vector<double> benchmark;
};

inline PairedValues pair_with_benchmark(const MupmFit& fit,
                                        const std::vector<UncertaintyRecord>& records,
                                        const std::vector<std::vector<double>>& benchmark) {
  require(records.size() == benchmark.size(), ErrorCode::kLengthMismatch,
          "records and benchmark sample counts differ");
  PairedValues out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto p = predict_overall(fit, records[i]);
    out.predicted.insert(out.predicted.end(), p.values.begin(), p.values.end());
    if (fit.reduction == Reduction::kPerDimension) {
      require(benchmark[i].size() == records[i].dim(), ErrorCode::kLengthMismatch,
              "benchmark K differs for sample '" + records[i].sample_id + "'");
      out.benchmark.insert(out.benchmark.end(), benchmark[i].begin(), benchmark[i].end());
    } else {
      out.benchmark.push_back(l2_norm(benchmark[i]));
    }
  }
  return out;
}

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Summary row: three "beta (norm)" cells, R^2, then ECE ("-" until known).
inline std::string table_row(const MupmFit& fit, double r2,
                             std::optional<double> ece = std::nullopt) {
  const auto& b = fit.beta;
  const auto& n = fit.norms;
  return fixed2(b[0]) + " (" + fixed2(n.var_image) + ") | " + fixed2(b[1]) + " (" +
         fixed2(n.var_text) + ") | " + fixed2(b[2]) + " (" + fixed2(n.cov_term) + ") | " +
         fixed2(r2) + " | " + (ece ? fixed2(*ece) : std::string("-"));
}

inline json fit_to_json(const MupmFit& f) {
  json j;
  j["beta"] = f.beta;
  j["standard_error"] = f.standard_error;
  j["dropped"] = f.dropped;
  j["r_squared"] = f.r_squared;
  j["residual_std"] = f.residual_std;
  j["n_observations"] = f.n_observations;
  j["reduction"] = std::string(to_string(f.reduction));
  j["norms"] = {{"var_image", f.norms.var_image},
                {"var_text", f.norms.var_text},
                {"cov_term", f.norms.cov_term}};
  j["clamp_rate"] = f.clamp_rate;
  return j;
}

inline MupmFit fit_from_json(const json& j) {
  MupmFit f;
  try {
    f.beta = j.at("beta").get<std::array<double, 3>>();
    if (j.contains("standard_error"))
      f.standard_error = j.at("standard_error").get<std::array<double, 3>>();
    if (j.contains("dropped")) f.dropped = j.at("dropped").get<std::array<bool, 3>>();
    f.r_squared = j.value("r_squared", 0.0);
    f.residual_std = j.value("residual_std", 0.0);
    f.n_observations = j.value("n_observations", std::size_t{0});
    f.reduction = parse_reduction(j.value("reduction", std::string("per-dimension")));
    if (j.contains("norms")) {
      const auto& n = j.at("norms");
      f.norms = {n.value("var_image", 0.0), n.value("var_text", 0.0), n.value("cov_term", 0.0)};
    }
    f.clamp_rate = j.value("clamp_rate", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParseFailure, std::string("fit: ") + e.what());
  }
  return f;
}

}  // namespace mupm
