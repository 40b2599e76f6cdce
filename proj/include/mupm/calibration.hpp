#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mupm/error.hpp"
#include "mupm/io.hpp"
#include "mupm/rng.hpp"

namespace mupm {

inline constexpr double kConfidenceEpsilon = 1e-12;

// 1 - sigmoid(ln(u + eps)), i.e. 1 / (1 + u + eps).
inline double confidence_map(double uncertainty_norm) {
  require(uncertainty_norm >= 0.0, ErrorCode::kNegativeInput,
          "uncertainty norm must be >= 0, got " + format_double(uncertainty_norm));
  const double s = std::log(uncertainty_norm + kConfidenceEpsilon);
  return 1.0 - 1.0 / (1.0 + std::exp(-s));
}

using ConfidenceMap = std::function<double(double)>;

struct CalibrationSample {
  std::string sample_id;
  bool correct = false;
  double uncertainty_norm = 0.0;
};

struct CalibrationBin {
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
  double gap = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  std::size_t n_samples = 0;
};

// Equal-count bins over samples sorted by uncertainty norm (ties by
// sample_id); sorted position i falls in percentile bin floor(iB/N).
// ECE is the count-weighted mean of |accuracy - confidence| per bin.
inline CalibrationReport ece(const std::vector<CalibrationSample>& samples,
                             std::size_t n_bins = 10,
                             const ConfidenceMap& map = confidence_map) {
  require(n_bins >= 1, ErrorCode::kInvalidArgument, "need at least one bin");
  require(samples.size() >= n_bins, ErrorCode::kTooFewSamples,
          "ECE with " + std::to_string(n_bins) + " bins needs at least that many samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (samples[a].uncertainty_norm != samples[b].uncertainty_norm)
      return samples[a].uncertainty_norm < samples[b].uncertainty_norm;
    return samples[a].sample_id < samples[b].sample_id;
  });
  CalibrationReport rep;
  rep.n_samples = samples.size();
  const std::size_t n = samples.size();
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t lo = (b * n + n_bins - 1) / n_bins;
    const std::size_t hi = ((b + 1) * n + n_bins - 1) / n_bins;
    CalibrationBin bin;
    bin.count = hi - lo;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& s = samples[order[i]];
      bin.accuracy += s.correct ? 1.0 : 0.0;
      bin.confidence += map(s.uncertainty_norm);
    }
    if (bin.count > 0) {
      bin.accuracy /= static_cast<double>(bin.count);
      bin.confidence /= static_cast<double>(bin.count);
    }
    bin.gap = std::abs(bin.accuracy - bin.confidence);
    rep.ece += static_cast<double>(bin.count) * bin.gap;
    rep.bins.push_back(bin);
  }
  rep.ece /= static_cast<double>(n);
  return rep;
}

inline json calibration_to_json(const CalibrationReport& r) {
  json j;
  j["ece"] = r.ece;
  j["n_bins"] = r.bins.size();
  j["n_samples"] = r.n_samples;
  json bins = json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"count", b.count},
                    {"accuracy", b.accuracy},
                    {"confidence", b.confidence},
                    {"gap", b.gap}});
  }
  j["bins"] = bins;
  return j;
}

inline std::string calibration_bins_csv(const CalibrationReport& r) {
  std::string out = "bin_index,count,accuracy,confidence,gap\n";
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    const auto& bin = r.bins[b];
    out += std::to_string(b) + "," + std::to_string(bin.count) + "," +
           format_double(bin.accuracy) + "," + format_double(bin.confidence) + "," +
           format_double(bin.gap) + "\n";
  }
  return out;
}

// Shuffles indices [0, n) with the seed and cuts them into k contiguous
// folds; the first n mod k folds get one extra element.
inline std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k,
                                                         std::uint64_t seed) {
  require(k >= 1, ErrorCode::kInvalidArgument, "k must be >= 1");
  require(n >= k, ErrorCode::kTooFewSamples,
          "cannot split " + std::to_string(n) + " samples into " + std::to_string(k) + " folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  StreamKey key;
  key.global_seed = seed;
  key.scope = StreamScope::kShuffle;
  RngStream rng(key);
  for (std::size_t i = n; i-- > 1;) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                    idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

}  // namespace mupm
