#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "mupm/error.hpp"
#include "mupm/io.hpp"
#include "mupm/rng.hpp"
#include "mupm/types.hpp"

namespace mupm {

struct Range {
  double low = 0.0;
  double high = 0.0;

  bool operator==(const Range&) const = default;
};

using SynonymTable = std::map<std::int64_t, std::vector<std::int64_t>>;

struct PerturbationSpec {
  // Image noise std is drawn once per sample from this range and shared by
  // every branch and replicate of that sample.
  Range image_noise_std{0.0, 0.0};
  int image_shift_max = 0;
  Range image_scale{1.0, 1.0};

  double text_swap_prob = 0.0;
  SynonymTable synonym_table;
  // Text is split into segments at the separator token; each replicate keeps a
  // uniformly drawn subset of [min, max] segments in original order. Unset
  // keeps every segment.
  std::optional<std::pair<std::size_t, std::size_t>> text_subset_keep;
  std::optional<std::int64_t> segment_separator;

  // Correlation of the latent Gaussians that drive image noise and text swaps
  // in the joint branch.
  double joint_correlation = 0.0;
  std::size_t n_resamples = 20;

  bool operator==(const PerturbationSpec&) const = default;
};

inline void validate(const PerturbationSpec& s) {
  auto range_ok = [](const Range& r) {
    return std::isfinite(r.low) && std::isfinite(r.high) && r.low <= r.high;
  };
  require(range_ok(s.image_noise_std) && s.image_noise_std.low >= 0.0,
          ErrorCode::kInvalidSpec, "image_noise_std_range must satisfy 0 <= low <= high");
  require(range_ok(s.image_scale), ErrorCode::kInvalidSpec,
          "image_scale_range must satisfy low <= high");
  require(s.image_shift_max >= 0, ErrorCode::kInvalidSpec, "image_shift_max must be >= 0");
  require(s.text_swap_prob >= 0.0 && s.text_swap_prob <= 1.0, ErrorCode::kInvalidSpec,
          "text_swap_prob must be in [0, 1]");
  require(std::abs(s.joint_correlation) <= 1.0, ErrorCode::kInvalidSpec,
          "joint_correlation must be in [-1, 1]");
  require(s.n_resamples >= 2, ErrorCode::kInvalidSpec, "n_resamples must be >= 2");
  if (s.text_subset_keep) {
    require(s.text_subset_keep->first <= s.text_subset_keep->second,
            ErrorCode::kInvalidSpec, "text_subset_keep must satisfy min <= max");
  }
}

// Latent standard normals consumed by one replicate: one per image element
// (noise) and one per retained text token (swap decision).
struct PerturbationTrace {
  double image_std = 0.0;
  double text_swap_prob = 0.0;
  std::vector<double> image_latent;
  std::vector<double> text_latent;
};

inline double sample_image_std(const PerturbationSpec& spec, const StreamKey& key) {
  if (spec.image_noise_std.low == spec.image_noise_std.high) return spec.image_noise_std.low;
  RngStream rng(key.with_modality(Modality::kImage).intensity_key());
  return rng.uniform(spec.image_noise_std.low, spec.image_noise_std.high);
}

namespace detail {

inline Tensor circular_shift(const Tensor& in, const std::vector<std::int64_t>& shifts) {
  if (std::all_of(shifts.begin(), shifts.end(), [](auto s) { return s == 0; })) return in;
  const std::size_t rank = in.shape.size();
  Tensor out = in;
  std::vector<std::size_t> idx(rank, 0);
  std::vector<std::size_t> strides(rank, 1);
  for (std::size_t a = rank; a-- > 1;) strides[a - 1] = strides[a] * in.shape[a];
  for (std::size_t flat = 0; flat < in.data.size(); ++flat) {
    std::size_t rem = flat;
    std::size_t dest = 0;
    for (std::size_t a = 0; a < rank; ++a) {
      const auto extent = static_cast<std::int64_t>(in.shape[a]);
      const auto i = static_cast<std::int64_t>(rem / strides[a]);
      rem %= strides[a];
      std::int64_t j = (i + shifts[a]) % extent;
      if (j < 0) j += extent;
      dest += static_cast<std::size_t>(j) * strides[a];
    }
    out.data[dest] = in.data[flat];
  }
  return out;
}

inline Tensor perturb_image_impl(const Tensor& image, const PerturbationSpec& spec,
                                 RngStream& rng, double noise_std,
                                 std::vector<double>* latent) {
  std::vector<std::int64_t> shifts(image.shape.size(), 0);
  for (auto& s : shifts) {
    if (spec.image_shift_max > 0) s = rng.uniform_int(-spec.image_shift_max, spec.image_shift_max);
  }
  Tensor out = circular_shift(image, shifts);
  const double scale = spec.image_scale.low == spec.image_scale.high
                           ? spec.image_scale.low
                           : rng.uniform(spec.image_scale.low, spec.image_scale.high);
  if (latent) latent->resize(out.data.size());
  for (std::size_t e = 0; e < out.data.size(); ++e) {
    const double z = rng.normal();
    if (latent) (*latent)[e] = z;
    out.data[e] = scale * out.data[e] + noise_std * z;
  }
  return out;
}

inline std::vector<std::vector<std::int64_t>> split_segments(const TokenSequence& text,
                                                             std::int64_t separator) {
  std::vector<std::vector<std::int64_t>> segments(1);
  for (auto t : text) {
    if (t == separator) {
      segments.emplace_back();
    } else {
      segments.back().push_back(t);
    }
  }
  return segments;
}

inline TokenSequence retain_subset(const TokenSequence& text, const PerturbationSpec& spec,
                                   RngStream& rng) {
  if (!spec.text_subset_keep) return text;
  const std::int64_t sep = spec.segment_separator.value_or(-1);
  auto segments = split_segments(text, sep);
  const std::size_t total = segments.size();
  const std::size_t hi = std::min(spec.text_subset_keep->second, total);
  const std::size_t lo = std::min(spec.text_subset_keep->first, hi);
  const auto keep = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
  if (keep == 0) fail(ErrorCode::kEmptyAfterSubset, "subset retention kept no segment");
  if (keep == total) return text;

  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  for (std::size_t i = 0; i < keep; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(i), static_cast<std::int64_t>(total - 1)));
    std::swap(order[i], order[j]);
  }
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  TokenSequence out;
  for (std::size_t i = 0; i < keep; ++i) {
    if (i > 0) out.push_back(sep);
    const auto& seg = segments[order[i]];
    out.insert(out.end(), seg.begin(), seg.end());
  }
  if (out.empty()) fail(ErrorCode::kEmptyAfterSubset, "subset retention emptied the text");
  return out;
}

// Token j is swapped when Phi(h_j) > 1 - p, so the swap is a threshold event
// on a standard normal latent. Supplying `coupled` correlates h_j with the
// image noise latent of element j.
inline TokenSequence perturb_text_impl(const TokenSequence& text, const PerturbationSpec& spec,
                                       RngStream& rng, double swap_prob,
                                       const std::vector<double>* coupled, double rho,
                                       std::vector<double>* latent) {
  TokenSequence out = retain_subset(text, spec, rng);
  if (latent) latent->resize(out.size());
  const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double w = rng.normal();
    const double h = (coupled && j < coupled->size()) ? rho * (*coupled)[j] + mix * w : w;
    if (latent) (*latent)[j] = h;
    if (swap_prob <= 0.0) continue;
    auto it = spec.synonym_table.find(out[j]);
    if (it == spec.synonym_table.end() || it->second.empty()) continue;
    const bool swap = swap_prob >= 1.0 || normal_cdf(h) > 1.0 - swap_prob;
    if (!swap) continue;
    const auto& choices = it->second;
    out[j] = choices[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(choices.size()) - 1))];
  }
  return out;
}

}  // namespace detail

// Circular shift, multiplicative intensity scale, then additive Gaussian noise.
// Noise std is `scale_override` when given, otherwise the per-sample draw.
inline Tensor perturb_image(const Tensor& image, const PerturbationSpec& spec,
                            RngStream& stream,
                            std::optional<double> scale_override = std::nullopt) {
  validate(spec);
  const double std_dev = scale_override ? *scale_override : sample_image_std(spec, stream.key());
  require(std_dev >= 0.0 && std::isfinite(std_dev), ErrorCode::kInvalidSpec,
          "noise std must be finite and >= 0");
  return detail::perturb_image_impl(image, spec, stream, std_dev, nullptr);
}

inline TokenSequence perturb_text(const TokenSequence& text, const PerturbationSpec& spec,
                                  RngStream& stream,
                                  std::optional<double> intensity_override = std::nullopt) {
  validate(spec);
  const double p = intensity_override.value_or(spec.text_swap_prob);
  require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidSpec, "swap intensity must be in [0, 1]");
  return detail::perturb_text_impl(text, spec, stream, p, nullptr, 0.0, nullptr);
}

struct JointPerturbation {
  Tensor image;
  TokenSequence text;
  PerturbationTrace trace;
};

// Perturbs both modalities of one replicate. The image noise latent of element
// j and the swap latent of text token j form a standard bivariate normal pair
// with correlation joint_correlation; marginals match the single-modality
// perturbations exactly.
inline JointPerturbation perturb_joint_traced(const InputPair& pair,
                                              const PerturbationSpec& spec,
                                              const StreamKey& key) {
  validate(spec);
  JointPerturbation out;
  out.trace.image_std = sample_image_std(spec, key);
  out.trace.text_swap_prob = spec.text_swap_prob;
  RngStream image_rng(key.with_modality(Modality::kImage));
  RngStream text_rng(key.with_modality(Modality::kText));
  out.image = detail::perturb_image_impl(pair.image, spec, image_rng, out.trace.image_std,
                                         &out.trace.image_latent);
  out.text = detail::perturb_text_impl(pair.text, spec, text_rng, spec.text_swap_prob,
                                       &out.trace.image_latent, spec.joint_correlation,
                                       &out.trace.text_latent);
  return out;
}

inline std::pair<Tensor, TokenSequence> perturb_joint(const InputPair& pair,
                                                      const PerturbationSpec& spec,
                                                      const StreamKey& key) {
  auto r = perturb_joint_traced(pair, spec, key);
  return {std::move(r.image), std::move(r.text)};
}

// Maps a standard normal to a value in the range by its quantile.
inline double quantile_map(double z, const Range& r) {
  return r.low + (r.high - r.low) * normal_cdf(z);
}

inline SynonymTable synonym_table_from_json(const json& j) {
  SynonymTable table;
  try {
    for (const auto& [k, v] : j.items()) {
      table[std::stoll(k)] = v.get<std::vector<std::int64_t>>();
    }
  } catch (const std::exception& e) {
    fail(ErrorCode::kConfig, std::string("synonym table: ") + e.what());
  }
  return table;
}

inline json synonym_table_to_json(const SynonymTable& table) {
  json j = json::object();
  for (const auto& [k, v] : table) j[std::to_string(k)] = v;
  return j;
}

inline json perturbation_spec_to_json(const PerturbationSpec& s) {
  json j;
  j["image_noise_std_range"] = {s.image_noise_std.low, s.image_noise_std.high};
  j["image_shift_max"] = s.image_shift_max;
  j["image_scale_range"] = {s.image_scale.low, s.image_scale.high};
  j["text_swap_prob"] = s.text_swap_prob;
  j["synonym_table"] = synonym_table_to_json(s.synonym_table);
  if (s.text_subset_keep) {
    j["text_subset_keep"] = {s.text_subset_keep->first, s.text_subset_keep->second};
  }
  if (s.segment_separator) j["segment_separator"] = *s.segment_separator;
  j["joint_correlation"] = s.joint_correlation;
  j["n_resamples"] = s.n_resamples;
  return j;
}

inline PerturbationSpec perturbation_spec_from_json(const json& j,
                                                    const fs::path& base_dir = {}) {
  PerturbationSpec s;
  try {
    auto range = [&](const char* name, Range def) {
      if (!j.contains(name)) return def;
      const auto v = j.at(name).get<std::vector<double>>();
      require(v.size() == 2, ErrorCode::kConfig, std::string(name) + " needs [low, high]");
      return Range{v[0], v[1]};
    };
    s.image_noise_std = range("image_noise_std_range", s.image_noise_std);
    s.image_scale = range("image_scale_range", s.image_scale);
    s.image_shift_max = j.value("image_shift_max", 0);
    s.text_swap_prob = j.value("text_swap_prob", 0.0);
    if (j.contains("synonym_table")) {
      const auto& t = j.at("synonym_table");
      if (t.is_string()) {
        s.synonym_table = synonym_table_from_json(read_json_file(base_dir / t.get<std::string>()));
      } else {
        s.synonym_table = synonym_table_from_json(t);
      }
    }
    if (j.contains("text_subset_keep")) {
      const auto v = j.at("text_subset_keep").get<std::vector<std::size_t>>();
      require(v.size() == 2, ErrorCode::kConfig, "text_subset_keep needs [min, max]");
      s.text_subset_keep = std::make_pair(v[0], v[1]);
    }
    if (j.contains("segment_separator")) {
      s.segment_separator = j.at("segment_separator").get<std::int64_t>();
    }
    s.joint_correlation = j.value("joint_correlation", 0.0);
    s.n_resamples = j.value("n_resamples", std::size_t{20});
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("perturbation spec: ") + e.what());
  }
  validate(s);
  return s;
}

}  // namespace mupm
