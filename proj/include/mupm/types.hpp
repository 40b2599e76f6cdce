#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mupm/error.hpp"

namespace mupm {

inline constexpr std::size_t kDefaultOutputDim = 11;

// Dense row-major real tensor with an explicit shape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return data.size(); }

  std::size_t shape_product() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  bool operator==(const Tensor&) const = default;
};

using TokenSequence = std::vector<std::int64_t>;

struct InputPair {
  std::string id;
  Tensor image;
  TokenSequence text;
  int label = 0;

  bool operator==(const InputPair&) const = default;
};

inline void validate(const InputPair& pair, std::size_t num_classes) {
  require(pair.image.size() >= 1, ErrorCode::kInvalidArgument,
          "sample '" + pair.id + "': image has no elements");
  require(pair.image.shape_product() == pair.image.size(),
          ErrorCode::kDimensionMismatch,
          "sample '" + pair.id + "': image shape does not match data length");
  for (double v : pair.image.data) {
    require(std::isfinite(v), ErrorCode::kInvalidArgument,
            "sample '" + pair.id + "': non-finite image entry");
  }
  require(!pair.text.empty(), ErrorCode::kInvalidArgument,
          "sample '" + pair.id + "': empty text");
  for (auto t : pair.text) {
    require(t >= 0, ErrorCode::kInvalidArgument,
            "sample '" + pair.id + "': negative token id");
  }
  require(pair.label >= 0 && static_cast<std::size_t>(pair.label) < num_classes,
          ErrorCode::kInvalidArgument,
          "sample '" + pair.id + "': label outside [0, K)");
}

struct OutputVector {
  std::vector<double> values;
  bool hard = false;

  std::size_t size() const { return values.size(); }
};

// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline OutputVector one_hot(const OutputVector& soft) {
  OutputVector out;
  out.values.assign(soft.values.size(), 0.0);
  if (!soft.values.empty()) out.values[argmax(soft.values)] = 1.0;
  out.hard = true;
  return out;
}

enum class Branch { kImageOnly, kTextOnly, kJoint };

inline constexpr Branch kAllBranches[] = {Branch::kImageOnly, Branch::kTextOnly,
                                          Branch::kJoint};

inline std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::kImageOnly: return "image-only";
    case Branch::kTextOnly: return "text-only";
    case Branch::kJoint: return "joint";
  }
  return "joint";
}

inline Branch parse_branch(std::string_view s) {
  if (s == "image-only") return Branch::kImageOnly;
  if (s == "text-only") return Branch::kTextOnly;
  if (s == "joint") return Branch::kJoint;
  fail(ErrorCode::kParseFailure, "unknown branch '" + std::string(s) + "'");
}

// Identifies one replicate evaluation. Replay adapters key on it; analytic
// adapters ignore it.
struct EvalKey {
  std::string sample_id;
  Branch branch = Branch::kJoint;
  std::size_t replicate = 0;

  bool operator==(const EvalKey&) const = default;
};

struct EvalKeyHash {
  std::size_t operator()(const EvalKey& k) const {
    std::size_t h = std::hash<std::string>{}(k.sample_id);
    h ^= std::hash<int>{}(static_cast<int>(k.branch)) + 0x9e3779b97f4a7c15ULL +
         (h << 6) + (h >> 2);
    h ^= std::hash<std::size_t>{}(k.replicate) + 0x9e3779b97f4a7c15ULL +
         (h << 6) + (h >> 2);
    return h;
  }
};

using Dataset = std::vector<InputPair>;

}  // namespace mupm
