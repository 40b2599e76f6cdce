#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "mupm/types.hpp"

namespace mupm {

enum class Modality : std::uint8_t { kImage = 1, kText = 2 };

// Scope of a stream. Replicate streams belong to one branch; the per-sample
// intensity stream is shared by every branch and replicate of a sample.
enum class StreamScope : std::uint8_t {
  kImageOnly = 1,
  kTextOnly = 2,
  kJoint = 3,
  kSampleIntensity = 4,
  kShuffle = 5,
  kLabelNoise = 6,
};

inline StreamScope scope_of(Branch b) {
  switch (b) {
    case Branch::kImageOnly: return StreamScope::kImageOnly;
    case Branch::kTextOnly: return StreamScope::kTextOnly;
    case Branch::kJoint: return StreamScope::kJoint;
  }
  return StreamScope::kJoint;
}

struct StreamKey {
  std::uint64_t global_seed = 0;
  std::string sample_id;
  StreamScope scope = StreamScope::kJoint;
  std::uint64_t replicate = 0;
  Modality modality = Modality::kImage;
  // Distinguishes independent repetitions of a whole estimation (benchmark
  // repeats); 0 is the primary estimation.
  std::uint64_t repeat = 0;

  StreamKey with_modality(Modality m) const {
    StreamKey k = *this;
    k.modality = m;
    return k;
  }

  StreamKey intensity_key() const {
    StreamKey k;
    k.global_seed = global_seed;
    k.sample_id = sample_id;
    k.scope = StreamScope::kSampleIntensity;
    k.modality = modality;
    return k;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Fnv1a {
 public:
  void add_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void add_u64(std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    add_bytes(bytes, 8);
  }
  void add_string(std::string_view s) {
    add_u64(s.size());
    add_bytes(s.data(), s.size());
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace detail

inline std::uint64_t derive_seed(const StreamKey& key) {
  detail::Fnv1a h;
  h.add_u64(key.global_seed);
  h.add_string(key.sample_id);
  h.add_u64(static_cast<std::uint64_t>(key.scope));
  h.add_u64(key.replicate);
  h.add_u64(static_cast<std::uint64_t>(key.modality));
  h.add_u64(key.repeat);
  return detail::splitmix64(h.value());
}

// Deterministic random stream. All transforms from raw 64-bit words are coded
// here rather than through <random> distributions, whose algorithms are
// implementation-defined.
class RngStream {
 public:
  explicit RngStream(const StreamKey& key) : key_(key), engine_(derive_seed(key)) {}
  explicit RngStream(std::uint64_t seed) : engine_(detail::splitmix64(seed)) {}

  const StreamKey& key() const { return key_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on the open interval (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], unbiased by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
  }

  // Standard normal via Box-Muller; one variate per call.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  StreamKey key_;
  std::mt19937_64 engine_;
};

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

// Inverse standard normal CDF: rational initial guess refined by Halley steps.
inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, ErrorCode::kInvalidArgument,
          "normal_quantile requires p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

}  // namespace mupm
