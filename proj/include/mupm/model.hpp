#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mupm/error.hpp"
#include "mupm/linalg.hpp"
#include "mupm/types.hpp"

namespace mupm {

enum class ModelKind {
  kSyntheticLinear,
  kSyntheticSoftmax,
  kSyntheticSaturating,
  kReplay,
  kHttp,
};

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kSyntheticLinear: return "synthetic-linear";
    case ModelKind::kSyntheticSoftmax: return "synthetic-softmax";
    case ModelKind::kSyntheticSaturating: return "synthetic-saturating";
    case ModelKind::kReplay: return "replay";
    case ModelKind::kHttp: return "http";
  }
  return "synthetic-linear";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "synthetic-linear") return ModelKind::kSyntheticLinear;
  if (s == "synthetic-softmax") return ModelKind::kSyntheticSoftmax;
  if (s == "synthetic-saturating") return ModelKind::kSyntheticSaturating;
  if (s == "replay") return ModelKind::kReplay;
  if (s == "http") return ModelKind::kHttp;
  fail(ErrorCode::kConfig, "unknown model kind '" + std::string(s) + "'");
}

inline bool is_synthetic(ModelKind k) {
  return k == ModelKind::kSyntheticLinear || k == ModelKind::kSyntheticSoftmax ||
         k == ModelKind::kSyntheticSaturating;
}

struct ModelSpec {
  ModelKind kind = ModelKind::kSyntheticLinear;

  // Synthetic kinds. W is K x dim_image, V is K x dim_text, c has length K.
  Matrix W;
  Matrix V;
  std::vector<double> c;
  double q = 0.0;           // softmax interaction coefficient
  std::size_t u_index = 0;  // interaction direction u = e_{u_index}
  double g = 1.0;           // saturating gain
  // Real value of a token id as seen by the text weights; ids absent from the
  // table map to their own numeric value.
  std::map<std::int64_t, double> token_values;

  // replay
  std::string replay_path;

  // http
  std::string base_url;
  double timeout_ms = 5000.0;
  int retries = 3;
  int max_in_flight = 4;

  std::size_t output_dim() const { return W.rows; }
};

inline void validate(const ModelSpec& spec) {
  if (is_synthetic(spec.kind)) {
    require(spec.W.rows >= 1, ErrorCode::kInvalidSpec, "W must have at least one row");
    require(spec.V.rows == spec.W.rows, ErrorCode::kInvalidSpec,
            "W and V must have the same number of rows (K)");
    require(spec.c.size() == spec.W.rows, ErrorCode::kInvalidSpec,
            "bias c must have length K");
    require(spec.W.cols >= 1 && spec.V.cols >= 1, ErrorCode::kInvalidSpec,
            "W and V must have at least one column");
    if (spec.kind == ModelKind::kSyntheticSoftmax) {
      require(spec.u_index < spec.W.rows, ErrorCode::kInvalidSpec,
              "u_index must be below K");
    }
  }
  if (spec.kind == ModelKind::kHttp) {
    require(!spec.base_url.empty(), ErrorCode::kInvalidSpec, "http model needs base_url");
    require(spec.timeout_ms > 0, ErrorCode::kInvalidSpec, "timeout must be positive");
    require(spec.retries >= 0, ErrorCode::kInvalidSpec, "retry count must be >= 0");
    require(spec.max_in_flight >= 1, ErrorCode::kInvalidSpec,
            "max_in_flight must be >= 1");
  }
  if (spec.kind == ModelKind::kReplay) {
    require(!spec.replay_path.empty(), ErrorCode::kInvalidSpec,
            "replay model needs a path");
  }
}

// A black-box two-modality predictor. Implementations must be safe to call
// from several threads at once.
class Model {
 public:
  virtual ~Model() = default;
  virtual OutputVector evaluate(const InputPair& pair, const EvalKey& key) const = 0;
  virtual ModelKind kind() const = 0;
};

struct Jacobians {
  Matrix image;  // K x dim_image
  Matrix text;   // K x dim_text (with respect to text features)
};

namespace detail {

inline std::vector<double> softmax(const std::vector<double>& z) {
  double zmax = z.front();
  for (double v : z) zmax = std::max(zmax, v);
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// J = (diag(p) - p p^T) * D
inline Matrix softmax_chain(const std::vector<double>& p, const Matrix& d) {
  Matrix out(d.rows, d.cols);
  for (std::size_t j = 0; j < d.cols; ++j) {
    double pd = 0.0;
    for (std::size_t k = 0; k < d.rows; ++k) pd += p[k] * d(k, j);
    for (std::size_t i = 0; i < d.rows; ++i) out(i, j) = p[i] * (d(i, j) - pd);
  }
  return out;
}

}  // namespace detail

// Analytic models with known derivatives, operating on the flattened image and
// on a fixed-length feature vector derived from the text tokens.
class SyntheticModel final : public Model {
 public:
  explicit SyntheticModel(ModelSpec spec) : spec_(std::move(spec)) {
    require(is_synthetic(spec_.kind), ErrorCode::kUnsupportedKind,
            "SyntheticModel needs a synthetic kind");
    validate(spec_);
  }

  const ModelSpec& spec() const { return spec_; }
  ModelKind kind() const override { return spec_.kind; }
  std::size_t output_dim() const { return spec_.W.rows; }
  std::size_t image_dim() const { return spec_.W.cols; }
  std::size_t text_dim() const { return spec_.V.cols; }

  double token_value(std::int64_t token) const {
    auto it = spec_.token_values.find(token);
    return it == spec_.token_values.end() ? static_cast<double>(token) : it->second;
  }

  // Position j holds the value of token j; missing positions are zero.
  std::vector<double> text_features(const TokenSequence& text) const {
    std::vector<double> y(text_dim(), 0.0);
    const std::size_t n = std::min(text.size(), y.size());
    for (std::size_t j = 0; j < n; ++j) y[j] = token_value(text[j]);
    return y;
  }

  std::vector<double> evaluate_features(std::span<const double> x,
                                        std::span<const double> y) const {
    require(x.size() == image_dim(), ErrorCode::kDimensionMismatch,
            "image has " + std::to_string(x.size()) + " elements, model expects " +
                std::to_string(image_dim()));
    require(y.size() == text_dim(), ErrorCode::kDimensionMismatch,
            "text feature length does not match model");
    std::vector<double> z = affine(x, y);
    std::vector<double> out;
    switch (spec_.kind) {
      case ModelKind::kSyntheticLinear:
        out = std::move(z);
        break;
      case ModelKind::kSyntheticSoftmax: {
        const double sx = std::accumulate(x.begin(), x.end(), 0.0);
        const double sy = std::accumulate(y.begin(), y.end(), 0.0);
        z[spec_.u_index] += spec_.q * sx * sy;
        out = detail::softmax(z);
        break;
      }
      case ModelKind::kSyntheticSaturating: {
        for (double& v : z) v = std::tanh(spec_.g * v);
        out = detail::softmax(z);
        break;
      }
      default:
        fail(ErrorCode::kUnsupportedKind, "not a synthetic kind");
    }
    for (double v : out) {
      require(std::isfinite(v), ErrorCode::kNonFiniteOutput, "model produced non-finite output");
    }
    return out;
  }

  OutputVector evaluate(const InputPair& pair, const EvalKey& /*key*/) const override {
    OutputVector out;
    out.values = evaluate_features(pair.image.data, text_features(pair.text));
    out.hard = false;
    return out;
  }

  Jacobians jacobians(std::span<const double> x, std::span<const double> y) const {
    require(x.size() == image_dim() && y.size() == text_dim(),
            ErrorCode::kDimensionMismatch, "input dimensions do not match model");
    Jacobians j{spec_.W, spec_.V};
    switch (spec_.kind) {
      case ModelKind::kSyntheticLinear:
        return j;
      case ModelKind::kSyntheticSoftmax: {
        const double sx = std::accumulate(x.begin(), x.end(), 0.0);
        const double sy = std::accumulate(y.begin(), y.end(), 0.0);
        std::vector<double> z = affine(x, y);
        z[spec_.u_index] += spec_.q * sx * sy;
        const auto p = detail::softmax(z);
        for (std::size_t col = 0; col < j.image.cols; ++col) {
          j.image(spec_.u_index, col) += spec_.q * sy;
        }
        for (std::size_t col = 0; col < j.text.cols; ++col) {
          j.text(spec_.u_index, col) += spec_.q * sx;
        }
        return {detail::softmax_chain(p, j.image), detail::softmax_chain(p, j.text)};
      }
      case ModelKind::kSyntheticSaturating: {
        std::vector<double> z = affine(x, y);
        std::vector<double> t(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) {
          const double th = std::tanh(spec_.g * z[k]);
          t[k] = th;
          const double scale = spec_.g * (1.0 - th * th);
          for (std::size_t col = 0; col < j.image.cols; ++col) j.image(k, col) *= scale;
          for (std::size_t col = 0; col < j.text.cols; ++col) j.text(k, col) *= scale;
        }
        const auto p = detail::softmax(t);
        return {detail::softmax_chain(p, j.image), detail::softmax_chain(p, j.text)};
      }
      default:
        fail(ErrorCode::kUnsupportedKind, "not a synthetic kind");
    }
  }

 private:
  std::vector<double> affine(std::span<const double> x, std::span<const double> y) const {
    std::vector<double> z = matvec(spec_.W, x);
    const std::vector<double> vy = matvec(spec_.V, y);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += vy[k] + spec_.c[k];
    return z;
  }

  ModelSpec spec_;
};

// Exact Jacobians at the pair's inputs; only analytic kinds have them.
inline Jacobians true_derivatives(const Model& model, const InputPair& pair) {
  const auto* synth = dynamic_cast<const SyntheticModel*>(&model);
  if (synth == nullptr) {
    fail(ErrorCode::kUnsupportedKind,
         std::string("true derivatives unavailable for kind ") +
             std::string(to_string(model.kind())));
  }
  return synth->jacobians(pair.image.data, synth->text_features(pair.text));
}

}  // namespace mupm
