#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mupm/model.hpp"
#include "mupm/perturbation.hpp"
#include "mupm/rng.hpp"
#include "mupm/types.hpp"

namespace mupm {

// Generator for synthetic benchmark problems with known structure.
//
// Every text position j of sample i holds its own base token with exactly one
// synonym. The model reads the base token as `base_value` and the synonym as
// base_value + gap_i, so a swap with probability p moves text feature j by a
// Bernoulli(p) multiple of gap_i: variance gap_i^2 p (1 - p). Gaps are drawn
// log-uniformly per sample, which makes the text-only uncertainty vary across
// samples just as the per-sample noise std does for the image.
struct ScenarioOptions {
  ModelKind kind = ModelKind::kSyntheticLinear;
  std::size_t num_classes = 1;
  std::size_t image_dim = 1;
  std::size_t text_dim = 1;
  std::size_t num_samples = 100;
  std::uint64_t seed = 1;

  // Fixed weights; drawn N(0, weight_scale^2) when empty.
  std::optional<Matrix> W;
  std::optional<Matrix> V;
  double weight_scale = 1.0;
  double q = 0.0;
  double g = 1.0;

  double image_value_scale = 1.0;
  Range image_noise_std{0.02, 0.2};
  double text_swap_prob = 0.5;
  Range text_gap{0.04, 0.4};  // log-uniform per sample
  double joint_correlation = 0.0;
  std::size_t n_resamples = 20;

  // Labels are argmax of the clean output, replaced by a uniform class with
  // this probability.
  double label_noise = 0.0;
};

struct Scenario {
  ModelSpec model;
  PerturbationSpec perturbation;
  Dataset data;
  std::vector<double> text_gaps;
};

inline Matrix random_matrix(std::size_t rows, std::size_t cols, double scale, RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

inline Scenario make_scenario(const ScenarioOptions& o) {
  Scenario s;
  StreamKey key;
  key.global_seed = o.seed;
  key.sample_id = "scenario";
  key.scope = StreamScope::kLabelNoise;
  RngStream rng(key);

  s.model.kind = o.kind;
  s.model.W = o.W ? *o.W : random_matrix(o.num_classes, o.image_dim, o.weight_scale, rng);
  s.model.V = o.V ? *o.V : random_matrix(o.num_classes, o.text_dim, o.weight_scale, rng);
  s.model.c.assign(s.model.W.rows, 0.0);
  s.model.q = o.q;
  s.model.g = o.g;

  s.perturbation.image_noise_std = o.image_noise_std;
  s.perturbation.text_swap_prob = o.text_swap_prob;
  s.perturbation.joint_correlation = o.joint_correlation;
  s.perturbation.n_resamples = o.n_resamples;

  const double log_lo = std::log(o.text_gap.low);
  const double log_hi = std::log(o.text_gap.high);
  std::int64_t next_token = 1000;
  for (std::size_t i = 0; i < o.num_samples; ++i) {
    InputPair p;
    p.id = "s" + std::to_string(i);
    p.image.shape = {o.image_dim};
    for (std::size_t e = 0; e < o.image_dim; ++e) {
      p.image.data.push_back(o.image_value_scale * rng.normal());
    }
    const double gap = o.text_gap.low == o.text_gap.high
                           ? o.text_gap.low
                           : std::exp(rng.uniform(log_lo, log_hi));
    s.text_gaps.push_back(gap);
    for (std::size_t j = 0; j < o.text_dim; ++j) {
      const std::int64_t base = next_token++;
      const std::int64_t syn = next_token++;
      const double value = 0.5 * rng.normal();
      s.model.token_values[base] = value;
      s.model.token_values[syn] = value + gap;
      s.perturbation.synonym_table[base] = {syn};
      p.text.push_back(base);
    }
    s.data.push_back(std::move(p));
  }
  SyntheticModel model(s.model);
  for (auto& p : s.data) {
    const auto out = model.evaluate(p, {});
    p.label = static_cast<int>(argmax(out.values));
    if (o.label_noise > 0.0 && rng.uniform() < o.label_noise) {
      p.label = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(o.num_classes) - 1));
    }
  }
  return s;
}

// Output correlation between an image noise element and a text swap event
// driven by latents with correlation rho_in, for swap probability p:
//   corr(Z, 1{Phi(H) > 1 - p}) = rho_in * phi(Phi^{-1}(1 - p)) / sqrt(p (1 - p)).
inline double swap_correlation_factor(double p) {
  const double c = normal_quantile(1.0 - p);
  const double density = std::exp(-0.5 * c * c) / std::sqrt(2.0 * std::numbers::pi);
  return density / std::sqrt(p * (1.0 - p));
}

}  // namespace mupm
