#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "mupm/analysis.hpp"
#include "mupm/replay.hpp"
#include "mupm/synthetic_data.hpp"

using namespace mupm;

namespace {

UncertaintyRecord record(std::string id, double vi, double vt, double vj) {
  UncertaintyRecord r;
  r.sample_id = std::move(id);
  r.var_image = {vi};
  r.var_text = {vt};
  r.var_joint = {vj};
  r.cov_term = {std::sqrt(vi * vt)};
  r.paired_corr = {0.0};
  r.degenerate = {false};
  return r;
}

std::vector<UncertaintyRecord> paper_records() {
  RngStream r(13);
  std::vector<UncertaintyRecord> out;
  for (int i = 0; i < 40; ++i) {
    const double vi = r.uniform(0.05, 0.2), vt = r.uniform(0.05, 0.2);
    out.push_back(record("r" + std::to_string(i), vi, vt,
                         0.24 * vi + 0.90 * vt - 0.20 * std::sqrt(vi * vt)));
  }
  return out;
}

Scenario text_reader(std::size_t n) {
  ScenarioOptions o;
  o.num_classes = 3;
  o.image_dim = 1;
  o.text_dim = 2;
  o.num_samples = n;
  o.W = Matrix(3, 1);
  o.V = Matrix::from_rows({{1.0, 0.0}, {-0.5, std::sqrt(0.75)}, {-0.5, -std::sqrt(0.75)}});
  return make_scenario(o);
}

// Wilson score interval at 95%.
std::pair<double, double> wilson(double phat, double n) {
  const double z = 1.959963984540054;
  const double centre = (phat + z * z / (2 * n)) / (1 + z * z / n);
  const double half = z / (1 + z * z / n) * std::sqrt(phat * (1 - phat) / n + z * z / (4 * n * n));
  return {centre - half, centre + half};
}

}  // namespace

TEST(Sweep, ConstantModelIsZero) {
  auto s = test::scalar_setup(0.0, 0.0, 0.1, 0.2, 0.5);
  s.model.c = {2.0};
  SyntheticModel m(s.model);
  MupmFit fit;
  fit.beta = {1, 1, 1};
  EstimationConfig cfg;
  const auto res = sweep_resample_size(m, {s.pair}, s.pspec, cfg, fit, kDefaultSweepSizes, 1);
  ASSERT_EQ(res.points.size(), 8u);
  for (const auto& p : res.points) {
    EXPECT_EQ(p.mean_norm, 0.0);
    EXPECT_EQ(p.mean_abs_deviation, 0.0);
    EXPECT_EQ(p.std_norm, 0.0);
  }
  EXPECT_EQ(res.benchmark_mean, 0.0);
}

TEST(Sweep, RejectsBadLists) {
  const auto s = test::scalar_setup(1.0, 1.0, 0.1, 0.2, 0.5);
  SyntheticModel m(s.model);
  EXPECT_THROW(sweep_resample_size(m, {s.pair}, s.pspec, {}, {}, {5, 3}, 1), Error);
  EXPECT_THROW(sweep_resample_size(m, {s.pair}, s.pspec, {}, {}, {1, 3}, 1), Error);
}

TEST(Sweep, SpreadShrinksWithResampleSize) {
  ScenarioOptions o;
  o.W = Matrix::from_rows({{1.0}});
  o.V = Matrix::from_rows({{1.0}});
  o.image_noise_std = {0.05, 0.05};
  o.text_gap = {0.1, 0.1};
  o.num_samples = 40;
  const auto sc = make_scenario(o);
  SyntheticModel m(sc.model);
  MupmFit fit;
  fit.beta = {1, 1, 0};
  EstimationConfig cfg;
  const auto res = sweep_resample_size(m, sc.data, sc.perturbation, cfg, fit, {2, 23}, 5);
  EXPECT_LT(res.points[1].std_norm, res.points[0].std_norm);
  const std::string csv = sweep_to_csv(res);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Redundancy, PaperScenarioImageNotRedundant) {
  const auto recs = paper_records();
  const auto fit = fit_mupm(recs, Reduction::kPerDimension);
  EXPECT_NEAR(fit.beta[0], 0.24, 1e-10);
  const auto rep = detect_redundancy(fit, recs);
  EXPECT_EQ(rep.image.verdict, Verdict::kNotRedundant);
  EXPECT_EQ(rep.text.verdict, Verdict::kNotRedundant);
  EXPECT_NEAR(rep.covariance_contribution, -0.20 * mean([&] {
                std::vector<double> c;
                for (const auto& r : recs) c.push_back(r.cov_term[0]);
                return c;
              }()),
              1e-10);
}

TEST(Redundancy, ZeroRecordsInconclusive) {
  MupmFit fit;
  fit.beta = {0.5, 0.5, 0.5};
  const auto rep = detect_redundancy(fit, {record("a", 0, 0, 0), record("b", 0, 0, 0)});
  EXPECT_EQ(rep.image.verdict, Verdict::kInconclusive);
  EXPECT_EQ(rep.text.verdict, Verdict::kInconclusive);
  EXPECT_EQ(rep.covariance_contribution, 0.0);
  EXPECT_EQ(rep.image.share, 0.0);
}

TEST(Redundancy, TwoThresholdRule) {
  // text coefficient tiny, covariance contribution tiny -> redundant
  std::vector<UncertaintyRecord> recs;
  RngStream r(3);
  for (int i = 0; i < 30; ++i) {
    const double vi = r.uniform(0.05, 0.2), vt = r.uniform(0.05, 0.2);
    recs.push_back(record(std::to_string(i), vi, vt, vi + 0.001 * vt));
  }
  MupmFit fit;
  fit.beta = {1.0, 0.001, 0.0};
  auto rep = detect_redundancy(fit, recs);
  EXPECT_EQ(rep.text.verdict, Verdict::kRedundant);
  EXPECT_EQ(rep.image.verdict, Verdict::kInconclusive);
  // a large covariance contribution alone leaves the text verdict open
  fit.beta = {1.0, 0.001, 0.5};
  rep = detect_redundancy(fit, recs);
  EXPECT_EQ(rep.text.verdict, Verdict::kInconclusive);
  EXPECT_EQ(rep.image.verdict, Verdict::kNotRedundant);
}

TEST(Redundancy, InvariantToOrderAndIds) {
  auto recs = paper_records();
  const auto fit = fit_mupm(recs, Reduction::kPerDimension);
  const auto a = detect_redundancy(fit, recs);
  std::reverse(recs.begin(), recs.end());
  for (auto& r : recs) r.sample_id = "z" + r.sample_id;
  const auto b = detect_redundancy(fit, recs);
  EXPECT_EQ(a.image.verdict, b.image.verdict);
  EXPECT_EQ(a.text.verdict, b.text.verdict);
  EXPECT_NEAR(a.image.standardized_coefficient, b.image.standardized_coefficient, 1e-12);
}

TEST(Ablation, TextReaderIgnoresImageRemoval) {
  const auto sc = text_reader(300);
  SyntheticModel m(sc.model);
  const auto folds = kfold_split(sc.data.size(), 5, 1);
  const auto res = ablation_study(m, sc.data, folds);
  EXPECT_EQ(res.text_only.fold_accuracy, res.both.fold_accuracy);
  EXPECT_EQ(res.both.mean, 1.0);
  const auto [lo, hi] = wilson(res.image_only.pooled, 300);
  EXPECT_LE(lo, 1.0 / 3.0);
  EXPECT_GE(hi, 1.0 / 3.0);
}

TEST(Ablation, FoldAveragesAndPooledAccuracy) {
  const auto sc = text_reader(100);
  SyntheticModel m(sc.model);
  const auto folds = kfold_split(sc.data.size(), 5, 2);
  const auto acc = ablate_modality(m, sc.data, AblationMode::kImageOnly, folds);
  EXPECT_NEAR(acc.mean, mean(acc.fold_accuracy), 1e-15);
  EXPECT_NEAR(acc.pooled, acc.mean, 1e-15);
  for (double a : acc.fold_accuracy) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
  const auto csv = ablation_to_csv(ablation_study(m, sc.data, folds));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 16);
}

TEST(Ablation, NeutralElementsAreConfigurable) {
  InputPair p;
  p.image.shape = {2};
  p.image.data = {3, 4};
  p.text = {7, 8};
  const auto a = ablate_input(p, AblationMode::kImageOnly, {0.5, 99});
  EXPECT_EQ(a.text, TokenSequence{99});
  EXPECT_EQ(a.image.data, p.image.data);
  const auto b = ablate_input(p, AblationMode::kTextOnly, {0.5, 99});
  EXPECT_EQ(b.image.data, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(b.text, p.text);
}

TEST(Probe, LinearModelIsExact) {
  ScenarioOptions o;
  o.num_classes = 2;
  o.image_dim = 3;
  o.text_dim = 2;
  o.num_samples = 30;
  // dyadic weights keep the central differences exact
  o.W = Matrix::from_rows({{0.5, -1.25, 2.0}, {0.75, 0.25, -0.5}});
  o.V = Matrix::from_rows({{1.5, -0.5}, {0.125, 1.0}});
  const auto sc = make_scenario(o);
  SyntheticModel m(sc.model);
  const auto a = probe_derivatives(m, sc.data, std::ldexp(1.0, -13), &sc.perturbation, 4);
  EXPECT_EQ(a.image.std, 0.0);
  EXPECT_EQ(a.text.std, 0.0);
  EXPECT_EQ(a.image.mean, (0.5 + 1.25 + 2.0 + 0.75 + 0.25 + 0.5) / 6.0);
  EXPECT_EQ(a.text.mean, (1.5 + 0.5 + 0.125 + 1.0) / 4.0);
  const auto b = probe_derivatives(m, sc.data, std::ldexp(1.0, -14));
  EXPECT_LT(std::abs(a.image.mean - b.image.mean), 1e-10);
  EXPECT_LT(std::abs(a.text.mean - b.text.mean), 1e-10);
}

TEST(Probe, MatchesTrueDerivatives) {
  ScenarioOptions o;
  o.kind = ModelKind::kSyntheticSoftmax;
  o.num_classes = 3;
  o.image_dim = 2;
  o.text_dim = 2;
  o.q = 0.3;
  o.num_samples = 10;
  const auto sc = make_scenario(o);
  SyntheticModel m(sc.model);
  const auto probe = probe_derivatives(m, sc.data, 1e-4);
  for (std::size_t i = 0; i < sc.data.size(); ++i) {
    const auto j = true_derivatives(m, sc.data[i]);
    double si = 0.0;
    for (double v : j.image.data) si += std::abs(v);
    si /= static_cast<double>(j.image.data.size());
    EXPECT_LT(std::abs(probe.image_per_sample[i] - si), 1e-6 * std::max(si, 1e-3));
  }
}

TEST(Probe, NeedsContinuousInputs) {
  ReplayModel replay(ReplayTable{});
  try {
    probe_derivatives(replay, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedKind);
  }
}
