#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <set>

#include "mupm/linalg.hpp"
#include "mupm/rng.hpp"

using namespace mupm;

namespace {

StreamKey key(std::string id, std::uint64_t rep = 0) {
  StreamKey k;
  k.global_seed = 42;
  k.sample_id = std::move(id);
  k.scope = StreamScope::kImageOnly;
  k.replicate = rep;
  return k;
}

}  // namespace

TEST(Rng, SameKeySameSequence) {
  RngStream a(key("s1", 3)), b(key("s1", 3));
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, EveryKeyFieldChangesTheStream) {
  const StreamKey base = key("s1", 3);
  std::vector<StreamKey> variants(6, base);
  variants[0].global_seed = 43;
  variants[1].sample_id = "s2";
  variants[2].scope = StreamScope::kTextOnly;
  variants[3].replicate = 4;
  variants[4].modality = Modality::kText;
  variants[5].repeat = 1;
  std::set<std::uint64_t> seeds{derive_seed(base)};
  for (const auto& v : variants) seeds.insert(derive_seed(v));
  EXPECT_EQ(seeds.size(), 7u);
}

TEST(Rng, UniformMomentsAndRange) {
  RngStream r(7);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    v.push_back(u);
  }
  const auto s = mean_std(v);
  EXPECT_NEAR(s.mean, 0.5, 0.005);
  EXPECT_NEAR(s.std, std::sqrt(1.0 / 12.0), 0.005);
}

TEST(Rng, UniformIntCoversRangeEvenly) {
  RngStream r(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = r.uniform_int(-3, 3);
    ASSERT_GE(v, -3);
    ASSERT_LE(v, 3);
    ++counts[static_cast<std::size_t>(v + 3)];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
  EXPECT_EQ(r.uniform_int(5, 5), 5);
}

TEST(Rng, NormalMoments) {
  RngStream r(11);
  std::vector<double> v;
  for (int i = 0; i < 200000; ++i) v.push_back(r.normal());
  const auto s = mean_std(v);
  EXPECT_NEAR(s.mean, 0.0, 0.01);
  EXPECT_NEAR(s.std, 1.0, 0.01);
  double m4 = 0.0;
  for (double x : v) m4 += x * x * x * x;
  EXPECT_NEAR(m4 / v.size(), 3.0, 0.1);
}

TEST(Rng, NormalCdfAndQuantileMatchBoost) {
  const boost::math::normal_distribution<double> nd;
  for (double z = -8.0; z <= 8.0; z += 0.25) {
    EXPECT_NEAR(normal_cdf(z), boost::math::cdf(nd, z), 1e-15);
  }
  for (double p : {1e-12, 1e-6, 0.001, 0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98, 0.999, 1 - 1e-9}) {
    EXPECT_NEAR(normal_quantile(p), boost::math::quantile(nd, p),
                1e-9 * std::max(1.0, std::abs(boost::math::quantile(nd, p))))
        << "p=" << p;
  }
  EXPECT_THROW(normal_quantile(0.0), Error);
  EXPECT_THROW(normal_quantile(1.0), Error);
}
