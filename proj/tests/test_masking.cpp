#include "trajkit/masking.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "oracle_rdp.hpp"
#include "trajkit/errors.hpp"
#include "trajkit/geo.hpp"
#include "trajkit/rng.hpp"
#include "trajkit/trajectory.hpp"

using namespace trajkit;

namespace {

// Sawtooth east-west track: every interior point is a sharp turn, so the
// key-point strategy always has more candidates than the mask-count cap.
Trajectory zigzag(std::size_t n, double amplitude_m = 200.0) {
  Trajectory t;
  t.id = "zigzag";
  const double dlat = amplitude_m / geo::kMetersPerDegree;
  for (std::size_t i = 0; i < n; ++i)
    t.points.push_back({geo::round6(GeoPoint{116.30 + 2e-4 * static_cast<double>(i),
                                             39.90 + (i % 2 ? dlat : 0.0)}),
                        static_cast<double>(i)});
  return t;
}

Trajectory straight(std::size_t n) {
  Trajectory t;
  t.id = "straight";
  for (std::size_t i = 0; i < n; ++i)
    t.points.push_back(
        {geo::round6(GeoPoint{116.30 + 1e-4 * static_cast<double>(i), 39.90}),
         static_cast<double>(i)});
  return t;
}

void check_partition(const MaskedTrajectory& m) {
  const std::size_t n = m.base.points.size();
  ASSERT_EQ(m.masked.size() + m.visible.size(), n);
  std::vector<char> seen(n, 0);
  for (std::size_t i : m.masked) {
    ASSERT_LT(i, n);
    ASSERT_FALSE(seen[i]);
    seen[i] = 1;
  }
  for (std::size_t jj = 0; jj < m.visible.size(); ++jj) {
    const std::size_t i = m.visible[jj];
    ASSERT_LT(i, n);
    ASSERT_FALSE(seen[i]);
    seen[i] = 1;
    if (jj > 0) ASSERT_GT(i, m.visible[jj - 1]);
  }
  for (std::size_t i = 1; i < m.masked.size(); ++i) ASSERT_GT(m.masked[i], m.masked[i - 1]);
  ASSERT_EQ(m.visible.front(), 0u);  // anchor stays visible
  ASSERT_EQ(m.masked.front() == 0u, false);
}

}  // namespace

TEST(MaskCount, RoundsAndClamps) {
  EXPECT_EQ(mask_count(0.5, 20), 10u);
  EXPECT_EQ(mask_count(0.3, 10), 3u);
  EXPECT_EQ(mask_count(0.5, 9), 5u);    // llround(4.5) rounds half away from zero
  EXPECT_EQ(mask_count(0.004, 50), 1u);  // llround(0.2) == 0, clamped up
  EXPECT_EQ(mask_count(0.99, 10), 8u);  // ceiling clamp at n-2
  EXPECT_EQ(mask_count(0.5, 4), 2u);
}

TEST(MaskRandom, CountAndPartition) {
  Trajectory t = zigzag(20);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    MaskedTrajectory m = mask_random(t, 0.5, seed);
    EXPECT_EQ(m.masked.size(), 10u);
    check_partition(m);
  }
}

TEST(MaskRandom, IndexZeroNeverMasked) {
  Trajectory t = zigzag(12);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    MaskedTrajectory m = mask_random(t, 0.8, seed);
    EXPECT_EQ(std::count(m.masked.begin(), m.masked.end(), 0u), 0);
  }
}

TEST(MaskRandom, PerIndexFrequencyIsUniform) {
  // Each index in 1..n-1 is masked with probability c/(n-1).
  const std::size_t n = 12;
  Trajectory t = zigzag(n);
  const int trials = 10000;
  std::vector<int> hits(n, 0);
  for (int s = 0; s < trials; ++s) {
    MaskedTrajectory m = mask_random(t, 0.5, mix64(900, s));
    for (std::size_t i : m.masked) ++hits[i];
  }
  const double p = 6.0 / 11.0;
  const double sigma = std::sqrt(trials * p * (1 - p));
  EXPECT_EQ(hits[0], 0);
  for (std::size_t i = 1; i < n; ++i) EXPECT_NEAR(hits[i], trials * p, 5 * sigma) << i;
}

TEST(MaskRandom, DeterministicPerSeed) {
  Trajectory t = zigzag(30);
  MaskedTrajectory a = mask_random(t, 0.5, 7);
  MaskedTrajectory b = mask_random(t, 0.5, 7);
  EXPECT_EQ(a.masked, b.masked);
  MaskedTrajectory c = mask_random(t, 0.5, 8);
  EXPECT_NE(a.masked, c.masked);
}

TEST(MaskBlock, ContiguousRun) {
  Trajectory t = zigzag(40);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    MaskedTrajectory m = mask_block(t, 0.25, seed);
    ASSERT_EQ(m.masked.size(), 10u);
    check_partition(m);
    for (std::size_t i = 1; i < m.masked.size(); ++i)
      EXPECT_EQ(m.masked[i], m.masked[i - 1] + 1);
    EXPECT_GE(m.masked.front(), 1u);
    EXPECT_LE(m.masked.back(), t.points.size() - 1);
  }
}

TEST(MaskBlock, StartPositionCoversSupportUniformly) {
  // Valid starts for a block of 5 in n=15 are 1..10.
  const std::size_t n = 15;
  Trajectory t = zigzag(n);
  const int trials = 10000;
  std::vector<int> starts(n, 0);
  for (int s = 0; s < trials; ++s) ++starts[mask_block(t, 1.0 / 3.0, mix64(901, s)).masked[0]];
  EXPECT_EQ(starts[0], 0);
  const double expect = trials / 10.0;
  const double sigma = std::sqrt(trials * 0.1 * 0.9);
  for (std::size_t i = 1; i <= 10; ++i) EXPECT_NEAR(starts[i], expect, 5 * sigma) << i;
  for (std::size_t i = 11; i < n; ++i) EXPECT_EQ(starts[i], 0) << i;
}

TEST(MaskLastN, TailIndices) {
  Trajectory t = zigzag(10);
  MaskedTrajectory m = mask_last_n(t, 0.5);
  ASSERT_EQ(m.masked.size(), 5u);
  EXPECT_EQ(m.masked, (std::vector<std::size_t>{5, 6, 7, 8, 9}));
  check_partition(m);
}

TEST(MaskLastPoints, HorizonAndClamp) {
  Trajectory t = zigzag(30);
  MaskedTrajectory m = mask_last_points(t, 5);
  EXPECT_EQ(m.masked, (std::vector<std::size_t>{25, 26, 27, 28, 29}));
  // Horizon larger than n-2 clamps.
  Trajectory s = zigzag(6);
  MaskedTrajectory c = mask_last_points(s, 50);
  EXPECT_EQ(c.masked, (std::vector<std::size_t>{2, 3, 4, 5}));
}

TEST(Rdp, CollinearYieldsNothing) {
  EXPECT_TRUE(rdp_key_points(straight(20), 25.0).empty());
}

TEST(Rdp, TriangleApexFound) {
  Trajectory t;
  t.id = "tri";
  const double bump = 200.0 / geo::kMetersPerDegree;
  t.points = {{{116.30, 39.90}, 0}, {{116.31, 39.90 + bump}, 1}, {{116.32, 39.90}, 2}};
  EXPECT_EQ(rdp_key_points(t, 25.0), (std::vector<std::size_t>{1}));
  // Far above the deviation: nothing survives.
  EXPECT_TRUE(rdp_key_points(t, 500.0).empty());
}

TEST(Rdp, ZigzagKeepsEveryTurn) {
  Trajectory t = zigzag(12, 300.0);
  std::vector<std::size_t> keys = rdp_key_points(t, 25.0);
  std::vector<std::size_t> interior;
  for (std::size_t i = 1; i + 1 < t.points.size(); ++i) interior.push_back(i);
  EXPECT_EQ(keys, interior);
}

TEST(Rdp, EndpointsNeverReported) {
  Rng rng(31);
  for (int iter = 0; iter < 100; ++iter) {
    Trajectory t;
    t.id = "rand";
    for (int i = 0; i < 10; ++i)
      t.points.push_back(
          {geo::round6(GeoPoint{rng.uniform(116.30, 116.31), rng.uniform(39.90, 39.91)}),
           static_cast<double>(i)});
    for (std::size_t k : rdp_key_points(t, 50.0)) {
      EXPECT_GT(k, 0u);
      EXPECT_LT(k, t.points.size() - 1);
    }
  }
}

TEST(Rdp, MatchesRecursiveOracle) {
  Rng rng(32);
  for (int iter = 0; iter < 500; ++iter) {
    Trajectory t;
    t.id = "fuzz";
    const std::size_t n = 3 + rng.uniform_index(10);
    for (std::size_t i = 0; i < n; ++i)
      t.points.push_back(
          {geo::round6(GeoPoint{rng.uniform(116.30, 116.32), rng.uniform(39.90, 39.92)}),
           static_cast<double>(i)});
    const double eps = rng.uniform(5.0, 400.0);
    EXPECT_EQ(rdp_key_points(t, eps), oracle::rdp_keys(t, eps)) << "iter " << iter;
  }
}

TEST(Rdp, TieBreaksOnLowestIndex) {
  // Two interior points sit exactly as far from the chord; both end up as
  // keys here, and the library agrees with the oracle's lowest-first pick.
  Trajectory t;
  t.id = "tie";
  const double h = 300.0 / geo::kMetersPerDegree;
  t.points = {{{116.30, 39.90}, 0},
              {{116.31, 39.90 + h}, 1},
              {{116.32, 39.90 - h}, 2},
              {{116.33, 39.90}, 3}};
  EXPECT_EQ(rdp_key_points(t, 25.0), oracle::rdp_keys(t, 25.0));
}

TEST(MaskKeyPoints, SubsampledToCapWhenRich) {
  Trajectory t = zigzag(40, 300.0);  // 38 interior turns
  MaskedTrajectory m = mask_key_points(t, 0.25, 25.0, 5);
  EXPECT_EQ(m.masked.size(), 10u);  // cap = round(0.25*40)
  check_partition(m);
  std::vector<std::size_t> keys = rdp_key_points(t, 25.0);
  std::set<std::size_t> key_set(keys.begin(), keys.end());
  for (std::size_t i : m.masked) EXPECT_TRUE(key_set.count(i)) << i;
}

TEST(MaskKeyPoints, AllKeysWhenFewerThanCap) {
  // Triangle wave with straight legs: vertices at 13 (+400 m) and 26
  // (-200 m) are the only points off their local chords.
  Trajectory t;
  t.id = "tri-wave";
  const double unit = 400.0 / geo::kMetersPerDegree;
  for (std::size_t i = 0; i < 40; ++i) {
    double shape;
    if (i <= 13)
      shape = static_cast<double>(i) / 13.0;
    else if (i <= 26)
      shape = 1.0 - 1.5 * static_cast<double>(i - 13) / 13.0;
    else
      shape = -0.5 + 0.5 * static_cast<double>(i - 26) / 13.0;
    t.points.push_back({geo::round6(GeoPoint{116.30 + 2e-4 * static_cast<double>(i),
                                             39.90 + unit * shape}),
                        static_cast<double>(i)});
  }
  ASSERT_EQ(rdp_key_points(t, 25.0), (std::vector<std::size_t>{13, 26}));
  MaskedTrajectory m = mask_key_points(t, 0.5, 25.0, 5);
  EXPECT_EQ(m.masked, (std::vector<std::size_t>{13, 26}));
}

TEST(MaskKeyPoints, FallsBackToRandomOnStraightLines) {
  Trajectory t = straight(20);
  MaskedTrajectory a = mask_key_points(t, 0.5, 25.0, 99);
  MaskedTrajectory b = mask_random(t, 0.5, 99);
  EXPECT_EQ(a.masked, b.masked);
}

TEST(StrategyMixture, DegenerateWeightsAreDeterministic) {
  MaskSpec spec;
  spec.mixture_weights = {1.0, 0.0, 0.0, 0.0};
  for (std::uint64_t s = 0; s < 100; ++s)
    EXPECT_EQ(sample_strategy(spec, s), MaskStrategy::kRandom);
  spec.mixture_weights = {0.0, 0.0, 0.0, 1.0};
  for (std::uint64_t s = 0; s < 100; ++s)
    EXPECT_EQ(sample_strategy(spec, s), MaskStrategy::kLastN);
}

TEST(StrategyMixture, FrequenciesMatchWeights) {
  MaskSpec spec;  // 0.70 / 0.05 / 0.15 / 0.10
  std::vector<int> counts(4, 0);
  const int trials = 100000;
  for (int s = 0; s < trials; ++s)
    ++counts[static_cast<std::size_t>(sample_strategy(spec, mix64(902, s)))];
  const double expect[4] = {0.70, 0.05, 0.15, 0.10};
  for (int k = 0; k < 4; ++k) {
    const double sigma = std::sqrt(trials * expect[k] * (1 - expect[k]));
    EXPECT_NEAR(counts[k], trials * expect[k], 5 * sigma) << "strategy " << k;
  }
}

TEST(MaskWith, DispatchesEveryStrategy) {
  Trajectory t = zigzag(24, 300.0);
  MaskSpec spec;
  MaskedTrajectory r = mask_with(t, MaskStrategy::kRandom, spec, 5);
  EXPECT_EQ(r.masked, mask_random(t, spec.ratio, 5).masked);
  MaskedTrajectory b = mask_with(t, MaskStrategy::kBlock, spec, 5);
  EXPECT_EQ(b.masked, mask_block(t, spec.ratio, 5).masked);
  MaskedTrajectory k = mask_with(t, MaskStrategy::kKeyPoints, spec, 5);
  EXPECT_EQ(k.masked, mask_key_points(t, spec.ratio, spec.rdp_epsilon_m, 5).masked);
  MaskedTrajectory l = mask_with(t, MaskStrategy::kLastN, spec, 5);
  EXPECT_EQ(l.masked, mask_last_n(t, spec.ratio).masked);
}

TEST(MaskWith, EveryMaskableIndexEventuallyCovered) {
  Trajectory t = zigzag(50, 300.0);
  MaskSpec spec;
  std::set<std::size_t> covered;
  for (std::uint64_t s = 0; s < 400; ++s) {
    MaskStrategy strat = sample_strategy(spec, mix64(903, s));
    for (std::size_t i : mask_with(t, strat, spec, mix64(904, s)).masked) covered.insert(i);
  }
  for (std::size_t i = 1; i < t.points.size(); ++i) EXPECT_TRUE(covered.count(i)) << i;
}

TEST(Maskable, TooShortThrows) {
  EXPECT_THROW(mask_random(zigzag(3), 0.5, 1), TooShort);
  EXPECT_THROW(mask_block(zigzag(2), 0.5, 1), TooShort);
  EXPECT_THROW(mask_last_n(zigzag(3), 0.5), TooShort);
  EXPECT_NO_THROW(mask_random(zigzag(4), 0.5, 1));
}

TEST(MaskSpecValidation, RejectsBadValues) {
  MaskSpec bad_ratio;
  bad_ratio.ratio = 0.0;
  EXPECT_THROW(validate_mask_spec(bad_ratio), Error);
  bad_ratio.ratio = 1.0;
  EXPECT_THROW(validate_mask_spec(bad_ratio), Error);
  MaskSpec bad_eps;
  bad_eps.rdp_epsilon_m = -1.0;
  EXPECT_THROW(validate_mask_spec(bad_eps), Error);
  MaskSpec bad_w;
  bad_w.mixture_weights = {0.0, 0.0, 0.0, 0.0};
  EXPECT_THROW(validate_mask_spec(bad_w), Error);
  bad_w.mixture_weights = {0.5, -0.1, 0.3, 0.3};
  EXPECT_THROW(validate_mask_spec(bad_w), Error);
}
