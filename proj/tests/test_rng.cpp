#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "irsfb/rng.hpp"

using namespace irsfb;

TEST(Rng, SplitMixMatchesReferenceVector) {
    // first two outputs of the reference generator seeded with 0
    EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
    EXPECT_EQ(splitmix64(0x9E3779B97F4A7C15ULL), 0x6E789E6AA1B965F4ULL);
}

TEST(Rng, Fnv1aKnownValues) {
    EXPECT_EQ(fnv1a(""), 0xCBF29CE484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xAF63DC4C8601EC8CULL);
}

TEST(Rng, SubstreamsAreReproducibleAndDistinct) {
    Rng a = Rng::substream(7, "train/channel", 3);
    Rng b = Rng::substream(7, "train/channel", 3);
    for (int i = 0; i < 100; ++i)
        ASSERT_EQ(a.engine()(), b.engine()());

    std::set<std::uint64_t> seeds;
    for (const char* name : {"train/channel", "train/codebook", "train/noise", "eval/channel"})
        for (std::uint64_t idx = 0; idx < 50; ++idx)
            seeds.insert(derive_seed(7, name, idx));
    EXPECT_EQ(seeds.size(), 200u);
}

TEST(Rng, DrawsOnOneStreamDoNotPerturbAnother) {
    Rng ch1 = Rng::substream(1, "eval/channel", 0);
    Rng noise = Rng::substream(1, "eval/noise", 0);
    const double first = ch1.canonical();
    for (int i = 0; i < 1000; ++i)
        noise.normal();
    Rng ch2 = Rng::substream(1, "eval/channel", 0);
    EXPECT_EQ(first, ch2.canonical());
}

TEST(Rng, UniformAndNormalMoments) {
    Rng rng(123);
    const int n = 200000;
    double su = 0.0, sn = 0.0, sn2 = 0.0, sc2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform(-2.0, 4.0);
        ASSERT_GE(u, -2.0);
        ASSERT_LT(u, 4.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
        sc2 += std::norm(rng.complex_normal());
    }
    EXPECT_NEAR(su / n, 1.0, 0.02);
    EXPECT_NEAR(sn / n, 0.0, 0.01);
    EXPECT_NEAR(sn2 / n, 1.0, 0.01);
    EXPECT_NEAR(sc2 / n, 1.0, 0.01);
}

TEST(Rng, IndexStaysInRange) {
    Rng rng(9);
    for (int i = 0; i < 10000; ++i)
        ASSERT_LT(rng.index(7), 7u);
}
