#include <gtest/gtest.h>

#include <algorithm>

#include "taskden/phantom.hpp"

namespace taskden {
namespace {

void expect_invariants(const Phantom& p, std::size_t size) {
    ASSERT_EQ(p.ndct.height, size);
    ASSERT_EQ(p.ndct.width, size);
    ASSERT_EQ(p.organ_mask.size(), size * size);
    EXPECT_GE(p.organ_mask.fraction(), kMinOrganFraction) << "seed " << p.seed;
    EXPECT_LE(p.organ_mask.fraction(), kMaxOrganFraction) << "seed " << p.seed;
    const auto [lo, hi] = std::minmax_element(p.ndct.pixels.begin(), p.ndct.pixels.end());
    EXPECT_GE(*lo, 0.0);
    EXPECT_LE(*hi, 1.0);
    for (auto v : p.organ_mask.values) EXPECT_TRUE(v == 0 || v == 1);
}

TEST(Phantom, SameSeedIsBitwiseIdentical) {
    const Phantom a = generate_phantom(42, 64), b = generate_phantom(42, 64);
    EXPECT_EQ(a.ndct.pixels, b.ndct.pixels);
    EXPECT_EQ(a.organ_mask.values, b.organ_mask.values);
    EXPECT_NE(generate_phantom(43, 64).ndct.pixels, a.ndct.pixels);
}

TEST(Phantom, SeedZeroMaskFraction) {
    const Phantom p = generate_phantom(0, 64);
    EXPECT_GE(p.organ_mask.fraction(), 0.02);
    EXPECT_LE(p.organ_mask.fraction(), 0.30);
}

TEST(Phantom, HundredSeedsSatisfyInvariants) {
    for (std::uint64_t s = 0; s < 100; ++s) expect_invariants(generate_phantom(derive_seed(77, s), 64), 64);
}

TEST(Phantom, OtherSizes) {
    for (std::size_t size : {32, 48, 96}) expect_invariants(generate_phantom(5, size), size);
    EXPECT_THROW(generate_phantom(1, 16), std::invalid_argument);
}

TEST(Phantom, OrganHasDistinctAttenuation) {
    const Phantom p = generate_phantom(9, 64);
    double in = 0, out = 0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < p.ndct.size(); ++i) {
        if (p.organ_mask.values[i]) {
            in += p.ndct.pixels[i];
            ++n_in;
        } else if (p.ndct.pixels[i] > 0) {
            out += p.ndct.pixels[i];
            ++n_out;
        }
    }
    EXPECT_GT(std::abs(in / n_in - out / n_out), 0.02);
}

TEST(DeriveSeed, StreamsDiffer) {
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    EXPECT_NE(derive_seed(1, 2, 0), derive_seed(1, 2, 1));
    EXPECT_NE(derive_seed(1, 2, 0), derive_seed(1, 3, 0));
    EXPECT_NE(derive_seed(1, 2, 0), derive_seed(2, 2, 0));
}

}  // namespace
}  // namespace taskden
