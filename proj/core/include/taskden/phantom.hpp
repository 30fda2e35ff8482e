#pragma once

#include <cstdint>

#include "taskden/image.hpp"

namespace taskden {

/// SplitMix64 finalizer over (master, index, stream); used to give every
/// phantom, noise draw and network its own RNG stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0);

/// Synthetic normal-dose slice with its organ segmentation.
struct Phantom {
    Image ndct;       // values in [0, 1]
    Mask organ_mask;  // covers between 2% and 30% of the pixels
    std::uint64_t seed = 0;
};

inline constexpr double kMinOrganFraction = 0.02;
inline constexpr double kMaxOrganFraction = 0.30;

/// Deterministic in `seed`: an elliptical body of soft tissue with a faint
/// low-frequency texture, one target organ (smooth star-shaped blob with its
/// own attenuation) and 2-5 distractor ellipses that do not touch the organ.
/// Requires size >= 32.
Phantom generate_phantom(std::uint64_t seed, std::size_t size);

}  // namespace taskden
