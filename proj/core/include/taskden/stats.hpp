#pragma once

#include <cstddef>
#include <vector>

namespace taskden {

struct WilcoxonResult {
    std::size_t n = 0;       // pairs with a nonzero difference
    double statistic = 0.0;  // min(W+, W-)
    double p_value = 1.0;    // two-sided
    bool exact = true;
};

inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped and tied magnitudes receive average ranks. Exact null
/// distribution (conditional on the observed ranks) for n <= 25, normal
/// approximation with continuity and tie correction above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace taskden
