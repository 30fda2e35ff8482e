#include "taskden/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace taskden {

namespace {

// P(W+ <= w) under the null, where ranks are given doubled (integers).
double exact_lower_tail(const std::vector<long>& doubled_ranks, long doubled_w) {
    const long total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0L);
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long r : doubled_ranks) {
        reach += r;
        for (long s = reach; s >= r; --s) counts[s] += counts[s - r];
    }
    double below = 0.0;
    for (long s = 0; s <= std::min(doubled_w, total); ++s) below += counts[s];
    return below / std::ldexp(1.0, static_cast<int>(doubled_ranks.size()));
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("wilcoxon_signed_rank: samples must be paired");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    WilcoxonResult result;
    result.n = diffs.size();
    if (diffs.empty()) return result;

    std::vector<std::size_t> order(diffs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::fabs(diffs[i]) < std::fabs(diffs[j]);
    });
    std::vector<long> doubled(diffs.size());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && std::fabs(diffs[order[j + 1]]) == std::fabs(diffs[order[i]])) ++j;
        const long t = static_cast<long>(j - i + 1);
        for (std::size_t k = i; k <= j; ++k) doubled[order[k]] = static_cast<long>(i + 1 + j + 1);
        tie_term += static_cast<double>(t * t * t - t);
        i = j + 1;
    }
    long w_plus2 = 0, w_minus2 = 0;
    for (std::size_t i = 0; i < diffs.size(); ++i) (diffs[i] > 0 ? w_plus2 : w_minus2) += doubled[i];
    const long w2 = std::min(w_plus2, w_minus2);
    result.statistic = static_cast<double>(w2) / 2.0;

    const double n = static_cast<double>(result.n);
    if (result.n <= kWilcoxonExactLimit) {
        result.exact = true;
        result.p_value = std::min(1.0, 2.0 * exact_lower_tail(doubled, w2));
    } else {
        result.exact = false;
        const double mean = n * (n + 1) / 4.0;
        const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
        if (var <= 0.0) return result;
        const double z = (std::fabs(result.statistic - mean) - 0.5) / std::sqrt(var);
        result.p_value = std::min(1.0, std::erfc(std::max(z, 0.0) / std::sqrt(2.0)));
    }
    return result;
}

}  // namespace taskden
