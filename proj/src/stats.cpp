#include "flowlens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace flowlens {

std::string to_string(WilcoxonMethod m) {
    switch (m) {
        case WilcoxonMethod::Exact: return "exact";
        case WilcoxonMethod::NormalApprox: return "normal";
    }
    throw ParameterError("unknown Wilcoxon method");
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("paired samples must have equal length");
    if (x.empty()) throw ParameterError("wilcoxon_signed_rank needs at least one pair");

    std::vector<double> d;
    d.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw ParameterError("non-finite value at pair " + std::to_string(i));
        }
        const double diff = x[i] - y[i];
        if (diff != 0.0) d.push_back(diff);
    }

    WilcoxonResult result;
    if (d.empty()) return result; // all differences zero

    const int n = static_cast<int>(d.size());
    result.n_effective = n;

    std::vector<int> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return std::abs(d[static_cast<std::size_t>(a)]) <
                                         std::abs(d[static_cast<std::size_t>(b)]); });

    // Doubled ranks keep mid-ranks integral: a tie group occupying 1-based
    // positions lo..hi has mid-rank (lo+hi)/2, i.e. doubled rank lo+hi.
    std::int64_t w2_pos = 0;
    std::int64_t w2_neg = 0;
    std::vector<int> doubled_ranks(d.size());
    std::vector<std::int64_t> tie_sizes;
    std::size_t i = 0;
    while (i < d.size()) {
        std::size_t j = i;
        const double mag = std::abs(d[static_cast<std::size_t>(order[i])]);
        while (j < d.size() && std::abs(d[static_cast<std::size_t>(order[j])]) == mag) ++j;
        const int doubled = static_cast<int>(i + 1 + j); // lo + hi, 1-based
        for (std::size_t k = i; k < j; ++k) {
            doubled_ranks[static_cast<std::size_t>(order[k])] = doubled;
            if (d[static_cast<std::size_t>(order[k])] > 0.0) {
                w2_pos += doubled;
            } else {
                w2_neg += doubled;
            }
        }
        tie_sizes.push_back(static_cast<std::int64_t>(j - i));
        i = j;
    }

    const std::int64_t w2 = std::min(w2_pos, w2_neg);
    result.w = static_cast<double>(w2) / 2.0;

    if (n <= 20) {
        result.method = WilcoxonMethod::Exact;
        const std::int64_t s2 = w2_pos + w2_neg; // n(n+1)
        std::vector<std::uint64_t> dist(static_cast<std::size_t>(s2) + 1, 0);
        dist[0] = 1;
        std::int64_t reach = 0;
        for (int r2 : doubled_ranks) {
            reach += r2;
            for (std::int64_t s = reach; s >= r2; --s) {
                dist[static_cast<std::size_t>(s)] += dist[static_cast<std::size_t>(s - r2)];
            }
        }
        std::uint64_t count = 0;
        for (std::int64_t s = 0; s <= s2; ++s) {
            if (s <= w2 || s >= s2 - w2) count += dist[static_cast<std::size_t>(s)];
        }
        result.p = static_cast<double>(count) / std::ldexp(1.0, n);
    } else {
        result.method = WilcoxonMethod::NormalApprox;
        const double nn = static_cast<double>(n);
        const double mu = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        for (std::int64_t t : tie_sizes) {
            var -= static_cast<double>(t * t * t - t) / 48.0;
        }
        const double z = (result.w - mu + 0.5) / std::sqrt(var);
        result.p = std::erfc(-z / std::sqrt(2.0)); // 2 * Phi(z)
    }
    result.p = std::min(1.0, std::max(result.p, std::numeric_limits<double>::min()));
    return result;
}

} // namespace flowlens
