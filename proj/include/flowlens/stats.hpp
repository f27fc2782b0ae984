#pragma once

#include <span>
#include <string>

#include "flowlens/errors.hpp"

namespace flowlens {

enum class WilcoxonMethod { Exact, NormalApprox };

std::string to_string(WilcoxonMethod m);

struct WilcoxonResult {
    double w = 0.0;     // min(W+, W-)
    int n_effective = 0; // pairs left after dropping zero differences
    double p = 1.0;      // two-sided, in (0,1]
    WilcoxonMethod method = WilcoxonMethod::Exact;
};

/// Paired two-sided Wilcoxon signed-rank test on d = x - y. Zero differences
/// are dropped; |d| is ranked with mid-ranks for ties. Exact p enumerates all
/// sign assignments for n_effective <= 20, beyond that a normal approximation
/// with tie-corrected variance and continuity correction is used. All
/// differences zero yields the degenerate result (w=0, n=0, p=1, Exact).
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

} // namespace flowlens
