#include "flowlens/annotations.hpp"

#include <algorithm>
#include <cmath>

namespace flowlens {

std::vector<PointAnnotation> merge_raters(std::span<const PointAnnotation> a,
                                          std::span<const PointAnnotation> b, double radius) {
    if (radius < 0.0) throw ParameterError("merge radius must be non-negative");

    struct Candidate {
        double dist;
        std::size_t i; // index into a
        std::size_t j; // index into b
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (a[i].label != b[j].label) continue;
            const double d = std::hypot(a[i].x - b[j].x, a[i].y - b[j].y);
            if (d < radius) candidates.push_back({d, i, j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& l, const Candidate& r) {
        if (l.dist != r.dist) return l.dist < r.dist;
        if (l.i != r.i) return l.i < r.i;
        return l.j < r.j;
    });

    std::vector<std::size_t> partner_of_a(a.size(), static_cast<std::size_t>(-1));
    std::vector<bool> b_taken(b.size(), false);
    std::vector<bool> a_taken(a.size(), false);
    for (const Candidate& c : candidates) {
        if (a_taken[c.i] || b_taken[c.j]) continue;
        a_taken[c.i] = true;
        b_taken[c.j] = true;
        partner_of_a[c.i] = c.j;
    }

    std::vector<PointAnnotation> out;
    out.reserve(a.size() + b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (partner_of_a[i] == static_cast<std::size_t>(-1)) {
            out.push_back(a[i]);
            continue;
        }
        const PointAnnotation& pa = a[i];
        const PointAnnotation& pb = b[partner_of_a[i]];
        PointAnnotation merged;
        merged.x = (pa.x + pb.x) / 2.0;
        merged.y = (pa.y + pb.y) / 2.0;
        merged.label = pa.label;
        if (pa.rater.empty()) {
            merged.rater = pb.rater;
        } else if (pb.rater.empty() || pa.rater == pb.rater) {
            merged.rater = pa.rater;
        } else {
            merged.rater = pa.rater + "+" + pb.rater;
        }
        out.push_back(std::move(merged));
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        if (!b_taken[j]) out.push_back(b[j]);
    }
    return out;
}

} // namespace flowlens
