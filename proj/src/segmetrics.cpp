#include "flowlens/segmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flowlens/components.hpp"

namespace flowlens {

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ParameterError("percentile of an empty set");
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("percentile fraction must lie in [0,1]");
    std::sort(values.begin(), values.end());
    const double h = p * static_cast<double>(values.size() - 1);
    const std::size_t i = static_cast<std::size_t>(h);
    if (i + 1 >= values.size()) return values.back();
    const double frac = h - static_cast<double>(i);
    return values[i] + frac * (values[i + 1] - values[i]);
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_geometry(pred, gt, "dice");
    auto p = pred.pixels();
    auto g = gt.pixels();
    std::size_t inter = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += static_cast<std::size_t>(p[i] & g[i]);
        total += static_cast<std::size_t>(p[i]) + g[i];
    }
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

namespace {

/// Mask pixels with an off-mask 4-neighbor or on the grid edge.
std::vector<std::uint8_t> border_of(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> border(mask.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            bool edge = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            if (!edge && (!mask.at(x - 1, y) || !mask.at(x + 1, y) || !mask.at(x, y - 1) ||
                          !mask.at(x, y + 1))) {
                edge = true;
            }
            if (edge) border[static_cast<std::size_t>(y) * w + x] = 1;
        }
    }
    return border;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

/// One-dimensional squared-distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z, int n) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] == kInf) continue;
        if (f[static_cast<std::size_t>(v[0])] == kInf) {
            v[0] = q;
            continue;
        }
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[static_cast<std::size_t>(q)] + q * static_cast<double>(q)) -
                 (f[static_cast<std::size_t>(p)] + p * static_cast<double>(p))) /
                (2.0 * q - 2.0 * p);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        if (f[static_cast<std::size_t>(v[0])] == kInf) {
            d[static_cast<std::size_t>(q)] = kInf;
            continue;
        }
        while (z[k + 1] < q) ++k;
        const int p = v[k];
        d[static_cast<std::size_t>(q)] =
            (q - static_cast<double>(p)) * (q - p) + f[static_cast<std::size_t>(p)];
    }
}

/// Exact Euclidean squared distance to the nearest seed pixel, full grid.
std::vector<double> edt_squared(const std::vector<std::uint8_t>& seeds, int w, int h) {
    std::vector<double> dist(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = seeds[i] ? 0.0 : kInf;

    const int n_max = std::max(w, h);
    std::vector<double> f(static_cast<std::size_t>(n_max));
    std::vector<double> d(static_cast<std::size_t>(n_max));
    std::vector<int> v(static_cast<std::size_t>(n_max));
    std::vector<double> z(static_cast<std::size_t>(n_max) + 1);

    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = dist[static_cast<std::size_t>(y) * w + x];
        edt_1d(f, d, v, z, h);
        for (int y = 0; y < h; ++y) dist[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = dist[static_cast<std::size_t>(y) * w + x];
        edt_1d(f, d, v, z, w);
        for (int x = 0; x < w; ++x) dist[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(x)];
    }
    return dist;
}

void append_directed(const std::vector<std::uint8_t>& from_border,
                     const std::vector<double>& to_sq, double spacing,
                     std::vector<double>& pooled) {
    for (std::size_t i = 0; i < from_border.size(); ++i) {
        if (from_border[i]) pooled.push_back(std::sqrt(to_sq[i]) * spacing);
    }
}

} // namespace

std::optional<SurfaceDistances> surface_distances(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_geometry(pred, gt, "surface_distances");
    if (pred.area() == 0 || gt.area() == 0) return std::nullopt;

    const int w = pred.width();
    const int h = pred.height();
    std::vector<std::uint8_t> pb = border_of(pred);
    std::vector<std::uint8_t> gb = border_of(gt);
    std::vector<double> to_g = edt_squared(gb, w, h);
    std::vector<double> to_p = edt_squared(pb, w, h);

    std::vector<double> pooled;
    append_directed(pb, to_g, pred.spacing(), pooled);
    append_directed(gb, to_p, pred.spacing(), pooled);

    SurfaceDistances out;
    double sum = 0.0;
    for (double v : pooled) sum += v;
    out.asd = sum / static_cast<double>(pooled.size());
    out.hd95 = percentile(std::move(pooled), 0.95);
    return out;
}

LesionF1 lesion_f1(const BinaryMask& pred, const BinaryMask& gt, double overlap) {
    require_same_geometry(pred, gt, "lesion_f1");
    if (!(overlap > 0.0 && overlap <= 1.0)) {
        throw ParameterError("overlap fraction must lie in (0,1]");
    }
    const auto pred_comps = label_components(pred);
    const auto gt_comps = label_components(gt);

    // Label grid for the ground truth so intersections are one pass per
    // predicted component.
    std::vector<int> gt_label(gt.size(), -1);
    for (std::size_t g = 0; g < gt_comps.size(); ++g) {
        for (const auto& [x, y] : gt_comps[g]) {
            gt_label[static_cast<std::size_t>(y) * gt.width() + x] = static_cast<int>(g);
        }
    }

    std::vector<std::uint8_t> gt_detected(gt_comps.size(), 0);
    LesionF1 out;
    out.fp = 0;
    for (const auto& comp : pred_comps) {
        std::vector<int> inter(gt_comps.size(), 0);
        for (const auto& [x, y] : comp) {
            int g = gt_label[static_cast<std::size_t>(y) * gt.width() + x];
            if (g >= 0) ++inter[static_cast<std::size_t>(g)];
        }
        bool hit = false;
        for (std::size_t g = 0; g < gt_comps.size(); ++g) {
            if (inter[g] > 0 && static_cast<double>(inter[g]) >=
                                    overlap * static_cast<double>(gt_comps[g].size())) {
                gt_detected[g] = 1;
                hit = true;
            }
        }
        if (!hit) ++out.fp;
    }
    for (std::uint8_t d : gt_detected) {
        if (d) {
            ++out.tp;
        } else {
            ++out.fn;
        }
    }
    const int denom = 2 * out.tp + out.fp + out.fn;
    out.f1 = denom == 0 ? 1.0 : 2.0 * out.tp / static_cast<double>(denom);
    return out;
}

std::string to_string(SizeStratum s) {
    switch (s) {
        case SizeStratum::S: return "S";
        case SizeStratum::M: return "M";
        case SizeStratum::L: return "L";
    }
    throw ParameterError("unknown stratum");
}

SizeStratum StrataThresholds::classify(double area) const {
    if (area < q25) return SizeStratum::S;
    if (area > q75) return SizeStratum::L;
    return SizeStratum::M;
}

StrataThresholds size_strata(std::span<const double> areas) {
    if (areas.empty()) throw ParameterError("size_strata needs at least one lesion area");
    std::vector<double> v(areas.begin(), areas.end());
    StrataThresholds t;
    t.q25 = percentile(v, 0.25);
    t.q75 = percentile(std::move(v), 0.75);
    return t;
}

BinaryMask binarize(const AnomalyMap& map, double threshold) {
    auto scores = map.scores();
    std::vector<std::uint8_t> px(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) px[i] = scores[i] >= threshold ? 1 : 0;
    return BinaryMask(map.width(), map.height(), map.spacing(), std::move(px));
}

double select_threshold(std::span<const AnomalyMap> maps, std::span<const BinaryMask> gts,
                        std::span<const double> grid) {
    if (maps.empty()) throw ParameterError("threshold selection needs a validation set");
    if (maps.size() != gts.size()) {
        throw ShapeError("map and ground-truth counts differ");
    }
    if (grid.empty()) throw ParameterError("threshold selection needs candidate thresholds");
    for (std::size_t i = 0; i < maps.size(); ++i) {
        require_same_geometry(maps[i], gts[i], "select_threshold");
    }
    double best_t = grid.front();
    double best_dice = -1.0;
    for (double t : grid) {
        double sum = 0.0;
        for (std::size_t i = 0; i < maps.size(); ++i) {
            sum += dice(binarize(maps[i], t), gts[i]);
        }
        const double mean = sum / static_cast<double>(maps.size());
        if (mean > best_dice || (mean == best_dice && t < best_t)) {
            best_dice = mean;
            best_t = t;
        }
    }
    return best_t;
}

namespace {

void accumulate(SegAggregate& agg, const SegSubjectRow& row) {
    ++agg.n;
    agg.mean_dice += row.dice;
    if (row.hd95) {
        agg.mean_hd95 = agg.mean_hd95.value_or(0.0) + *row.hd95;
        agg.mean_asd = agg.mean_asd.value_or(0.0) + *row.asd;
    } else {
        ++agg.surface_excluded;
    }
    agg.tp += row.tp;
    agg.fp += row.fp;
    agg.fn += row.fn;
}

void finalize(SegAggregate& agg) {
    if (agg.n > 0) agg.mean_dice /= agg.n;
    const int defined = agg.n - agg.surface_excluded;
    if (agg.mean_hd95) {
        *agg.mean_hd95 /= defined;
        *agg.mean_asd /= defined;
    }
    const int denom = 2 * agg.tp + agg.fp + agg.fn;
    agg.f1 = denom == 0 ? 1.0 : 2.0 * agg.tp / static_cast<double>(denom);
}

} // namespace

SegReport evaluate_segmentation(std::span<const std::string> ids,
                                std::span<const AnomalyMap> maps,
                                std::span<const BinaryMask> gts, double threshold,
                                double overlap) {
    if (ids.size() != maps.size() || ids.size() != gts.size()) {
        throw ShapeError("ids, maps, and ground-truth masks must be parallel");
    }
    if (ids.empty()) throw ParameterError("segmentation evaluation needs at least one subject");

    SegReport report;
    std::vector<double> areas;
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require_same_geometry(maps[i], gts[i], "evaluate_segmentation");
        if (gts[i].area() == 0) {
            ++report.excluded_empty_gt;
            continue;
        }
        kept.push_back(i);
        areas.push_back(static_cast<double>(gts[i].area()));
    }
    if (kept.empty()) {
        throw ParameterError("every subject has an empty ground-truth mask");
    }
    report.strata = size_strata(areas);

    for (std::size_t k = 0; k < kept.size(); ++k) {
        const std::size_t i = kept[k];
        BinaryMask pred = binarize(maps[i], threshold);
        SegSubjectRow row;
        row.id = ids[i];
        row.gt_area = areas[k];
        row.stratum = report.strata.classify(row.gt_area);
        row.dice = dice(pred, gts[i]);
        if (auto sd = surface_distances(pred, gts[i])) {
            row.hd95 = sd->hd95;
            row.asd = sd->asd;
        }
        LesionF1 f1 = lesion_f1(pred, gts[i], overlap);
        row.tp = f1.tp;
        row.fp = f1.fp;
        row.fn = f1.fn;
        accumulate(report.overall, row);
        accumulate(report.by_stratum[row.stratum], row);
        report.subjects.push_back(std::move(row));
    }
    finalize(report.overall);
    for (auto& [stratum, agg] : report.by_stratum) finalize(agg);
    return report;
}

} // namespace flowlens
