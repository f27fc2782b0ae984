#include "flowlens/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "flowlens/components.hpp"
#include "flowlens/rng.hpp"

namespace flowlens {

namespace {

// Blend strength for subtle abnormalities. Altered pixels move this fraction
// of the way toward the target intensity, which keeps per-pixel changes well
// below the smallest configured lesion delta.
constexpr double kSubtleBlend = 0.35;

void check_ellipse(const Ellipse& e, int size, const char* name) {
    if (!(e.rx > 0.0) || !(e.ry > 0.0)) {
        throw ParameterError(std::string("degenerate ellipse: ") + name +
                             " has a non-positive semi-axis");
    }
    if (e.cx - e.rx < 0.0 || e.cx + e.rx > size - 1.0 || e.cy - e.ry < 0.0 ||
        e.cy + e.ry > size - 1.0) {
        throw ParameterError(std::string(name) + " ellipse does not fit inside the grid");
    }
}

std::size_t index_of(int x, int y, int w) {
    return static_cast<std::size_t>(y) * w + x;
}

/// Mean intensity of the ventricle's strict interior; used as the CSF-dark
/// target the subtle mechanisms blend toward.
double ventricle_value(const Image2D& img, const Ellipse& vent) {
    for (double shrink : {0.75, 1.0}) {
        double sum = 0.0;
        int count = 0;
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                if (vent.radial(x, y) <= shrink) {
                    sum += img.at(x, y);
                    ++count;
                }
            }
        }
        if (count > 0) return sum / count;
    }
    throw GenerationError("ventricle ellipse contains no pixels");
}

PointAnnotation region_annotation(const std::vector<Pixel>& changed, const Ellipse& vent) {
    PointAnnotation p;
    p.label = AnnotationLabel::NonLesional;
    if (changed.empty()) {
        p.x = vent.cx;
        p.y = vent.cy;
        return p;
    }
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [x, y] : changed) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(changed.size());
    my /= static_cast<double>(changed.size());
    // The centroid of a ring- or crescent-shaped region can fall outside it;
    // the annotation goes on the changed pixel nearest the centroid.
    const Pixel* best = &changed.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& px : changed) {
        double dx = px.first - mx;
        double dy = px.second - my;
        double d = dx * dx + dy * dy;
        if (d < best_d) {
            best_d = d;
            best = &px;
        }
    }
    p.x = best->first;
    p.y = best->second;
    return p;
}

std::vector<Pixel> changed_pixels(const Image2D& before, const Image2D& after) {
    std::vector<Pixel> out;
    for (int y = 0; y < before.height(); ++y) {
        for (int x = 0; x < before.width(); ++x) {
            if (before.at(x, y) != after.at(x, y)) out.emplace_back(x, y);
        }
    }
    return out;
}

} // namespace

PhantomParams sample_phantom_params(int size, double noise_sigma, std::uint64_t seed) {
    if (size < 8) throw ParameterError("phantom size must be at least 8 pixels");
    if (noise_sigma < 0.0) throw ParameterError("noise_sigma must be non-negative");

    Pcg32 rng(derive_seed(seed, 1));
    // All proportions are relative to the usable extent [0, size-1] so every
    // sampled ellipse fits the grid regardless of size.
    const double s = static_cast<double>(size - 1);
    const double mid = s / 2.0;

    PhantomParams p;
    p.size = size;
    p.noise_sigma = noise_sigma;
    p.seed = derive_seed(seed, 2);

    p.outer.cx = mid + rng.uniform(-0.015, 0.015) * s;
    p.outer.cy = mid + rng.uniform(-0.015, 0.015) * s;
    p.outer.rx = rng.uniform(0.38, 0.44) * s;
    p.outer.ry = rng.uniform(0.40, 0.46) * s;
    p.outer.intensity = 1.0;

    p.ventricle.cx = p.outer.cx + rng.uniform(-0.02, 0.02) * s;
    p.ventricle.cy = p.outer.cy + rng.uniform(-0.02, 0.02) * s;
    p.ventricle.rx = rng.uniform(0.09, 0.14) * s;
    p.ventricle.ry = rng.uniform(0.11, 0.16) * s;
    p.ventricle.intensity = 0.45;

    int n_tissues = static_cast<int>(rng.uniform_int(2, 4));
    for (int i = 0; i < n_tissues; ++i) {
        Ellipse t;
        double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        double rad = rng.uniform(0.45, 0.75);
        t.cx = p.outer.cx + rad * p.outer.rx * std::cos(theta) * 0.7;
        t.cy = p.outer.cy + rad * p.outer.ry * std::sin(theta) * 0.7;
        t.rx = rng.uniform(0.07, 0.15) * s;
        t.ry = rng.uniform(0.07, 0.15) * s;
        t.intensity = rng.uniform(0.78, 1.25);
        p.tissues.push_back(t);
    }
    return p;
}

Image2D gen_healthy(const PhantomParams& params) {
    const int size = params.size;
    if (size <= 0) throw ParameterError("phantom size must be positive");
    if (params.noise_sigma < 0.0) throw ParameterError("noise_sigma must be non-negative");
    check_ellipse(params.outer, size, "outer");
    check_ellipse(params.ventricle, size, "ventricle");
    for (const auto& t : params.tissues) check_ellipse(t, size, "tissue");

    std::vector<double> px(static_cast<std::size_t>(size) * size, 0.0);
    std::vector<std::uint8_t> brain(px.size(), 0);

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            if (!params.outer.contains(x, y)) continue;
            std::size_t i = index_of(x, y, size);
            brain[i] = 1;
            double v = params.outer.intensity;
            for (const auto& t : params.tissues) {
                if (t.contains(x, y)) v = t.intensity;
            }
            if (params.ventricle.contains(x, y)) v = params.ventricle.intensity;
            px[i] = v;
        }
    }

    Pcg32 rng(params.seed);
    if (params.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < px.size(); ++i) {
            if (brain[i]) px[i] += rng.gaussian(0.0, params.noise_sigma);
        }
    }

    // z-score over brain pixels; background stays exactly 0
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (brain[i]) {
            sum += px[i];
            ++n;
        }
    }
    if (n == 0) throw ParameterError("outer ellipse contains no pixels");
    double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (brain[i]) sq += (px[i] - mean) * (px[i] - mean);
    }
    double std_dev = std::sqrt(sq / static_cast<double>(n));
    if (!(std_dev > 0.0)) {
        throw ParameterError("degenerate phantom: zero intensity variance over brain pixels");
    }
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (brain[i]) px[i] = (px[i] - mean) / std_dev;
    }
    return Image2D(size, size, 1.0, std::move(px));
}

BinaryMask brain_mask(const Image2D& img) {
    std::vector<std::uint8_t> m(img.size());
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) m[i] = px[i] != 0.0 ? 1 : 0;
    return BinaryMask(img.width(), img.height(), img.spacing(), std::move(m));
}

double LesionParams::min_abs_delta() const {
    if (delta_min <= 0.0 && delta_max >= 0.0) return 0.0;
    return std::min(std::abs(delta_min), std::abs(delta_max));
}

LesionInjection inject_lesion(const Image2D& img, const LesionParams& params, std::uint64_t seed) {
    if (params.count_min < 0 || params.count_max < params.count_min) {
        throw ParameterError("lesion count range is invalid");
    }
    if (params.radius_min < 1.0 || params.radius_max < params.radius_min) {
        throw ParameterError("lesion radius range must satisfy 1 <= min <= max");
    }
    if (params.delta_max < params.delta_min) {
        throw ParameterError("lesion delta range is inverted");
    }
    if (params.softness < 0.0) throw ParameterError("lesion softness must be non-negative");

    const int w = img.width();
    const int h = img.height();
    BinaryMask brain = brain_mask(img);
    Pcg32 rng(seed);

    std::vector<double> px(img.pixels().begin(), img.pixels().end());
    const int count = static_cast<int>(rng.uniform_int(params.count_min, params.count_max));

    for (int blob = 0; blob < count; ++blob) {
        const double radius = rng.uniform(params.radius_min, params.radius_max);
        double cx = 0.0;
        double cy = 0.0;
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            cx = rng.uniform(0.0, w - 1.0);
            cy = rng.uniform(0.0, h - 1.0);
            placed = true;
            int x_lo = static_cast<int>(std::floor(cx - radius));
            int x_hi = static_cast<int>(std::ceil(cx + radius));
            int y_lo = static_cast<int>(std::floor(cy - radius));
            int y_hi = static_cast<int>(std::ceil(cy + radius));
            for (int y = y_lo; y <= y_hi && placed; ++y) {
                for (int x = x_lo; x <= x_hi && placed; ++x) {
                    double d = std::hypot(x - cx, y - cy);
                    if (d > radius) continue;
                    if (x < 0 || x >= w || y < 0 || y >= h || !brain.at(x, y)) placed = false;
                }
            }
        }
        if (!placed) {
            throw GenerationError("no in-brain lesion placement found after 100 attempts");
        }
        const double delta = rng.uniform(params.delta_min, params.delta_max);
        int x_lo = static_cast<int>(std::floor(cx - radius));
        int x_hi = static_cast<int>(std::ceil(cx + radius));
        int y_lo = static_cast<int>(std::floor(cy - radius));
        int y_hi = static_cast<int>(std::ceil(cy + radius));
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                double d = std::hypot(x - cx, y - cy);
                if (d > radius) continue;
                double falloff = 1.0;
                if (params.softness > 0.0 && d > radius - params.softness) {
                    falloff = (radius - d) / params.softness;
                }
                double change = delta * falloff;
                if (change != 0.0) px[index_of(x, y, w)] += change;
            }
        }
    }

    const double half_min = 0.5 * params.min_abs_delta();
    std::vector<std::uint8_t> mask(px.size(), 0);
    auto orig = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (std::abs(px[i] - orig[i]) > half_min) mask[i] = 1;
    }
    return LesionInjection{Image2D(w, h, img.spacing(), std::move(px)),
                           BinaryMask(w, h, img.spacing(), std::move(mask))};
}

std::string to_string(SubtleKind kind) {
    switch (kind) {
        case SubtleKind::VentricleEnlargement: return "ventricle";
        case SubtleKind::SulcalWidening: return "sulcal";
        case SubtleKind::PeriventricularHypo: return "perivent";
    }
    throw ParameterError("unknown subtle kind");
}

SubtleKind subtle_kind_from_string(const std::string& text) {
    if (text == "ventricle") return SubtleKind::VentricleEnlargement;
    if (text == "sulcal") return SubtleKind::SulcalWidening;
    if (text == "perivent") return SubtleKind::PeriventricularHypo;
    throw ParseError("unknown subtle kind '" + text + "'");
}

SubtleInjection inject_subtle(const Image2D& img, const SubtleParams& params,
                              const PhantomParams& phantom, std::uint64_t seed) {
    if (params.magnitude_min < 0.0 || params.magnitude_max < params.magnitude_min) {
        throw ParameterError("subtle magnitude range must satisfy 0 <= min <= max");
    }
    if (img.width() != phantom.size || img.height() != phantom.size) {
        throw ShapeError("image does not match the phantom geometry");
    }

    Pcg32 rng(seed);
    const double m = rng.uniform(params.magnitude_min, params.magnitude_max);
    const Ellipse& vent = phantom.ventricle;
    const double target = ventricle_value(img, vent);
    const int w = img.width();
    const int h = img.height();

    std::vector<double> px(img.pixels().begin(), img.pixels().end());
    auto blend_at = [&](int x, int y) {
        double change = kSubtleBlend * (target - px[index_of(x, y, w)]);
        if (change != 0.0) px[index_of(x, y, w)] += change;
    };

    switch (params.kind) {
        case SubtleKind::VentricleEnlargement: {
            Ellipse grown = vent;
            grown.rx *= 1.0 + m;
            grown.ry *= 1.0 + m;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (img.at(x, y) == 0.0) continue;
                    if (grown.contains(x, y) && !vent.contains(x, y)) blend_at(x, y);
                }
            }
            break;
        }
        case SubtleKind::SulcalWidening: {
            const double theta0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double half_sector = 0.7;
            const double width = 0.06 + 0.25 * m;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (img.at(x, y) == 0.0) continue;
                    double r = phantom.outer.radial(x, y);
                    if (r <= 1.0 - width || r > 1.0) continue;
                    double ang = std::atan2((y - phantom.outer.cy) / phantom.outer.ry,
                                            (x - phantom.outer.cx) / phantom.outer.rx);
                    double diff = std::remainder(ang - theta0, 2.0 * std::numbers::pi);
                    if (std::abs(diff) <= half_sector) blend_at(x, y);
                }
            }
            break;
        }
        case SubtleKind::PeriventricularHypo: {
            const double width = 0.35 + 0.8 * m;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (img.at(x, y) == 0.0) continue;
                    double r = vent.radial(x, y);
                    if (r > 1.0 && r <= 1.0 + width) blend_at(x, y);
                }
            }
            break;
        }
        default:
            throw ParameterError("unknown subtle kind");
    }

    Image2D out(w, h, img.spacing(), std::move(px));
    auto changed = changed_pixels(img, out);
    SubtleInjection result{std::move(out), {}};
    result.annotations.push_back(region_annotation(changed, vent));
    return result;
}

double mean_abs_change(const Image2D& before, const Image2D& after) {
    require_same_geometry(before, after, "mean_abs_change");
    double sum = 0.0;
    std::size_t n = 0;
    auto a = before.pixels();
    auto b = after.pixels();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) {
            sum += std::abs(a[i] - b[i]);
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw ParameterError("unknown split");
}

Split split_from_string(const std::string& text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "test") return Split::Test;
    throw ParseError("unknown split '" + text + "'");
}

std::vector<const DatasetEntry*> Dataset::split(Split s) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries) {
        if (e.split == s) out.push_back(&e);
    }
    return out;
}

namespace {

struct SubjectPlan {
    Split split = Split::Train;
    bool contaminated = false; // train
    bool lesion = false;       // val/test
    bool subtle = false;       // val/test
};

std::vector<PointAnnotation> lesion_annotations(const BinaryMask& mask) {
    std::vector<PointAnnotation> out;
    for (const auto& comp : label_components(mask)) {
        double mx = 0.0;
        double my = 0.0;
        for (const auto& [x, y] : comp) {
            mx += x;
            my += y;
        }
        mx /= static_cast<double>(comp.size());
        my /= static_cast<double>(comp.size());
        const Pixel* best = &comp.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& p : comp) {
            double dx = p.first - mx;
            double dy = p.second - my;
            double d = dx * dx + dy * dy;
            if (d < best_d) {
                best_d = d;
                best = &p;
            }
        }
        PointAnnotation ann;
        ann.x = best->first;
        ann.y = best->second;
        ann.label = AnnotationLabel::Lesion;
        out.push_back(ann);
    }
    return out;
}

} // namespace

Dataset make_dataset(const DatasetParams& params) {
    if (params.n_subjects < 10) throw ParameterError("n_subjects must be at least 10");
    if (params.contamination_fraction < 0.0 || params.contamination_fraction > 1.0) {
        throw ParameterError("contamination_fraction must lie in [0,1]");
    }

    const int n = params.n_subjects;
    const int n_train = static_cast<int>(std::floor(0.8 * n));
    const int n_val = static_cast<int>(std::floor(0.1 * n));
    const int n_test = n - n_train - n_val;

    std::vector<SubjectPlan> plans(n);
    for (int i = 0; i < n; ++i) {
        plans[i].split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
    }

    // Contaminated training subjects: a seeded shuffle of train indices,
    // flagging the first round(fraction * n_train).
    {
        std::vector<int> order(n_train);
        for (int i = 0; i < n_train; ++i) order[i] = i;
        Pcg32 shuffle_rng(derive_seed(params.seed, 0xC0));
        for (int i = n_train - 1; i > 0; --i) {
            int j = static_cast<int>(shuffle_rng.uniform_int(0, i));
            std::swap(order[i], order[j]);
        }
        int k = static_cast<int>(std::floor(params.contamination_fraction * n_train + 0.5));
        for (int i = 0; i < k; ++i) plans[order[i]].contaminated = true;
    }

    // Val/test composition, then quota fixes so each split keeps at least one
    // lesioned, one subtle and one normal subject where its size allows.
    for (Split s : {Split::Val, Split::Test}) {
        int begin = s == Split::Val ? n_train : n_train + n_val;
        int count = s == Split::Val ? n_val : n_test;
        Pcg32 comp_rng(derive_seed(params.seed, 0xA0 + static_cast<int>(s)));
        for (int i = 0; i < count; ++i) {
            SubjectPlan& plan = plans[begin + i];
            if (comp_rng.uniform() < params.p_normal) continue; // normal: no flags
            plan.lesion = comp_rng.uniform() < params.p_lesion;
            plan.subtle = comp_rng.uniform() < params.p_subtle;
            if (!plan.lesion && !plan.subtle) plan.lesion = true;
        }
        if (count >= 1) {
            bool any_lesion = false;
            for (int i = 0; i < count; ++i) any_lesion |= plans[begin + i].lesion;
            if (!any_lesion) plans[begin].lesion = true;
        }
        if (count >= 2) {
            bool any_normal = false;
            for (int i = 0; i < count; ++i) {
                any_normal |= !plans[begin + i].lesion && !plans[begin + i].subtle;
            }
            if (!any_normal) {
                plans[begin + count - 1].lesion = false;
                plans[begin + count - 1].subtle = false;
            }
        }
        if (count >= 3) {
            bool any_subtle = false;
            for (int i = 0; i < count; ++i) any_subtle |= plans[begin + i].subtle;
            if (!any_subtle) plans[begin + 1].subtle = true;
        }
    }

    Dataset ds;
    ds.entries.reserve(n);
    char idbuf[16];
    for (int i = 0; i < n; ++i) {
        const SubjectPlan& plan = plans[i];
        std::snprintf(idbuf, sizeof(idbuf), "s%04d", i + 1);
        const std::uint64_t subject_seed = derive_seed(params.seed, static_cast<std::uint64_t>(i));
        PhantomParams pp = sample_phantom_params(params.phantom_size, params.noise_sigma,
                                                 derive_seed(subject_seed, 10));
        Image2D clean = gen_healthy(pp);

        if (plan.split == Split::Train) {
            std::optional<Image2D> contaminated_img;
            std::vector<PointAnnotation> anns;
            if (plan.contaminated) {
                SubtleInjection inj =
                    inject_subtle(clean, params.subtle, pp, derive_seed(subject_seed, 11));
                if (mean_abs_change(clean, inj.image) >= params.lesion.min_abs_delta()) {
                    throw ParameterError(
                        "subtle magnitude produces changes as strong as the weakest lesion; "
                        "lower the subtle magnitude or raise the lesion delta");
                }
                contaminated_img = std::move(inj.image);
                anns = std::move(inj.annotations);
            }
            DatasetEntry entry{Subject(idbuf, std::move(clean), std::nullopt, std::move(anns)),
                               std::move(contaminated_img),
                               std::move(pp),
                               plan.split,
                               plan.contaminated,
                               false};
            ds.entries.push_back(std::move(entry));
            continue;
        }

        Image2D current = clean;
        std::vector<PointAnnotation> anns;
        if (plan.subtle) {
            SubtleInjection inj =
                inject_subtle(current, params.subtle, pp, derive_seed(subject_seed, 11));
            if (mean_abs_change(current, inj.image) >= params.lesion.min_abs_delta()) {
                throw ParameterError(
                    "subtle magnitude produces changes as strong as the weakest lesion; "
                    "lower the subtle magnitude or raise the lesion delta");
            }
            current = std::move(inj.image);
            for (auto& a : inj.annotations) anns.push_back(std::move(a));
        }
        BinaryMask mask(current.width(), current.height(), current.spacing(),
                        std::vector<std::uint8_t>(current.size(), 0));
        if (plan.lesion) {
            LesionInjection inj =
                inject_lesion(current, params.lesion, derive_seed(subject_seed, 12));
            current = std::move(inj.image);
            mask = std::move(inj.mask);
            for (auto& a : lesion_annotations(mask)) anns.push_back(std::move(a));
        }
        bool is_normal = !plan.lesion && !plan.subtle;
        DatasetEntry entry{Subject(idbuf, std::move(current), std::move(mask), std::move(anns)),
                           std::nullopt,
                           std::move(pp),
                           plan.split,
                           false,
                           is_normal};
        ds.entries.push_back(std::move(entry));
    }
    return ds;
}

} // namespace flowlens
