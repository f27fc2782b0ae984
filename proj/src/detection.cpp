#include "flowlens/detection.hpp"

#include <algorithm>
#include <cmath>

#include "flowlens/segmetrics.hpp"

namespace flowlens {

std::vector<Component> connected_components(const BinaryMask& mask, const AnomalyMap& map) {
    require_same_geometry(mask, map, "connected_components");
    std::vector<Component> out;
    for (auto& pixels : label_components(mask)) {
        Component c;
        c.area = static_cast<int>(pixels.size());
        c.confidence = 0.0;
        for (const auto& [x, y] : pixels) c.confidence = std::max(c.confidence, map.at(x, y));
        c.pixels = std::move(pixels);
        out.push_back(std::move(c));
    }
    return out;
}

double calibrate_threshold_pool(std::span<const double> scores) {
    if (scores.empty()) throw ParameterError("threshold calibration needs scores");
    double sum = 0.0;
    for (double s : scores) sum += s;
    const double mean = sum / static_cast<double>(scores.size());
    double sq = 0.0;
    for (double s : scores) sq += (s - mean) * (s - mean);
    const double sigma = std::sqrt(sq / static_cast<double>(scores.size()));
    return mean + 3.0 * sigma;
}

double calibrate_threshold(std::span<const AnomalyMap> normal_maps) {
    if (normal_maps.empty()) throw ParameterError("threshold calibration needs normal maps");
    std::vector<double> pooled;
    for (const auto& m : normal_maps) {
        pooled.insert(pooled.end(), m.scores().begin(), m.scores().end());
    }
    return calibrate_threshold_pool(pooled);
}

MatchResult match(std::span<const Component> components, std::span<const PointAnnotation> points,
                  double tolerance) {
    if (tolerance < 0.0) throw ParameterError("match tolerance must be non-negative");
    MatchResult r;
    r.point_detected.assign(points.size(), false);
    r.component_tp.assign(components.size(), false);
    for (std::size_t ci = 0; ci < components.size(); ++ci) {
        const Component& c = components[ci];
        for (std::size_t pi = 0; pi < points.size(); ++pi) {
            const double px = points[pi].x;
            const double py = points[pi].y;
            const long rx = std::lround(px);
            const long ry = std::lround(py);
            bool hit = false;
            for (const auto& [x, y] : c.pixels) {
                if (x == rx && y == ry) {
                    hit = true;
                    break;
                }
                const double dx = px - x;
                const double dy = py - y;
                if (dx * dx + dy * dy <= tolerance * tolerance) {
                    hit = true;
                    break;
                }
            }
            if (hit) {
                r.point_detected[pi] = true;
                r.component_tp[ci] = true;
            }
        }
    }
    return r;
}

FrocCurve froc_curve(std::span<const FrocSubject> subjects, int n_images, double tolerance) {
    if (n_images < 1) throw ParameterError("froc_curve needs at least one image");
    std::size_t total_points = 0;
    std::vector<double> confidences;
    for (const auto& s : subjects) {
        total_points += s.points.size();
        for (const auto& c : s.components) confidences.push_back(c.confidence);
    }
    if (total_points == 0) {
        throw ParameterError("froc_curve needs at least one annotated point");
    }

    FrocCurve curve;
    if (confidences.empty()) {
        curve.points.push_back({0.0, 0.0});
        return curve;
    }
    std::sort(confidences.begin(), confidences.end(), std::greater<>());
    confidences.erase(std::unique(confidences.begin(), confidences.end()), confidences.end());

    for (double cutoff : confidences) {
        std::size_t detected = 0;
        std::size_t false_pos = 0;
        for (const auto& s : subjects) {
            std::vector<Component> kept;
            for (const auto& c : s.components) {
                if (c.confidence >= cutoff) kept.push_back(c);
            }
            MatchResult m = match(kept, s.points, tolerance);
            for (bool d : m.point_detected) detected += d ? 1 : 0;
            for (bool tp : m.component_tp) false_pos += tp ? 0 : 1;
        }
        curve.points.push_back({static_cast<double>(false_pos) / n_images,
                                static_cast<double>(detected) / static_cast<double>(total_points)});
    }

    std::sort(curve.points.begin(), curve.points.end(), [](const FrocPoint& a, const FrocPoint& b) {
        return a.fppi < b.fppi;
    });
    // Equal-fppi operating points collapse to the best sensitivity; the
    // remaining dips are lifted by cumulative max so sensitivity is
    // non-decreasing along the curve.
    std::vector<FrocPoint> canon;
    for (const FrocPoint& p : curve.points) {
        if (!canon.empty() && canon.back().fppi == p.fppi) {
            canon.back().sensitivity = std::max(canon.back().sensitivity, p.sensitivity);
        } else {
            canon.push_back(p);
        }
    }
    double best = 0.0;
    for (FrocPoint& p : canon) {
        best = std::max(best, p.sensitivity);
        p.sensitivity = best;
    }
    curve.points = std::move(canon);
    return curve;
}

double froc_score(const FrocCurve& curve, std::span<const double> levels) {
    if (curve.points.empty()) throw ParameterError("froc_score needs a non-empty curve");
    if (levels.empty()) throw ParameterError("froc_score needs fppi levels");
    double sum = 0.0;
    for (double level : levels) {
        double best = 0.0;
        for (const FrocPoint& p : curve.points) {
            if (p.fppi <= level) best = std::max(best, p.sensitivity);
        }
        sum += best;
    }
    return sum / static_cast<double>(levels.size());
}

std::string to_string(LabelFilter f) {
    switch (f) {
        case LabelFilter::All: return "all";
        case LabelFilter::LesionOnly: return "lesion";
        case LabelFilter::NonLesionalOnly: return "nonlesion";
    }
    throw ParameterError("unknown label filter");
}

LabelFilter label_filter_from_string(const std::string& text) {
    if (text == "all") return LabelFilter::All;
    if (text == "lesion") return LabelFilter::LesionOnly;
    if (text == "nonlesion") return LabelFilter::NonLesionalOnly;
    throw ParseError("unknown label filter '" + text + "' (expected all|lesion|nonlesion)");
}

namespace {

bool passes(const PointAnnotation& p, LabelFilter f) {
    switch (f) {
        case LabelFilter::All: return true;
        case LabelFilter::LesionOnly: return p.label == AnnotationLabel::Lesion;
        case LabelFilter::NonLesionalOnly: return p.label == AnnotationLabel::NonLesional;
    }
    return false;
}

} // namespace

std::vector<DetectionRow> evaluate_detection(std::span<const AnomalyMap> maps,
                                             std::span<const std::vector<PointAnnotation>> annotations,
                                             const DetectionConfig& cfg,
                                             std::span<const LabelFilter> filters) {
    if (maps.size() != annotations.size()) {
        throw ShapeError("maps and annotation lists must be parallel");
    }
    if (maps.empty()) throw ParameterError("detection evaluation needs at least one map");
    if (cfg.binarize_thresholds.empty()) throw ParameterError("no binarization thresholds");
    for (double t : cfg.binarize_thresholds) {
        if (!(t > 0.0)) throw ParameterError("binarization thresholds must be positive");
    }
    if (cfg.match_tolerance < 0.0) throw ParameterError("match tolerance must be non-negative");
    if (!std::is_sorted(cfg.fppi_levels.begin(), cfg.fppi_levels.end())) {
        throw ParameterError("fppi levels must be sorted ascending");
    }

    std::vector<DetectionRow> rows;
    for (double threshold : cfg.binarize_thresholds) {
        // Components are threshold-dependent but filter-independent.
        std::vector<std::vector<Component>> comps(maps.size());
        for (std::size_t i = 0; i < maps.size(); ++i) {
            comps[i] = connected_components(binarize(maps[i], threshold), maps[i]);
        }
        for (LabelFilter filter : filters) {
            DetectionRow row;
            row.threshold = threshold;
            row.filter = filter;
            std::vector<FrocSubject> subjects;
            for (std::size_t i = 0; i < maps.size(); ++i) {
                FrocSubject s;
                for (const auto& p : annotations[i]) {
                    if (passes(p, filter)) s.points.push_back(p);
                }
                if (s.points.empty()) {
                    ++row.n_excluded;
                    continue;
                }
                s.components = comps[i];
                row.n_points += static_cast<int>(s.points.size());
                subjects.push_back(std::move(s));
            }
            if (subjects.empty()) {
                throw ParameterError("every subject is excluded under filter '" +
                                     to_string(filter) + "'");
            }
            row.n_images = static_cast<int>(subjects.size());
            row.curve = froc_curve(subjects, row.n_images, cfg.match_tolerance);
            row.froc = froc_score(row.curve, cfg.fppi_levels);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<DetectionRow> evaluate_detection(std::span<const AnomalyMap> maps,
                                             std::span<const std::vector<PointAnnotation>> annotations,
                                             const DetectionConfig& cfg) {
    static constexpr LabelFilter kAll[] = {LabelFilter::All, LabelFilter::LesionOnly,
                                           LabelFilter::NonLesionalOnly};
    return evaluate_detection(maps, annotations, cfg, kAll);
}

} // namespace flowlens
