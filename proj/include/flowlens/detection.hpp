#pragma once

#include <span>
#include <string>
#include <vector>

#include "flowlens/components.hpp"
#include "flowlens/grid.hpp"

namespace flowlens {

/// 8-connected region of a binarized anomaly map. Confidence is the maximum
/// anomaly score over the member pixels.
struct Component {
    std::vector<Pixel> pixels;
    int area = 0;
    double confidence = 0.0;
};

/// Components of the mask ordered by smallest row-major pixel index, scored
/// against the map.
std::vector<Component> connected_components(const BinaryMask& mask, const AnomalyMap& map);

/// mu + 3*sigma over one pooled score sample (population sigma).
double calibrate_threshold_pool(std::span<const double> scores);

/// Same rule over all pixels of all maps pooled together.
double calibrate_threshold(std::span<const AnomalyMap> normal_maps);

/// Component/point matching: a component matches a point when the point's
/// nearest pixel (coordinates rounded half away from zero) belongs to it, or
/// when the Euclidean distance from the point to the closest member pixel
/// center is <= tolerance. Many-to-many; flags are per input index.
struct MatchResult {
    std::vector<bool> point_detected;
    std::vector<bool> component_tp;
};

MatchResult match(std::span<const Component> components, std::span<const PointAnnotation> points,
                  double tolerance);

struct FrocPoint {
    double fppi = 0.0;
    double sensitivity = 0.0;
};

/// Operating points sorted by fppi ascending with non-decreasing sensitivity.
struct FrocCurve {
    std::vector<FrocPoint> points;
};

/// One evaluated image: its candidate components and reference points.
struct FrocSubject {
    std::vector<Component> components;
    std::vector<PointAnnotation> points;
};

/// Sweeps confidence cutoffs over the distinct component confidences
/// (descending). At each cutoff, components at or above it are matched per
/// subject; sensitivity pools detected points over all subjects, fppi counts
/// false-positive components per evaluated image. Equal-fppi points collapse
/// to their best sensitivity and the curve is made monotone by cumulative
/// max. No components at all yields the single point (0, 0).
FrocCurve froc_curve(std::span<const FrocSubject> subjects, int n_images,
                     double tolerance = 5.0);

/// Mean over levels of the best sensitivity reachable at fppi <= level
/// (0 when no operating point qualifies).
double froc_score(const FrocCurve& curve, std::span<const double> levels);

enum class LabelFilter { All, LesionOnly, NonLesionalOnly };

std::string to_string(LabelFilter f);
LabelFilter label_filter_from_string(const std::string& text);

struct DetectionConfig {
    std::vector<double> binarize_thresholds{0.036, 0.1, 0.5};
    double match_tolerance = 5.0;
    std::vector<double> fppi_levels{0.25, 0.5, 1.0, 1.5};
};

struct DetectionRow {
    double threshold = 0.0;
    LabelFilter filter = LabelFilter::All;
    double froc = 0.0;
    int n_images = 0;   // subjects evaluated under the filter
    int n_excluded = 0; // subjects with no annotations under the filter
    int n_points = 0;
    FrocCurve curve;
};

/// FROC grid over thresholds x filters (row order: for each threshold, each
/// filter). Subjects without annotations under a filter are excluded from
/// that filter's rows and counted. maps and annotations are parallel.
std::vector<DetectionRow> evaluate_detection(std::span<const AnomalyMap> maps,
                                             std::span<const std::vector<PointAnnotation>> annotations,
                                             const DetectionConfig& cfg,
                                             std::span<const LabelFilter> filters);

std::vector<DetectionRow> evaluate_detection(std::span<const AnomalyMap> maps,
                                             std::span<const std::vector<PointAnnotation>> annotations,
                                             const DetectionConfig& cfg);

} // namespace flowlens
