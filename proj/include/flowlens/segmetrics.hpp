#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowlens/grid.hpp"

namespace flowlens {

/// Linear-interpolation percentile of the values, fraction p in [0,1]:
/// with the sorted values v and h = p*(n-1), returns
/// v[floor(h)] + (h - floor(h)) * (v[floor(h)+1] - v[floor(h)]).
double percentile(std::vector<double> values, double p);

/// 2|P and G| / (|P| + |G|); 1.0 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& gt);

/// Border distances in mm. Border pixels are mask pixels with at least one
/// off-mask 4-neighbor or lying on the grid edge. Directed nearest-border
/// distances are computed in both directions and pooled into one multiset:
/// hd95 is its 95th percentile (linear interpolation), asd its mean.
/// Either mask empty -> nullopt (callers report the exclusion).
struct SurfaceDistances {
    double hd95 = 0.0;
    double asd = 0.0;
};

std::optional<SurfaceDistances> surface_distances(const BinaryMask& pred, const BinaryMask& gt);

/// Component-level detection counts. A ground-truth component is detected
/// when a single predicted component covers at least `overlap` of its area
/// (inclusive); a predicted component is a false positive when it reaches
/// that bar for no ground-truth component.
struct LesionF1 {
    double f1 = 1.0;
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

LesionF1 lesion_f1(const BinaryMask& pred, const BinaryMask& gt, double overlap = 0.10);

enum class SizeStratum { S, M, L };

std::string to_string(SizeStratum s);

struct StrataThresholds {
    double q25 = 0.0;
    double q75 = 0.0;

    /// S: area < q25; M: q25 <= area <= q75; L: area > q75.
    SizeStratum classify(double area) const;
};

/// 25th/75th linear-interpolation percentiles of the per-subject lesion
/// areas. Intended for four or more lesions; empty input is an error.
StrataThresholds size_strata(std::span<const double> areas);

/// Pixels scoring >= threshold.
BinaryMask binarize(const AnomalyMap& map, double threshold);

/// The grid threshold maximizing mean Dice of the binarized maps against the
/// ground truth; ties resolve to the smaller threshold.
double select_threshold(std::span<const AnomalyMap> maps, std::span<const BinaryMask> gts,
                        std::span<const double> grid);

struct SegSubjectRow {
    std::string id;
    double gt_area = 0.0; // pixels
    SizeStratum stratum = SizeStratum::M;
    double dice = 0.0;
    std::optional<double> hd95; // mm; empty when either mask has no pixels
    std::optional<double> asd;
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

struct SegAggregate {
    int n = 0;
    double mean_dice = 0.0;
    std::optional<double> mean_hd95; // over subjects where defined
    std::optional<double> mean_asd;
    int surface_excluded = 0; // subjects lacking hd95/asd
    int tp = 0;               // lesion counts pooled over subjects
    int fp = 0;
    int fn = 0;
    double f1 = 1.0; // from the pooled counts
};

/// Table-shaped segmentation report: per-subject rows over the subjects with
/// a non-empty ground-truth mask, stratified by total lesion area.
struct SegReport {
    std::vector<SegSubjectRow> subjects;
    StrataThresholds strata;
    SegAggregate overall;
    std::map<SizeStratum, SegAggregate> by_stratum;
    int excluded_empty_gt = 0; // subjects dropped for having no lesion pixels
};

/// Binarizes each map at the threshold and scores it against its mask.
/// ids/maps/gts are parallel. Subjects whose ground truth is empty are
/// excluded (counted in excluded_empty_gt); strata thresholds come from the
/// included subjects' total lesion areas.
SegReport evaluate_segmentation(std::span<const std::string> ids,
                                std::span<const AnomalyMap> maps,
                                std::span<const BinaryMask> gts, double threshold,
                                double overlap = 0.10);

} // namespace flowlens
