#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "flowlens/grid.hpp"

namespace flowlens {

/// Axis-aligned ellipse in pixel coordinates, painted at a flat intensity.
struct Ellipse {
    double cx = 0.0;
    double cy = 0.0;
    double rx = 0.0;
    double ry = 0.0;
    double intensity = 0.0;

    bool contains(double x, double y) const {
        double u = (x - cx) / rx;
        double v = (y - cy) / ry;
        return u * u + v * v <= 1.0;
    }

    /// Elliptical radial coordinate: 1 on the boundary, <1 inside.
    double radial(double x, double y) const {
        double u = (x - cx) / rx;
        double v = (y - cy) / ry;
        return std::sqrt(u * u + v * v);
    }
};

/// Fully resolved geometry of one synthetic head: outer boundary (the brain),
/// tissue overlays and a dark ventricle, plus the noise stream seed.
struct PhantomParams {
    int size = 32;
    Ellipse outer;
    std::vector<Ellipse> tissues;
    Ellipse ventricle;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
};

/// Draws PhantomParams from the configured anatomy ranges, deterministically
/// from the seed. Different seeds vary ellipse centers, sizes and intensities.
PhantomParams sample_phantom_params(int size, double noise_sigma, std::uint64_t seed);

/// Renders the phantom: flat ellipse stack plus Gaussian noise inside the
/// brain, exactly 0 outside it, then z-scored to mean 0 / std 1 over brain
/// pixels. Pure function of params (noise comes from params.seed).
Image2D gen_healthy(const PhantomParams& params);

/// Pixels that belong to the brain, i.e. are nonzero in a healthy phantom.
BinaryMask brain_mask(const Image2D& img);

struct LesionParams {
    int count_min = 1;
    int count_max = 2;
    double radius_min = 2.5;   // pixels
    double radius_max = 4.5;
    double delta_min = -3.0;   // intensity change, z-units
    double delta_max = -1.8;
    double softness = 1.0;     // edge falloff width, pixels

    /// Smallest |delta| the configured interval can produce.
    double min_abs_delta() const;
};

struct LesionInjection {
    Image2D image;
    BinaryMask mask;
};

/// Adds soft-edged focal blobs fully inside brain tissue. The returned mask
/// marks exactly the pixels whose intensity changed by more than half the
/// configured minimum |delta|. Placement uses rejection sampling (100
/// attempts per blob). The input image is not modified.
LesionInjection inject_lesion(const Image2D& img, const LesionParams& params, std::uint64_t seed);

enum class SubtleKind { VentricleEnlargement, SulcalWidening, PeriventricularHypo };

std::string to_string(SubtleKind kind);
SubtleKind subtle_kind_from_string(const std::string& text);

struct SubtleParams {
    SubtleKind kind = SubtleKind::VentricleEnlargement;
    double magnitude_min = 0.15;
    double magnitude_max = 0.35;
};

struct SubtleInjection {
    Image2D image;
    std::vector<PointAnnotation> annotations; // one NonLesional point
};

/// Applies a weak structural change (enlarged ventricle, widened sulcus, or
/// periventricular hyposignal) and returns one NonLesional annotation placed
/// on the changed pixel nearest the altered region's centroid. The per-pixel
/// change is deliberately weaker than any configured lesion delta; phantom
/// supplies the ventricle geometry the mechanisms are anchored to.
SubtleInjection inject_subtle(const Image2D& img, const SubtleParams& params,
                              const PhantomParams& phantom, std::uint64_t seed);

/// Mean |change| over the pixels that differ between the two images; 0 when
/// no pixel differs.
double mean_abs_change(const Image2D& before, const Image2D& after);

enum class Split { Train, Val, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

struct DatasetEntry {
    Subject subject;                            // train: clean image; val/test: anomalous image
    std::optional<Image2D> contaminated_image;  // train subjects flagged contaminated
    std::optional<PhantomParams> phantom;       // geometry used to build the subject
    Split split = Split::Train;
    bool contaminated = false;                  // train only
    bool normal = false;                        // val/test subjects with no anomaly
};

struct Dataset {
    std::vector<DatasetEntry> entries;

    std::vector<const DatasetEntry*> split(Split s) const;
};

struct DatasetParams {
    int n_subjects = 50;
    int phantom_size = 32;
    double noise_sigma = 0.05;
    LesionParams lesion;
    SubtleParams subtle;
    double contamination_fraction = 0.0;
    // val/test composition draws
    double p_lesion = 0.85;
    double p_subtle = 0.55;
    double p_normal = 0.15;
    std::uint64_t seed = 0;
};

/// Builds the train/val/test pools. Split sizes are floor(0.8n) / floor(0.1n)
/// / remainder. Training subjects are healthy phantoms; a contamination
/// fraction of them additionally carries a subtle abnormality as a separate
/// image variant. Val/test subjects carry lesions and/or subtle abnormalities
/// with per-subject ground truth; each split keeps at least one lesioned and
/// one fully normal subject where its size allows. Deterministic per seed:
/// every per-subject stream is derived from (seed, subject index).
Dataset make_dataset(const DatasetParams& params);

} // namespace flowlens
