#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flowlens/errors.hpp"

namespace flowlens {

/// Rectangular scalar grid of z-score-normalized intensities.
///
/// Row-major storage, origin at the top-left corner, x indexes columns and
/// y indexes rows. Geometry and pixel values are fixed at construction;
/// instances are safe to share across threads.
class Image2D {
public:
    Image2D(int width, int height, double spacing, std::vector<double> pixels);
    Image2D(int width, int height, std::vector<double> pixels)
        : Image2D(width, height, 1.0, std::move(pixels)) {}

    int width() const { return width_; }
    int height() const { return height_; }
    double spacing() const { return spacing_; }
    std::span<const double> pixels() const { return pixels_; }

    double at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    std::size_t size() const { return pixels_.size(); }

    bool operator==(const Image2D& other) const;

private:
    int width_;
    int height_;
    double spacing_;
    std::vector<double> pixels_;
};

/// Row-major boolean grid sharing Image2D's geometry conventions.
class BinaryMask {
public:
    BinaryMask(int width, int height, double spacing, std::vector<std::uint8_t> pixels);
    BinaryMask(int width, int height, std::vector<std::uint8_t> pixels)
        : BinaryMask(width, height, 1.0, std::move(pixels)) {}

    int width() const { return width_; }
    int height() const { return height_; }
    double spacing() const { return spacing_; }
    std::span<const std::uint8_t> pixels() const { return pixels_; }

    bool at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    std::size_t size() const { return pixels_.size(); }

    /// Count of set pixels.
    std::size_t area() const;

    bool operator==(const BinaryMask& other) const;

private:
    int width_;
    int height_;
    double spacing_;
    std::vector<std::uint8_t> pixels_;
};

/// Per-pixel anomaly scores; every score is finite and non-negative.
class AnomalyMap {
public:
    AnomalyMap(int width, int height, double spacing, std::vector<double> scores);
    AnomalyMap(int width, int height, std::vector<double> scores)
        : AnomalyMap(width, height, 1.0, std::move(scores)) {}

    int width() const { return width_; }
    int height() const { return height_; }
    double spacing() const { return spacing_; }
    std::span<const double> scores() const { return scores_; }

    double at(int x, int y) const { return scores_[static_cast<std::size_t>(y) * width_ + x]; }
    std::size_t size() const { return scores_.size(); }

    bool operator==(const AnomalyMap& other) const;

private:
    int width_;
    int height_;
    double spacing_;
    std::vector<double> scores_;
};

enum class AnnotationLabel { Lesion, NonLesional };

std::string to_string(AnnotationLabel label);
AnnotationLabel annotation_label_from_string(const std::string& text);

/// A rater's click. Coordinates are sub-pixel, top-left origin,
/// x = column and y = row, matching the grid convention.
struct PointAnnotation {
    double x = 0.0;
    double y = 0.0;
    AnnotationLabel label = AnnotationLabel::Lesion;
    std::string rater; // empty when unknown

    bool operator==(const PointAnnotation&) const = default;
};

/// One subject: image plus optional ground truth. Construction rejects
/// mask geometry mismatches and out-of-bounds annotations.
struct Subject {
    std::string id;
    Image2D image;
    std::optional<BinaryMask> lesion_mask;
    std::vector<PointAnnotation> annotations;

    Subject(std::string id, Image2D image, std::optional<BinaryMask> lesion_mask,
            std::vector<PointAnnotation> annotations);
};

using GridVariant = std::variant<Image2D, BinaryMask, AnomalyMap>;

/// Throws ShapeError unless both grids share width, height and spacing.
template <typename A, typename B>
void require_same_geometry(const A& a, const B& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height() || a.spacing() != b.spacing()) {
        throw ShapeError(std::string(what) + ": grid geometry mismatch (" +
                         std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                         std::to_string(b.width()) + "x" + std::to_string(b.height()) + ")");
    }
}

} // namespace flowlens
