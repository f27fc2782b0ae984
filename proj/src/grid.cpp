#include "flowlens/grid.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

namespace flowlens {

namespace {

void check_geometry(int width, int height, double spacing, std::size_t pixel_count,
                    const char* type_name) {
    if (width <= 0 || height <= 0) {
        throw ParameterError(std::string(type_name) + ": width and height must be positive");
    }
    if (!(spacing > 0.0) || !std::isfinite(spacing)) {
        throw ParameterError(std::string(type_name) + ": spacing must be positive and finite");
    }
    if (pixel_count != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw ParameterError(std::string(type_name) + ": pixel count " +
                             std::to_string(pixel_count) + " does not match " +
                             std::to_string(width) + "x" + std::to_string(height));
    }
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    }
    return true;
}

} // namespace

Image2D::Image2D(int width, int height, double spacing, std::vector<double> pixels)
    : width_(width), height_(height), spacing_(spacing), pixels_(std::move(pixels)) {
    check_geometry(width_, height_, spacing_, pixels_.size(), "Image2D");
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
        if (!std::isfinite(pixels_[i])) {
            throw ParameterError("Image2D: non-finite pixel at index " + std::to_string(i));
        }
    }
}

bool Image2D::operator==(const Image2D& other) const {
    return width_ == other.width_ && height_ == other.height_ && spacing_ == other.spacing_ &&
           bitwise_equal(pixels_, other.pixels_);
}

BinaryMask::BinaryMask(int width, int height, double spacing, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), spacing_(spacing), pixels_(std::move(pixels)) {
    check_geometry(width_, height_, spacing_, pixels_.size(), "BinaryMask");
    for (auto& v : pixels_) {
        if (v > 1) throw ParameterError("BinaryMask: pixel values must be 0 or 1");
    }
}

std::size_t BinaryMask::area() const {
    return static_cast<std::size_t>(
        std::accumulate(pixels_.begin(), pixels_.end(), std::size_t{0}));
}

bool BinaryMask::operator==(const BinaryMask& other) const {
    return width_ == other.width_ && height_ == other.height_ && spacing_ == other.spacing_ &&
           pixels_ == other.pixels_;
}

AnomalyMap::AnomalyMap(int width, int height, double spacing, std::vector<double> scores)
    : width_(width), height_(height), spacing_(spacing), scores_(std::move(scores)) {
    check_geometry(width_, height_, spacing_, scores_.size(), "AnomalyMap");
    for (std::size_t i = 0; i < scores_.size(); ++i) {
        if (!std::isfinite(scores_[i]) || scores_[i] < 0.0) {
            throw ParameterError("AnomalyMap: score at index " + std::to_string(i) +
                                 " must be finite and non-negative");
        }
    }
}

bool AnomalyMap::operator==(const AnomalyMap& other) const {
    return width_ == other.width_ && height_ == other.height_ && spacing_ == other.spacing_ &&
           bitwise_equal(scores_, other.scores_);
}

std::string to_string(AnnotationLabel label) {
    return label == AnnotationLabel::Lesion ? "lesion" : "nonlesion";
}

AnnotationLabel annotation_label_from_string(const std::string& text) {
    if (text == "lesion") return AnnotationLabel::Lesion;
    if (text == "nonlesion") return AnnotationLabel::NonLesional;
    throw ParseError("unknown annotation label '" + text + "'");
}

Subject::Subject(std::string id_in, Image2D image_in, std::optional<BinaryMask> lesion_mask_in,
                 std::vector<PointAnnotation> annotations_in)
    : id(std::move(id_in)),
      image(std::move(image_in)),
      lesion_mask(std::move(lesion_mask_in)),
      annotations(std::move(annotations_in)) {
    if (id.empty()) throw ParameterError("Subject: id must be non-empty");
    if (lesion_mask) require_same_geometry(image, *lesion_mask, "Subject");
    for (const auto& p : annotations) {
        if (!(p.x >= 0.0 && p.x < image.width() && p.y >= 0.0 && p.y < image.height())) {
            throw ParameterError("Subject " + id + ": annotation (" + std::to_string(p.x) + "," +
                                 std::to_string(p.y) + ") outside image bounds");
        }
    }
}

} // namespace flowlens
