#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowlens/grid.hpp"

namespace flowlens {

// AGRD1 binary grid container:
//   bytes 0..4   magic "AGRD1"
//   byte  5      kind: 0 = f64 image, 1 = u8 mask, 2 = f64 anomaly map
//   bytes 6..9   width,  u32 little-endian
//   bytes 10..13 height, u32 little-endian
//   bytes 14..21 spacing, f64 little-endian
//   payload      row-major pixels: f64 little-endian, or one byte per mask pixel
// Writing then reading reproduces the grid bit-exactly.

void write_grid(const std::filesystem::path& path, const Image2D& grid);
void write_grid(const std::filesystem::path& path, const BinaryMask& grid);
void write_grid(const std::filesystem::path& path, const AnomalyMap& grid);
void write_grid(const std::filesystem::path& path, const GridVariant& grid);

GridVariant read_grid(const std::filesystem::path& path);

/// read_grid with the expected alternative already unwrapped; throws
/// FormatError if the file holds a different kind.
Image2D read_image(const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);
AnomalyMap read_anomaly_map(const std::filesystem::path& path);

/// Annotation CSV: header `subject_id,x,y,label,rater`, one click per row,
/// label in {lesion, nonlesion}. Returns annotations grouped by subject id,
/// preserving row order within each subject and the order of first
/// appearance across subjects.
struct AnnotationSet {
    std::vector<std::string> subject_order;
    std::map<std::string, std::vector<PointAnnotation>> by_subject;

    const std::vector<PointAnnotation>& of(const std::string& id) const;
};

AnnotationSet read_annotations(const std::filesystem::path& path);

void write_annotations(const std::filesystem::path& path, const AnnotationSet& set);

} // namespace flowlens
