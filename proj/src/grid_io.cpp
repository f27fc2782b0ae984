#include "flowlens/grid_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "bytes.hpp"

namespace flowlens {

namespace {

constexpr char kMagic[5] = {'A', 'G', 'R', 'D', '1'};

enum GridKind : std::uint8_t { kImage = 0, kMask = 1, kAnomalyMap = 2 };

using detail::ByteReader;
using detail::put_f64le;
using detail::put_u32le;
using detail::write_bytes;

std::string header(GridKind kind, int width, int height, double spacing) {
    std::string out;
    out.append(kMagic, 5);
    out.push_back(static_cast<char>(kind));
    put_u32le(out, static_cast<std::uint32_t>(width));
    put_u32le(out, static_cast<std::uint32_t>(height));
    put_f64le(out, spacing);
    return out;
}

std::string payload_f64(std::span<const double> values) {
    std::string out;
    out.reserve(values.size() * 8);
    for (double v : values) put_f64le(out, v);
    return out;
}

} // namespace

void write_grid(const std::filesystem::path& path, const Image2D& grid) {
    std::string bytes = header(kImage, grid.width(), grid.height(), grid.spacing());
    bytes += payload_f64(grid.pixels());
    write_bytes(path, bytes);
}

void write_grid(const std::filesystem::path& path, const BinaryMask& grid) {
    std::string bytes = header(kMask, grid.width(), grid.height(), grid.spacing());
    for (std::uint8_t v : grid.pixels()) bytes.push_back(static_cast<char>(v));
    write_bytes(path, bytes);
}

void write_grid(const std::filesystem::path& path, const AnomalyMap& grid) {
    std::string bytes = header(kAnomalyMap, grid.width(), grid.height(), grid.spacing());
    bytes += payload_f64(grid.scores());
    write_bytes(path, bytes);
}

void write_grid(const std::filesystem::path& path, const GridVariant& grid) {
    std::visit([&](const auto& g) { write_grid(path, g); }, grid);
}

GridVariant read_grid(const std::filesystem::path& path) {
    ByteReader r(detail::read_bytes(path), path);

    r.expect_magic(kMagic, 5);
    std::uint8_t kind = r.u8("kind");
    if (kind > kAnomalyMap) {
        throw FormatError("unknown grid kind " + std::to_string(kind) + " in '" + path.string() +
                          "'");
    }
    std::uint32_t width = r.u32le("width");
    std::uint32_t height = r.u32le("height");
    if (width == 0 || height == 0) {
        throw FormatError("zero width or height in '" + path.string() + "'");
    }
    double spacing = r.f64le("spacing");
    if (!std::isfinite(spacing) || spacing <= 0.0) {
        throw FormatError("non-positive or non-finite spacing in '" + path.string() + "'");
    }
    std::size_t count = static_cast<std::size_t>(width) * height;

    if (kind == kMask) {
        std::vector<std::uint8_t> pixels(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint8_t v = r.u8("payload");
            if (v > 1) {
                throw FormatError("mask payload byte " + std::to_string(i) + " not 0/1 in '" +
                                  path.string() + "'");
            }
            pixels[i] = v;
        }
        r.expect_end();
        return BinaryMask(static_cast<int>(width), static_cast<int>(height), spacing,
                          std::move(pixels));
    }

    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        double v = r.f64le("payload");
        if (!std::isfinite(v)) {
            throw FormatError("non-finite payload value at index " + std::to_string(i) + " in '" +
                              path.string() + "'");
        }
        if (kind == kAnomalyMap && v < 0.0) {
            throw FormatError("negative anomaly score at index " + std::to_string(i) + " in '" +
                              path.string() + "'");
        }
        values[i] = v;
    }
    r.expect_end();
    if (kind == kImage) {
        return Image2D(static_cast<int>(width), static_cast<int>(height), spacing,
                       std::move(values));
    }
    return AnomalyMap(static_cast<int>(width), static_cast<int>(height), spacing,
                      std::move(values));
}

namespace {

template <typename T>
T read_kind(const std::filesystem::path& path, const char* name) {
    GridVariant v = read_grid(path);
    if (auto* g = std::get_if<T>(&v)) return std::move(*g);
    throw FormatError("'" + path.string() + "' does not hold " + name);
}

} // namespace

Image2D read_image(const std::filesystem::path& path) {
    return read_kind<Image2D>(path, "an image");
}

BinaryMask read_mask(const std::filesystem::path& path) {
    return read_kind<BinaryMask>(path, "a mask");
}

AnomalyMap read_anomaly_map(const std::filesystem::path& path) {
    return read_kind<AnomalyMap>(path, "an anomaly map");
}

const std::vector<PointAnnotation>& AnnotationSet::of(const std::string& id) const {
    static const std::vector<PointAnnotation> empty;
    auto it = by_subject.find(id);
    return it == by_subject.end() ? empty : it->second;
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_coord(const std::string& text, std::size_t line_no, const char* field) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric " + field + " '" +
                         text + "'");
    }
    if (used != text.size() || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric " + field + " '" +
                         text + "'");
    }
    return v;
}

} // namespace

AnnotationSet read_annotations(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path.string() + "' for reading");

    AnnotationSet set;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(f, line)) {
        ++line_no;
        if (!saw_header) {
            auto fields = split_csv_row(line);
            if (fields.size() != 5 || fields[0] != "subject_id" || fields[1] != "x" ||
                fields[2] != "y" || fields[3] != "label" || fields[4] != "rater") {
                throw ParseError("line 1: expected header 'subject_id,x,y,label,rater'");
            }
            saw_header = true;
            continue;
        }
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_row(line);
        if (fields.size() != 5) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                             std::to_string(fields.size()));
        }
        if (fields[0].empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": empty subject_id");
        }
        PointAnnotation p;
        p.x = parse_coord(fields[1], line_no, "x coordinate");
        p.y = parse_coord(fields[2], line_no, "y coordinate");
        try {
            p.label = annotation_label_from_string(fields[3]);
        } catch (const ParseError&) {
            throw ParseError("line " + std::to_string(line_no) + ": unknown label '" + fields[3] +
                             "'");
        }
        p.rater = fields[4];
        if (set.by_subject.find(fields[0]) == set.by_subject.end()) {
            set.subject_order.push_back(fields[0]);
        }
        set.by_subject[fields[0]].push_back(std::move(p));
    }
    if (!saw_header) throw ParseError("line 1: expected header 'subject_id,x,y,label,rater'");
    return set;
}

void write_annotations(const std::filesystem::path& path, const AnnotationSet& set) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << "subject_id,x,y,label,rater\n";
    char buf[64];
    for (const auto& id : set.subject_order) {
        for (const auto& p : set.of(id)) {
            std::snprintf(buf, sizeof(buf), "%.10g,%.10g", p.x, p.y);
            f << id << ',' << buf << ',' << to_string(p.label) << ',' << p.rater << '\n';
        }
    }
    if (!f) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace flowlens
