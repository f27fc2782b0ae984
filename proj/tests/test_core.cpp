#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"

#include "flowlens/components.hpp"
#include "flowlens/grid.hpp"
#include "flowlens/grid_io.hpp"
#include "flowlens/rng.hpp"

using namespace flowlens;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    static int counter = 0;
    return fs::temp_directory_path() / ("flowlens_core_" + std::to_string(counter++) + "_" + name);
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f), {});
}

BinaryMask mask_from(int w, int h, std::initializer_list<int> set_pixels) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h, 0);
    for (int i : set_pixels) px[static_cast<std::size_t>(i)] = 1;
    return BinaryMask(w, h, std::move(px));
}

} // namespace

TEST_CASE("grid addressing is row-major with x as column") {
    Image2D img(3, 2, {0, 1, 2, 10, 11, 12});
    CHECK(img.at(0, 0) == 0);
    CHECK(img.at(2, 0) == 2);
    CHECK(img.at(0, 1) == 10);
    CHECK(img.at(2, 1) == 12);
    CHECK(img.width() == 3);
    CHECK(img.height() == 2);
    CHECK(img.spacing() == 1.0);
    CHECK(img.size() == 6);
}

TEST_CASE("grid construction validates geometry") {
    CHECK_THROWS_AS(Image2D(0, 2, {}), ParameterError);
    CHECK_THROWS_AS(Image2D(2, -1, {}), ParameterError);
    CHECK_THROWS_AS(Image2D(2, 2, 0.0, std::vector<double>(4, 0.0)), ParameterError);
    CHECK_THROWS_AS(Image2D(2, 2, {1, 2, 3}), ParameterError); // count mismatch
    CHECK_THROWS_AS(BinaryMask(2, 2, {0, 1, 2, 0}), ParameterError); // pixels are 0/1
    CHECK_THROWS_AS(AnomalyMap(1, 1, {-0.5}), ParameterError);       // scores non-negative
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(Image2D(1, 1, {nan}), ParameterError);
}

TEST_CASE("mask area counts set pixels") {
    CHECK(mask_from(4, 4, {0, 5, 10, 15}).area() == 4);
    CHECK(mask_from(4, 4, {}).area() == 0);
}

TEST_CASE("require_same_geometry rejects mismatches") {
    Image2D a(4, 4, std::vector<double>(16, 0.0));
    Image2D b(4, 5, std::vector<double>(20, 0.0));
    Image2D c(4, 4, 2.0, std::vector<double>(16, 0.0));
    CHECK_THROWS_AS(require_same_geometry(a, b, "test"), ShapeError);
    CHECK_THROWS_AS(require_same_geometry(a, c, "test"), ShapeError);
    CHECK_NOTHROW(require_same_geometry(a, a, "test"));
}

TEST_CASE("1x1 grid file is exactly 30 bytes") {
    const fs::path p = temp_file("one.agrd");
    write_grid(p, Image2D(1, 1, {0.0}));
    CHECK(fs::file_size(p) == 30); // 5 magic + 1 kind + 4+4 dims + 8 spacing + 8 payload
    fs::remove(p);
}

TEST_CASE("grid files decode with an independent byte reader") {
    const fs::path p = temp_file("quad.agrd");
    write_grid(p, Image2D(2, 2, 0.7, {0.0, 1.0, 2.0, 3.0}));
    const auto file = oracle::decode_agrd(slurp(p));
    CHECK(file.kind == 0);
    CHECK(file.width == 2);
    CHECK(file.height == 2);
    CHECK(file.spacing == 0.7);
    REQUIRE(file.payload.size() == 4);
    CHECK(file.payload[0] == 0.0);
    CHECK(file.payload[1] == 1.0);
    CHECK(file.payload[2] == 2.0);
    CHECK(file.payload[3] == 3.0);
    fs::remove(p);
}

TEST_CASE("mask and anomaly files carry their own kind byte") {
    const fs::path pm = temp_file("m.agrd");
    const fs::path pa = temp_file("a.agrd");
    write_grid(pm, mask_from(2, 1, {1}));
    write_grid(pa, AnomalyMap(2, 1, {0.25, 4.0}));
    const auto fm = oracle::decode_agrd(slurp(pm));
    const auto fa = oracle::decode_agrd(slurp(pa));
    CHECK(fm.kind == 1);
    CHECK(fm.payload == std::vector<double>{0.0, 1.0});
    CHECK(fa.kind == 2);
    CHECK(fa.payload == std::vector<double>{0.25, 4.0});
    fs::remove(pm);
    fs::remove(pa);
}

TEST_CASE("grid round trip preserves every bit") {
    Pcg32 rng(99);
    std::vector<double> px(15 * 7);
    for (double& v : px) v = rng.gaussian();
    Image2D img(15, 7, 1.25, px);
    const fs::path p = temp_file("rt.agrd");
    write_grid(p, img);
    CHECK(read_image(p) == img);
    fs::remove(p);
}

TEST_CASE("kind mismatch on read is a format error") {
    const fs::path p = temp_file("kind.agrd");
    write_grid(p, Image2D(1, 1, {0.5}));
    CHECK_THROWS_AS(read_mask(p), FormatError);
    CHECK_THROWS_AS(read_anomaly_map(p), FormatError);
    CHECK_NOTHROW(read_image(p));
    fs::remove(p);
}

TEST_CASE("corrupt grid files fail loudly") {
    const fs::path p = temp_file("bad.agrd");

    SUBCASE("wrong magic") {
        std::ofstream(p, std::ios::binary) << "BGRD1xxxxxxxxxxxxxxxxxxxxxxxx";
        CHECK_THROWS_AS(read_grid(p), FormatError);
    }
    SUBCASE("truncated header") {
        std::ofstream(p, std::ios::binary) << "AGRD1";
        CHECK_THROWS_WITH_AS(read_grid(p), doctest::Contains("truncated"), FormatError);
    }
    SUBCASE("truncated payload") {
        write_grid(p, Image2D(4, 4, std::vector<double>(16, 1.0)));
        fs::resize_file(p, fs::file_size(p) - 9);
        CHECK_THROWS_AS(read_grid(p), FormatError);
    }
    SUBCASE("trailing garbage") {
        write_grid(p, Image2D(2, 2, std::vector<double>(4, 1.0)));
        std::ofstream(p, std::ios::binary | std::ios::app) << "extra";
        CHECK_THROWS_AS(read_grid(p), FormatError);
    }
    SUBCASE("mask byte outside 0/1") {
        write_grid(p, mask_from(2, 2, {0}));
        std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(22);
        f.put(2);
        f.close();
        CHECK_THROWS_AS(read_mask(p), FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_grid(temp_file("nope.agrd")), IoError);
    }
    fs::remove(p);
}

TEST_CASE("annotation csv round trip") {
    AnnotationSet set;
    set.subject_order = {"s2", "s1"};
    set.by_subject["s2"] = {{3.5, 4.25, AnnotationLabel::Lesion, "ea"},
                            {10, 11, AnnotationLabel::NonLesional, ""}};
    set.by_subject["s1"] = {{0, 0, AnnotationLabel::Lesion, "sl"}};
    const fs::path p = temp_file("ann.csv");
    write_annotations(p, set);

    std::ifstream f(p);
    std::string header;
    std::getline(f, header);
    CHECK(header == "subject_id,x,y,label,rater");

    AnnotationSet back = read_annotations(p);
    CHECK(back.subject_order == set.subject_order);
    CHECK(back.by_subject == set.by_subject);
    CHECK(back.of("s1").size() == 1);
    CHECK(back.of("unknown").empty());
    fs::remove(p);
}

TEST_CASE("annotation csv rejects malformed rows") {
    const fs::path p = temp_file("bad_ann.csv");

    SUBCASE("unknown label") {
        std::ofstream(p) << "subject_id,x,y,label,rater\ns1,1,2,tumor,\n";
        CHECK_THROWS_AS(read_annotations(p), ParseError);
    }
    SUBCASE("non-numeric coordinate") {
        std::ofstream(p) << "subject_id,x,y,label,rater\ns1,one,2,lesion,\n";
        CHECK_THROWS_AS(read_annotations(p), ParseError);
    }
    SUBCASE("wrong header") {
        std::ofstream(p) << "id,x,y,label,rater\n";
        CHECK_THROWS_AS(read_annotations(p), ParseError);
    }
    SUBCASE("short row") {
        std::ofstream(p) << "subject_id,x,y,label,rater\ns1,1,2\n";
        CHECK_THROWS_AS(read_annotations(p), ParseError);
    }
    fs::remove(p);
}

TEST_CASE("components: hand-built masks") {
    SUBCASE("empty mask has no components") {
        CHECK(label_components(mask_from(4, 4, {})).empty());
    }
    SUBCASE("single pixel") {
        const auto comps = label_components(mask_from(3, 3, {4}));
        REQUIRE(comps.size() == 1);
        CHECK(comps[0] == std::vector<Pixel>{{1, 1}});
    }
    SUBCASE("diagonal touch joins under 8-connectivity") {
        // .X.
        // X..
        const auto comps = label_components(mask_from(3, 2, {1, 3}));
        CHECK(comps.size() == 1);
    }
    SUBCASE("gap of one pixel separates") {
        const auto comps = label_components(mask_from(5, 1, {0, 2, 4}));
        CHECK(comps.size() == 3);
    }
    SUBCASE("components ordered by first row-major pixel") {
        // X..X
        // X..X
        const auto comps = label_components(mask_from(4, 2, {0, 3, 4, 7}));
        REQUIRE(comps.size() == 2);
        CHECK(comps[0].front() == Pixel{0, 0});
        CHECK(comps[1].front() == Pixel{3, 0});
    }
}

TEST_CASE("components match a flood-fill oracle on random masks") {
    Pcg32 rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const int w = static_cast<int>(rng.uniform_int(1, 20));
        const int h = static_cast<int>(rng.uniform_int(1, 20));
        std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
        for (auto& v : px) v = rng.uniform() < 0.35 ? 1 : 0;
        BinaryMask mask(w, h, px);
        const auto got = label_components(mask);
        const auto want = oracle::flood(mask);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i] == want[i]);
        }
    }
}

TEST_CASE("rng streams are deterministic and well-ranged") {
    Pcg32 a(7);
    Pcg32 b(7);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform() == b.uniform());
    }
    Pcg32 c(8);
    bool differs = false;
    Pcg32 a2(7);
    for (int i = 0; i < 100; ++i) differs |= a2.uniform() != c.uniform();
    CHECK(differs);

    Pcg32 r(123);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = r.uniform_int(-3, 3);
        CHECK(k >= -3);
        CHECK(k <= 3);
        CHECK(std::isfinite(r.gaussian()));
    }
    const double lo = 2.0, hi = 5.0;
    for (int i = 0; i < 100; ++i) {
        const double v = r.uniform(lo, hi);
        CHECK(v >= lo);
        CHECK(v < hi);
    }
}

TEST_CASE("derived seeds separate substreams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 100; ++i) seen.insert(derive_seed(42, i));
    CHECK(seen.size() == 100);
    CHECK(derive_seed(42, 0) == derive_seed(42, 0));
    CHECK(derive_seed(42, 0) != derive_seed(43, 0));
}
