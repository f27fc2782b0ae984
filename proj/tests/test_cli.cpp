#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

#include "flowlens/experiment.hpp"
#include "flowlens/grid_io.hpp"

using namespace flowlens;
namespace fs = std::filesystem;

// FLOWLENS_BIN is injected by the build; these cases exercise the installed
// command surface end to end, exit codes included.

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(FLOWLENS_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

fs::path temp_dir(const char* name) {
    static int counter = 0;
    fs::path p =
        fs::temp_directory_path() / ("flowlens_cli_" + std::to_string(counter++) + "_" + name);
    fs::create_directories(p);
    return p;
}

std::string q(const fs::path& p) { return p.string(); }

int count_lines(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    int n = 0;
    std::string line;
    while (std::getline(f, line)) ++n;
    return n;
}

} // namespace

TEST_CASE("the full command pipeline runs out of the box") {
    const fs::path base = temp_dir("pipeline");
    const fs::path data = base / "data";
    const fs::path model = base / "model.aflw";
    const fs::path loss = base / "loss.csv";
    const fs::path recon_val = base / "recon_val";
    const fs::path recon_test = base / "recon_test";

    REQUIRE(run("generate --out " + q(data) + " --n 10 --size 16 --contamination 0.5") == 0);
    CHECK(fs::exists(data / "manifest.json"));
    CHECK(fs::exists(data / "annotations.csv"));
    CHECK(fs::exists(data / "images" / "s0001.agrd"));
    CHECK(fs::is_directory(data / "masks"));

    REQUIRE(run("train --data " + q(data) + " --out " + q(model) + " --epochs 3 --hidden 16" +
                " --loss-out " + q(loss)) == 0);
    CHECK(fs::exists(model));
    CHECK(count_lines(loss) == 4); // header + one row per epoch
    CHECK_NOTHROW(load_model(model.string()));

    REQUIRE(run("reconstruct --model " + q(model) + " --data " + q(data) + " --out " +
                q(recon_val) + " --split val") == 0);
    REQUIRE(run("reconstruct --model " + q(model) + " --data " + q(data) + " --out " +
                q(recon_test) + " --split test") == 0);
    CHECK_FALSE(fs::is_empty(recon_val));
    CHECK_FALSE(fs::is_empty(recon_test));

    const fs::path seg = base / "seg.csv";
    REQUIRE(run("evaluate-seg --maps " + q(recon_test) + " --gt " + q(data / "masks") +
                " --threshold auto --val-maps " + q(recon_val) + " --val-gt " +
                q(data / "masks") + " --out " + q(seg)) == 0);
    CHECK(count_lines(seg) >= 3); // subject rows plus aggregate and exclusion rows

    const fs::path froc = base / "froc.csv";
    REQUIRE(run("evaluate-froc --maps " + q(recon_test) + " --annotations " +
                q(data / "annotations.csv") + " --thresholds 0.2,0.5 --out " + q(froc)) == 0);
    CHECK(count_lines(froc) >= 2);
    // per-threshold curve files land next to the table
    CHECK(fs::exists(base / "froc_curve_t0_lesion.csv"));

    const fs::path merged = base / "merged.csv";
    REQUIRE(run("merge-annotations --a " + q(data / "annotations.csv") + " --b " +
                q(data / "annotations.csv") + " --out " + q(merged) + " --radius 2") == 0);
    CHECK_NOTHROW(read_annotations(merged));

    const fs::path cmp = base / "cmp.csv";
    REQUIRE(run("report --a " + q(seg) + " --b " + q(seg) + " --test dice --out " + q(cmp)) == 0);
    CHECK(count_lines(cmp) == 2); // header + one comparison row
    REQUIRE(run("report --a " + q(seg) + " --b " + q(seg) + " --test hd95 --out " + q(cmp)) == 0);
    CHECK(count_lines(cmp) == 3); // appended without repeating the header

    fs::remove_all(base);
}

TEST_CASE("experiment --emit-config prints the resolved settings") {
    CHECK(run("experiment --emit-config") == 0);
}

TEST_CASE("usage problems exit with code 1") {
    CHECK(run("") == 1);                       // a subcommand is required
    CHECK(run("frobnicate") == 1);             // unknown subcommand
    CHECK(run("generate") == 1);               // --out is required
    CHECK(run("generate --out") == 1);         // flag without a value
    CHECK(run("train") == 1);                  // --data is required
    CHECK(run("evaluate-froc --maps x") == 1); // --annotations/--out missing
    CHECK(run("report --a x.csv") == 1);       // --b missing

    // auto threshold needs a validation split to calibrate on
    const fs::path base = temp_dir("auto");
    write_grid(base / "s0001.agrd", AnomalyMap(2, 2, {0.0, 0.0, 0.9, 0.0}));
    write_grid(base / "gt_s0001.agrd", BinaryMask(2, 2, {0, 0, 1, 0}));
    const fs::path gt = base / "gt";
    fs::create_directories(gt);
    fs::rename(base / "gt_s0001.agrd", gt / "s0001.agrd");
    CHECK(run("evaluate-seg --maps " + q(base) + " --gt " + q(gt) +
              " --threshold auto --out " + q(base / "seg.csv")) == 1);
    fs::remove_all(base);
}

TEST_CASE("data problems exit with code 2") {
    const fs::path base = temp_dir("baddata");

    // a directory with one corrupt grid file
    const fs::path maps = base / "maps";
    fs::create_directories(maps);
    std::ofstream(maps / "s0001.agrd") << "this is not a grid";
    CHECK(run("evaluate-seg --maps " + q(maps) + " --gt " + q(maps) +
              " --threshold 0.5 --out " + q(base / "seg.csv")) == 2);

    // a model checkpoint that is not one
    const fs::path fake = base / "model.aflw";
    std::ofstream(fake) << "XXXXXXXXXXXX";
    CHECK(run("reconstruct --model " + q(fake) + " --data " + q(base) + " --out " +
              q(base / "out")) == 2);

    // missing dataset directory
    CHECK(run("train --data " + q(base / "absent")) == 2);

    fs::remove_all(base);
}

TEST_CASE("numeric blowups exit with code 3") {
    const fs::path base = temp_dir("diverge");
    const fs::path data = base / "data";
    REQUIRE(run("generate --out " + q(data) + " --n 10 --size 16") == 0);
    CHECK(run("train --data " + q(data) + " --out " + q(base / "m.aflw") +
              " --epochs 10 --hidden 16 --lr 1e9") == 3);
    fs::remove_all(base);
}
