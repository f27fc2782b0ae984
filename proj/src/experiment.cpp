#include "flowlens/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>

#include "json.hpp"

#include "flowlens/grid_io.hpp"
#include "flowlens/rng.hpp"

namespace flowlens {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string fmt3(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    return f;
}

void finish_out(std::ofstream& f, const fs::path& path) {
    f.flush();
    if (!f) throw IoError("write failed for '" + path.string() + "'");
}

// ---- config (de)serialization ----------------------------------------

json to_json(const LesionParams& p) {
    return {{"count_min", p.count_min},   {"count_max", p.count_max},
            {"radius_min", p.radius_min}, {"radius_max", p.radius_max},
            {"delta_min", p.delta_min},   {"delta_max", p.delta_max},
            {"softness", p.softness}};
}

LesionParams lesion_from_json(const json& j) {
    LesionParams p;
    p.count_min = j.value("count_min", p.count_min);
    p.count_max = j.value("count_max", p.count_max);
    p.radius_min = j.value("radius_min", p.radius_min);
    p.radius_max = j.value("radius_max", p.radius_max);
    p.delta_min = j.value("delta_min", p.delta_min);
    p.delta_max = j.value("delta_max", p.delta_max);
    p.softness = j.value("softness", p.softness);
    return p;
}

json to_json(const SubtleParams& p) {
    return {{"kind", to_string(p.kind)},
            {"magnitude_min", p.magnitude_min},
            {"magnitude_max", p.magnitude_max}};
}

SubtleParams subtle_from_json(const json& j) {
    SubtleParams p;
    if (j.contains("kind")) p.kind = subtle_kind_from_string(j.at("kind").get<std::string>());
    p.magnitude_min = j.value("magnitude_min", p.magnitude_min);
    p.magnitude_max = j.value("magnitude_max", p.magnitude_max);
    return p;
}

json to_json(const DatasetParams& p) {
    return {{"n_subjects", p.n_subjects},
            {"phantom_size", p.phantom_size},
            {"noise_sigma", p.noise_sigma},
            {"lesion", to_json(p.lesion)},
            {"subtle", to_json(p.subtle)},
            {"contamination_fraction", p.contamination_fraction},
            {"p_lesion", p.p_lesion},
            {"p_subtle", p.p_subtle},
            {"p_normal", p.p_normal},
            {"seed", p.seed}};
}

DatasetParams dataset_from_json(const json& j) {
    DatasetParams p;
    p.n_subjects = j.value("n_subjects", p.n_subjects);
    p.phantom_size = j.value("phantom_size", p.phantom_size);
    p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
    if (j.contains("lesion")) p.lesion = lesion_from_json(j.at("lesion"));
    if (j.contains("subtle")) p.subtle = subtle_from_json(j.at("subtle"));
    p.contamination_fraction = j.value("contamination_fraction", p.contamination_fraction);
    p.p_lesion = j.value("p_lesion", p.p_lesion);
    p.p_subtle = j.value("p_subtle", p.p_subtle);
    p.p_normal = j.value("p_normal", p.p_normal);
    p.seed = j.value("seed", p.seed);
    return p;
}

json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"t_samples", c.t_samples},
            {"seed", c.seed},
            {"optimizer", c.optimizer == Optimizer::Sgd ? "sgd" : "momentum"},
            {"momentum", c.momentum}};
}

TrainConfig train_from_json(const json& j, TrainConfig c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.t_samples = j.value("t_samples", c.t_samples);
    c.seed = j.value("seed", c.seed);
    if (j.contains("optimizer")) {
        const std::string name = j.at("optimizer").get<std::string>();
        if (name == "sgd") {
            c.optimizer = Optimizer::Sgd;
        } else if (name == "momentum") {
            c.optimizer = Optimizer::SgdMomentum;
        } else {
            throw ParseError("unknown optimizer '" + name + "' (expected sgd|momentum)");
        }
    }
    c.momentum = j.value("momentum", c.momentum);
    return c;
}

json to_json(const DetectionConfig& c) {
    return {{"thresholds", c.binarize_thresholds},
            {"match_tolerance", c.match_tolerance},
            {"fppi_levels", c.fppi_levels}};
}

DetectionConfig detection_from_json(const json& j) {
    DetectionConfig c;
    if (j.contains("thresholds")) {
        c.binarize_thresholds = j.at("thresholds").get<std::vector<double>>();
    }
    c.match_tolerance = j.value("match_tolerance", c.match_tolerance);
    if (j.contains("fppi_levels")) {
        c.fppi_levels = j.at("fppi_levels").get<std::vector<double>>();
    }
    return c;
}

// ---- stage error context ----------------------------------------------

std::string stage_msg(const std::string& name, const std::exception& e) {
    return "stage " + name + ": " + e.what();
}

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ParameterError& e) {
        throw ParameterError(stage_msg(name, e));
    } catch (const ShapeError& e) {
        throw ShapeError(stage_msg(name, e));
    } catch (const FormatError& e) {
        throw FormatError(stage_msg(name, e));
    } catch (const ParseError& e) {
        throw ParseError(stage_msg(name, e));
    } catch (const IoError& e) {
        throw IoError(stage_msg(name, e));
    } catch (const NumericError& e) {
        throw NumericError(stage_msg(name, e));
    } catch (const GenerationError& e) {
        throw GenerationError(stage_msg(name, e));
    } catch (const Error& e) {
        throw Error(stage_msg(name, e));
    }
}

} // namespace

// ---- dataset persistence ------------------------------------------------

void write_dataset(const fs::path& dir, const Dataset& ds, const DatasetParams& params) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");

    json manifest;
    manifest["format"] = "flowlens-dataset";
    manifest["version"] = 1;
    manifest["params"] = to_json(params);

    AnnotationSet anns;
    json subjects = json::array();
    for (const DatasetEntry& entry : ds.entries) {
        const Subject& s = entry.subject;
        write_grid(dir / "images" / (s.id + ".agrd"), s.image);
        if (entry.contaminated_image) {
            write_grid(dir / "images" / (s.id + ".contam.agrd"), *entry.contaminated_image);
        }
        if (s.lesion_mask) write_grid(dir / "masks" / (s.id + ".agrd"), *s.lesion_mask);
        if (!s.annotations.empty()) {
            anns.subject_order.push_back(s.id);
            anns.by_subject[s.id] = s.annotations;
        }
        subjects.push_back({{"id", s.id},
                            {"split", to_string(entry.split)},
                            {"contaminated", entry.contaminated},
                            {"normal", entry.normal},
                            {"has_mask", s.lesion_mask.has_value()},
                            {"annotations", s.annotations.size()}});
    }
    manifest["subjects"] = std::move(subjects);

    const fs::path manifest_path = dir / "manifest.json";
    std::ofstream f = open_out(manifest_path);
    f << manifest.dump(2) << '\n';
    finish_out(f, manifest_path);

    write_annotations(dir / "annotations.csv", anns);
}

StoredDataset read_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open '" + manifest_path.string() + "' for reading");
    json manifest;
    try {
        manifest = json::parse(f);
    } catch (const json::exception& e) {
        throw ParseError("'" + manifest_path.string() + "': " + e.what());
    }

    StoredDataset out;
    try {
        if (manifest.at("format").get<std::string>() != "flowlens-dataset") {
            throw FormatError("'" + manifest_path.string() + "' is not a dataset manifest");
        }
        out.params = dataset_from_json(manifest.at("params"));

        AnnotationSet anns;
        const fs::path ann_path = dir / "annotations.csv";
        if (fs::exists(ann_path)) anns = read_annotations(ann_path);

        for (const json& row : manifest.at("subjects")) {
            const std::string id = row.at("id").get<std::string>();
            Image2D image = read_image(dir / "images" / (id + ".agrd"));
            std::optional<BinaryMask> mask;
            if (row.at("has_mask").get<bool>()) {
                mask = read_mask(dir / "masks" / (id + ".agrd"));
            }
            std::optional<Image2D> contam;
            if (row.at("contaminated").get<bool>()) {
                contam = read_image(dir / "images" / (id + ".contam.agrd"));
            }
            DatasetEntry entry{Subject(id, std::move(image), std::move(mask), anns.of(id)),
                               std::move(contam),
                               std::nullopt,
                               split_from_string(row.at("split").get<std::string>()),
                               row.at("contaminated").get<bool>(),
                               row.at("normal").get<bool>()};
            out.dataset.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw ParseError("'" + manifest_path.string() + "': " + e.what());
    }
    return out;
}

std::vector<FlowPair> build_training_pairs(const Dataset& ds, const PairingConfig& cfg,
                                           bool use_contaminated) {
    if (cfg.pairs_per_subject < 1) throw ParameterError("pairs_per_subject must be positive");
    const auto train = ds.split(Split::Train);
    if (train.empty()) throw ParameterError("dataset has no training subjects");

    std::vector<FlowPair> pairs;
    pairs.reserve(train.size() * static_cast<std::size_t>(cfg.pairs_per_subject));
    for (std::size_t si = 0; si < train.size(); ++si) {
        const DatasetEntry& entry = *train[si];
        const Image2D& x1 = use_contaminated && entry.contaminated_image
                                ? *entry.contaminated_image
                                : entry.subject.image;
        const std::uint64_t subject_seed = derive_seed(cfg.seed, si);
        for (int k = 0; k < cfg.pairs_per_subject; ++k) {
            LesionInjection inj =
                inject_lesion(x1, cfg.lesion, derive_seed(subject_seed, static_cast<std::uint64_t>(k)));
            pairs.push_back(FlowPair{std::move(inj.image), x1});
        }
    }
    return pairs;
}

// ---- config JSON ----------------------------------------------------------

ExperimentConfig experiment_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }

    ExperimentConfig cfg;
    try {
        cfg.out_dir = j.value("out_dir", std::string());
        if (j.contains("dataset")) cfg.dataset = dataset_from_json(j.at("dataset"));

        if (j.contains("model")) {
            const json& m = j.at("model");
            if (m.contains("hidden")) cfg.model.hidden = m.at("hidden").get<std::vector<int>>();
            cfg.model.time_pairs = m.value("time_pairs", cfg.model.time_pairs);
            cfg.model.init_seed = m.value("init_seed", cfg.model.init_seed);
        }

        cfg.pairing.lesion = cfg.dataset.lesion;
        if (j.contains("pairing")) {
            const json& p = j.at("pairing");
            cfg.pairing.pairs_per_subject =
                p.value("pairs_per_subject", cfg.pairing.pairs_per_subject);
            cfg.pairing.seed = p.value("seed", cfg.pairing.seed);
            if (p.contains("lesion")) cfg.pairing.lesion = lesion_from_json(p.at("lesion"));
        }

        TrainConfig shared;
        if (j.contains("train")) shared = train_from_json(j.at("train"), shared);
        cfg.train_clean = shared;
        cfg.train_contaminated = shared;
        if (j.contains("train_clean")) {
            cfg.train_clean = train_from_json(j.at("train_clean"), cfg.train_clean);
        }
        if (j.contains("train_contaminated")) {
            cfg.train_contaminated =
                train_from_json(j.at("train_contaminated"), cfg.train_contaminated);
        }

        if (j.contains("transport")) {
            cfg.transport.steps = j.at("transport").value("steps", cfg.transport.steps);
        }
        if (j.contains("detection")) cfg.detection = detection_from_json(j.at("detection"));
        cfg.calibrate_detection = j.value("calibrate_detection", cfg.calibrate_detection);
        if (j.contains("seg")) {
            const json& s = j.at("seg");
            if (s.contains("threshold_grid")) {
                cfg.seg.threshold_grid = s.at("threshold_grid").get<std::vector<double>>();
            }
            cfg.seg.overlap = s.value("overlap", cfg.seg.overlap);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["out_dir"] = cfg.out_dir.string();
    j["dataset"] = to_json(cfg.dataset);
    j["model"] = {{"hidden", cfg.model.hidden},
                  {"time_pairs", cfg.model.time_pairs},
                  {"init_seed", cfg.model.init_seed}};
    j["pairing"] = {{"pairs_per_subject", cfg.pairing.pairs_per_subject},
                    {"seed", cfg.pairing.seed},
                    {"lesion", to_json(cfg.pairing.lesion)}};
    j["train_clean"] = to_json(cfg.train_clean);
    j["train_contaminated"] = to_json(cfg.train_contaminated);
    j["transport"] = {{"steps", cfg.transport.steps}};
    j["detection"] = to_json(cfg.detection);
    j["calibrate_detection"] = cfg.calibrate_detection;
    j["seg"] = {{"threshold_grid", cfg.seg.threshold_grid}, // empty means the default grid
                {"overlap", cfg.seg.overlap}};
    return j.dump(2) + "\n";
}

// ---- report writers -------------------------------------------------------

namespace {

double row_f1(int tp, int fp, int fn) {
    const int denom = 2 * tp + fp + fn;
    return denom == 0 ? 1.0 : 2.0 * tp / static_cast<double>(denom);
}

} // namespace

std::vector<double> default_seg_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 40; ++i) grid.push_back(0.05 * i);
    return grid;
}

void write_seg_csv(const fs::path& path, const SegReport& report) {
    std::ofstream f = open_out(path);
    f << "kind,id,n,stratum,area,dice,hd95,asd,tp,fp,fn,f1\n";
    for (const SegSubjectRow& row : report.subjects) {
        f << "subject," << row.id << ",1," << to_string(row.stratum) << ',' << fmt(row.gt_area)
          << ',' << fmt(row.dice) << ',' << (row.hd95 ? fmt(*row.hd95) : "") << ','
          << (row.asd ? fmt(*row.asd) : "") << ',' << row.tp << ',' << row.fp << ',' << row.fn
          << ',' << fmt(row_f1(row.tp, row.fp, row.fn)) << '\n';
    }
    auto aggregate_row = [&](const std::string& id, const std::string& stratum,
                             const SegAggregate& agg) {
        f << "aggregate," << id << ',' << agg.n << ',' << stratum << ",," << fmt(agg.mean_dice)
          << ',' << (agg.mean_hd95 ? fmt(*agg.mean_hd95) : "") << ','
          << (agg.mean_asd ? fmt(*agg.mean_asd) : "") << ',' << agg.tp << ',' << agg.fp << ','
          << agg.fn << ',' << fmt(agg.f1) << '\n';
    };
    aggregate_row("overall", "", report.overall);
    for (const auto& [stratum, agg] : report.by_stratum) {
        aggregate_row(to_string(stratum), to_string(stratum), agg);
    }
    f << "excluded,empty_gt," << report.excluded_empty_gt << ",,,,,,,,,\n";
    finish_out(f, path);
}

void write_froc_csv(const fs::path& path, const std::vector<DetectionRow>& rows,
                    double calibrated, bool has_calibrated) {
    std::ofstream f = open_out(path);
    f << "threshold,calibrated,filter,froc,n_images,n_excluded,n_points\n";
    for (const DetectionRow& row : rows) {
        const bool is_cal = has_calibrated && row.threshold == calibrated;
        f << fmt(row.threshold) << ',' << (is_cal ? 1 : 0) << ',' << to_string(row.filter) << ','
          << fmt(row.froc) << ',' << row.n_images << ',' << row.n_excluded << ',' << row.n_points
          << '\n';
    }
    finish_out(f, path);
}

void write_curve_csv(const fs::path& path, const FrocCurve& curve) {
    std::ofstream f = open_out(path);
    f << "fppi,sensitivity\n";
    for (const FrocPoint& p : curve.points) {
        f << fmt(p.fppi) << ',' << fmt(p.sensitivity) << '\n';
    }
    finish_out(f, path);
}

void write_loss_csv(const fs::path& path, const std::vector<double>& history) {
    std::ofstream f = open_out(path);
    f << "epoch,mean_loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        f << i << ',' << fmt(history[i]) << '\n';
    }
    finish_out(f, path);
}

namespace {

struct EvalSet {
    std::vector<std::string> ids;
    std::vector<AnomalyMap> maps;
    std::vector<BinaryMask> gts;
    std::vector<std::vector<PointAnnotation>> annotations;
    std::vector<bool> normal;
};

int threshold_index(const std::vector<double>& thresholds, double t) {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (thresholds[i] == t) return static_cast<int>(i);
    }
    return -1;
}

} // namespace

// ---- experiment driver ------------------------------------------------

namespace {

VariantReport run_variant(const std::string& name, bool use_contaminated,
                          const TrainConfig& tcfg, const Dataset& ds,
                          const ExperimentConfig& config) {
    VariantReport report;
    report.name = name;

    const Image2D& probe = ds.entries.front().subject.image;
    const int n_px = static_cast<int>(probe.size());

    FlowModel model = stage("train[" + name + "]", [&] {
        std::vector<int> widths;
        widths.push_back(n_px + 2 * config.model.time_pairs);
        for (int h : config.model.hidden) widths.push_back(h);
        widths.push_back(n_px);
        FlowModel m(std::move(widths), config.model.time_pairs);
        m.randomize(config.model.init_seed);
        std::vector<FlowPair> pairs = build_training_pairs(ds, config.pairing, use_contaminated);
        TrainResult tr = train(std::move(m), pairs, tcfg);
        report.loss_history = tr.history;
        save_model((config.out_dir / "models" / (name + ".aflw")).string(), tr.model);
        write_loss_csv(config.out_dir / "models" / (name + "_loss.csv"), tr.history);
        return std::move(tr.model);
    });

    EvalSet val;
    EvalSet test;
    stage("reconstruct[" + name + "]", [&] {
        const fs::path map_dir = config.out_dir / "maps" / name;
        fs::create_directories(map_dir);
        for (const DatasetEntry& entry : ds.entries) {
            if (entry.split == Split::Train) continue;
            const Subject& s = entry.subject;
            Image2D recon = reconstruct(model, s.image, config.transport);
            AnomalyMap map = anomaly_map(s.image, recon);
            write_grid(map_dir / (s.id + ".agrd"), map);
            EvalSet& dst = entry.split == Split::Val ? val : test;
            dst.ids.push_back(s.id);
            dst.gts.push_back(s.lesion_mask.value_or(
                BinaryMask(map.width(), map.height(), map.spacing(),
                           std::vector<std::uint8_t>(map.size(), 0))));
            dst.annotations.push_back(s.annotations);
            dst.normal.push_back(entry.normal);
            dst.maps.push_back(std::move(map));
        }
        return 0;
    });

    stage("evaluate-seg[" + name + "]", [&] {
        const std::vector<double> grid =
            config.seg.threshold_grid.empty() ? default_seg_grid() : config.seg.threshold_grid;
        report.seg_threshold = select_threshold(val.maps, val.gts, grid);
        report.seg = evaluate_segmentation(test.ids, test.maps, test.gts, report.seg_threshold,
                                           config.seg.overlap);
        write_seg_csv(config.out_dir / "reports" / (name + "_seg.csv"), report.seg);
        return 0;
    });

    stage("evaluate-froc[" + name + "]", [&] {
        DetectionConfig dc = config.detection;
        bool has_calibrated = false;
        if (config.calibrate_detection) {
            std::vector<AnomalyMap> normal_maps;
            for (std::size_t i = 0; i < test.maps.size(); ++i) {
                if (test.normal[i]) normal_maps.push_back(test.maps[i]);
            }
            if (!normal_maps.empty()) {
                report.calibrated_threshold = calibrate_threshold(normal_maps);
                if (report.calibrated_threshold > 0.0 &&
                    threshold_index(dc.binarize_thresholds, report.calibrated_threshold) < 0) {
                    dc.binarize_thresholds.insert(dc.binarize_thresholds.begin(),
                                                  report.calibrated_threshold);
                    has_calibrated = true;
                }
            }
        }
        // Filters with no annotated subject are skipped rather than failing
        // the run; the report records which rows exist.
        std::vector<LabelFilter> filters;
        for (LabelFilter filter :
             {LabelFilter::All, LabelFilter::LesionOnly, LabelFilter::NonLesionalOnly}) {
            bool any = false;
            for (const auto& anns : test.annotations) {
                for (const auto& p : anns) {
                    if (filter == LabelFilter::All ||
                        (filter == LabelFilter::LesionOnly &&
                         p.label == AnnotationLabel::Lesion) ||
                        (filter == LabelFilter::NonLesionalOnly &&
                         p.label == AnnotationLabel::NonLesional)) {
                        any = true;
                        break;
                    }
                }
                if (any) break;
            }
            if (any) filters.push_back(filter);
        }
        report.detection = evaluate_detection(test.maps, test.annotations, dc, filters);
        write_froc_csv(config.out_dir / "reports" / (name + "_froc.csv"), report.detection,
                       report.calibrated_threshold, has_calibrated);
        for (const DetectionRow& row : report.detection) {
            const int ti = threshold_index(dc.binarize_thresholds, row.threshold);
            write_curve_csv(config.out_dir / "reports" /
                                (name + "_curve_t" + std::to_string(ti) + "_" +
                                 to_string(row.filter) + ".csv"),
                            row.curve);
        }
        return 0;
    });

    return report;
}

WilcoxonResult paired_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty()) return WilcoxonResult{}; // degenerate: nothing to compare
    return wilcoxon_signed_rank(a, b);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

void compare_variants(ExperimentReport& report, const fs::path& path) {
    // Pair subjects by id; both variants evaluate the same test masks.
    std::map<std::string, const SegSubjectRow*> clean_rows;
    for (const SegSubjectRow& row : report.clean.seg.subjects) clean_rows[row.id] = &row;

    std::vector<double> dice_a, dice_b, hd_a, hd_b, asd_a, asd_b, f1_a, f1_b;
    for (const SegSubjectRow& b : report.contaminated.seg.subjects) {
        auto it = clean_rows.find(b.id);
        if (it == clean_rows.end()) continue;
        const SegSubjectRow& a = *it->second;
        dice_a.push_back(a.dice);
        dice_b.push_back(b.dice);
        f1_a.push_back(row_f1(a.tp, a.fp, a.fn));
        f1_b.push_back(row_f1(b.tp, b.fp, b.fn));
        if (a.hd95 && b.hd95) {
            hd_a.push_back(*a.hd95);
            hd_b.push_back(*b.hd95);
            asd_a.push_back(*a.asd);
            asd_b.push_back(*b.asd);
        }
    }

    report.dice_test = paired_test(dice_a, dice_b);
    report.hd95_test = paired_test(hd_a, hd_b);
    report.asd_test = paired_test(asd_a, asd_b);
    report.f1_test = paired_test(f1_a, f1_b);

    std::ofstream f = open_out(path);
    f << "metric,n,w,p,method,mean_clean,mean_contaminated\n";
    auto row = [&](const char* metric, const WilcoxonResult& r, const std::vector<double>& a,
                   const std::vector<double>& b) {
        f << metric << ',' << r.n_effective << ',' << fmt(r.w) << ',' << fmt(r.p) << ','
          << to_string(r.method) << ',' << fmt(mean_of(a)) << ',' << fmt(mean_of(b)) << '\n';
    };
    row("dice", report.dice_test, dice_a, dice_b);
    row("hd95", report.hd95_test, hd_a, hd_b);
    row("asd", report.asd_test, asd_a, asd_b);
    row("f1", report.f1_test, f1_a, f1_b);
    finish_out(f, path);
}

void write_summary_md(const fs::path& path, const ExperimentConfig& config,
                      const ExperimentReport& report) {
    std::ofstream f = open_out(path);
    const DatasetParams& dp = config.dataset;
    f << "# Counterfactual reconstruction workbench\n\n";
    f << "Dataset: " << dp.n_subjects << " subjects, " << dp.phantom_size << "x"
      << dp.phantom_size << " phantoms, seed " << dp.seed << ", training contamination "
      << fmt(dp.contamination_fraction) << ".\n\n";
    f << "Models: clean (trained on clean images) vs contaminated (trained with subtle "
         "abnormalities left in " << fmt(dp.contamination_fraction * 100)
      << "% of training images). Identical architecture for both.\n\n";

    f << "## Segmentation (test split)\n\n";
    f << "Binarization threshold selected on the validation split: clean "
      << fmt(report.clean.seg_threshold) << ", contaminated "
      << fmt(report.contaminated.seg_threshold) << ".\n\n";
    f << "| Model | Group | n | Dice | HD95 (mm) | ASD (mm) | F1 10% |\n";
    f << "|---|---|---|---|---|---|---|\n";
    auto seg_rows = [&](const VariantReport& v) {
        auto row = [&](const std::string& label, const SegAggregate& agg) {
            f << "| " << v.name << " | " << label << " | " << agg.n << " | "
              << fmt3(agg.mean_dice) << " | " << (agg.mean_hd95 ? fmt3(*agg.mean_hd95) : "-")
              << " | " << (agg.mean_asd ? fmt3(*agg.mean_asd) : "-") << " | " << fmt3(agg.f1)
              << " |\n";
        };
        row("All", v.seg.overall);
        for (const auto& [stratum, agg] : v.seg.by_stratum) row(to_string(stratum), agg);
    };
    seg_rows(report.clean);
    seg_rows(report.contaminated);
    f << "\nPaired Wilcoxon (clean vs contaminated, * marks p < 0.05): ";
    auto star = [](const WilcoxonResult& r) { return r.p < 0.05 ? "*" : ""; };
    f << "dice p=" << fmt3(report.dice_test.p) << star(report.dice_test) << ", hd95 p="
      << fmt3(report.hd95_test.p) << star(report.hd95_test) << ", asd p="
      << fmt3(report.asd_test.p) << star(report.asd_test) << ", f1 p="
      << fmt3(report.f1_test.p) << star(report.f1_test) << ".\n\n";

    f << "## Detection FROC (test split)\n\n";
    f << "Calibrated threshold (mean + 3 sd over normal test maps): clean "
      << fmt3(report.clean.calibrated_threshold) << ", contaminated "
      << fmt3(report.contaminated.calibrated_threshold) << ".\n\n";
    f << "| Model | T | Filter | FROC | Images | Points |\n";
    f << "|---|---|---|---|---|---|\n";
    auto froc_rows = [&](const VariantReport& v) {
        for (const DetectionRow& row : v.detection) {
            f << "| " << v.name << " | " << fmt3(row.threshold)
              << (row.threshold == v.calibrated_threshold ? " (cal)" : "") << " | "
              << to_string(row.filter) << " | " << fmt3(row.froc) << " | " << row.n_images
              << " | " << row.n_points << " |\n";
        }
    };
    froc_rows(report.clean);
    froc_rows(report.contaminated);

    // The directional headline: clean-trained should detect subtle anomalies
    // at least as well as the contaminated-trained model.
    auto nonlesion_at_cal = [](const VariantReport& v) -> const DetectionRow* {
        for (const DetectionRow& row : v.detection) {
            if (row.filter == LabelFilter::NonLesionalOnly &&
                row.threshold == v.calibrated_threshold) {
                return &row;
            }
        }
        return nullptr;
    };
    const DetectionRow* a = nonlesion_at_cal(report.clean);
    const DetectionRow* b = nonlesion_at_cal(report.contaminated);
    if (a && b) {
        f << "\nNon-lesional FROC at the calibrated threshold: clean " << fmt3(a->froc)
          << " vs contaminated " << fmt3(b->froc) << " ("
          << (a->froc >= b->froc ? "clean >= contaminated" : "contaminated > clean") << ").\n";
    }
    finish_out(f, path);
}

void write_experiment_manifest(const fs::path& path, const ExperimentConfig& config,
                               const ExperimentReport& report) {
    json j;
    j["format"] = "flowlens-experiment";
    j["version"] = 1;
    {
        // The manifest is the only output carrying a timestamp.
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::tm tm_utc{};
        gmtime_r(&now, &tm_utc);
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
        j["timestamp"] = buf;
    }
    j["config"] = json::parse(experiment_config_to_json(config));
    auto variant = [](const VariantReport& v) {
        json r;
        r["seg_threshold"] = v.seg_threshold;
        r["calibrated_threshold"] = v.calibrated_threshold;
        r["final_loss"] = v.loss_history.empty() ? 0.0 : v.loss_history.back();
        json rows = json::array();
        for (const DetectionRow& row : v.detection) {
            rows.push_back({{"threshold", row.threshold},
                            {"filter", to_string(row.filter)},
                            {"froc", row.froc},
                            {"n_images", row.n_images},
                            {"n_excluded", row.n_excluded},
                            {"n_points", row.n_points}});
        }
        r["froc"] = std::move(rows);
        r["seg"] = {{"n", v.seg.overall.n},
                    {"mean_dice", v.seg.overall.mean_dice},
                    {"q25", v.seg.strata.q25},
                    {"q75", v.seg.strata.q75},
                    {"excluded_empty_gt", v.seg.excluded_empty_gt}};
        return r;
    };
    j["results"]["clean"] = variant(report.clean);
    j["results"]["contaminated"] = variant(report.contaminated);
    auto wilcoxon = [](const WilcoxonResult& r) {
        return json{{"n", r.n_effective}, {"w", r.w}, {"p", r.p}, {"method", to_string(r.method)}};
    };
    j["results"]["wilcoxon"] = {{"dice", wilcoxon(report.dice_test)},
                                {"hd95", wilcoxon(report.hd95_test)},
                                {"asd", wilcoxon(report.asd_test)},
                                {"f1", wilcoxon(report.f1_test)}};
    std::ofstream f = open_out(path);
    f << j.dump(2) << '\n';
    finish_out(f, path);
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
    if (config.out_dir.empty()) throw ParameterError("experiment needs an output directory");
    fs::create_directories(config.out_dir / "models");
    fs::create_directories(config.out_dir / "reports");

    Dataset ds = stage("generate", [&] {
        Dataset d = make_dataset(config.dataset);
        write_dataset(config.out_dir / "data", d, config.dataset);
        return d;
    });

    ExperimentReport report;
    report.clean = run_variant("clean", false, config.train_clean, ds, config);
    report.contaminated = run_variant("contaminated", true, config.train_contaminated, ds, config);

    stage("compare", [&] {
        compare_variants(report, config.out_dir / "reports" / "comparison.csv");
        return 0;
    });
    stage("summary", [&] {
        write_summary_md(config.out_dir / "summary.md", config, report);
        return 0;
    });
    stage("manifest", [&] {
        write_experiment_manifest(config.out_dir / "manifest.json", config, report);
        return 0;
    });
    return report;
}

} // namespace flowlens
