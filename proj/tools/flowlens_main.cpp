// flowlens: generate phantom datasets, train flow models, reconstruct,
// and evaluate. Exit codes: 0 ok, 1 usage, 2 data/format, 3 numeric.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flowlens/annotations.hpp"
#include "flowlens/detection.hpp"
#include "flowlens/errors.hpp"
#include "flowlens/experiment.hpp"
#include "flowlens/flow.hpp"
#include "flowlens/grid_io.hpp"
#include "flowlens/phantom.hpp"
#include "flowlens/segmetrics.hpp"
#include "flowlens/stats.hpp"
#include "flowlens/transport.hpp"

namespace fs = std::filesystem;
using namespace flowlens;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

double parse_number(const std::string& text, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw CLI::ValidationError(std::string(what) + ": expected a number, got '" + text + "'");
    }
}

struct MapDir {
    std::vector<std::string> ids;
    std::vector<AnomalyMap> maps;
};

// Every *.agrd file in the directory, in filename order; ids are the stems.
MapDir read_map_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".agrd") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ParameterError("no .agrd files in '" + dir.string() + "'");
    MapDir out;
    for (const fs::path& p : files) {
        out.ids.push_back(p.stem().string());
        out.maps.push_back(read_anomaly_map(p));
    }
    return out;
}

std::vector<BinaryMask> read_gt_for(const fs::path& dir, const std::vector<std::string>& ids) {
    std::vector<BinaryMask> gts;
    gts.reserve(ids.size());
    for (const std::string& id : ids) gts.push_back(read_mask(dir / (id + ".agrd")));
    return gts;
}

// ---- generate -----------------------------------------------------------

struct GenerateState {
    std::string out;
    std::string params_file;
    int n = 0;
    int size = 0;
    double contamination = 0.0;
    std::uint64_t seed = 0;
};

void add_generate(CLI::App& app) {
    auto s = std::make_shared<GenerateState>();
    CLI::App* cmd = app.add_subcommand("generate", "Build a synthetic dataset directory");
    cmd->add_option("--out", s->out, "output directory")->required();
    cmd->add_option("--params", s->params_file,
                    "JSON with full dataset parameters (same schema as the experiment "
                    "config's \"dataset\" block); flags below override it");
    CLI::Option* n = cmd->add_option("--n", s->n, "subject count");
    CLI::Option* size = cmd->add_option("--size", s->size, "phantom side length in pixels");
    CLI::Option* contamination =
        cmd->add_option("--contamination", s->contamination,
                        "fraction of train subjects that get a subtle-abnormality variant");
    CLI::Option* seed = cmd->add_option("--seed", s->seed, "master seed");
    cmd->callback([=] {
        DatasetParams p;
        if (!s->params_file.empty()) {
            p = experiment_config_from_json("{\"dataset\":" + read_text(s->params_file) + "}")
                    .dataset;
        }
        if (n->count()) p.n_subjects = s->n;
        if (size->count()) p.phantom_size = s->size;
        if (contamination->count()) p.contamination_fraction = s->contamination;
        if (seed->count()) p.seed = s->seed;
        Dataset ds = make_dataset(p);
        write_dataset(s->out, ds, p);
        std::printf("wrote %zu subjects (%d train / %d val / %d test) to %s\n",
                    ds.entries.size(), static_cast<int>(ds.split(Split::Train).size()),
                    static_cast<int>(ds.split(Split::Val).size()),
                    static_cast<int>(ds.split(Split::Test).size()), s->out.c_str());
    });
}

// ---- train ----------------------------------------------------------------

struct TrainState {
    std::string data;
    std::string out = "model.aflw";
    std::string loss_out;
    std::string optimizer = "momentum";
    bool contaminated = false;
    TrainConfig tc;
    ModelConfig mc;
    int pairs_per_subject = 2;
    std::uint64_t pair_seed = 11;
};

void add_train(CLI::App& app) {
    auto s = std::make_shared<TrainState>();
    CLI::App* cmd = app.add_subcommand("train", "Fit a flow model on the train split");
    cmd->add_option("--data", s->data, "dataset directory from `generate`")->required();
    cmd->add_option("--out", s->out, "checkpoint path");
    cmd->add_option("--epochs", s->tc.epochs, "training epochs");
    cmd->add_option("--lr", s->tc.learning_rate, "learning rate");
    cmd->add_option("--seed", s->tc.seed, "shuffle/time-draw seed");
    cmd->add_option("--contaminated", s->contaminated,
                    "use the contaminated image variants where the dataset has them");
    cmd->add_option("--batch", s->tc.batch_size, "minibatch size");
    cmd->add_option("--t-samples", s->tc.t_samples, "time draws per pair per visit");
    cmd->add_option("--optimizer", s->optimizer, "sgd or momentum")
        ->check(CLI::IsMember({"sgd", "momentum"}));
    cmd->add_option("--momentum", s->tc.momentum, "momentum coefficient");
    cmd->add_option("--hidden", s->mc.hidden, "hidden layer widths")->delimiter(',');
    cmd->add_option("--time-pairs", s->mc.time_pairs, "sinusoidal time feature pairs");
    cmd->add_option("--init-seed", s->mc.init_seed, "weight init seed");
    cmd->add_option("--pairs-per-subject", s->pairs_per_subject,
                    "synthetic lesion injections per train subject");
    cmd->add_option("--pair-seed", s->pair_seed, "lesion injection seed");
    cmd->add_option("--loss-out", s->loss_out, "per-epoch mean loss CSV");
    cmd->callback([=] {
        StoredDataset sd = read_dataset(s->data);
        PairingConfig pairing;
        pairing.pairs_per_subject = s->pairs_per_subject;
        pairing.seed = s->pair_seed;
        pairing.lesion = sd.params.lesion;
        std::vector<FlowPair> pairs = build_training_pairs(sd.dataset, pairing, s->contaminated);

        const int n_px = static_cast<int>(pairs.front().x1.size());
        std::vector<int> widths;
        widths.push_back(n_px + 2 * s->mc.time_pairs);
        for (int h : s->mc.hidden) widths.push_back(h);
        widths.push_back(n_px);
        FlowModel model(std::move(widths), s->mc.time_pairs);
        model.randomize(s->mc.init_seed);

        TrainConfig tc = s->tc;
        tc.optimizer = s->optimizer == "sgd" ? Optimizer::Sgd : Optimizer::SgdMomentum;
        TrainResult res = train(std::move(model), pairs, tc);
        save_model(s->out, res.model);
        if (!s->loss_out.empty()) write_loss_csv(s->loss_out, res.history);
        std::printf("trained on %zu pairs for %d epochs, final mean loss %.6g -> %s\n",
                    pairs.size(), tc.epochs,
                    res.history.empty() ? 0.0 : res.history.back(), s->out.c_str());
    });
}

// ---- reconstruct ------------------------------------------------------

struct ReconstructState {
    std::string model;
    std::string data;
    std::string out;
    std::string split = "all";
    TransportConfig tcfg;
};

void add_reconstruct(CLI::App& app) {
    auto s = std::make_shared<ReconstructState>();
    CLI::App* cmd =
        app.add_subcommand("reconstruct", "Write |input - counterfactual| anomaly maps");
    cmd->add_option("--model", s->model, "AFLW1 checkpoint")->required();
    cmd->add_option("--data", s->data, "dataset directory")->required();
    cmd->add_option("--out", s->out, "output directory for .agrd anomaly maps")->required();
    cmd->add_option("--steps", s->tcfg.steps, "Euler integration steps");
    cmd->add_option("--split", s->split, "all, train, val, or test")
        ->check(CLI::IsMember({"all", "train", "val", "test"}));
    cmd->callback([=] {
        FlowModel model = load_model(s->model);
        StoredDataset sd = read_dataset(s->data);
        fs::create_directories(s->out);
        int n = 0;
        for (const DatasetEntry& entry : sd.dataset.entries) {
            if (s->split != "all" && to_string(entry.split) != s->split) continue;
            const Image2D& img = entry.subject.image;
            Image2D recon = reconstruct(model, img, s->tcfg);
            write_grid(fs::path(s->out) / (entry.subject.id + ".agrd"),
                       anomaly_map(img, recon));
            ++n;
        }
        if (n == 0) throw ParameterError("split '" + s->split + "' has no subjects");
        std::printf("wrote %d anomaly maps to %s\n", n, s->out.c_str());
    });
}

// ---- evaluate-seg -------------------------------------------------------

struct EvalSegState {
    std::string maps;
    std::string gt;
    std::string out;
    std::string threshold;
    std::string val_maps;
    std::string val_gt;
    std::vector<double> grid;
    double overlap = 0.10;
};

void add_evaluate_seg(CLI::App& app) {
    auto s = std::make_shared<EvalSegState>();
    CLI::App* cmd = app.add_subcommand(
        "evaluate-seg", "Score binarized anomaly maps against ground-truth masks");
    cmd->add_option("--maps", s->maps, "directory of .agrd anomaly maps")->required();
    cmd->add_option("--gt", s->gt, "directory of .agrd masks named like the maps")->required();
    cmd->add_option("--threshold", s->threshold, "binarization threshold, or 'auto'")
        ->required();
    cmd->add_option("--out", s->out, "report CSV")->required();
    cmd->add_option("--val-maps", s->val_maps,
                    "validation maps for 'auto' (scored maps are never used)");
    cmd->add_option("--val-gt", s->val_gt, "validation masks for 'auto'");
    cmd->add_option("--grid", s->grid, "'auto' threshold grid (default 0.05..2.00)")
        ->delimiter(',');
    cmd->add_option("--overlap", s->overlap, "lesion-detection overlap fraction");
    cmd->callback([=] {
        MapDir test = read_map_dir(s->maps);
        std::vector<BinaryMask> gts = read_gt_for(s->gt, test.ids);
        double threshold = 0.0;
        if (s->threshold == "auto") {
            if (s->val_maps.empty() || s->val_gt.empty()) {
                throw CLI::ValidationError(
                    "evaluate-seg: --threshold auto needs --val-maps and --val-gt");
            }
            MapDir val = read_map_dir(s->val_maps);
            std::vector<BinaryMask> val_gts = read_gt_for(s->val_gt, val.ids);
            threshold = select_threshold(val.maps, val_gts,
                                         s->grid.empty() ? default_seg_grid() : s->grid);
        } else {
            threshold = parse_number(s->threshold, "--threshold");
        }
        SegReport report = evaluate_segmentation(test.ids, test.maps, gts, threshold, s->overlap);
        write_seg_csv(s->out, report);
        std::printf("threshold %.6g: mean dice %.4f over %d subjects (%d empty-gt excluded) -> %s\n",
                    threshold, report.overall.mean_dice, report.overall.n,
                    report.excluded_empty_gt, s->out.c_str());
    });
}

// ---- evaluate-froc ------------------------------------------------------

struct EvalFrocState {
    std::string maps;
    std::string annotations;
    std::string out;
    std::string normal_maps;
    std::vector<double> thresholds;
    std::vector<double> levels;
    std::vector<std::string> filters;
    double tolerance = 5.0;
};

void add_evaluate_froc(CLI::App& app) {
    auto s = std::make_shared<EvalFrocState>();
    CLI::App* cmd =
        app.add_subcommand("evaluate-froc", "FROC analysis against point annotations");
    cmd->add_option("--maps", s->maps, "directory of .agrd anomaly maps")->required();
    cmd->add_option("--annotations", s->annotations, "reference points CSV")->required();
    cmd->add_option("--out", s->out, "FROC CSV; curves land next to it")->required();
    cmd->add_option("--thresholds", s->thresholds, "binarization thresholds")->delimiter(',');
    cmd->add_option("--levels", s->levels, "FPPI levels for the score")->delimiter(',');
    cmd->add_option("--filter", s->filters, "all, lesion, or nonlesion (repeatable)")
        ->check(CLI::IsMember({"all", "lesion", "nonlesion"}));
    cmd->add_option("--tolerance", s->tolerance, "point-match tolerance in pixels");
    cmd->add_option("--normal-maps", s->normal_maps,
                    "maps of normal subjects; their pooled mu+3sigma threshold is "
                    "prepended to --thresholds");
    cmd->callback([=] {
        MapDir dir = read_map_dir(s->maps);
        AnnotationSet anns = read_annotations(s->annotations);
        std::vector<std::vector<PointAnnotation>> points;
        points.reserve(dir.ids.size());
        for (const std::string& id : dir.ids) points.push_back(anns.of(id));

        DetectionConfig dc;
        if (!s->thresholds.empty()) dc.binarize_thresholds = s->thresholds;
        if (!s->levels.empty()) dc.fppi_levels = s->levels;
        dc.match_tolerance = s->tolerance;

        double calibrated = 0.0;
        bool has_calibrated = false;
        if (!s->normal_maps.empty()) {
            MapDir normals = read_map_dir(s->normal_maps);
            calibrated = calibrate_threshold(normals.maps);
            const bool present =
                std::find(dc.binarize_thresholds.begin(), dc.binarize_thresholds.end(),
                          calibrated) != dc.binarize_thresholds.end();
            if (calibrated > 0.0 && !present) {
                dc.binarize_thresholds.insert(dc.binarize_thresholds.begin(), calibrated);
                has_calibrated = true;
            }
        }

        std::vector<LabelFilter> filters;
        if (s->filters.empty()) {
            // Default to the filters that have anything to match.
            for (LabelFilter f : {LabelFilter::All, LabelFilter::LesionOnly,
                                  LabelFilter::NonLesionalOnly}) {
                bool any = false;
                for (const auto& pts : points) {
                    for (const PointAnnotation& p : pts) {
                        if (f == LabelFilter::All ||
                            (f == LabelFilter::LesionOnly && p.label == AnnotationLabel::Lesion) ||
                            (f == LabelFilter::NonLesionalOnly &&
                             p.label == AnnotationLabel::NonLesional)) {
                            any = true;
                            break;
                        }
                    }
                    if (any) break;
                }
                if (any) filters.push_back(f);
            }
            if (filters.empty()) throw ParameterError("no annotations match any map id");
        } else {
            for (const std::string& f : s->filters) filters.push_back(label_filter_from_string(f));
        }

        std::vector<DetectionRow> rows = evaluate_detection(dir.maps, points, dc, filters);
        write_froc_csv(s->out, rows, calibrated, has_calibrated);
        const fs::path out(s->out);
        const fs::path stem = out.parent_path() / out.stem();
        for (const DetectionRow& row : rows) {
            const auto it = std::find(dc.binarize_thresholds.begin(),
                                      dc.binarize_thresholds.end(), row.threshold);
            const auto ti = it - dc.binarize_thresholds.begin();
            write_curve_csv(fs::path(stem.string() + "_curve_t" + std::to_string(ti) + "_" +
                                     to_string(row.filter) + ".csv"),
                            row.curve);
            std::printf("t=%-10.6g %-10s froc %.4f  (%d image%s, %d excluded)\n", row.threshold,
                        to_string(row.filter).c_str(), row.froc, row.n_images,
                        row.n_images == 1 ? "" : "s", row.n_excluded);
        }
        std::printf("wrote %s\n", s->out.c_str());
    });
}

// ---- merge-annotations ----------------------------------------------------

struct MergeState {
    std::string a;
    std::string b;
    std::string out;
    double radius = 5.0;
};

void add_merge(CLI::App& app) {
    auto s = std::make_shared<MergeState>();
    CLI::App* cmd =
        app.add_subcommand("merge-annotations", "Consolidate two raters' point files");
    cmd->add_option("--a", s->a, "first rater CSV")->required();
    cmd->add_option("--b", s->b, "second rater CSV")->required();
    cmd->add_option("--out", s->out, "merged CSV")->required();
    cmd->add_option("--radius", s->radius, "same-label merge radius");
    cmd->callback([=] {
        AnnotationSet a = read_annotations(s->a);
        AnnotationSet b = read_annotations(s->b);
        AnnotationSet merged;
        for (const std::string& id : a.subject_order) {
            merged.subject_order.push_back(id);
            merged.by_subject[id] = merge_raters(a.of(id), b.of(id), s->radius);
        }
        for (const std::string& id : b.subject_order) {
            if (merged.by_subject.count(id)) continue;
            merged.subject_order.push_back(id);
            merged.by_subject[id] = b.of(id);
        }
        write_annotations(s->out, merged);
        std::size_t n = 0;
        for (const auto& [id, pts] : merged.by_subject) n += pts.size();
        std::printf("merged into %zu points over %zu subjects -> %s\n", n,
                    merged.subject_order.size(), s->out.c_str());
    });
}

// ---- report ---------------------------------------------------------------

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

// id -> metric value for the "subject" rows of a seg report CSV.
std::map<std::string, double> read_metric_column(const fs::path& path,
                                                 const std::string& metric) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(f, line)) throw FormatError("empty report: '" + path.string() + "'");
    const std::vector<std::string> header = split_row(line);
    std::size_t id_col = header.size();
    std::size_t metric_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "id") id_col = i;
        if (header[i] == metric) metric_col = i;
    }
    if (id_col == header.size() || metric_col == header.size()) {
        throw FormatError("'" + path.string() + "' lacks an 'id' or '" + metric + "' column");
    }
    std::map<std::string, double> values;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_row(line);
        if (cells.empty() || cells[0] != "subject") continue;
        if (cells.size() <= std::max(id_col, metric_col)) {
            throw FormatError("short row in '" + path.string() + "': " + line);
        }
        if (cells[metric_col].empty()) continue; // undefined for this subject
        values[cells[id_col]] = parse_number(cells[metric_col], metric.c_str());
    }
    return values;
}

struct ReportState {
    std::string a;
    std::string b;
    std::string test = "dice";
    std::string out;
};

void add_report(CLI::App& app) {
    auto s = std::make_shared<ReportState>();
    CLI::App* cmd = app.add_subcommand(
        "report", "Paired Wilcoxon signed-rank test between two seg reports");
    cmd->add_option("--a", s->a, "first seg report CSV")->required();
    cmd->add_option("--b", s->b, "second seg report CSV")->required();
    cmd->add_option("--test", s->test, "metric column to compare")
        ->check(CLI::IsMember({"dice", "hd95", "asd", "f1"}));
    cmd->add_option("--out", s->out, "append the row to this CSV");
    cmd->callback([=] {
        const std::map<std::string, double> a = read_metric_column(s->a, s->test);
        const std::map<std::string, double> b = read_metric_column(s->b, s->test);
        std::vector<double> av;
        std::vector<double> bv;
        for (const auto& [id, value] : a) {
            auto it = b.find(id);
            if (it == b.end()) continue;
            av.push_back(value);
            bv.push_back(it->second);
        }
        if (av.empty()) throw ParameterError("no common subjects between the two reports");
        const WilcoxonResult r = wilcoxon_signed_rank(av, bv);
        double mean_a = 0.0;
        double mean_b = 0.0;
        for (double v : av) mean_a += v;
        for (double v : bv) mean_b += v;
        mean_a /= static_cast<double>(av.size());
        mean_b /= static_cast<double>(bv.size());

        char row[256];
        std::snprintf(row, sizeof row, "%s,%d,%.12g,%.12g,%s,%.12g,%.12g", s->test.c_str(),
                      r.n_effective, r.w, r.p, to_string(r.method).c_str(), mean_a, mean_b);
        const char* header = "metric,n,w,p,method,mean_a,mean_b";
        std::printf("%s\n%s\n", header, row);
        if (!s->out.empty()) {
            const bool fresh = !fs::exists(s->out) || fs::file_size(s->out) == 0;
            std::ofstream f(s->out, std::ios::app);
            if (!f) throw IoError("cannot open '" + s->out + "'");
            if (fresh) f << header << '\n';
            f << row << '\n';
            if (!f.good()) throw IoError("short write to '" + s->out + "'");
        }
    });
}

// ---- experiment ------------------------------------------------------

struct ExperimentState {
    std::string config;
    std::string out;
    bool emit = false;
};

void add_experiment(CLI::App& app) {
    auto s = std::make_shared<ExperimentState>();
    CLI::App* cmd = app.add_subcommand(
        "experiment", "Full pipeline: dataset, clean + contaminated models, all reports");
    cmd->add_option("--config", s->config, "experiment config JSON (defaults when omitted)");
    cmd->add_option("--out", s->out, "output directory (overrides the config)");
    cmd->add_flag("--emit-config", s->emit, "print the resolved config and exit");
    cmd->callback([=] {
        ExperimentConfig cfg = s->config.empty()
                                   ? experiment_config_from_json("{}")
                                   : experiment_config_from_json(read_text(s->config));
        if (!s->out.empty()) cfg.out_dir = s->out;
        if (s->emit) {
            std::printf("%s\n", experiment_config_to_json(cfg).c_str());
            return;
        }
        if (cfg.out_dir.empty()) {
            throw CLI::ValidationError("experiment: set out_dir in the config or pass --out");
        }
        ExperimentReport report = run_experiment(cfg);
        std::printf("clean:        seg threshold %.4g, mean dice %.4f over %d subjects\n",
                    report.clean.seg_threshold, report.clean.seg.overall.mean_dice,
                    report.clean.seg.overall.n);
        std::printf("contaminated: seg threshold %.4g, mean dice %.4f over %d subjects\n",
                    report.contaminated.seg_threshold,
                    report.contaminated.seg.overall.mean_dice,
                    report.contaminated.seg.overall.n);
        std::printf("dice p=%.4g (n=%d, %s)  summary: %s\n", report.dice_test.p,
                    report.dice_test.n_effective, to_string(report.dice_test.method).c_str(),
                    (cfg.out_dir / "summary.md").string().c_str());
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"counterfactual anomaly workbench for synthetic 2D phantoms"};
    app.require_subcommand(1);
    add_generate(app);
    add_train(app);
    add_reconstruct(app);
    add_evaluate_seg(app);
    add_evaluate_froc(app);
    add_merge(app);
    add_report(app);
    add_experiment(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
