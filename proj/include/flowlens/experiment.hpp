#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowlens/detection.hpp"
#include "flowlens/flow.hpp"
#include "flowlens/phantom.hpp"
#include "flowlens/segmetrics.hpp"
#include "flowlens/stats.hpp"
#include "flowlens/transport.hpp"

namespace flowlens {

/// Dataset directory layout:
///   manifest.json            parameters plus the per-subject table
///   annotations.csv          reference points for every annotated subject
///   images/<id>.agrd         subject image (train subjects: the clean image)
///   images/<id>.contam.agrd  subtle-contaminated variant, where flagged
///   masks/<id>.agrd          lesion ground truth (val/test subjects)
void write_dataset(const std::filesystem::path& dir, const Dataset& ds,
                   const DatasetParams& params);

struct StoredDataset {
    DatasetParams params;
    Dataset dataset; // phantom geometry is not persisted, so entries carry none
};

StoredDataset read_dataset(const std::filesystem::path& dir);

struct ModelConfig {
    std::vector<int> hidden{64};
    int time_pairs = 4;
    std::uint64_t init_seed = 7;
};

/// Synthetic supervision: per train subject, the nominally-healthy image is
/// x1 and each of pairs_per_subject seeded lesion injections into it is an
/// x0. Lesion settings default to the dataset's own.
struct PairingConfig {
    int pairs_per_subject = 2;
    std::uint64_t seed = 11;
    LesionParams lesion;
};

std::vector<FlowPair> build_training_pairs(const Dataset& ds, const PairingConfig& cfg,
                                           bool use_contaminated);

struct SegEvalConfig {
    std::vector<double> threshold_grid; // empty -> 0.05, 0.10, ... 2.00
    double overlap = 0.10;
};

/// The grid an empty SegEvalConfig::threshold_grid stands for.
std::vector<double> default_seg_grid();

struct ExperimentConfig {
    std::filesystem::path out_dir;
    DatasetParams dataset;       // contamination_fraction drives the second variant
    ModelConfig model;
    PairingConfig pairing;
    TrainConfig train_clean;     // same defaults for both variants unless overridden
    TrainConfig train_contaminated;
    TransportConfig transport;
    DetectionConfig detection;
    bool calibrate_detection = true; // prepend the mu+3sigma threshold from normal test maps
    SegEvalConfig seg;
};

/// JSON round-trip for the config. Parsing accepts a partial document and
/// fills the remaining fields with defaults; "train" applies to both
/// variants, "train_clean"/"train_contaminated" override per variant.
ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// Report writers shared by the experiment driver and the CLI subcommands.
// Columns: kind,id,n,stratum,area,dice,hd95,asd,tp,fp,fn,f1 with one
// "subject" row per evaluated subject, "aggregate" rows for overall and each
// stratum, and a trailing "excluded" row.
void write_seg_csv(const std::filesystem::path& path, const SegReport& report);
void write_froc_csv(const std::filesystem::path& path, const std::vector<DetectionRow>& rows,
                    double calibrated, bool has_calibrated);
void write_curve_csv(const std::filesystem::path& path, const FrocCurve& curve);
void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& history);

struct VariantReport {
    std::string name;
    std::vector<double> loss_history;
    double seg_threshold = 0.0;        // selected on the validation split
    SegReport seg;                     // test split
    double calibrated_threshold = 0.0; // mu+3sigma over normal test maps
    std::vector<DetectionRow> detection;
};

struct ExperimentReport {
    VariantReport clean;
    VariantReport contaminated;
    // Paired two-sided tests over the common test subjects.
    WilcoxonResult dice_test;
    WilcoxonResult hd95_test;
    WilcoxonResult asd_test;
    WilcoxonResult f1_test;
};

/// Runs the full pipeline into config.out_dir: dataset, one model per
/// variant, anomaly maps, segmentation and FROC reports, the paired
/// comparison, and summary.md. Every output except manifest.json is a pure
/// function of the config. A failing stage throws with the stage name
/// prefixed; earlier stages' files stay on disk.
ExperimentReport run_experiment(const ExperimentConfig& config);

} // namespace flowlens
