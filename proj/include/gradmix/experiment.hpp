#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gradmix/io.hpp"
#include "gradmix/train.hpp"

namespace gradmix {

/// Fully resolved description of an experiment batch.
struct ExperimentSpec {
    std::string dataset = "mnist";  // mnist | fmnist | synthetic
    std::string data_dir;           // IDX directory; env GRADMIX_DATA_DIR supplies the default

    // synthetic stream shape
    int synth_classes = 4;
    int synth_dim = 16;
    int synth_train_per_class = 200;
    int synth_test_per_class = 50;
    double synth_separation = 6.0;
    std::uint64_t synth_seed = 1;

    int classes_per_task = 2;
    // Ascending class order by default; set to permute classes with a seed.
    std::optional<std::uint64_t> class_order_seed;
    std::vector<Method> methods = {Method::gradmix};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

    TrainConfig train;  // per-run seed is overwritten from `seeds`

    std::string out_dir = "out";
    std::set<std::string> analyses;  // rmse | pairs | distances | detrimental | heatmap
    int jobs = 1;
    int analysis_trials = 20;

    void validate() const;
};

/// Flat key=value config file (# comments) with flag overrides on top.
/// Either path or overrides may be empty. Unknown keys are usage errors.
ExperimentSpec parse_config(const std::string& path,
                            const std::vector<std::pair<std::string, std::string>>& overrides);

/// Apply one key=value setting; shared by file and flag parsing.
void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value);

struct RunRecord {
    std::string method;
    std::uint64_t seed = 0;
    std::string dir;
    bool ok = false;
    std::string error;
    double avg_acc = 0.0;
    std::vector<double> task_seconds;
};

struct RunManifest {
    ExperimentSpec spec;
    std::vector<RunRecord> runs;
    std::vector<SummaryRow> summary;
    std::map<std::string, std::string> dataset_checksums;
    long train_samples = 0;  // as loaded, never truncated to match any table
    long test_samples = 0;
    bool all_ok = false;
};

/// Materialize the spec's dataset as a task stream.
TaskStream load_stream(const ExperimentSpec& spec);

/// FNV-1a content hash of a dataset file, hex-encoded.
std::string file_checksum(const std::string& path);

/// Execute every (method, seed) pair, emit per-run CSVs and checkpoints,
/// then write summary.csv and manifest.json under spec.out_dir. Individual
/// run failures are recorded and do not stop the batch.
RunManifest run_experiments(const ExperimentSpec& spec);

void write_manifest(const RunManifest& manifest, const std::string& path);

/// Full MetricsLog dump (losses, per-class accuracy, per-epoch criterion
/// matrices) for downstream plotting.
void write_metrics_json(const MetricsLog& log, const std::string& path);

}  // namespace gradmix
