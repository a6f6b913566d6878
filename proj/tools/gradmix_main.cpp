#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradmix/analysis.hpp"
#include "gradmix/experiment.hpp"
#include "gradmix/io.hpp"

namespace fs = std::filesystem;
using namespace gradmix;

namespace {

struct FlagSet {
    CLI::App* cmd;
    std::vector<std::pair<std::string, std::string>>* overrides;

    void add(const std::string& flag, const std::string& key, const std::string& help) {
        auto value = std::make_shared<std::string>();
        cmd->add_option_function<std::string>(
               flag,
               [this, key, value](const std::string& v) { overrides->emplace_back(key, v); },
               help)
            ->type_name("TEXT");
    }
};

int cmd_run(const std::string& config_path,
            const std::vector<std::pair<std::string, std::string>>& overrides) {
    ExperimentSpec spec = parse_config(config_path, overrides);
    RunManifest manifest = run_experiments(spec);
    std::printf("%-20s %-12s %-12s %s\n", "method", "mean_avg_acc", "std_avg_acc", "seeds");
    for (const auto& row : manifest.summary)
        std::printf("%-20s %-12.3f %-12.3f %d\n", row.method.c_str(), row.mean_avg_acc,
                    row.std_avg_acc, row.seeds);
    for (const auto& rec : manifest.runs)
        if (!rec.ok)
            std::fprintf(stderr, "run %s seed %llu failed: %s\n", rec.method.c_str(),
                         static_cast<unsigned long long>(rec.seed), rec.error.c_str());
    std::printf("artifacts under %s\n", spec.out_dir.c_str());
    return manifest.all_ok ? 0 : 1;
}

int cmd_analyze(const std::string& ckpt_path, const std::string& out_dir,
                const std::string& analyses_csv, double alpha, int trials, int exemplars) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    fs::create_directories(out_dir);
    std::set<std::string> analyses;
    {
        std::string cur;
        for (char c : analyses_csv + ",") {
            if (c == ',') {
                if (!cur.empty()) analyses.insert(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
    }
    if (ck.buffer.empty()) {
        std::fprintf(stderr, "checkpoint has an empty buffer; nothing to analyze\n");
        return 1;
    }
    Rng arng(ck.seed);
    if (analyses.count("rmse")) {
        auto flat = ck.buffer.flat();
        Rng prng = arng.fork("analysis-rmse");
        std::vector<std::pair<const Sample*, const Sample*>> pairs;
        int want = std::min<int>(256, static_cast<int>(flat.size()) * 4);
        for (int i = 0; i < want; ++i)
            pairs.emplace_back(flat[prng.uniform_int(flat.size())],
                               flat[prng.uniform_int(flat.size())]);
        auto curve = approx_error_rmse(ck.net, ck.buffer, pairs, default_lambda_grid());
        write_rmse_csv(curve, (fs::path(out_dir) / "rmse.csv").string());
        std::printf("rmse.csv written (%zu lambda points)\n", curve.size());
    }
    if (analyses.count("pairs")) {
        Rng erng = arng.fork("analysis-exemplars");
        ExemplarSets ex = build_exemplars(ck.net, ck.buffer, {}, {}, exemplars, erng);
        Rng trng = arng.fork("analysis-pairs");
        PairAgreement pa = pair_precision_recall(ck.net, ck.buffer, ex, alpha, trials, trng);
        write_pairs_csv("checkpoint", pa, (fs::path(out_dir) / "pairs.csv").string());
        std::printf("pairs: precision=%.3f recall=%.3f\n", pa.precision, pa.recall);
    }
    if (analyses.count("distances")) {
        std::vector<Sample> samples;
        for (const Sample* s : ck.buffer.flat()) samples.push_back(*s);
        GradDistances d = class_grad_distances(ck.net, samples);
        write_distances_csv(d, (fs::path(out_dir) / "distances.csv").string());
        std::printf("distances: intra=%.4f inter=%.4f (excluded %ld)\n", d.intra, d.inter,
                    d.excluded);
    }
    return 0;
}

int cmd_inspect(const std::string& images, const std::string& labels) {
    std::vector<Sample> samples = load_idx(images, labels);
    int classes = 0;
    for (const auto& s : samples) classes = std::max(classes, s.label + 1);
    std::vector<long> hist(static_cast<std::size_t>(classes), 0);
    double lo = 1.0, hi = 0.0;
    for (const auto& s : samples) {
        hist[static_cast<std::size_t>(s.label)]++;
        for (double v : s.x) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    std::printf("samples: %zu\n", samples.size());
    std::printf("features per sample: %zu\n", samples.empty() ? 0 : samples[0].x.size());
    std::printf("classes: %d\n", classes);
    std::printf("pixel range after 1/255 scaling: [%.6f, %.6f]\n", lo, hi);
    for (int c = 0; c < classes; ++c) std::printf("class %d: %ld\n", c, hist[static_cast<std::size_t>(c)]);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GradMix: gradient-based selective mixup for class-incremental learning"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Train and evaluate methods across seeds");
    std::string config_path;
    run->add_option("--config", config_path, "Flat key=value config file; flags override it");
    std::vector<std::pair<std::string, std::string>> overrides;
    FlagSet flags{run, &overrides};
    flags.add("--dataset", "dataset", "mnist | fmnist | synthetic");
    flags.add("--data-dir", "data_dir", "Directory holding IDX datasets (or GRADMIX_DATA_DIR)");
    flags.add("--method", "method", "Comma list: er,mixup,gradmix,ablation_original,ablation_random");
    flags.add("--seeds", "seeds", "Comma list of seeds");
    flags.add("--epochs", "epochs", "Training epochs per task");
    flags.add("--lr", "lr", "SGD learning rate");
    flags.add("--batch-size", "batch_size", "Batch size B");
    flags.add("--buffer-per-class", "buffer_per_class", "Buffer capacity N per class");
    flags.add("--alpha", "alpha", "Beta(alpha, alpha) mixup parameter");
    flags.add("--exemplars", "exemplars", "Exemplars per class for the criterion");
    flags.add("--hidden", "hidden", "Comma list of hidden layer widths");
    flags.add("--classes-per-task", "classes_per_task", "Classes per task");
    flags.add("--class-order-seed", "class_order_seed", "Permute the class order with this seed (default: ascending)");
    flags.add("--out-dir", "out_dir", "Output directory");
    flags.add("--jobs", "jobs", "Concurrent runs");
    flags.add("--trials", "trials", "Trials for the pair-agreement analysis");
    flags.add("--analysis", "analysis", "Comma list: rmse,pairs,distances,detrimental,heatmap");
    flags.add("--synthetic-classes", "synthetic_classes", "Synthetic: class count");
    flags.add("--synthetic-dim", "synthetic_dim", "Synthetic: feature dimension");
    flags.add("--synthetic-train-per-class", "synthetic_train_per_class", "Synthetic: train samples per class");
    flags.add("--synthetic-test-per-class", "synthetic_test_per_class", "Synthetic: test samples per class");
    flags.add("--synthetic-separation", "synthetic_separation", "Synthetic: min distance between class means");
    flags.add("--synthetic-seed", "synthetic_seed", "Synthetic: generation seed");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Post-hoc analyses on a saved checkpoint");
    std::string ckpt, analyze_out = "analysis_out", analyses_csv = "rmse,pairs,distances";
    double alpha = 1.0;
    int trials = 20, exemplars = 32;
    analyze->add_option("--checkpoint", ckpt, "checkpoint.bin from a run")->required();
    analyze->add_option("--out-dir", analyze_out, "Output directory");
    analyze->add_option("--analysis", analyses_csv, "Comma list: rmse,pairs,distances");
    analyze->add_option("--alpha", alpha, "Beta parameter for lambda trials");
    analyze->add_option("--trials", trials, "Number of lambda trials");
    analyze->add_option("--exemplars", exemplars, "Exemplars per class");

    // inspect-idx
    auto* inspect = app.add_subcommand("inspect-idx", "Sanity-check an IDX image/label pair");
    std::string images, labels;
    inspect->add_option("--images", images, "IDX image file")->required();
    inspect->add_option("--labels", labels, "IDX label file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, overrides);
        if (analyze->parsed()) return cmd_analyze(ckpt, analyze_out, analyses_csv, alpha, trials, exemplars);
        if (inspect->parsed()) return cmd_inspect(images, labels);
    } catch (const config_error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
