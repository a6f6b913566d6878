#include "gradmix/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "gradmix/analysis.hpp"
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace gradmix {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long to_long(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw config_error("invalid integer for key '" + key + "': " + value);
    }
}

std::uint64_t to_seed(const std::string& key, const std::string& value) {
    long v = to_long(key, value);
    if (v < 0) throw config_error("key '" + key + "' must be non-negative, got " + value);
    return static_cast<std::uint64_t>(v);
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw config_error("invalid number for key '" + key + "': " + value);
    }
}

const std::set<std::string> kAnalyses = {"rmse", "pairs", "distances", "detrimental", "heatmap"};

}  // namespace

void ExperimentSpec::validate() const {
    if (methods.empty()) throw config_error("at least one method is required");
    if (seeds.empty()) throw config_error("at least one seed is required");
    if (dataset != "mnist" && dataset != "fmnist" && dataset != "synthetic")
        throw config_error("unknown dataset: " + dataset);
    if (classes_per_task < 1) throw config_error("classes_per_task must be >= 1");
    if (jobs < 1) throw config_error("jobs must be >= 1");
    if (analysis_trials < 1) throw config_error("trials must be >= 1");
    for (const auto& a : analyses)
        if (!kAnalyses.count(a)) throw config_error("unknown analysis: " + a);
    train.validate();
}

void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value) {
    if (key == "dataset") {
        spec.dataset = value;
    } else if (key == "data_dir") {
        spec.data_dir = value;
    } else if (key == "out_dir") {
        spec.out_dir = value;
    } else if (key == "method") {
        spec.methods.clear();
        for (const auto& m : split(value, ','))
            if (!trim(m).empty()) spec.methods.push_back(method_from_string(trim(m)));
    } else if (key == "seeds") {
        spec.seeds.clear();
        for (const auto& s : split(value, ','))
            if (!trim(s).empty()) spec.seeds.push_back(to_seed(key, trim(s)));
    } else if (key == "epochs") {
        spec.train.epochs = static_cast<int>(to_long(key, value));
    } else if (key == "lr") {
        spec.train.lr = to_double(key, value);
    } else if (key == "batch_size") {
        spec.train.batch_size = static_cast<int>(to_long(key, value));
    } else if (key == "buffer_per_class") {
        spec.train.buffer_per_class = static_cast<int>(to_long(key, value));
    } else if (key == "alpha") {
        spec.train.alpha = to_double(key, value);
    } else if (key == "exemplars") {
        spec.train.exemplars_per_class = static_cast<int>(to_long(key, value));
    } else if (key == "hidden") {
        spec.train.hidden.clear();
        for (const auto& h : split(value, ','))
            if (!trim(h).empty()) spec.train.hidden.push_back(static_cast<int>(to_long(key, trim(h))));
    } else if (key == "classes_per_task") {
        spec.classes_per_task = static_cast<int>(to_long(key, value));
    } else if (key == "class_order_seed") {
        spec.class_order_seed = to_seed(key, value);
    } else if (key == "jobs") {
        spec.jobs = static_cast<int>(to_long(key, value));
    } else if (key == "trials") {
        spec.analysis_trials = static_cast<int>(to_long(key, value));
    } else if (key == "analysis") {
        spec.analyses.clear();
        for (const auto& a : split(value, ','))
            if (!trim(a).empty()) spec.analyses.insert(trim(a));
    } else if (key == "synthetic_classes") {
        spec.synth_classes = static_cast<int>(to_long(key, value));
    } else if (key == "synthetic_dim") {
        spec.synth_dim = static_cast<int>(to_long(key, value));
    } else if (key == "synthetic_train_per_class") {
        spec.synth_train_per_class = static_cast<int>(to_long(key, value));
    } else if (key == "synthetic_test_per_class") {
        spec.synth_test_per_class = static_cast<int>(to_long(key, value));
    } else if (key == "synthetic_separation") {
        spec.synth_separation = to_double(key, value);
    } else if (key == "synthetic_seed") {
        spec.synth_seed = to_seed(key, value);
    } else {
        throw config_error("unknown config key: " + key);
    }
}

ExperimentSpec parse_config(const std::string& path,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
    ExperimentSpec spec;
    const char* env = std::getenv("GRADMIX_DATA_DIR");
    spec.data_dir = env ? env : "data";
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw io_error("cannot open config file " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw config_error(path + ":" + std::to_string(lineno) + ": expected key=value");
            apply_setting(spec, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
    }
    for (const auto& [k, v] : overrides) apply_setting(spec, k, v);
    spec.validate();
    return spec;
}

namespace {

fs::path find_idx_dir(const ExperimentSpec& spec) {
    const std::string names[2] = {spec.dataset, spec.dataset == "fmnist" ? "fashion-mnist" : spec.dataset};
    std::vector<fs::path> candidates;
    for (const auto& n : names) candidates.push_back(fs::path(spec.data_dir) / n);
    candidates.push_back(fs::path(spec.data_dir));
    for (const auto& dir : candidates) {
        if (fs::exists(dir / "train-images-idx3-ubyte")) return dir;
        if (fs::exists(dir / "train-images.idx3-ubyte")) return dir;
    }
    throw io_error("dataset '" + spec.dataset + "' not found under " + spec.data_dir +
                   " (expected IDX files like train-images-idx3-ubyte; set --data-dir or "
                   "GRADMIX_DATA_DIR)");
}

std::string idx_file(const fs::path& dir, const std::string& dashed) {
    if (fs::exists(dir / dashed)) return (dir / dashed).string();
    std::string dotted = dashed;
    std::size_t pos = dotted.rfind("-idx");
    if (pos != std::string::npos) dotted[pos] = '.';
    if (fs::exists(dir / dotted)) return (dir / dotted).string();
    throw io_error("missing IDX file " + (dir / dashed).string());
}

}  // namespace

TaskStream load_stream(const ExperimentSpec& spec) {
    if (spec.dataset == "synthetic") {
        return make_synthetic_stream(spec.synth_classes, spec.synth_dim,
                                     spec.synth_train_per_class, spec.synth_test_per_class,
                                     spec.synth_separation, spec.classes_per_task, spec.synth_seed);
    }
    fs::path dir = find_idx_dir(spec);
    std::vector<Sample> train =
        load_idx(idx_file(dir, "train-images-idx3-ubyte"), idx_file(dir, "train-labels-idx1-ubyte"));
    std::vector<Sample> test =
        load_idx(idx_file(dir, "t10k-images-idx3-ubyte"), idx_file(dir, "t10k-labels-idx1-ubyte"));
    int classes = 0;
    for (const auto& s : train) classes = std::max(classes, s.label + 1);
    std::vector<int> order = identity_order(classes);
    if (spec.class_order_seed) {
        Rng rng(*spec.class_order_seed);
        Rng order_rng = rng.fork("class-order");
        order = permuted_order(classes, order_rng);
    }
    return make_task_stream(train, test, classes, spec.classes_per_task, order);
}

std::string file_checksum(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!f) break;
    }
    char out[20];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

namespace {

void run_one(const TaskStream& stream, const ExperimentSpec& spec, Method method,
             std::uint64_t seed, RunRecord& rec) {
    TrainConfig cfg = spec.train;
    cfg.seed = seed;
    cfg.track_detrimental = spec.analyses.count("detrimental") > 0;

    fs::create_directories(rec.dir);
    RunResult res = run_stream_full(stream, cfg, method);
    rec.task_seconds = res.task_seconds;
    rec.avg_acc = stream_avg(res.log.acc);
    write_accuracy_csv(res.log.acc, (fs::path(rec.dir) / "accuracy.csv").string());
    write_metrics_json(res.log, (fs::path(rec.dir) / "metrics.json").string());
    Checkpoint ck{res.net, res.buffer, seed, method_name(method), cfg.echo()};
    save_checkpoint(ck, (fs::path(rec.dir) / "checkpoint.bin").string());

    if (spec.analyses.count("heatmap"))
        write_heatmap_csv(heatmap_counts(res.log), (fs::path(rec.dir) / "heatmap.csv").string());
    if (spec.analyses.count("detrimental"))
        write_detrimental_csv(forgetting_report(res.log),
                              (fs::path(rec.dir) / "detrimental.csv").string());

    if (spec.analyses.count("rmse") || spec.analyses.count("pairs") ||
        spec.analyses.count("distances")) {
        Rng arng(seed);
        if (!res.buffer.empty()) {
            if (spec.analyses.count("rmse")) {
                auto flat = res.buffer.flat();
                Rng prng = arng.fork("analysis-rmse");
                std::vector<std::pair<const Sample*, const Sample*>> pairs;
                int want = std::min<int>(256, static_cast<int>(flat.size()) * 4);
                for (int i = 0; i < want; ++i) {
                    const Sample* a = flat[prng.uniform_int(flat.size())];
                    const Sample* b = flat[prng.uniform_int(flat.size())];
                    pairs.emplace_back(a, b);
                }
                write_rmse_csv(approx_error_rmse(res.net, res.buffer, pairs, default_lambda_grid()),
                               (fs::path(rec.dir) / "rmse.csv").string());
            }
            if (spec.analyses.count("pairs")) {
                Rng erng = arng.fork("analysis-exemplars");
                ExemplarSets ex = build_exemplars(res.net, res.buffer, {}, {},
                                                  cfg.exemplars_per_class, erng);
                Rng trng = arng.fork("analysis-pairs");
                PairAgreement pa = pair_precision_recall(res.net, res.buffer, ex, cfg.alpha,
                                                         spec.analysis_trials, trng);
                write_pairs_csv(spec.dataset, pa, (fs::path(rec.dir) / "pairs.csv").string());
            }
            if (spec.analyses.count("distances")) {
                std::vector<Sample> samples;
                for (const Sample* s : res.buffer.flat()) samples.push_back(*s);
                write_distances_csv(class_grad_distances(res.net, samples),
                                    (fs::path(rec.dir) / "distances.csv").string());
            }
        }
    }
    rec.ok = true;
}

}  // namespace

RunManifest run_experiments(const ExperimentSpec& spec) {
    spec.validate();
    fs::create_directories(spec.out_dir);

    RunManifest manifest;
    manifest.spec = spec;

    TaskStream stream = load_stream(spec);
    for (const auto& task : stream.tasks) {
        manifest.train_samples += static_cast<long>(task.train.size());
        manifest.test_samples += static_cast<long>(task.test.size());
    }
    if (spec.dataset != "synthetic") {
        fs::path dir = find_idx_dir(spec);
        for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                                 "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"})
            manifest.dataset_checksums[name] = file_checksum(idx_file(dir, name));
    }

    for (Method m : spec.methods) {
        for (std::uint64_t seed : spec.seeds) {
            RunRecord rec;
            rec.method = method_name(m);
            rec.seed = seed;
            rec.dir = (fs::path(spec.out_dir) / (rec.method + "_s" + std::to_string(seed))).string();
            manifest.runs.push_back(std::move(rec));
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= manifest.runs.size()) return;
            RunRecord& rec = manifest.runs[i];
            Method m = method_from_string(rec.method);
            try {
                run_one(stream, spec, m, rec.seed, rec);
            } catch (const std::exception& e) {
                rec.ok = false;
                rec.error = e.what();
            }
        }
    };
    int jobs = std::min<int>(spec.jobs, static_cast<int>(manifest.runs.size()));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Summary: mean and population std of the stream average per method.
    for (Method m : spec.methods) {
        SummaryRow row;
        row.method = method_name(m);
        std::vector<double> vals;
        for (const auto& rec : manifest.runs)
            if (rec.method == row.method && rec.ok) vals.push_back(rec.avg_acc);
        row.seeds = static_cast<int>(vals.size());
        if (!vals.empty()) {
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            var /= static_cast<double>(vals.size());
            row.mean_avg_acc = mean;
            row.std_avg_acc = std::sqrt(var);
        }
        manifest.summary.push_back(std::move(row));
    }
    write_summary_csv(manifest.summary, (fs::path(spec.out_dir) / "summary.csv").string());

    manifest.all_ok = true;
    for (const auto& rec : manifest.runs)
        if (!rec.ok) manifest.all_ok = false;
    write_manifest(manifest, (fs::path(spec.out_dir) / "manifest.json").string());
    return manifest;
}

void write_metrics_json(const MetricsLog& log, const std::string& path) {
    json j;
    j["method"] = log.method;
    j["seed"] = log.seed;
    j["num_tasks"] = log.num_tasks;
    j["class_count"] = log.class_count;
    j["config"] = log.config_echo;
    json acc = json::array();
    for (int l = 1; l <= log.acc.rows; ++l) {
        json row = json::array();
        for (int t = 1; t <= l; ++t) row.push_back(log.acc(l - 1, t - 1));
        acc.push_back(std::move(row));
    }
    j["accuracy"] = acc;
    j["per_class_accuracy"] = log.per_class_acc;
    j["epoch_loss"] = log.epoch_loss;
    j["mixed_count"] = log.mixed_count;
    j["detrimental_count"] = log.detrimental_count;
    json crit = json::array();
    for (const auto& c : log.criteria) {
        json rows = json::array();
        for (int a = 0; a < c.inner_matrix.rows; ++a) {
            json row = json::array();
            for (int b = 0; b < c.inner_matrix.cols; ++b) row.push_back(c.inner_matrix(a, b));
            rows.push_back(std::move(row));
        }
        crit.push_back({{"task", c.task},
                        {"epoch", c.epoch},
                        {"lambda", c.lambda},
                        {"classes", c.classes},
                        {"inner_products", rows}});
    }
    j["criteria"] = crit;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f << j.dump(2) << "\n";
    if (!f) throw io_error("write failed for " + path);
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
    json j;
    const ExperimentSpec& s = manifest.spec;
    json spec_j;
    spec_j["dataset"] = s.dataset;
    spec_j["data_dir"] = s.data_dir;
    spec_j["out_dir"] = s.out_dir;
    spec_j["classes_per_task"] = s.classes_per_task;
    if (s.class_order_seed) spec_j["class_order_seed"] = *s.class_order_seed;
    spec_j["jobs"] = s.jobs;
    spec_j["trials"] = s.analysis_trials;
    std::vector<std::string> methods;
    for (Method m : s.methods) methods.push_back(method_name(m));
    spec_j["methods"] = methods;
    spec_j["seeds"] = s.seeds;
    spec_j["analyses"] = std::vector<std::string>(s.analyses.begin(), s.analyses.end());
    spec_j["train"] = {{"epochs", s.train.epochs},
                       {"lr", s.train.lr},
                       {"batch_size", s.train.batch_size},
                       {"buffer_per_class", s.train.buffer_per_class},
                       {"alpha", s.train.alpha},
                       {"exemplars", s.train.exemplars_per_class},
                       {"hidden", s.train.hidden}};
    if (s.dataset == "synthetic")
        spec_j["synthetic"] = {{"classes", s.synth_classes},
                               {"dim", s.synth_dim},
                               {"train_per_class", s.synth_train_per_class},
                               {"test_per_class", s.synth_test_per_class},
                               {"separation", s.synth_separation},
                               {"seed", s.synth_seed}};
    j["spec"] = spec_j;
    j["dataset_checksums"] = manifest.dataset_checksums;
    j["dataset_sizes"] = {{"train", manifest.train_samples}, {"test", manifest.test_samples}};
    j["library_version"] = "0.1.0";
    json runs = json::array();
    for (const auto& rec : manifest.runs) {
        json r;
        r["method"] = rec.method;
        r["seed"] = rec.seed;
        r["dir"] = rec.dir;
        r["ok"] = rec.ok;
        if (!rec.ok) r["error"] = rec.error;
        r["avg_acc"] = rec.avg_acc;
        r["task_seconds"] = rec.task_seconds;
        runs.push_back(std::move(r));
    }
    j["runs"] = runs;
    json summary = json::array();
    for (const auto& row : manifest.summary)
        summary.push_back({{"method", row.method},
                           {"mean_avg_acc", row.mean_avg_acc},
                           {"std_avg_acc", row.std_avg_acc},
                           {"seeds", row.seeds}});
    j["summary"] = summary;
    j["all_ok"] = manifest.all_ok;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f << j.dump(2) << "\n";
    if (!f) throw io_error("write failed for " + path);
}

}  // namespace gradmix
