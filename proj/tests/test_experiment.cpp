#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <cmath>
#include <algorithm>

#include "gradmix/experiment.hpp"

using namespace gradmix;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("gradmix_exp_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

ExperimentSpec tiny_synthetic_spec(const std::string& out_dir) {
    ExperimentSpec spec;
    spec.dataset = "synthetic";
    spec.synth_classes = 4;
    spec.synth_dim = 6;
    spec.synth_train_per_class = 30;
    spec.synth_test_per_class = 10;
    spec.synth_separation = 5.0;
    spec.synth_seed = 3;
    spec.classes_per_task = 2;
    spec.train.hidden = {8};
    spec.train.epochs = 2;
    spec.train.batch_size = 16;
    spec.train.buffer_per_class = 4;
    spec.train.exemplars_per_class = 4;
    spec.out_dir = out_dir;
    return spec;
}

}  // namespace

TEST_CASE("defaults follow the reference protocol") {
    ExperimentSpec spec = parse_config("", {{"dataset", "mnist"}, {"method", "gradmix"}});
    CHECK(spec.train.buffer_per_class == 32);
    CHECK(spec.train.batch_size == 64);
    CHECK(spec.train.alpha == 1.0);
    CHECK(spec.train.lr == 0.01);
    CHECK(spec.train.epochs == 20);
    CHECK(spec.train.hidden == std::vector<int>{256, 256});
    CHECK(spec.classes_per_task == 2);
    CHECK(spec.methods == std::vector<Method>{Method::gradmix});
}

TEST_CASE("alpha zero is rejected") {
    CHECK_THROWS_AS(parse_config("", {{"alpha", "0"}}), config_error);
}

TEST_CASE("unknown keys and malformed values are usage errors") {
    CHECK_THROWS_AS(parse_config("", {{"not_a_key", "1"}}), config_error);
    CHECK_THROWS_AS(parse_config("", {{"epochs", "five"}}), config_error);
    CHECK_THROWS_AS(parse_config("", {{"method", "sgd"}}), config_error);
    CHECK_THROWS_AS(parse_config("", {{"seeds", "-3"}}), config_error);
}

TEST_CASE("flags override config-file values") {
    TempDir dir;
    {
        std::ofstream f(dir.file("run.cfg"));
        f << "# comment line\n";
        f << "dataset = synthetic\n";
        f << "epochs = 7\n";
        f << "lr = 0.5\n";
    }
    ExperimentSpec spec = parse_config(dir.file("run.cfg"), {{"epochs", "3"}});
    CHECK(spec.dataset == "synthetic");
    CHECK(spec.train.epochs == 3);  // flag wins
    CHECK(spec.train.lr == 0.5);    // file survives
}

TEST_CASE("a class-order seed permutes the idx task split") {
    TempDir dir;
    fs::create_directories(dir.path / "mnist");
    std::vector<std::vector<std::uint8_t>> images;
    std::vector<std::uint8_t> labels;
    for (std::uint8_t c = 0; c < 4; ++c) {
        for (int i = 0; i < 3; ++i) {
            images.push_back({c, static_cast<std::uint8_t>(i), 0, 0});
            labels.push_back(c);
        }
    }
    for (const char* img : {"train-images-idx3-ubyte", "t10k-images-idx3-ubyte"})
        write_idx_images((dir.path / "mnist" / img).string(), images, 2, 2);
    for (const char* lbl : {"train-labels-idx1-ubyte", "t10k-labels-idx1-ubyte"})
        write_idx_labels((dir.path / "mnist" / lbl).string(), labels);

    ExperimentSpec spec;
    spec.dataset = "mnist";
    spec.data_dir = dir.path.string();
    spec.classes_per_task = 2;

    TaskStream plain = load_stream(spec);
    CHECK(plain.tasks[0].classes == std::vector<int>{0, 1});

    spec.class_order_seed = 7;
    TaskStream permuted = load_stream(spec);
    Rng rng(7);
    Rng order_rng = rng.fork("class-order");
    std::vector<int> order = permuted_order(4, order_rng);
    std::vector<int> expect_first(order.begin(), order.begin() + 2);
    std::sort(expect_first.begin(), expect_first.end());
    CHECK(permuted.tasks[0].classes == expect_first);
    permuted.check_disjoint();
}

TEST_CASE("missing dataset files surface as input errors") {
    ExperimentSpec spec;
    spec.dataset = "mnist";
    spec.data_dir = "/nonexistent_dir_for_test";
    CHECK_THROWS_AS(load_stream(spec), io_error);
}

TEST_CASE("accuracy csv round-trips exactly") {
    TempDir dir;
    Mat acc(5, 5);
    Rng rng(3);
    for (int l = 0; l < 5; ++l)
        for (int t = 0; t <= l; ++t) acc(l, t) = rng.uniform();
    write_accuracy_csv(acc, dir.file("acc.csv"));

    // 5 tasks -> 15 data rows.
    std::ifstream f(dir.file("acc.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 16);  // header + lower triangle

    Mat back = read_accuracy_csv(dir.file("acc.csv"));
    REQUIRE(back.rows == 5);
    for (int l = 0; l < 5; ++l)
        for (int t = 0; t <= l; ++t) CHECK(back(l, t) == acc(l, t));
}

TEST_CASE("an empty heatmap emits a header-only file") {
    TempDir dir;
    write_heatmap_csv({Mat(3, 3)}, dir.file("heat.csv"));
    std::ifstream f(dir.file("heat.csv"));
    std::string line;
    std::getline(f, line);
    CHECK(line == "task,anchor_class,partner_class,count");
    CHECK_FALSE(std::getline(f, line));
}

TEST_CASE("run_experiments writes per-run artifacts and an exact summary") {
    TempDir dir;
    ExperimentSpec spec = tiny_synthetic_spec(dir.file("out"));
    spec.methods = {Method::er, Method::mixup};
    spec.seeds = {1, 2};
    spec.analyses = {"heatmap"};
    RunManifest manifest = run_experiments(spec);

    CHECK(manifest.all_ok);
    CHECK(manifest.runs.size() == 4);
    for (const auto& rec : manifest.runs) {
        CHECK(rec.ok);
        CHECK(fs::exists(fs::path(rec.dir) / "accuracy.csv"));
        CHECK(fs::exists(fs::path(rec.dir) / "checkpoint.bin"));
        CHECK(fs::exists(fs::path(rec.dir) / "heatmap.csv"));
        CHECK(rec.task_seconds.size() == 2);
    }
    CHECK(fs::exists(fs::path(spec.out_dir) / "summary.csv"));
    CHECK(fs::exists(fs::path(spec.out_dir) / "manifest.json"));

    // Summary mean/std recompute exactly from the per-run logs.
    auto rows = read_summary_csv((fs::path(spec.out_dir) / "summary.csv").string());
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        std::vector<double> vals;
        for (const auto& rec : manifest.runs)
            if (rec.method == row.method)
                vals.push_back(stream_avg(read_accuracy_csv(
                    (fs::path(rec.dir) / "accuracy.csv").string())));
        REQUIRE(vals.size() == 2);
        double mean = (vals[0] + vals[1]) / 2.0;
        double var = ((vals[0] - mean) * (vals[0] - mean) + (vals[1] - mean) * (vals[1] - mean)) / 2.0;
        CHECK(row.mean_avg_acc == doctest::Approx(mean).epsilon(1e-12));
        CHECK(row.std_avg_acc == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
        CHECK(row.seeds == 2);
    }
}

TEST_CASE("five seeds and three methods give fifteen runs and three rows") {
    TempDir dir;
    ExperimentSpec spec = tiny_synthetic_spec(dir.file("out"));
    spec.synth_train_per_class = 16;
    spec.synth_test_per_class = 8;
    spec.train.epochs = 1;
    spec.methods = {Method::er, Method::mixup, Method::gradmix};
    spec.seeds = {0, 1, 2, 3, 4};
    spec.jobs = 2;
    RunManifest manifest = run_experiments(spec);
    CHECK(manifest.runs.size() == 15);
    CHECK(manifest.all_ok);
    REQUIRE(manifest.summary.size() == 3);
    for (const auto& row : manifest.summary) CHECK(row.seeds == 5);
}

TEST_CASE("a single seed reports zero standard deviation") {
    TempDir dir;
    ExperimentSpec spec = tiny_synthetic_spec(dir.file("out"));
    spec.methods = {Method::er};
    spec.seeds = {5};
    RunManifest manifest = run_experiments(spec);
    REQUIRE(manifest.summary.size() == 1);
    CHECK(manifest.summary[0].std_avg_acc == 0.0);
    CHECK(manifest.summary[0].seeds == 1);
}

TEST_CASE("rerunning an identical spec reproduces identical csv bytes") {
    TempDir dir;
    ExperimentSpec spec = tiny_synthetic_spec(dir.file("a"));
    spec.methods = {Method::gradmix};
    spec.seeds = {9};
    run_experiments(spec);
    ExperimentSpec again = spec;
    again.out_dir = dir.file("b");
    run_experiments(again);

    auto rel = [&](const std::string& root) {
        return (fs::path(root) / "gradmix_s9" / "accuracy.csv").string();
    };
    CHECK(read_bytes(rel(dir.file("a"))) == read_bytes(rel(dir.file("b"))));
    CHECK(read_bytes((fs::path(dir.file("a")) / "summary.csv").string()) ==
          read_bytes((fs::path(dir.file("b")) / "summary.csv").string()));
}

TEST_CASE("parallel jobs produce the same results as serial execution") {
    TempDir dir;
    ExperimentSpec spec = tiny_synthetic_spec(dir.file("serial"));
    spec.methods = {Method::er, Method::mixup};
    spec.seeds = {1, 2};
    run_experiments(spec);
    ExperimentSpec par = spec;
    par.out_dir = dir.file("parallel");
    par.jobs = 2;
    run_experiments(par);
    for (const char* run : {"er_s1", "er_s2", "mixup_s1", "mixup_s2"}) {
        CHECK(read_bytes((fs::path(dir.file("serial")) / run / "accuracy.csv").string()) ==
              read_bytes((fs::path(dir.file("parallel")) / run / "accuracy.csv").string()));
    }
}

TEST_CASE("checkpoints restore the exact model and buffer") {
    TempDir dir;
    TaskStream stream = make_synthetic_stream(4, 6, 30, 10, 5.0, 2, 3);
    TrainConfig cfg;
    cfg.hidden = {8};
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.buffer_per_class = 4;
    cfg.seed = 12;
    RunResult res = run_stream_full(stream, cfg, Method::gradmix);
    Checkpoint ck{res.net, res.buffer, cfg.seed, "gradmix", cfg.echo()};
    save_checkpoint(ck, dir.file("ck.bin"));
    Checkpoint back = load_checkpoint(dir.file("ck.bin"));
    CHECK(back.seed == 12);
    CHECK(back.method == "gradmix");
    REQUIRE(back.net.layers.size() == res.net.layers.size());
    for (std::size_t k = 0; k < back.net.layers.size(); ++k)
        CHECK(back.net.layers[k].w == res.net.layers[k].w);
    CHECK(back.buffer.total() == res.buffer.total());
    auto a = back.buffer.flat();
    auto b = res.buffer.flat();
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i]->x == b[i]->x);
        CHECK(a[i]->label == b[i]->label);
    }
}

TEST_CASE("invalid specs are rejected before any run starts") {
    TempDir dir;
    ExperimentSpec spec = tiny_synthetic_spec(dir.file("out"));
    spec.train.exemplars_per_class = 0;
    CHECK_THROWS_AS(run_experiments(spec), config_error);
}

TEST_CASE("failed runs are recorded while the batch continues") {
    TempDir dir;
    ExperimentSpec spec = tiny_synthetic_spec(dir.file("out"));
    spec.methods = {Method::er};
    spec.seeds = {1, 2};
    // Sabotage seed 1: a plain file sits where its run directory must go.
    fs::create_directories(dir.file("out"));
    std::ofstream(dir.file("out") + "/er_s1").close();
    RunManifest manifest = run_experiments(spec);
    CHECK_FALSE(manifest.all_ok);
    REQUIRE(manifest.runs.size() == 2);
    CHECK_FALSE(manifest.runs[0].ok);
    CHECK_FALSE(manifest.runs[0].error.empty());
    CHECK(manifest.runs[1].ok);  // the sibling run still completed
    REQUIRE(manifest.summary.size() == 1);
    CHECK(manifest.summary[0].seeds == 1);  // only the surviving run counts
    CHECK(fs::exists(fs::path(manifest.runs[1].dir) / "accuracy.csv"));
}
