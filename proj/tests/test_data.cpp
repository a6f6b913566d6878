#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>
#include <algorithm>

#include "gradmix/data.hpp"
#include "gradmix/metrics.hpp"
#include "gradmix/nn.hpp"

using namespace gradmix;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("gradmix_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("load_idx reads a handcrafted 4-image fixture") {
    TempDir dir;
    // 2x2 images, pixel values chosen to exercise the 1/255 scaling.
    std::vector<std::vector<std::uint8_t>> images = {
        {0, 255, 128, 1}, {10, 20, 30, 40}, {255, 255, 255, 255}, {0, 0, 0, 0}};
    std::vector<std::uint8_t> labels = {0, 1, 2, 1};
    write_idx_images(dir.file("img"), images, 2, 2);
    write_idx_labels(dir.file("lbl"), labels);

    auto samples = load_idx(dir.file("img"), dir.file("lbl"));
    REQUIRE(samples.size() == 4);
    CHECK(samples[0].x == std::vector<double>{0.0, 1.0, 128.0 / 255.0, 1.0 / 255.0});
    CHECK(samples[1].label == 1);
    CHECK(samples[2].x[0] == 1.0);
    CHECK(samples[3].x == std::vector<double>{0.0, 0.0, 0.0, 0.0});
    CHECK(samples[2].one_hot == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("load_idx rejects malformed files with byte offsets") {
    TempDir dir;
    SUBCASE("empty image file") {
        std::ofstream(dir.file("img")).close();
        write_idx_labels(dir.file("lbl"), {0});
        CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lbl")), format_error);
    }
    SUBCASE("bad magic") {
        std::ofstream f(dir.file("img"), std::ios::binary);
        const char junk[16] = {0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
        f.write(junk, 16);
        f.close();
        write_idx_labels(dir.file("lbl"), {0});
        try {
            load_idx(dir.file("img"), dir.file("lbl"));
            FAIL("expected format_error");
        } catch (const format_error& e) {
            CHECK(std::string(e.what()).find("byte 0") != std::string::npos);
        }
    }
    SUBCASE("count mismatch") {
        write_idx_images(dir.file("img"), {{0, 0, 0, 0}}, 2, 2);
        write_idx_labels(dir.file("lbl"), {0, 1});
        CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lbl")), format_error);
    }
    SUBCASE("truncated pixel data") {
        write_idx_images(dir.file("img"), {{0, 0}}, 2, 2);  // claims 2x2, provides 2 bytes
        write_idx_labels(dir.file("lbl"), {0});
        CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lbl")), format_error);
    }
}

TEST_CASE("idx round-trip reproduces identical bytes") {
    TempDir dir;
    std::vector<std::vector<std::uint8_t>> images = {{7, 77, 177, 255}, {1, 2, 3, 4}};
    std::vector<std::uint8_t> labels = {3, 9};
    write_idx_images(dir.file("img"), images, 2, 2);
    write_idx_labels(dir.file("lbl"), labels);

    auto samples = load_idx(dir.file("img"), dir.file("lbl"));
    std::vector<std::vector<std::uint8_t>> back;
    std::vector<std::uint8_t> back_labels;
    for (const auto& s : samples) {
        std::vector<std::uint8_t> img;
        for (double v : s.x) img.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        back.push_back(std::move(img));
        back_labels.push_back(static_cast<std::uint8_t>(s.label));
    }
    write_idx_images(dir.file("img2"), back, 2, 2);
    write_idx_labels(dir.file("lbl2"), back_labels);
    CHECK(read_bytes(dir.file("img")) == read_bytes(dir.file("img2")));
    CHECK(read_bytes(dir.file("lbl")) == read_bytes(dir.file("lbl2")));
}

namespace {

std::vector<Sample> labeled_points(int classes, int per_class, int dim) {
    std::vector<Sample> out;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            Sample s;
            s.x.assign(static_cast<std::size_t>(dim), static_cast<double>(c) + 0.01 * i);
            s.label = c;
            set_one_hot(s, classes);
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("make_task_stream splits ten classes into five ascending pairs") {
    auto train = labeled_points(10, 3, 2);
    auto test = labeled_points(10, 2, 2);
    TaskStream s = make_task_stream(train, test, 10, 2, identity_order(10));
    REQUIRE(s.tasks.size() == 5);
    CHECK(s.tasks[0].classes == std::vector<int>{0, 1});
    CHECK(s.tasks[4].classes == std::vector<int>{8, 9});
    for (const auto& t : s.tasks) {
        CHECK(t.train.size() == 6);
        CHECK(t.test.size() == 4);
        for (const auto& smp : t.train)
            CHECK(std::count(t.classes.begin(), t.classes.end(), smp.label) == 1);
    }
    s.check_disjoint();
}

TEST_CASE("make_task_stream degenerates to one task when all classes share it") {
    auto train = labeled_points(10, 2, 2);
    TaskStream s = make_task_stream(train, train, 10, 10, identity_order(10));
    CHECK(s.tasks.size() == 1);
    CHECK(s.tasks[0].train.size() == 20);
}

TEST_CASE("make_task_stream rejects a non-divisible class count") {
    auto train = labeled_points(10, 1, 2);
    CHECK_THROWS_AS(make_task_stream(train, train, 10, 3, identity_order(10)), config_error);
}

TEST_CASE("make_task_stream rejects out-of-range labels") {
    auto train = labeled_points(4, 2, 2);
    auto bad_test = labeled_points(6, 1, 2);  // labels 4 and 5 exceed the class count
    CHECK_THROWS_AS(make_task_stream(train, bad_test, 4, 2, identity_order(4)), config_error);
}

TEST_CASE("four synthetic classes split into two disjoint tasks") {
    TaskStream s = make_synthetic_stream(4, 6, 20, 10, 4.0, 2, 99);
    REQUIRE(s.tasks.size() == 2);
    std::set<int> all;
    for (const auto& t : s.tasks)
        for (int c : t.classes) CHECK(all.insert(c).second);
    CHECK(all == std::set<int>{0, 1, 2, 3});
    s.check_disjoint();
}

TEST_CASE("a seeded class permutation regroups tasks") {
    auto train = labeled_points(4, 2, 2);
    Rng rng(5);
    auto order = permuted_order(4, rng);
    TaskStream s = make_task_stream(train, train, 4, 2, order);
    std::set<int> first(s.tasks[0].classes.begin(), s.tasks[0].classes.end());
    CHECK(first == std::set<int>(order.begin(), order.begin() + 2));
}

TEST_CASE("synthetic streams are bit-identical under one seed") {
    TaskStream a = make_synthetic_stream(4, 8, 15, 5, 5.0, 2, 1234);
    TaskStream b = make_synthetic_stream(4, 8, 15, 5, 5.0, 2, 1234);
    for (std::size_t t = 0; t < a.tasks.size(); ++t) {
        REQUIRE(a.tasks[t].train.size() == b.tasks[t].train.size());
        for (std::size_t i = 0; i < a.tasks[t].train.size(); ++i)
            CHECK(a.tasks[t].train[i].x == b.tasks[t].train[i].x);
    }
    TaskStream c = make_synthetic_stream(4, 8, 15, 5, 5.0, 2, 1235);
    CHECK(a.tasks[0].train[0].x != c.tasks[0].train[0].x);
}

TEST_CASE("zero separation collapses every class onto one distribution") {
    TaskStream s = make_synthetic_stream(4, 6, 200, 10, 0.0, 2, 7);
    for (const auto& t : s.tasks) {
        std::vector<double> mean(6, 0.0);
        int n = 0;
        for (const auto& smp : t.train) {
            for (int k = 0; k < 6; ++k) mean[static_cast<std::size_t>(k)] += smp.x[static_cast<std::size_t>(k)];
            ++n;
        }
        // Class means were rescaled to zero, so sample means sit near 0.
        for (double m : mean) CHECK(std::abs(m / n) < 0.25);
    }
}

TEST_CASE("zero separation trains to chance accuracy") {
    TaskStream s = make_synthetic_stream(4, 6, 150, 60, 0.0, 4, 11);  // single task
    REQUIRE(s.tasks.size() == 1);
    Rng rng(0);
    DenseNet net = make_mlp(6, {}, 4, rng);
    for (int epoch = 0; epoch < 5; ++epoch)
        for (const auto& smp : s.tasks[0].train)
            sgd_step(net, backward(net, forward(net, smp.x), smp.one_hot), 0.05);
    EvalResult ev = evaluate(net, s.tasks[0].test);
    CHECK(ev.accuracy > 0.10);  // 1/c = 0.25 up to sampling noise
    CHECK(ev.accuracy < 0.40);
}

TEST_CASE("well-separated synthetic classes are linearly learnable") {
    TaskStream s = make_synthetic_stream(4, 8, 100, 40, 12.0, 4, 21);  // single task
    REQUIRE(s.tasks.size() == 1);
    Rng rng(0);
    DenseNet net = make_mlp(8, {}, 4, rng);
    for (int epoch = 0; epoch < 5; ++epoch)
        for (const auto& smp : s.tasks[0].train)
            sgd_step(net, backward(net, forward(net, smp.x), smp.one_hot), 0.05);
    EvalResult ev = evaluate(net, s.tasks[0].test);
    CHECK(ev.accuracy > 0.99);
}

TEST_CASE("buffer grows by N per class and clamps to class size") {
    auto train = labeled_points(4, 50, 3);
    TaskStream s = make_task_stream(train, train, 4, 2, identity_order(4));
    ReplayBuffer buf(32);
    Rng root(1);
    Rng rng = root.fork("buffer", 1);
    buf.add_task(s.tasks[0], rng);
    CHECK(buf.total() == 64);  // two classes, 32 each
    CHECK(buf.samples_of(0).size() == 32);
    CHECK(buf.samples_of(1).size() == 32);
    CHECK_FALSE(buf.has_class(2));

    ReplayBuffer big(80);
    Rng rng2(1);
    big.add_task(s.tasks[0], rng2);
    CHECK(big.samples_of(0).size() == 50);  // clamped to the class size
}

TEST_CASE("buffer sampling is deterministic and rejects duplicate classes") {
    auto train = labeled_points(2, 40, 3);
    TaskStream s = make_task_stream(train, train, 2, 2, identity_order(2));
    ReplayBuffer a(8), b(8);
    Rng r1(9), r2(9);
    a.add_task(s.tasks[0], r1);
    b.add_task(s.tasks[0], r2);
    for (int c = 0; c < 2; ++c) {
        const auto& sa = a.samples_of(c);
        const auto& sb = b.samples_of(c);
        REQUIRE(sa.size() == sb.size());
        for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i].x == sb[i].x);
    }
    Rng r3(10);
    CHECK_THROWS_AS(a.add_task(s.tasks[0], r3), std::logic_error);
}

TEST_CASE("buffer stays class-balanced as tasks finish") {
    auto train = labeled_points(6, 30, 2);
    TaskStream s = make_task_stream(train, train, 6, 2, identity_order(6));
    ReplayBuffer buf(10);
    Rng root(3);
    for (std::size_t l = 0; l < s.tasks.size(); ++l) {
        Rng task_rng = root.fork("buffer", l);
        buf.add_task(s.tasks[l], task_rng);
        for (int c : buf.classes()) CHECK(buf.samples_of(c).size() == 10);
    }
    CHECK(buf.total() == 60);
}

TEST_CASE("make_batches partitions the task and draws matching buffer slices") {
    Rng rng(17);
    auto batches = make_batches(1000, 500, 64, rng);
    REQUIRE(batches.size() == 16);
    std::set<int> seen;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const Batch& b = batches[i];
        CHECK(b.task_idx.size() == (i + 1 < batches.size() ? 64 : 40));
        CHECK(b.buffer_idx.size() == b.task_idx.size());
        std::set<int> in_batch(b.buffer_idx.begin(), b.buffer_idx.end());
        CHECK(in_batch.size() == b.buffer_idx.size());  // no repeats inside one batch
        for (int t : b.task_idx) CHECK(seen.insert(t).second);
    }
    CHECK(seen.size() == 1000);  // every task sample exactly once
}

TEST_CASE("make_batches with an empty buffer leaves B2 empty") {
    Rng rng(17);
    auto batches = make_batches(100, 0, 64, rng);
    for (const auto& b : batches) CHECK(b.buffer_idx.empty());
}

TEST_CASE("small buffers are drawn whole when B matches the buffer size") {
    Rng rng(23);
    auto batches = make_batches(640, 64, 64, rng);
    for (const auto& b : batches) {
        if (b.task_idx.size() == 64) {
            CHECK(b.buffer_idx.size() == 64);
            std::set<int> s(b.buffer_idx.begin(), b.buffer_idx.end());
            CHECK(s.size() == 64);  // exactly the whole buffer, no repeats
        }
    }
}
