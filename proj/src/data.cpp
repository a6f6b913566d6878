#include "gradmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace gradmix {

void TaskStream::check_disjoint() const {
    std::set<int> seen;
    for (const auto& t : tasks) {
        for (int c : t.classes) {
            if (!seen.insert(c).second)
                throw std::logic_error("task stream: class " + std::to_string(c) +
                                       " appears in more than one task");
        }
    }
}

void ReplayBuffer::add_task(const TaskData& task, Rng& rng) {
    for (int c : task.classes) {
        if (store_.count(c))
            throw std::logic_error("replay buffer: class " + std::to_string(c) +
                                   " inserted twice");
    }
    // Per-class index pools in one pass, order-stable.
    std::map<int, std::vector<int>> by_class;
    for (std::size_t i = 0; i < task.train.size(); ++i)
        by_class[task.train[i].label].push_back(static_cast<int>(i));
    for (int c : task.classes) {
        const auto& pool = by_class[c];
        int take = std::min<int>(per_class_, static_cast<int>(pool.size()));
        Rng class_rng = rng.fork("class", static_cast<std::uint64_t>(c));
        std::vector<int> picks = class_rng.sample_without_replacement(static_cast<int>(pool.size()), take);
        auto& dst = store_[c];
        for (int p : picks) dst.push_back(task.train[static_cast<std::size_t>(pool[static_cast<std::size_t>(p)])]);
    }
}

int ReplayBuffer::total() const {
    int n = 0;
    for (const auto& [c, v] : store_) n += static_cast<int>(v.size());
    return n;
}

std::vector<int> ReplayBuffer::classes() const {
    std::vector<int> out;
    for (const auto& [c, v] : store_) out.push_back(c);
    return out;
}

const std::vector<Sample>& ReplayBuffer::samples_of(int label) const {
    auto it = store_.find(label);
    if (it == store_.end())
        throw std::logic_error("replay buffer: class " + std::to_string(label) + " not stored");
    return it->second;
}

void ReplayBuffer::insert_raw(int label, std::vector<Sample> samples) {
    if (store_.count(label))
        throw std::logic_error("replay buffer: class " + std::to_string(label) + " inserted twice");
    store_[label] = std::move(samples);
}

std::vector<const Sample*> ReplayBuffer::flat() const {
    std::vector<const Sample*> out;
    out.reserve(static_cast<std::size_t>(total()));
    for (const auto& [c, v] : store_)
        for (const auto& s : v) out.push_back(&s);
    return out;
}

namespace {

std::uint32_t read_be32(std::ifstream& f, const std::string& path, std::size_t offset) {
    unsigned char buf[4];
    f.read(reinterpret_cast<char*>(buf), 4);
    if (f.gcount() != 4)
        throw format_error(path + ": truncated header at byte " + std::to_string(offset));
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<char*>(buf), 4);
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

std::vector<Sample> load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgf(images_path, std::ios::binary);
    if (!imgf) throw io_error("cannot open " + images_path);
    std::uint32_t magic = read_be32(imgf, images_path, 0);
    if (magic != kImageMagic)
        throw format_error(images_path + ": bad image magic at byte 0 (got 0x" +
                           [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", magic); return std::string(b); }() +
                           ", want 0x00000803)");
    std::uint32_t n = read_be32(imgf, images_path, 4);
    std::uint32_t rows = read_be32(imgf, images_path, 8);
    std::uint32_t cols = read_be32(imgf, images_path, 12);
    std::size_t dim = static_cast<std::size_t>(rows) * cols;

    std::ifstream lblf(labels_path, std::ios::binary);
    if (!lblf) throw io_error("cannot open " + labels_path);
    std::uint32_t lmagic = read_be32(lblf, labels_path, 0);
    if (lmagic != kLabelMagic)
        throw format_error(labels_path + ": bad label magic at byte 0 (got 0x" +
                           [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", lmagic); return std::string(b); }() +
                           ", want 0x00000801)");
    std::uint32_t ln = read_be32(lblf, labels_path, 4);
    if (n != ln)
        throw format_error(images_path + ": image count " + std::to_string(n) +
                           " does not match label count " + std::to_string(ln) + " (header byte 4)");

    std::vector<Sample> out(n);
    std::vector<std::uint8_t> pix(dim);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        imgf.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(dim));
        if (imgf.gcount() != static_cast<std::streamsize>(dim))
            throw format_error(images_path + ": truncated image data at byte " +
                               std::to_string(16 + static_cast<std::size_t>(i) * dim));
        int lbl = lblf.get();
        if (lbl == EOF)
            throw format_error(labels_path + ": truncated label data at byte " +
                               std::to_string(8 + i));
        Sample& s = out[i];
        s.x.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) s.x[k] = static_cast<double>(pix[k]) / 255.0;
        s.label = lbl;
        max_label = std::max(max_label, lbl);
    }
    for (auto& s : out) set_one_hot(s, max_label + 1);
    return out;
}

void write_idx_images(const std::string& path, const std::vector<std::vector<std::uint8_t>>& images,
                      int rows, int cols) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path + " for writing");
    write_be32(f, kImageMagic);
    write_be32(f, static_cast<std::uint32_t>(images.size()));
    write_be32(f, static_cast<std::uint32_t>(rows));
    write_be32(f, static_cast<std::uint32_t>(cols));
    for (const auto& img : images)
        f.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
    if (!f) throw io_error("write failed for " + path);
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path + " for writing");
    write_be32(f, kLabelMagic);
    write_be32(f, static_cast<std::uint32_t>(labels.size()));
    f.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (!f) throw io_error("write failed for " + path);
}

std::vector<int> identity_order(int class_count) {
    std::vector<int> order(static_cast<std::size_t>(class_count));
    for (int i = 0; i < class_count; ++i) order[static_cast<std::size_t>(i)] = i;
    return order;
}

std::vector<int> permuted_order(int class_count, Rng& rng) {
    std::vector<int> order = identity_order(class_count);
    rng.shuffle(order);
    return order;
}

TaskStream make_task_stream(const std::vector<Sample>& train, const std::vector<Sample>& test,
                            int class_count, int classes_per_task,
                            const std::vector<int>& class_order) {
    if (classes_per_task <= 0 || class_count % classes_per_task != 0)
        throw config_error("make_task_stream: class count " + std::to_string(class_count) +
                           " not divisible by classes per task " + std::to_string(classes_per_task));
    if (static_cast<int>(class_order.size()) != class_count)
        throw config_error("make_task_stream: class order must cover every class");

    TaskStream stream;
    stream.class_count = class_count;
    stream.input_dim = train.empty() ? 0 : static_cast<int>(train[0].x.size());
    int num_tasks = class_count / classes_per_task;
    std::vector<int> task_of_class(static_cast<std::size_t>(class_count));
    stream.tasks.resize(static_cast<std::size_t>(num_tasks));
    for (int t = 0; t < num_tasks; ++t) {
        std::vector<int> cls(class_order.begin() + t * classes_per_task,
                             class_order.begin() + (t + 1) * classes_per_task);
        std::sort(cls.begin(), cls.end());
        for (int c : cls) task_of_class[static_cast<std::size_t>(c)] = t;
        stream.tasks[static_cast<std::size_t>(t)].classes = std::move(cls);
    }
    for (const auto& s : train) {
        if (s.label < 0 || s.label >= class_count)
            throw config_error("make_task_stream: train label " + std::to_string(s.label) +
                               " outside [0, " + std::to_string(class_count) + ")");
        Sample copy = s;
        set_one_hot(copy, class_count);
        stream.tasks[static_cast<std::size_t>(task_of_class[static_cast<std::size_t>(s.label)])].train.push_back(std::move(copy));
    }
    for (const auto& s : test) {
        if (s.label < 0 || s.label >= class_count)
            throw config_error("make_task_stream: test label " + std::to_string(s.label) +
                               " outside [0, " + std::to_string(class_count) + ")");
        Sample copy = s;
        set_one_hot(copy, class_count);
        stream.tasks[static_cast<std::size_t>(task_of_class[static_cast<std::size_t>(s.label)])].test.push_back(std::move(copy));
    }
    stream.check_disjoint();
    return stream;
}

TaskStream make_synthetic_stream(int class_count, int dim, int train_per_class,
                                 int test_per_class, double separation, int classes_per_task,
                                 std::uint64_t seed) {
    Rng root(seed);
    Rng mean_rng = root.fork("means");
    std::vector<std::vector<double>> means(static_cast<std::size_t>(class_count),
                                           std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& m : means)
        for (double& v : m) v = mean_rng.normal();
    // Rescale so the closest pair of means sits exactly `separation` apart.
    double min_dist = -1.0;
    for (int a = 0; a < class_count; ++a) {
        for (int b = a + 1; b < class_count; ++b) {
            double d2 = 0.0;
            for (int k = 0; k < dim; ++k) {
                double diff = means[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)] -
                              means[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
                d2 += diff * diff;
            }
            double d = std::sqrt(d2);
            if (min_dist < 0.0 || d < min_dist) min_dist = d;
        }
    }
    double scale = (class_count > 1 && min_dist > 0.0) ? separation / min_dist : 0.0;
    for (auto& m : means)
        for (double& v : m) v *= scale;

    std::vector<Sample> train, test;
    for (int c = 0; c < class_count; ++c) {
        Rng class_rng = root.fork("samples", static_cast<std::uint64_t>(c));
        auto draw = [&](std::vector<Sample>& dst, int n) {
            for (int i = 0; i < n; ++i) {
                Sample s;
                s.x.resize(static_cast<std::size_t>(dim));
                for (int k = 0; k < dim; ++k)
                    s.x[static_cast<std::size_t>(k)] = means[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] + class_rng.normal();
                s.label = c;
                dst.push_back(std::move(s));
            }
        };
        draw(train, train_per_class);
        draw(test, test_per_class);
    }
    return make_task_stream(train, test, class_count, classes_per_task, identity_order(class_count));
}

std::vector<Batch> make_batches(int task_size, int buffer_size, int batch_size, Rng& rng) {
    if (batch_size <= 0) throw config_error("make_batches: batch size must be positive");
    std::vector<int> order(static_cast<std::size_t>(task_size));
    for (int i = 0; i < task_size; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng = rng.fork("task-shuffle");
    shuffle_rng.shuffle(order);
    Rng draw_rng = rng.fork("buffer-draw");

    std::vector<Batch> out;
    for (int start = 0; start < task_size; start += batch_size) {
        Batch b;
        int end = std::min(task_size, start + batch_size);
        b.task_idx.assign(order.begin() + start, order.begin() + end);
        int want = std::min<int>(static_cast<int>(b.task_idx.size()), buffer_size);
        if (want > 0) b.buffer_idx = draw_rng.sample_without_replacement(buffer_size, want);
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace gradmix
