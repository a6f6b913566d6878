#include "gradmix/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <tuple>
#include <fstream>
#include <sstream>

namespace gradmix {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);  // binary: byte-stable line endings
    if (!f) throw io_error("cannot open " + path + " for writing");
    return f;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

void write_accuracy_csv(const Mat& acc, const std::string& path) {
    auto f = open_out(path);
    f << "l,t,accuracy\n";
    for (int l = 1; l <= acc.rows; ++l)
        for (int t = 1; t <= l; ++t)
            f << l << "," << t << "," << fmt(acc(l - 1, t - 1)) << "\n";
    if (!f) throw io_error("write failed for " + path);
}

Mat read_accuracy_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open " + path);
    std::string line;
    std::getline(f, line);  // header
    int max_l = 0;
    std::vector<std::tuple<int, int, double>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 3) throw format_error(path + ": malformed row '" + line + "'");
        int l = std::stoi(cells[0]);
        int t = std::stoi(cells[1]);
        double a = std::strtod(cells[2].c_str(), nullptr);
        rows.emplace_back(l, t, a);
        max_l = std::max(max_l, l);
    }
    Mat acc(max_l, max_l);
    for (double& v : acc.a) v = -1.0;
    for (auto& [l, t, a] : rows) acc(l - 1, t - 1) = a;
    return acc;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
    auto f = open_out(path);
    f << "method,mean_avg_acc,std_avg_acc,seeds\n";
    for (const auto& r : rows)
        f << r.method << "," << fmt(r.mean_avg_acc) << "," << fmt(r.std_avg_acc) << "," << r.seeds
          << "\n";
    if (!f) throw io_error("write failed for " + path);
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open " + path);
    std::string line;
    std::getline(f, line);
    std::vector<SummaryRow> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 4) throw format_error(path + ": malformed row '" + line + "'");
        SummaryRow r;
        r.method = cells[0];
        r.mean_avg_acc = std::strtod(cells[1].c_str(), nullptr);
        r.std_avg_acc = std::strtod(cells[2].c_str(), nullptr);
        r.seeds = std::stoi(cells[3]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_heatmap_csv(const std::vector<Mat>& per_task, const std::string& path) {
    auto f = open_out(path);
    f << "task,anchor_class,partner_class,count\n";
    for (std::size_t task = 0; task < per_task.size(); ++task) {
        const Mat& m = per_task[task];
        for (int a = 0; a < m.rows; ++a)
            for (int b = 0; b < m.cols; ++b)
                if (m(a, b) != 0.0)
                    f << (task + 1) << "," << a << "," << b << "," << static_cast<long>(m(a, b))
                      << "\n";
    }
    if (!f) throw io_error("write failed for " + path);
}

void write_rmse_csv(const std::vector<RmsePoint>& points, const std::string& path) {
    auto f = open_out(path);
    f << "lambda,rmse\n";
    for (const auto& p : points) f << fmt(p.lambda) << "," << fmt(p.rmse) << "\n";
    if (!f) throw io_error("write failed for " + path);
}

void write_pairs_csv(const std::string& dataset, const PairAgreement& agreement,
                     const std::string& path) {
    auto f = open_out(path);
    f << "dataset,precision,recall\n";
    f << dataset << "," << fmt(agreement.precision) << "," << fmt(agreement.recall) << "\n";
    if (!f) throw io_error("write failed for " + path);
}

void write_distances_csv(const GradDistances& d, const std::string& path) {
    auto f = open_out(path);
    f << "intra,inter\n";
    f << fmt(d.intra) << "," << fmt(d.inter) << "\n";
    if (!f) throw io_error("write failed for " + path);
}

void write_detrimental_csv(const ForgettingReport& r, const std::string& path) {
    auto f = open_out(path);
    f << "task,rate\n";
    for (std::size_t i = 0; i < r.tasks.size(); ++i)
        f << r.tasks[i] << "," << fmt(r.rates[i]) << "\n";
    if (!f) throw io_error("write failed for " + path);
}

namespace {

constexpr char kCkptMagic[8] = {'G', 'M', 'C', 'K', 'P', 'T', '0', '1'};

void put_i32(std::ofstream& f, std::int32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::ofstream& f, std::uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); }
void put_doubles(std::ofstream& f, const std::vector<double>& v) {
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}
void put_str(std::ofstream& f, const std::string& s) {
    put_i32(f, static_cast<std::int32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::int32_t get_i32(std::ifstream& f, const std::string& path) {
    std::int32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw format_error(path + ": truncated checkpoint");
    return v;
}
std::uint64_t get_u64(std::ifstream& f, const std::string& path) {
    std::uint64_t v;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f) throw format_error(path + ": truncated checkpoint");
    return v;
}
void get_doubles(std::ifstream& f, std::vector<double>& v, const std::string& path) {
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!f) throw format_error(path + ": truncated checkpoint");
}
std::string get_str(std::ifstream& f, const std::string& path) {
    std::int32_t n = get_i32(f, path);
    std::string s(static_cast<std::size_t>(n), '\0');
    f.read(s.data(), n);
    if (!f) throw format_error(path + ": truncated checkpoint");
    return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    auto f = open_out(path);
    f.write(kCkptMagic, 8);
    put_i32(f, ck.net.input_dim);
    put_i32(f, ck.net.class_count);
    put_i32(f, static_cast<std::int32_t>(ck.net.layers.size()));
    for (const auto& l : ck.net.layers) {
        put_i32(f, l.w.rows);
        put_i32(f, l.w.cols);
        put_i32(f, l.act == Activation::relu ? 1 : 0);
        put_doubles(f, l.w.a);
        put_doubles(f, l.b);
    }
    put_i32(f, ck.buffer.per_class_capacity());
    auto classes = ck.buffer.classes();
    put_i32(f, static_cast<std::int32_t>(classes.size()));
    for (int c : classes) {
        const auto& samples = ck.buffer.samples_of(c);
        put_i32(f, c);
        put_i32(f, static_cast<std::int32_t>(samples.size()));
        put_i32(f, samples.empty() ? 0 : static_cast<std::int32_t>(samples[0].x.size()));
        for (const auto& s : samples) put_doubles(f, s.x);
    }
    put_u64(f, ck.seed);
    put_str(f, ck.method);
    put_str(f, ck.config_echo);
    if (!f) throw io_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw format_error(path + ": bad checkpoint magic at byte 0");
    Checkpoint ck;
    ck.net.input_dim = get_i32(f, path);
    ck.net.class_count = get_i32(f, path);
    std::int32_t layers = get_i32(f, path);
    for (std::int32_t k = 0; k < layers; ++k) {
        Layer l;
        std::int32_t rows = get_i32(f, path);
        std::int32_t cols = get_i32(f, path);
        l.act = get_i32(f, path) == 1 ? Activation::relu : Activation::identity;
        l.w = Mat(rows, cols);
        get_doubles(f, l.w.a, path);
        l.b.assign(static_cast<std::size_t>(rows), 0.0);
        get_doubles(f, l.b, path);
        ck.net.layers.push_back(std::move(l));
    }
    ck.buffer = ReplayBuffer(get_i32(f, path));
    std::int32_t classes = get_i32(f, path);
    for (std::int32_t i = 0; i < classes; ++i) {
        std::int32_t label = get_i32(f, path);
        std::int32_t count = get_i32(f, path);
        std::int32_t dim = get_i32(f, path);
        std::vector<Sample> samples(static_cast<std::size_t>(count));
        for (auto& s : samples) {
            s.x.assign(static_cast<std::size_t>(dim), 0.0);
            get_doubles(f, s.x, path);
            s.label = label;
            set_one_hot(s, ck.net.class_count);
        }
        ck.buffer.insert_raw(label, std::move(samples));
    }
    ck.seed = get_u64(f, path);
    ck.method = get_str(f, path);
    ck.config_echo = get_str(f, path);
    return ck;
}

}  // namespace gradmix
