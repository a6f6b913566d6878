#include "gradmix/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <stdexcept>

namespace gradmix {

EvalResult evaluate(const DenseNet& net, const std::vector<Sample>& test) {
    if (test.empty()) throw config_error("evaluate: empty test set");
    EvalResult r;
    r.class_correct.assign(static_cast<std::size_t>(net.class_count), 0);
    r.class_total.assign(static_cast<std::size_t>(net.class_count), 0);

    constexpr int kChunk = 256;
    long correct = 0;
    for (std::size_t start = 0; start < test.size(); start += kChunk) {
        std::size_t end = std::min(test.size(), start + kChunk);
        Mat x(static_cast<int>(end - start), net.input_dim);
        for (std::size_t i = start; i < end; ++i) {
            const auto& v = test[i].x;
            std::copy(v.begin(), v.end(), x.row(static_cast<int>(i - start)));
        }
        BatchTrace trace = forward_batch(net, x);
        for (std::size_t i = start; i < end; ++i) {
            const double* yr = trace.yhat.row(static_cast<int>(i - start));
            int best = 0;
            for (int j = 1; j < net.class_count; ++j)
                if (yr[j] > yr[best]) best = j;  // strict: ties keep the smaller index
            int truth = test[i].label;
            r.class_total[static_cast<std::size_t>(truth)]++;
            if (best == truth) {
                r.class_correct[static_cast<std::size_t>(truth)]++;
                ++correct;
            }
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    return r;
}

double task_avg(const Mat& acc, int l) {
    if (l < 1 || l > acc.rows) throw std::logic_error("task_avg: row out of range");
    double sum = 0.0;
    for (int t = 1; t <= l; ++t) {
        double v = acc(l - 1, t - 1);
        if (!(v >= 0.0 && v <= 1.0))
            throw std::logic_error("task_avg: accuracy matrix row " + std::to_string(l) +
                                   " not populated");
        sum += v;
    }
    return sum / static_cast<double>(l);
}

double stream_avg(const Mat& acc) {
    double sum = 0.0;
    for (int l = 1; l <= acc.rows; ++l) sum += task_avg(acc, l);
    return sum / static_cast<double>(acc.rows);
}

namespace {

void append_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

void append_mat(std::string& out, const Mat& m) {
    out += std::to_string(m.rows) + "x" + std::to_string(m.cols) + ":";
    for (double v : m.a) {
        append_double(out, v);
        out += ",";
    }
    out += ";";
}

}  // namespace

std::string MetricsLog::serialize() const {
    std::string out;
    out.reserve(1 << 16);
    out += "method=" + method + ";seed=" + std::to_string(seed) + ";tasks=" +
           std::to_string(num_tasks) + ";classes=" + std::to_string(class_count) + ";cfg=" +
           config_echo + "\n";
    out += "acc=";
    append_mat(out, acc);
    out += "\nper_class=";
    for (const auto& row : per_class_acc) {
        for (double v : row) {
            append_double(out, v);
            out += ",";
        }
        out += "|";
    }
    out += "\nloss=";
    for (const auto& row : epoch_loss) {
        for (double v : row) {
            append_double(out, v);
            out += ",";
        }
        out += "|";
    }
    out += "\nmix=";
    for (const auto& m : mix_counts) append_mat(out, m);
    out += "\ncriteria=";
    for (const auto& c : criteria) {
        out += std::to_string(c.task) + "/" + std::to_string(c.epoch) + "/";
        append_double(out, c.lambda);
        out += "/[";
        for (int y : c.classes) out += std::to_string(y) + ",";
        out += "]";
        append_mat(out, c.inner_matrix);
    }
    out += "\ndetrimental=";
    for (std::size_t i = 0; i < detrimental_count.size(); ++i)
        out += std::to_string(detrimental_count[i]) + "/" + std::to_string(mixed_count[i]) + ",";
    out += "\n";
    return out;
}

}  // namespace gradmix
