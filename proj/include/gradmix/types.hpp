#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradmix {

/// Raised for bad user-supplied configuration (dimensions, parameter ranges).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised for malformed input files; the message carries the byte offset.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a file cannot be read or written.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. 64-bit floats are used everywhere;
/// the gradient checks in the test suite depend on it.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
    double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
    std::size_t size() const { return a.size(); }

    bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && a == o.a; }
};

/// One labeled feature vector with its cached one-hot label.
struct Sample {
    std::vector<double> x;
    int label = 0;
    std::vector<double> one_hot;
};

inline void set_one_hot(Sample& s, int class_count) {
    s.one_hot.assign(class_count, 0.0);
    s.one_hot[s.label] = 1.0;
}

inline bool is_probability_vector(const std::vector<double>& v, double tol = 1e-9) {
    double sum = 0.0;
    for (double p : v) {
        if (!(p >= 0.0)) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

}  // namespace gradmix
