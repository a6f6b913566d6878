#include "gradmix/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gradmix {

namespace {

// Eight independent accumulator chains: a fixed summation order that the
// compiler can turn into vector FMAs without fast-math reassociation.
double dot(const double* a, const double* b, int n) {
    double s[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    int k = 0;
    for (; k + 8 <= n; k += 8)
        for (int j = 0; j < 8; ++j) s[j] += a[k + j] * b[k + j];
    double tail = 0.0;
    for (; k < n; ++k) tail += a[k] * b[k];
    return (((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]))) + tail;
}

void axpy(double alpha, const double* x, double* y, int n) {
    for (int k = 0; k < n; ++k) y[k] += alpha * x[k];
}

}  // namespace

bool DenseNet::all_finite() const {
    for (const auto& l : layers) {
        for (double v : l.w.a)
            if (!std::isfinite(v)) return false;
        for (double v : l.b)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

DenseNet make_mlp(int input_dim, const std::vector<int>& hidden, int class_count, Rng& rng) {
    if (input_dim <= 0 || class_count <= 0)
        throw config_error("make_mlp: input_dim and class_count must be positive");
    DenseNet net;
    net.input_dim = input_dim;
    net.class_count = class_count;
    int in = input_dim;
    std::vector<int> outs = hidden;
    outs.push_back(class_count);
    for (std::size_t k = 0; k < outs.size(); ++k) {
        Layer layer;
        layer.w = Mat(outs[k], in);
        layer.b.assign(static_cast<std::size_t>(outs[k]), 0.0);
        layer.act = (k + 1 < outs.size()) ? Activation::relu : Activation::identity;
        double limit = std::sqrt(6.0 / static_cast<double>(in));
        for (double& v : layer.w.a) v = (2.0 * rng.uniform() - 1.0) * limit;
        net.layers.push_back(std::move(layer));
        in = outs[k];
    }
    return net;
}

std::vector<double> softmax(const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    std::vector<double> out(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

ForwardTrace forward(const DenseNet& net, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != net.input_dim)
        throw config_error("forward: input has length " + std::to_string(x.size()) +
                           ", expected " + std::to_string(net.input_dim));
    ForwardTrace t;
    t.inputs.push_back(x);
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const Layer& l = net.layers[k];
        int out_n = l.w.rows;
        int in_n = l.w.cols;
        std::vector<double> z(static_cast<std::size_t>(out_n));
        const std::vector<double>& in = t.inputs.back();
        for (int j = 0; j < out_n; ++j) z[static_cast<std::size_t>(j)] = l.b[static_cast<std::size_t>(j)] + dot(l.w.row(j), in.data(), in_n);
        t.pre.push_back(z);
        if (k + 1 < net.layers.size()) {
            std::vector<double> a(z.size());
            for (std::size_t j = 0; j < z.size(); ++j) a[j] = z[j] > 0.0 ? z[j] : 0.0;
            t.inputs.push_back(std::move(a));
        } else {
            t.logits = z;
        }
    }
    t.yhat = softmax(t.logits);
    return t;
}

ParamGrad ParamGrad::zeros_like(const DenseNet& net) {
    ParamGrad g;
    for (const auto& l : net.layers) {
        g.w.emplace_back(l.w.rows, l.w.cols);
        g.b.emplace_back(l.b.size(), 0.0);
    }
    return g;
}

double ParamGrad::max_abs() const {
    double m = 0.0;
    for (const auto& mw : w)
        for (double v : mw.a) m = std::max(m, std::abs(v));
    for (const auto& vb : b)
        for (double v : vb) m = std::max(m, std::abs(v));
    return m;
}

ParamGrad backward(const DenseNet& net, const ForwardTrace& trace, const std::vector<double>& y) {
    ParamGrad g = ParamGrad::zeros_like(net);
    int last = static_cast<int>(net.layers.size()) - 1;
    // dL/dz for softmax + cross-entropy on a soft label.
    std::vector<double> dz(trace.yhat.size());
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = trace.yhat[i] - y[i];
    for (int k = last; k >= 0; --k) {
        const Layer& l = net.layers[static_cast<std::size_t>(k)];
        const std::vector<double>& in = trace.inputs[static_cast<std::size_t>(k)];
        int out_n = l.w.rows;
        int in_n = l.w.cols;
        for (int j = 0; j < out_n; ++j) {
            g.b[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = dz[static_cast<std::size_t>(j)];
            double* gw = g.w[static_cast<std::size_t>(k)].row(j);
            double d = dz[static_cast<std::size_t>(j)];
            for (int i = 0; i < in_n; ++i) gw[i] = d * in[static_cast<std::size_t>(i)];
        }
        if (k > 0) {
            std::vector<double> din(static_cast<std::size_t>(in_n), 0.0);
            for (int j = 0; j < out_n; ++j) axpy(dz[static_cast<std::size_t>(j)], l.w.row(j), din.data(), in_n);
            const std::vector<double>& pre_prev = trace.pre[static_cast<std::size_t>(k) - 1];
            dz.assign(din.size(), 0.0);
            for (std::size_t i = 0; i < din.size(); ++i)
                dz[i] = pre_prev[i] > 0.0 ? din[i] : 0.0;
        }
    }
    return g;
}

void sgd_step(DenseNet& net, const ParamGrad& grad, double lr) {
    if (!(lr > 0.0)) throw config_error("sgd_step: learning rate must be positive");
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        Layer& l = net.layers[k];
        const Mat& gw = grad.w[k];
        for (std::size_t i = 0; i < l.w.a.size(); ++i) l.w.a[i] -= lr * gw.a[i];
        for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] -= lr * grad.b[k][i];
    }
}

double cross_entropy(const std::vector<double>& yhat, const std::vector<double>& y) {
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        loss -= y[i] * std::log(std::max(yhat[i], kLogEps));
    return loss;
}

BatchTrace forward_batch(const DenseNet& net, const Mat& x) {
    if (x.cols != net.input_dim)
        throw config_error("forward_batch: input has width " + std::to_string(x.cols) +
                           ", expected " + std::to_string(net.input_dim));
    BatchTrace t;
    t.inputs.push_back(x);
    int n = x.rows;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const Layer& l = net.layers[k];
        int out_n = l.w.rows;
        int in_n = l.w.cols;
        Mat z(n, out_n);
        const Mat& in = t.inputs.back();
        for (int r = 0; r < n; ++r) {
            const double* xr = in.row(r);
            double* zr = z.row(r);
            for (int j = 0; j < out_n; ++j) zr[j] = l.b[static_cast<std::size_t>(j)] + dot(l.w.row(j), xr, in_n);
        }
        t.pre.push_back(z);
        if (k + 1 < net.layers.size()) {
            Mat a(n, out_n);
            for (std::size_t i = 0; i < z.a.size(); ++i) a.a[i] = z.a[i] > 0.0 ? z.a[i] : 0.0;
            t.inputs.push_back(std::move(a));
        } else {
            t.yhat = Mat(n, out_n);
            for (int r = 0; r < n; ++r) {
                const double* zr = z.row(r);
                double* yr = t.yhat.row(r);
                double m = zr[0];
                for (int j = 1; j < out_n; ++j) m = std::max(m, zr[j]);
                double sum = 0.0;
                for (int j = 0; j < out_n; ++j) {
                    yr[j] = std::exp(zr[j] - m);
                    sum += yr[j];
                }
                for (int j = 0; j < out_n; ++j) yr[j] /= sum;
            }
        }
    }
    return t;
}

ParamGrad backward_batch_mean(const DenseNet& net, const BatchTrace& trace, const Mat& y) {
    int n = y.rows;
    ParamGrad g = ParamGrad::zeros_like(net);
    int last = static_cast<int>(net.layers.size()) - 1;
    Mat dz(n, trace.yhat.cols);
    for (std::size_t i = 0; i < dz.a.size(); ++i) dz.a[i] = trace.yhat.a[i] - y.a[i];
    for (int k = last; k >= 0; --k) {
        const Layer& l = net.layers[static_cast<std::size_t>(k)];
        const Mat& in = trace.inputs[static_cast<std::size_t>(k)];
        int out_n = l.w.rows;
        int in_n = l.w.cols;
        Mat& gw = g.w[static_cast<std::size_t>(k)];
        auto& gb = g.b[static_cast<std::size_t>(k)];
        for (int j = 0; j < out_n; ++j) {
            double* gwj = gw.row(j);
            double bsum = 0.0;
            for (int r = 0; r < n; ++r) {
                double d = dz(r, j);
                bsum += d;
                axpy(d, in.row(r), gwj, in_n);
            }
            gb[static_cast<std::size_t>(j)] = bsum;
        }
        if (k > 0) {
            Mat din(n, in_n);
            for (int r = 0; r < n; ++r) {
                double* dr = din.row(r);
                const double* dzr = dz.row(r);
                for (int j = 0; j < out_n; ++j) axpy(dzr[j], l.w.row(j), dr, in_n);
            }
            const Mat& pre_prev = trace.pre[static_cast<std::size_t>(k) - 1];
            dz = Mat(n, in_n);
            for (std::size_t i = 0; i < din.a.size(); ++i)
                dz.a[i] = pre_prev.a[i] > 0.0 ? din.a[i] : 0.0;
        }
    }
    double inv_n = 1.0 / static_cast<double>(n);
    for (auto& mw : g.w)
        for (double& v : mw.a) v *= inv_n;
    for (auto& vb : g.b)
        for (double& v : vb) v *= inv_n;
    return g;
}

double mean_cross_entropy(const Mat& yhat, const Mat& y) {
    double loss = 0.0;
    for (int r = 0; r < y.rows; ++r) {
        const double* yr = y.row(r);
        const double* pr = yhat.row(r);
        for (int j = 0; j < y.cols; ++j) loss -= yr[j] * std::log(std::max(pr[j], kLogEps));
    }
    return loss / static_cast<double>(y.rows);
}

}  // namespace gradmix
