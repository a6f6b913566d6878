#include "gradmix/grad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gradmix {

double LastLayerGrad::norm() const {
    double s = 0.0;
    for (double v : flat) s += v * v;
    return std::sqrt(s);
}

LastLayerGrad operator-(const LastLayerGrad& a, const LastLayerGrad& b) {
    if (a.classes != b.classes || a.feat != b.feat)
        throw std::logic_error("LastLayerGrad: dimension mismatch in subtraction");
    LastLayerGrad out(a.classes, a.feat);
    for (std::size_t i = 0; i < a.flat.size(); ++i) out.flat[i] = a.flat[i] - b.flat[i];
    return out;
}

LastLayerGrad last_layer_grad(const std::vector<double>& yhat, const std::vector<double>& feature,
                              const std::vector<double>& y) {
    int c = static_cast<int>(yhat.size());
    int h = static_cast<int>(feature.size());
    LastLayerGrad g(c, h);
    for (int k = 0; k < c; ++k) g.flat[static_cast<std::size_t>(k)] = yhat[static_cast<std::size_t>(k)] - y[static_cast<std::size_t>(k)];
    for (int k = 0; k < c; ++k) {
        double d = g.flat[static_cast<std::size_t>(k)];
        double* row = g.flat.data() + c + static_cast<std::size_t>(k) * h;
        for (int j = 0; j < h; ++j) row[j] = d * feature[static_cast<std::size_t>(j)];
    }
    return g;
}

LastLayerGrad last_layer_grad(const ForwardTrace& trace, const std::vector<double>& y) {
    return last_layer_grad(trace.yhat, trace.feature(), y);
}

std::vector<double> mixed_prediction(const std::vector<double>& p, const std::vector<double>& q,
                                     double lambda) {
    if (lambda == 1.0) return p;
    if (lambda == 0.0) return q;
    std::vector<double> logmix(p.size());
    for (std::size_t k = 0; k < p.size(); ++k)
        logmix[k] = lambda * std::log(std::max(p[k], kLogEps)) +
                    (1.0 - lambda) * std::log(std::max(q[k], kLogEps));
    return softmax(logmix);
}

LastLayerGrad mixed_grad(const std::vector<double>& yhat_i, const std::vector<double>& feat_i,
                         const std::vector<double>& y_i, const std::vector<double>& yhat_j,
                         const std::vector<double>& feat_j, const std::vector<double>& y_j,
                         double lambda) {
    std::vector<double> yhat_mix = mixed_prediction(yhat_i, yhat_j, lambda);
    std::size_t c = yhat_mix.size();
    std::size_t h = feat_i.size();
    std::vector<double> y_mix(c), feat_mix(h);
    for (std::size_t k = 0; k < c; ++k)
        y_mix[k] = lambda * y_i[k] + (1.0 - lambda) * y_j[k];
    for (std::size_t j = 0; j < h; ++j)
        feat_mix[j] = lambda * feat_i[j] + (1.0 - lambda) * feat_j[j];
    return last_layer_grad(yhat_mix, feat_mix, y_mix);
}

LastLayerGrad mixed_grad(const ForwardTrace& trace_i, const ForwardTrace& trace_j,
                         const std::vector<double>& y_i, const std::vector<double>& y_j,
                         double lambda) {
    return mixed_grad(trace_i.yhat, trace_i.feature(), y_i, trace_j.yhat, trace_j.feature(), y_j,
                      lambda);
}

LastLayerGrad true_mixed_grad(const DenseNet& net, const std::vector<double>& x_i,
                              const std::vector<double>& x_j, const std::vector<double>& y_i,
                              const std::vector<double>& y_j, double lambda) {
    std::vector<double> x_mix(x_i.size()), y_mix(y_i.size());
    for (std::size_t k = 0; k < x_i.size(); ++k)
        x_mix[k] = lambda * x_i[k] + (1.0 - lambda) * x_j[k];
    for (std::size_t k = 0; k < y_i.size(); ++k)
        y_mix[k] = lambda * y_i[k] + (1.0 - lambda) * y_j[k];
    ForwardTrace trace = forward(net, x_mix);
    return last_layer_grad(trace, y_mix);
}

std::optional<LastLayerGrad> buffer_avg_grad(const DenseNet& net, const ReplayBuffer& buffer) {
    if (buffer.empty()) return std::nullopt;
    LastLayerGrad acc(net.class_count, net.feature_dim());
    int n = 0;
    for (const Sample* s : buffer.flat()) {
        ForwardTrace trace = forward(net, s->x);
        LastLayerGrad g = last_layer_grad(trace, s->one_hot);
        for (std::size_t i = 0; i < acc.flat.size(); ++i) acc.flat[i] += g.flat[i];
        ++n;
    }
    double inv = 1.0 / static_cast<double>(n);
    for (double& v : acc.flat) v *= inv;
    return acc;
}

const std::vector<ExemplarTrace>& ExemplarSets::of(int label) const {
    auto it = per_class.find(label);
    if (it == per_class.end())
        throw std::logic_error("exemplar sets: class " + std::to_string(label) + " missing");
    return it->second;
}

namespace {

ExemplarTrace make_exemplar(const DenseNet& net, const Sample& s) {
    ExemplarTrace e;
    ForwardTrace trace = forward(net, s.x);
    e.x = s.x;
    e.yhat = std::move(trace.yhat);
    e.feature = trace.feature();
    e.one_hot = s.one_hot;
    e.label = s.label;
    return e;
}

}  // namespace

ExemplarSets build_exemplars(const DenseNet& net, const ReplayBuffer& buffer,
                             const std::vector<Sample>& current_train,
                             const std::vector<int>& current_classes, int per_class, Rng& rng) {
    ExemplarSets out;
    for (int c : buffer.classes()) {
        const auto& pool = buffer.samples_of(c);
        Rng pick = rng.fork("buffer-class", static_cast<std::uint64_t>(c));
        int take = std::min<int>(per_class, static_cast<int>(pool.size()));
        std::vector<int> idx = pick.sample_without_replacement(static_cast<int>(pool.size()), take);
        auto& dst = out.per_class[c];
        for (int i : idx) dst.push_back(make_exemplar(net, pool[static_cast<std::size_t>(i)]));
        out.classes.push_back(c);
    }
    std::map<int, std::vector<int>> by_class;
    for (std::size_t i = 0; i < current_train.size(); ++i)
        by_class[current_train[i].label].push_back(static_cast<int>(i));
    for (int c : current_classes) {
        const auto& pool = by_class[c];
        if (pool.empty())
            throw std::logic_error("exemplar sets: current class " + std::to_string(c) +
                                   " has no training samples");
        Rng pick = rng.fork("current-class", static_cast<std::uint64_t>(c));
        int take = std::min<int>(per_class, static_cast<int>(pool.size()));
        std::vector<int> idx = pick.sample_without_replacement(static_cast<int>(pool.size()), take);
        auto& dst = out.per_class[c];
        for (int i : idx)
            dst.push_back(make_exemplar(net, current_train[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])]));
        out.classes.push_back(c);
    }
    std::sort(out.classes.begin(), out.classes.end());
    return out;
}

LastLayerGrad class_pair_grad(const ExemplarSets& exemplars, int class_a, int class_b,
                              double lambda) {
    const auto& ea = exemplars.of(class_a);
    const auto& eb = exemplars.of(class_b);
    std::size_t pairs = std::max(ea.size(), eb.size());
    LastLayerGrad acc;
    for (std::size_t t = 0; t < pairs; ++t) {
        const ExemplarTrace& a = ea[t % ea.size()];
        const ExemplarTrace& b = eb[t % eb.size()];
        LastLayerGrad g = mixed_grad(a.yhat, a.feature, a.one_hot, b.yhat, b.feature, b.one_hot, lambda);
        if (acc.flat.empty())
            acc = std::move(g);
        else
            for (std::size_t i = 0; i < acc.flat.size(); ++i) acc.flat[i] += g.flat[i];
    }
    double inv = 1.0 / static_cast<double>(pairs);
    for (double& v : acc.flat) v *= inv;
    return acc;
}

LastLayerGrad class_pair_grad_true(const DenseNet& net, const ExemplarSets& exemplars, int class_a,
                                   int class_b, double lambda) {
    const auto& ea = exemplars.of(class_a);
    const auto& eb = exemplars.of(class_b);
    std::size_t pairs = std::max(ea.size(), eb.size());
    LastLayerGrad acc;
    for (std::size_t t = 0; t < pairs; ++t) {
        const ExemplarTrace& a = ea[t % ea.size()];
        const ExemplarTrace& b = eb[t % eb.size()];
        LastLayerGrad g = true_mixed_grad(net, a.x, b.x, a.one_hot, b.one_hot, lambda);
        if (acc.flat.empty())
            acc = std::move(g);
        else
            for (std::size_t i = 0; i < acc.flat.size(); ++i) acc.flat[i] += g.flat[i];
    }
    double inv = 1.0 / static_cast<double>(pairs);
    for (double& v : acc.flat) v *= inv;
    return acc;
}

double inner(const LastLayerGrad& a, const LastLayerGrad& b) {
    if (a.classes != b.classes || a.feat != b.feat)
        throw std::logic_error("inner: gradient dimensions differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.flat.size(); ++i) s += a.flat[i] * b.flat[i];
    return s;
}

}  // namespace gradmix
