#pragma once

#include <map>
#include <optional>
#include <vector>

#include "gradmix/data.hpp"
#include "gradmix/nn.hpp"
#include "gradmix/rng.hpp"

namespace gradmix {

/// Last-layer gradient block: bias part (c entries) followed by the weight
/// part (c x h, row-major), stored flat.
struct LastLayerGrad {
    int classes = 0;
    int feat = 0;
    std::vector<double> flat;  // length classes * (1 + feat)

    LastLayerGrad() = default;
    LastLayerGrad(int c, int h) : classes(c), feat(h), flat(static_cast<std::size_t>(c) * (1 + h), 0.0) {}

    double bias(int k) const { return flat[static_cast<std::size_t>(k)]; }
    double weight(int k, int j) const {
        return flat[static_cast<std::size_t>(classes) + static_cast<std::size_t>(k) * feat + j];
    }
    double norm() const;
};

LastLayerGrad operator-(const LastLayerGrad& a, const LastLayerGrad& b);

/// g = (yhat - y, (yhat - y) outer X).
LastLayerGrad last_layer_grad(const std::vector<double>& yhat, const std::vector<double>& feature,
                              const std::vector<double>& y);
LastLayerGrad last_layer_grad(const ForwardTrace& trace, const std::vector<double>& y);

/// Geometric interpolation of two predictions: component k proportional to
/// p_k^lambda * q_k^(1-lambda), evaluated in log space. lambda of exactly
/// 0 or 1 returns the corresponding input untouched.
std::vector<double> mixed_prediction(const std::vector<double>& p, const std::vector<double>& q,
                                     double lambda);

/// Closed-form gradient of a mixed sample from the traces of its parents.
LastLayerGrad mixed_grad(const std::vector<double>& yhat_i, const std::vector<double>& feat_i,
                         const std::vector<double>& y_i, const std::vector<double>& yhat_j,
                         const std::vector<double>& feat_j, const std::vector<double>& y_j,
                         double lambda);
LastLayerGrad mixed_grad(const ForwardTrace& trace_i, const ForwardTrace& trace_j,
                         const std::vector<double>& y_i, const std::vector<double>& y_j,
                         double lambda);

/// Ground truth for the same object: actually mix the inputs, run the
/// forward pass, and take the last-layer gradient at the mixed soft label.
LastLayerGrad true_mixed_grad(const DenseNet& net, const std::vector<double>& x_i,
                              const std::vector<double>& x_j, const std::vector<double>& y_i,
                              const std::vector<double>& y_j, double lambda);

/// Mean last-layer gradient over the whole buffer, fixed iteration order.
/// Empty buffer means the criterion is unavailable (first task).
std::optional<LastLayerGrad> buffer_avg_grad(const DenseNet& net, const ReplayBuffer& buffer);

/// Cached forward results for one exemplar.
struct ExemplarTrace {
    std::vector<double> x;        // kept for true-gradient analyses
    std::vector<double> yhat;
    std::vector<double> feature;
    std::vector<double> one_hot;
    int label = 0;
};

/// Up to E exemplars per class over Y = previous-task classes (drawn from
/// the buffer) plus current-task classes (drawn from the task data).
struct ExemplarSets {
    std::vector<int> classes;  // sorted
    std::map<int, std::vector<ExemplarTrace>> per_class;

    const std::vector<ExemplarTrace>& of(int label) const;
};

ExemplarSets build_exemplars(const DenseNet& net, const ReplayBuffer& buffer,
                             const std::vector<Sample>& current_train,
                             const std::vector<int>& current_classes, int per_class, Rng& rng);

/// Mean mixed gradient over index-aligned exemplar pairs of two classes
/// (the smaller list wraps around).
LastLayerGrad class_pair_grad(const ExemplarSets& exemplars, int class_a, int class_b,
                              double lambda);

/// Same pairing, but each pair's gradient is the true mixed gradient.
LastLayerGrad class_pair_grad_true(const DenseNet& net, const ExemplarSets& exemplars, int class_a,
                                   int class_b, double lambda);

/// Flat dot product, fixed summation order.
double inner(const LastLayerGrad& a, const LastLayerGrad& b);

}  // namespace gradmix
