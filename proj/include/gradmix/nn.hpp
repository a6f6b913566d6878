#pragma once

#include <vector>

#include "gradmix/rng.hpp"
#include "gradmix/types.hpp"

namespace gradmix {

enum class Activation { relu, identity };

struct Layer {
    Mat w;                  // [out x in]
    std::vector<double> b;  // [out]
    Activation act = Activation::identity;
};

/// Dense feed-forward net. Hidden layers use ReLU, the final layer is
/// identity; softmax lives in the loss/prediction path, never in a layer.
struct DenseNet {
    std::vector<Layer> layers;
    int input_dim = 0;
    int class_count = 0;

    /// Width of the embedding feeding the last layer (input_dim for a
    /// single-layer net).
    int feature_dim() const {
        return layers.size() > 1 ? static_cast<int>(layers[layers.size() - 2].b.size())
                                 : input_dim;
    }
    bool all_finite() const;
};

/// He-uniform initialized MLP: U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero bias.
/// `hidden` may be empty, giving plain softmax regression.
DenseNet make_mlp(int input_dim, const std::vector<int>& hidden, int class_count, Rng& rng);

/// Everything the backward pass and the last-layer gradient need.
struct ForwardTrace {
    std::vector<std::vector<double>> inputs;  // inputs[k] feeds layer k; inputs[0] = x
    std::vector<std::vector<double>> pre;     // pre-activation of layer k
    std::vector<double> logits;
    std::vector<double> yhat;  // softmax(logits), max-subtracted

    /// Feature embedding before the last layer.
    const std::vector<double>& feature() const { return inputs.back(); }
};

/// Gradient with the same shape as the network parameters.
struct ParamGrad {
    std::vector<Mat> w;
    std::vector<std::vector<double>> b;

    static ParamGrad zeros_like(const DenseNet& net);
    double max_abs() const;
};

std::vector<double> softmax(const std::vector<double>& z);

ForwardTrace forward(const DenseNet& net, const std::vector<double>& x);

/// Gradient of cross-entropy at a single (trace, soft label) pair.
ParamGrad backward(const DenseNet& net, const ForwardTrace& trace, const std::vector<double>& y);

void sgd_step(DenseNet& net, const ParamGrad& grad, double lr);

/// -sum y_i log(max(yhat_i, 1e-12)).
double cross_entropy(const std::vector<double>& yhat, const std::vector<double>& y);

constexpr double kLogEps = 1e-12;

// Batched variants used by the training loop and evaluation. Row r of every
// matrix corresponds to sample r; per-element arithmetic matches the
// single-sample path bit for bit.
struct BatchTrace {
    std::vector<Mat> inputs;
    std::vector<Mat> pre;
    Mat yhat;

    const Mat& feature() const { return inputs.back(); }
};

BatchTrace forward_batch(const DenseNet& net, const Mat& x);

/// Gradient of the mean cross-entropy over the batch.
ParamGrad backward_batch_mean(const DenseNet& net, const BatchTrace& trace, const Mat& y);

double mean_cross_entropy(const Mat& yhat, const Mat& y);

}  // namespace gradmix
