#pragma once

#include <utility>
#include <vector>

#include "gradmix/data.hpp"
#include "gradmix/grad.hpp"
#include "gradmix/metrics.hpp"
#include "gradmix/nn.hpp"
#include "gradmix/rng.hpp"

namespace gradmix {

/// One mixed training sample with its construction recipe.
struct MixedSource {
    const Sample* d_i = nullptr;
    const Sample* d_j = nullptr;
    double lambda = 0.0;
};

/// Sum over previous classes y of the mean last-layer gradient of the
/// buffered samples of y (the per-class groups G_y of the forgetting
/// condition).
LastLayerGrad class_grad_sum(const DenseNet& net, const ReplayBuffer& buffer);

/// Left-hand side of the forgetting condition for one mixed sample:
/// sum_y grad(G_y)^T (grad(d_i) - grad(d_ij)), with the true mixed
/// gradient for d_ij. Positive means detrimental.
double detrimental_value(const DenseNet& net, const LastLayerGrad& class_sum,
                         const MixedSource& src);

struct ForgettingReport {
    std::vector<int> tasks;  // 1-based tasks with a defined rate
    std::vector<double> rates;
    std::vector<long> detrimental;
    std::vector<long> mixed;
    double average = 0.0;
    bool defined = false;  // false when no task had previous classes
};

/// Fraction of a mixed batch satisfying the forgetting condition.
/// Undefined (report.defined = false) when the buffer has no classes.
ForgettingReport detrimental_rate(const DenseNet& net, const ReplayBuffer& buffer,
                                  const std::vector<MixedSource>& batch);

/// Aggregate the per-task counters a training run recorded.
ForgettingReport forgetting_report(const MetricsLog& log);

struct RmsePoint {
    double lambda = 0.0;
    double rmse = 0.0;
};

/// RMSE between approximated and true buffer-gradient inner products over
/// the given sample pairs, one point per lambda in the grid.
std::vector<RmsePoint> approx_error_rmse(const DenseNet& net, const ReplayBuffer& buffer,
                                         const std::vector<std::pair<const Sample*, const Sample*>>& pairs,
                                         const std::vector<double>& lambda_grid);

std::vector<double> default_lambda_grid();  // {0, 0.05, ..., 1}

struct PairAgreement {
    double precision = 0.0;
    double recall = 0.0;
};

/// Agreement of the best-partner map computed from approximated mixed
/// gradients against the one computed from true mixed gradients, over
/// seeded lambda trials.
PairAgreement pair_precision_recall(const DenseNet& net, const ReplayBuffer& buffer,
                                    const ExemplarSets& exemplars, double alpha, int trials,
                                    Rng& rng);

struct GradDistances {
    double intra = 0.0;
    double inter = 0.0;
    long excluded = 0;  // zero-gradient samples left out of the cosine stats
};

/// Mean pairwise cosine distance (1 - cosine similarity) of last-layer
/// gradients within and across classes.
GradDistances class_grad_distances(const DenseNet& net, const std::vector<Sample>& samples);

/// Per-task anchor x partner mix counts of a finished run.
std::vector<Mat> heatmap_counts(const MetricsLog& log);

}  // namespace gradmix
