#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradmix/nn.hpp"
#include "gradmix/types.hpp"

namespace gradmix {

struct EvalResult {
    double accuracy = 0.0;
    std::vector<long> class_correct;  // indexed by class
    std::vector<long> class_total;
};

/// Single-head evaluation: argmax over all class outputs, ties broken by
/// the smallest class index.
EvalResult evaluate(const DenseNet& net, const std::vector<Sample>& test);

/// Snapshot of one epoch's selective-mixup criterion.
struct CriterionSnapshot {
    int task = 0;   // 1-based
    int epoch = 0;  // 0-based
    double lambda = 0.0;
    std::vector<int> classes;
    Mat inner_matrix;  // |Y| x |Y|, ordered as `classes`
};

/// Everything one run produces, serializable and byte-stable under a seed.
struct MetricsLog {
    int num_tasks = 0;
    int class_count = 0;
    std::uint64_t seed = 0;
    std::string method;
    std::string config_echo;

    Mat acc;  // L x L, entry (l-1, t-1) = accuracy of task t after task l, t <= l
    std::vector<std::vector<double>> per_class_acc;  // after each task: per-class accuracy
    std::vector<std::vector<double>> epoch_loss;     // per task: mean training loss per epoch
    std::vector<Mat> mix_counts;                     // per task: c x c anchor/partner counts
    std::vector<CriterionSnapshot> criteria;

    // Forgetting-condition counters, filled when detrimental tracking is on.
    std::vector<long> detrimental_count;  // per task
    std::vector<long> mixed_count;        // per task

    std::string serialize() const;  // canonical text form, used for determinism checks
};

/// A_l: mean accuracy over tasks 1..l after learning task l (1-based).
double task_avg(const Mat& acc, int l);

/// Mean of A_l over all tasks.
double stream_avg(const Mat& acc);

}  // namespace gradmix
