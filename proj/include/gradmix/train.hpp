#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gradmix/data.hpp"
#include "gradmix/grad.hpp"
#include "gradmix/metrics.hpp"
#include "gradmix/nn.hpp"

namespace gradmix {

enum class Method { er, mixup, gradmix, ablation_original, ablation_random };

Method method_from_string(const std::string& name);
std::string method_name(Method m);
inline bool uses_mixing(Method m) { return m != Method::er; }
inline bool uses_criterion(Method m) {
    return m == Method::gradmix || m == Method::ablation_original || m == Method::ablation_random;
}

struct TrainConfig {
    std::vector<int> hidden = {256, 256};
    int epochs = 20;
    double lr = 0.01;
    int batch_size = 64;
    int buffer_per_class = 32;
    double alpha = 1.0;
    int exemplars_per_class = 32;
    std::uint64_t seed = 0;

    bool track_detrimental = false;  // count detrimental mixed samples during training
    bool audit = false;              // per-batch invariant audits (tests, acceptance)

    // Test hooks; never set by the CLI.
    std::optional<double> forced_lambda;
    bool force_empty_negative_set = false;

    void validate() const;  // throws config_error
    std::string echo() const;
};

/// Per-epoch selective-mixup criterion: the inner-product matrix over all
/// ordered class pairs of Y, the negative set S-, and the best partner S*.
struct MixCriterion {
    double lambda = 0.0;
    std::vector<int> classes;         // Y, sorted
    Mat inner_matrix;                 // indexed by position in `classes`
    std::vector<std::pair<int, int>> negative;  // S-, ordered class pairs
    std::map<int, int> best_partner;            // S*: anchor class -> partner class

    bool is_negative(int anchor, int partner) const;
    int partner_of(int anchor) const;  // throws std::logic_error if unknown
};

/// Fill S- and S* from a computed matrix. Argmax ties resolve to the
/// smallest class index.
MixCriterion criterion_from_matrix(const std::vector<int>& classes, Mat matrix, double lambda);

/// Steps 3-9 with a caller-supplied mixing ratio.
MixCriterion build_criterion_with_lambda(const DenseNet& net, const ReplayBuffer& buffer,
                                         const ExemplarSets& exemplars, double lambda);

/// Steps 2-9: draws lambda ~ Beta(alpha, alpha) from `rng`, then builds the
/// criterion. Requires a nonempty buffer.
MixCriterion build_criterion(const DenseNet& net, const ReplayBuffer& buffer,
                             const ExemplarSets& exemplars, double alpha, Rng& rng);

/// Per-class index pools over the combined sample space (current task data
/// followed by the buffer).
struct ClassPools {
    std::map<int, std::vector<int>> by_class;
};

/// Steps 16-20: wherever (anchor, partner) lies in S-, redraw the partner
/// uniformly from the pool of the anchor's best-partner class.
void select_partners(const std::vector<int>& anchor_labels, std::vector<int>& partner_pos,
                     const std::vector<int>& combined_labels, const MixCriterion& criterion,
                     const ClassPools& pools, Rng& rng);

struct TaskLogs {
    std::vector<double> epoch_loss;
    Mat mix_counts;  // class_count x class_count, anchor x partner
    std::vector<CriterionSnapshot> criteria;
    long detrimental = 0;
    long mixed = 0;
};

/// Train one task with the given strategy (Algorithm steps 1-25 for
/// gradmix; the ER / mixup / ablation variants share the batch plan).
TaskLogs train_task(DenseNet& net, const TaskData& task, const ReplayBuffer& buffer,
                    const TrainConfig& cfg, Method method, const Rng& run_rng, int task_index);

/// Full class-incremental run: train, evaluate tasks 1..l, grow the buffer.
MetricsLog run_stream(const TaskStream& stream, const TrainConfig& cfg, Method method);

/// Same run, also handing back the final model and buffer for post-hoc
/// analyses plus per-task wall-clock (reported only in run manifests).
struct RunResult {
    MetricsLog log;
    DenseNet net;
    ReplayBuffer buffer{0};
    std::vector<double> task_seconds;
};
RunResult run_stream_full(const TaskStream& stream, const TrainConfig& cfg, Method method);

}  // namespace gradmix
