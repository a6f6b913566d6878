#pragma once

#include <string>
#include <vector>

#include "gradmix/analysis.hpp"
#include "gradmix/data.hpp"
#include "gradmix/metrics.hpp"
#include "gradmix/nn.hpp"

namespace gradmix {

// CSV emitters. Numeric fields use %.17g so a parse-back reproduces the
// in-memory values exactly; pretty-printing happens only in console report
// tables.

void write_accuracy_csv(const Mat& acc, const std::string& path);   // l,t,accuracy
Mat read_accuracy_csv(const std::string& path);

struct SummaryRow {
    std::string method;
    double mean_avg_acc = 0.0;
    double std_avg_acc = 0.0;
    int seeds = 0;
};
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path);
std::vector<SummaryRow> read_summary_csv(const std::string& path);

void write_heatmap_csv(const std::vector<Mat>& per_task, const std::string& path);
void write_rmse_csv(const std::vector<RmsePoint>& points, const std::string& path);
void write_pairs_csv(const std::string& dataset, const PairAgreement& agreement,
                     const std::string& path);
void write_distances_csv(const GradDistances& d, const std::string& path);
void write_detrimental_csv(const ForgettingReport& r, const std::string& path);

/// Self-contained binary snapshot of a finished run: network parameters
/// plus the replay buffer, enough to re-run every post-hoc analysis.
struct Checkpoint {
    DenseNet net;
    ReplayBuffer buffer{0};
    std::uint64_t seed = 0;
    std::string method;
    std::string config_echo;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gradmix
