#include "gradmix/analysis.hpp"

#include <cmath>
#include <stdexcept>

namespace gradmix {

LastLayerGrad class_grad_sum(const DenseNet& net, const ReplayBuffer& buffer) {
    if (buffer.empty()) throw std::logic_error("class_grad_sum: buffer is empty");
    LastLayerGrad sum(net.class_count, net.feature_dim());
    for (int c : buffer.classes()) {
        const auto& samples = buffer.samples_of(c);
        LastLayerGrad acc(net.class_count, net.feature_dim());
        for (const Sample& s : samples) {
            ForwardTrace trace = forward(net, s.x);
            LastLayerGrad g = last_layer_grad(trace, s.one_hot);
            for (std::size_t i = 0; i < acc.flat.size(); ++i) acc.flat[i] += g.flat[i];
        }
        double inv = 1.0 / static_cast<double>(samples.size());
        for (std::size_t i = 0; i < sum.flat.size(); ++i) sum.flat[i] += acc.flat[i] * inv;
    }
    return sum;
}

double detrimental_value(const DenseNet& net, const LastLayerGrad& class_sum,
                         const MixedSource& src) {
    ForwardTrace trace_i = forward(net, src.d_i->x);
    LastLayerGrad g_i = last_layer_grad(trace_i, src.d_i->one_hot);
    LastLayerGrad g_mix = true_mixed_grad(net, src.d_i->x, src.d_j->x, src.d_i->one_hot,
                                          src.d_j->one_hot, src.lambda);
    return inner(class_sum, g_i - g_mix);
}

ForgettingReport detrimental_rate(const DenseNet& net, const ReplayBuffer& buffer,
                                  const std::vector<MixedSource>& batch) {
    ForgettingReport r;
    if (buffer.empty() || batch.empty()) return r;
    LastLayerGrad class_sum = class_grad_sum(net, buffer);
    long bad = 0;
    for (const MixedSource& src : batch)
        if (detrimental_value(net, class_sum, src) > 0.0) ++bad;
    r.tasks.push_back(1);
    r.detrimental.push_back(bad);
    r.mixed.push_back(static_cast<long>(batch.size()));
    r.rates.push_back(static_cast<double>(bad) / static_cast<double>(batch.size()));
    r.average = r.rates[0];
    r.defined = true;
    return r;
}

ForgettingReport forgetting_report(const MetricsLog& log) {
    ForgettingReport r;
    double sum = 0.0;
    for (int l = 2; l <= log.num_tasks; ++l) {
        long mixed = log.mixed_count[static_cast<std::size_t>(l - 1)];
        if (mixed <= 0) continue;
        long bad = log.detrimental_count[static_cast<std::size_t>(l - 1)];
        r.tasks.push_back(l);
        r.detrimental.push_back(bad);
        r.mixed.push_back(mixed);
        r.rates.push_back(static_cast<double>(bad) / static_cast<double>(mixed));
        sum += r.rates.back();
    }
    if (!r.rates.empty()) {
        r.average = sum / static_cast<double>(r.rates.size());
        r.defined = true;
    }
    return r;
}

std::vector<RmsePoint> approx_error_rmse(const DenseNet& net, const ReplayBuffer& buffer,
                                         const std::vector<std::pair<const Sample*, const Sample*>>& pairs,
                                         const std::vector<double>& lambda_grid) {
    auto gbuf = buffer_avg_grad(net, buffer);
    if (!gbuf) throw std::logic_error("approx_error_rmse: buffer is empty");

    struct Cached {
        ForwardTrace ti, tj;
        const Sample* i;
        const Sample* j;
    };
    std::vector<Cached> cache;
    cache.reserve(pairs.size());
    for (const auto& [si, sj] : pairs)
        cache.push_back({forward(net, si->x), forward(net, sj->x), si, sj});

    std::vector<RmsePoint> out;
    for (double lam : lambda_grid) {
        double sq = 0.0;
        for (const Cached& c : cache) {
            LastLayerGrad approx =
                mixed_grad(c.ti, c.tj, c.i->one_hot, c.j->one_hot, lam);
            LastLayerGrad truth =
                true_mixed_grad(net, c.i->x, c.j->x, c.i->one_hot, c.j->one_hot, lam);
            double err = inner(*gbuf, approx) - inner(*gbuf, truth);
            sq += err * err;
        }
        out.push_back({lam, std::sqrt(sq / static_cast<double>(cache.size()))});
    }
    return out;
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(static_cast<double>(i) * 0.05);
    grid.back() = 1.0;
    return grid;
}

namespace {

std::map<int, int> best_partners_from(const std::vector<int>& classes, const Mat& matrix) {
    std::map<int, int> best;
    int n = static_cast<int>(classes.size());
    for (int a = 0; a < n; ++a) {
        int arg = 0;
        for (int b = 1; b < n; ++b)
            if (matrix(a, b) > matrix(a, arg)) arg = b;
        best[classes[static_cast<std::size_t>(a)]] = classes[static_cast<std::size_t>(arg)];
    }
    return best;
}

}  // namespace

PairAgreement pair_precision_recall(const DenseNet& net, const ReplayBuffer& buffer,
                                    const ExemplarSets& exemplars, double alpha, int trials,
                                    Rng& rng) {
    if (exemplars.classes.size() < 2)
        throw config_error("pair_precision_recall: need at least two classes");
    auto gbuf = buffer_avg_grad(net, buffer);
    if (!gbuf) throw std::logic_error("pair_precision_recall: buffer is empty");

    int n = static_cast<int>(exemplars.classes.size());
    long hit = 0, approx_total = 0, true_total = 0;
    for (int t = 0; t < trials; ++t) {
        Rng trial_rng = rng.fork("trial", static_cast<std::uint64_t>(t));
        double lam = trial_rng.beta_symmetric(alpha);
        Mat m_approx(n, n), m_true(n, n);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                int ya = exemplars.classes[static_cast<std::size_t>(a)];
                int yb = exemplars.classes[static_cast<std::size_t>(b)];
                m_approx(a, b) = inner(*gbuf, class_pair_grad(exemplars, ya, yb, lam));
                m_true(a, b) = inner(*gbuf, class_pair_grad_true(net, exemplars, ya, yb, lam));
            }
        }
        auto best_approx = best_partners_from(exemplars.classes, m_approx);
        auto best_true = best_partners_from(exemplars.classes, m_true);
        for (const auto& [anchor, partner] : best_approx) {
            ++approx_total;
            if (best_true.at(anchor) == partner) ++hit;
        }
        true_total += static_cast<long>(best_true.size());
    }
    PairAgreement out;
    out.precision = approx_total ? static_cast<double>(hit) / static_cast<double>(approx_total) : 0.0;
    out.recall = true_total ? static_cast<double>(hit) / static_cast<double>(true_total) : 0.0;
    return out;
}

GradDistances class_grad_distances(const DenseNet& net, const std::vector<Sample>& samples) {
    struct Entry {
        std::vector<double> g;
        double norm;
        int label;
    };
    std::vector<Entry> entries;
    GradDistances out;
    for (const Sample& s : samples) {
        ForwardTrace trace = forward(net, s.x);
        LastLayerGrad g = last_layer_grad(trace, s.one_hot);
        double nrm = g.norm();
        if (nrm == 0.0) {
            ++out.excluded;
            continue;
        }
        entries.push_back({std::move(g.flat), nrm, s.label});
    }
    double intra_sum = 0.0, inter_sum = 0.0;
    long intra_n = 0, inter_n = 0;
    for (std::size_t a = 0; a < entries.size(); ++a) {
        for (std::size_t b = a + 1; b < entries.size(); ++b) {
            double dot = 0.0;
            for (std::size_t k = 0; k < entries[a].g.size(); ++k)
                dot += entries[a].g[k] * entries[b].g[k];
            double dist = 1.0 - dot / (entries[a].norm * entries[b].norm);
            if (entries[a].label == entries[b].label) {
                intra_sum += dist;
                ++intra_n;
            } else {
                inter_sum += dist;
                ++inter_n;
            }
        }
    }
    out.intra = intra_n ? intra_sum / static_cast<double>(intra_n) : 0.0;
    out.inter = inter_n ? inter_sum / static_cast<double>(inter_n) : 0.0;
    return out;
}

std::vector<Mat> heatmap_counts(const MetricsLog& log) { return log.mix_counts; }

}  // namespace gradmix
