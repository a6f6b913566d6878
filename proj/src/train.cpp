#include "gradmix/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gradmix/analysis.hpp"

namespace gradmix {

Method method_from_string(const std::string& name) {
    if (name == "er") return Method::er;
    if (name == "mixup") return Method::mixup;
    if (name == "gradmix") return Method::gradmix;
    if (name == "ablation_original") return Method::ablation_original;
    if (name == "ablation_random") return Method::ablation_random;
    throw config_error("unknown method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
        case Method::er: return "er";
        case Method::mixup: return "mixup";
        case Method::gradmix: return "gradmix";
        case Method::ablation_original: return "ablation_original";
        case Method::ablation_random: return "ablation_random";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (!(lr > 0.0)) throw config_error("lr must be positive");
    if (batch_size < 1) throw config_error("batch size must be >= 1");
    if (!(alpha > 0.0)) throw config_error("alpha must be positive");
    if (buffer_per_class < 1) throw config_error("buffer per class must be >= 1");
    if (exemplars_per_class < 1) throw config_error("exemplars per class must be >= 1");
    if (forced_lambda && !(*forced_lambda >= 0.0 && *forced_lambda <= 1.0))
        throw config_error("forced lambda must lie in [0,1]");
}

std::string TrainConfig::echo() const {
    std::ostringstream os;
    os << "epochs=" << epochs << ",lr=" << lr << ",batch=" << batch_size << ",buffer="
       << buffer_per_class << ",alpha=" << alpha << ",exemplars=" << exemplars_per_class
       << ",hidden=";
    for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "x" : "") << hidden[i];
    return os.str();
}

bool MixCriterion::is_negative(int anchor, int partner) const {
    return std::binary_search(negative.begin(), negative.end(), std::make_pair(anchor, partner));
}

int MixCriterion::partner_of(int anchor) const {
    auto it = best_partner.find(anchor);
    if (it == best_partner.end())
        throw std::logic_error("criterion: no partner recorded for class " +
                               std::to_string(anchor));
    return it->second;
}

MixCriterion criterion_from_matrix(const std::vector<int>& classes, Mat matrix, double lambda) {
    MixCriterion crit;
    crit.lambda = lambda;
    crit.classes = classes;
    int n = static_cast<int>(classes.size());
    for (int a = 0; a < n; ++a) {
        int best = 0;
        for (int b = 1; b < n; ++b)
            if (matrix(a, b) > matrix(a, best)) best = b;  // ties keep the smaller index
        crit.best_partner[classes[static_cast<std::size_t>(a)]] = classes[static_cast<std::size_t>(best)];
        for (int b = 0; b < n; ++b)
            if (matrix(a, b) < 0.0)
                crit.negative.emplace_back(classes[static_cast<std::size_t>(a)], classes[static_cast<std::size_t>(b)]);
    }
    std::sort(crit.negative.begin(), crit.negative.end());
    crit.inner_matrix = std::move(matrix);
    return crit;
}

MixCriterion build_criterion_with_lambda(const DenseNet& net, const ReplayBuffer& buffer,
                                         const ExemplarSets& exemplars, double lambda) {
    auto gbuf = buffer_avg_grad(net, buffer);
    if (!gbuf) throw std::logic_error("build_criterion: buffer is empty (first task)");
    int n = static_cast<int>(exemplars.classes.size());
    Mat matrix(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            LastLayerGrad g = class_pair_grad(exemplars, exemplars.classes[static_cast<std::size_t>(a)],
                                              exemplars.classes[static_cast<std::size_t>(b)], lambda);
            matrix(a, b) = inner(*gbuf, g);
        }
    }
    return criterion_from_matrix(exemplars.classes, std::move(matrix), lambda);
}

MixCriterion build_criterion(const DenseNet& net, const ReplayBuffer& buffer,
                             const ExemplarSets& exemplars, double alpha, Rng& rng) {
    double lambda = rng.beta_symmetric(alpha);
    return build_criterion_with_lambda(net, buffer, exemplars, lambda);
}

void select_partners(const std::vector<int>& anchor_labels, std::vector<int>& partner_pos,
                     const std::vector<int>& combined_labels, const MixCriterion& criterion,
                     const ClassPools& pools, Rng& rng) {
    for (std::size_t p = 0; p < anchor_labels.size(); ++p) {
        int anchor = anchor_labels[p];
        int partner = combined_labels[static_cast<std::size_t>(partner_pos[p])];
        if (!criterion.is_negative(anchor, partner)) continue;
        int want = criterion.partner_of(anchor);
        auto it = pools.by_class.find(want);
        if (it == pools.by_class.end() || it->second.empty())
            throw std::logic_error("select_partners: no candidates of class " +
                                   std::to_string(want));
        const auto& pool = it->second;
        partner_pos[p] = pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))];
    }
}

namespace {

struct CombinedView {
    const TaskData* task;
    std::vector<const Sample*> buffer_flat;
    int task_n;

    const Sample& at(int pos) const {
        if (pos < task_n) return task->train[static_cast<std::size_t>(pos)];
        return *buffer_flat[static_cast<std::size_t>(pos - task_n)];
    }
    int total() const { return task_n + static_cast<int>(buffer_flat.size()); }
};

Mat gather_x(const CombinedView& view, const std::vector<int>& pos, int dim) {
    Mat x(static_cast<int>(pos.size()), dim);
    for (std::size_t r = 0; r < pos.size(); ++r) {
        const auto& v = view.at(pos[r]).x;
        std::copy(v.begin(), v.end(), x.row(static_cast<int>(r)));
    }
    return x;
}

Mat gather_y(const CombinedView& view, const std::vector<int>& pos, int classes) {
    Mat y(static_cast<int>(pos.size()), classes);
    for (std::size_t r = 0; r < pos.size(); ++r) {
        const auto& v = view.at(pos[r]).one_hot;
        std::copy(v.begin(), v.end(), y.row(static_cast<int>(r)));
    }
    return y;
}

}  // namespace

TaskLogs train_task(DenseNet& net, const TaskData& task, const ReplayBuffer& buffer,
                    const TrainConfig& cfg, Method method, const Rng& run_rng, int task_index) {
    cfg.validate();
    TaskLogs logs;
    logs.mix_counts = Mat(net.class_count, net.class_count);

    CombinedView view{&task, buffer.flat(), static_cast<int>(task.train.size())};
    std::vector<int> combined_labels(static_cast<std::size_t>(view.total()));
    for (int p = 0; p < view.total(); ++p) combined_labels[static_cast<std::size_t>(p)] = view.at(p).label;

    // Replacement candidates: all of the current task plus the buffer,
    // indexed by class.
    ClassPools pools;
    for (int p = 0; p < view.total(); ++p)
        pools.by_class[combined_labels[static_cast<std::size_t>(p)]].push_back(p);

    const auto t_idx = static_cast<std::uint64_t>(task_index);
    const bool mixing = uses_mixing(method);
    const bool criterion_method = uses_criterion(method);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto e_idx = static_cast<std::uint64_t>(epoch);

        std::optional<MixCriterion> criterion;
        if (criterion_method && !buffer.empty()) {
            Rng ex_rng = run_rng.fork("exemplars", t_idx, e_idx);
            ExemplarSets exemplars = build_exemplars(net, buffer, task.train, task.classes,
                                                     cfg.exemplars_per_class, ex_rng);
            double lam;
            if (cfg.forced_lambda) {
                lam = *cfg.forced_lambda;
            } else {
                Rng lam_rng = run_rng.fork("lambda-criterion", t_idx, e_idx);
                lam = lam_rng.beta_symmetric(cfg.alpha);
            }
            criterion = build_criterion_with_lambda(net, buffer, exemplars, lam);
            if (cfg.force_empty_negative_set) criterion->negative.clear();
            CriterionSnapshot snap;
            snap.task = task_index;
            snap.epoch = epoch;
            snap.lambda = criterion->lambda;
            snap.classes = criterion->classes;
            snap.inner_matrix = criterion->inner_matrix;
            logs.criteria.push_back(std::move(snap));
        }

        Rng batch_rng = run_rng.fork("batches", t_idx, e_idx);
        std::vector<Batch> batches =
            make_batches(view.task_n, static_cast<int>(view.buffer_flat.size()), cfg.batch_size, batch_rng);

        Rng pair_rng = run_rng.fork("pairshuffle", t_idx, e_idx);
        Rng lambda_rng = run_rng.fork("lambda-batch", t_idx, e_idx);
        Rng replace_rng = run_rng.fork("replace", t_idx, e_idx);

        double loss_sum = 0.0;
        long loss_n = 0;

        for (const Batch& batch : batches) {
            std::vector<int> d_i = batch.task_idx;
            for (int b : batch.buffer_idx) d_i.push_back(view.task_n + b);
            int n = static_cast<int>(d_i.size());

            if (!mixing) {
                Mat x = gather_x(view, d_i, net.input_dim);
                Mat y = gather_y(view, d_i, net.class_count);
                BatchTrace trace = forward_batch(net, x);
                loss_sum += mean_cross_entropy(trace.yhat, y) * n;
                loss_n += n;
                ParamGrad grad = backward_batch_mean(net, trace, y);
                sgd_step(net, grad, cfg.lr);
                if (cfg.audit && !net.all_finite())
                    throw std::logic_error("audit: non-finite parameter after update");
                continue;
            }

            std::vector<int> d_j = d_i;
            pair_rng.shuffle(d_j);
            double lam = cfg.forced_lambda ? *cfg.forced_lambda : lambda_rng.beta_symmetric(cfg.alpha);

            std::vector<bool> keep_original(static_cast<std::size_t>(n), false);
            if (criterion) {
                if (method == Method::gradmix) {
                    std::vector<int> anchors(static_cast<std::size_t>(n));
                    for (int p = 0; p < n; ++p)
                        anchors[static_cast<std::size_t>(p)] = combined_labels[static_cast<std::size_t>(d_i[static_cast<std::size_t>(p)])];
                    select_partners(anchors, d_j, combined_labels, *criterion, pools, replace_rng);
                    if (cfg.audit) {
                        // A surviving negative pair is sound only when it is
                        // the anchor's argmax partner (the whole criterion
                        // row is negative, so no better class exists).
                        for (int p = 0; p < n; ++p) {
                            int anchor = anchors[static_cast<std::size_t>(p)];
                            int partner = combined_labels[static_cast<std::size_t>(d_j[static_cast<std::size_t>(p)])];
                            if (criterion->is_negative(anchor, partner) &&
                                partner != criterion->partner_of(anchor))
                                throw std::logic_error("audit: negative pair survived replacement");
                        }
                    }
                } else if (method == Method::ablation_original) {
                    for (int p = 0; p < n; ++p) {
                        int yi = combined_labels[static_cast<std::size_t>(d_i[static_cast<std::size_t>(p)])];
                        int yj = combined_labels[static_cast<std::size_t>(d_j[static_cast<std::size_t>(p)])];
                        if (criterion->is_negative(yi, yj)) keep_original[static_cast<std::size_t>(p)] = true;
                    }
                }
                // ablation_random keeps every randomly shuffled partner.
            }

            Mat x(n, net.input_dim);
            Mat y(n, net.class_count);
            for (int p = 0; p < n; ++p) {
                const Sample& si = view.at(d_i[static_cast<std::size_t>(p)]);
                const Sample& sj = view.at(d_j[static_cast<std::size_t>(p)]);
                double* xr = x.row(p);
                double* yr = y.row(p);
                if (keep_original[static_cast<std::size_t>(p)]) {
                    std::copy(si.x.begin(), si.x.end(), xr);
                    std::copy(si.one_hot.begin(), si.one_hot.end(), yr);
                } else {
                    for (int k = 0; k < net.input_dim; ++k)
                        xr[k] = lam * si.x[static_cast<std::size_t>(k)] + (1.0 - lam) * sj.x[static_cast<std::size_t>(k)];
                    for (int k = 0; k < net.class_count; ++k)
                        yr[k] = lam * si.one_hot[static_cast<std::size_t>(k)] + (1.0 - lam) * sj.one_hot[static_cast<std::size_t>(k)];
                    logs.mix_counts(si.label, sj.label) += 1.0;
                    ++logs.mixed;
                }
            }

            if (cfg.audit) {
                std::vector<double> row(static_cast<std::size_t>(net.class_count));
                for (int p = 0; p < n; ++p) {
                    std::copy(y.row(p), y.row(p) + net.class_count, row.begin());
                    if (!is_probability_vector(row))
                        throw std::logic_error("audit: training label is not a probability vector");
                }
            }

            if (cfg.track_detrimental && !buffer.empty()) {
                // Measured at the pre-update model: a positive condition
                // value means this mixed sample is detrimental.
                LastLayerGrad class_sum = class_grad_sum(net, buffer);
                for (int p = 0; p < n; ++p) {
                    if (keep_original[static_cast<std::size_t>(p)]) continue;
                    MixedSource src{&view.at(d_i[static_cast<std::size_t>(p)]), &view.at(d_j[static_cast<std::size_t>(p)]), lam};
                    if (detrimental_value(net, class_sum, src) > 0.0) ++logs.detrimental;
                }
            }

            BatchTrace trace = forward_batch(net, x);
            loss_sum += mean_cross_entropy(trace.yhat, y) * n;
            loss_n += n;
            ParamGrad grad = backward_batch_mean(net, trace, y);
            sgd_step(net, grad, cfg.lr);
            if (cfg.audit && !net.all_finite())
                throw std::logic_error("audit: non-finite parameter after update");
        }

        logs.epoch_loss.push_back(loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0);
    }
    return logs;
}

MetricsLog run_stream(const TaskStream& stream, const TrainConfig& cfg, Method method) {
    return run_stream_full(stream, cfg, method).log;
}

RunResult run_stream_full(const TaskStream& stream, const TrainConfig& cfg, Method method) {
    cfg.validate();
    stream.check_disjoint();
    int num_tasks = static_cast<int>(stream.tasks.size());

    Rng run_rng(cfg.seed);
    Rng init_rng = run_rng.fork("init");
    DenseNet net = make_mlp(stream.input_dim, cfg.hidden, stream.class_count, init_rng);
    ReplayBuffer buffer(cfg.buffer_per_class);

    MetricsLog log;
    log.num_tasks = num_tasks;
    log.class_count = stream.class_count;
    log.seed = cfg.seed;
    log.method = method_name(method);
    log.config_echo = cfg.echo();
    log.acc = Mat(num_tasks, num_tasks);
    for (double& v : log.acc.a) v = -1.0;  // unpopulated marker

    std::vector<double> task_seconds;
    for (int l = 1; l <= num_tasks; ++l) {
        const TaskData& task = stream.tasks[static_cast<std::size_t>(l - 1)];
        if (cfg.audit) {
            for (int c : task.classes)
                if (buffer.has_class(c))
                    throw std::logic_error("audit: buffer already holds a current-task class");
        }
        auto t0 = std::chrono::steady_clock::now();
        TaskLogs tl = train_task(net, task, buffer, cfg, method, run_rng,
                                 l);
        log.epoch_loss.push_back(std::move(tl.epoch_loss));
        log.mix_counts.push_back(std::move(tl.mix_counts));
        for (auto& snap : tl.criteria) log.criteria.push_back(std::move(snap));
        log.detrimental_count.push_back(tl.detrimental);
        log.mixed_count.push_back(tl.mixed);

        std::vector<double> class_acc(static_cast<std::size_t>(stream.class_count), -1.0);
        for (int t = 1; t <= l; ++t) {
            EvalResult ev = evaluate(net, stream.tasks[static_cast<std::size_t>(t - 1)].test);
            log.acc(l - 1, t - 1) = ev.accuracy;
            for (int c = 0; c < stream.class_count; ++c) {
                if (ev.class_total[static_cast<std::size_t>(c)] > 0)
                    class_acc[static_cast<std::size_t>(c)] =
                        static_cast<double>(ev.class_correct[static_cast<std::size_t>(c)]) /
                        static_cast<double>(ev.class_total[static_cast<std::size_t>(c)]);
            }
        }
        log.per_class_acc.push_back(std::move(class_acc));

        Rng buf_rng = run_rng.fork("buffer", static_cast<std::uint64_t>(l));
        buffer.add_task(task, buf_rng);
        task_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return RunResult{std::move(log), std::move(net), std::move(buffer), std::move(task_seconds)};
}

}  // namespace gradmix
