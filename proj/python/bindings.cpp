#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gradmix/analysis.hpp"
#include "gradmix/data.hpp"
#include "gradmix/grad.hpp"
#include "gradmix/metrics.hpp"
#include "gradmix/nn.hpp"
#include "gradmix/train.hpp"

namespace py = pybind11;
using namespace gradmix;

namespace {

std::vector<std::vector<double>> mat_to_rows(const Mat& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows));
    for (int r = 0; r < m.rows; ++r)
        rows[static_cast<std::size_t>(r)].assign(m.row(r), m.row(r) + m.cols);
    return rows;
}

DenseNet py_make_mlp(int input_dim, const std::vector<int>& hidden, int classes,
                     std::uint64_t seed) {
    Rng rng(seed);
    return make_mlp(input_dim, hidden, classes, rng);
}

py::dict py_run_synthetic(const std::string& method, int classes, int dim, int train_per_class,
                          int test_per_class, double separation, int classes_per_task,
                          std::uint64_t stream_seed, std::uint64_t seed, int epochs, double lr,
                          int batch_size, int buffer_per_class, double alpha, int exemplars,
                          const std::vector<int>& hidden) {
    TaskStream stream = make_synthetic_stream(classes, dim, train_per_class, test_per_class,
                                              separation, classes_per_task, stream_seed);
    TrainConfig cfg;
    cfg.hidden = hidden;
    cfg.epochs = epochs;
    cfg.lr = lr;
    cfg.batch_size = batch_size;
    cfg.buffer_per_class = buffer_per_class;
    cfg.alpha = alpha;
    cfg.exemplars_per_class = exemplars;
    cfg.seed = seed;
    MetricsLog log = run_stream(stream, cfg, method_from_string(method));
    py::dict out;
    out["avg_acc"] = stream_avg(log.acc);
    out["acc_matrix"] = mat_to_rows(log.acc);
    std::vector<double> task_avgs;
    for (int l = 1; l <= log.num_tasks; ++l) task_avgs.push_back(task_avg(log.acc, l));
    out["task_avgs"] = task_avgs;
    out["mixed_counts"] = log.mixed_count;
    out["method"] = log.method;
    out["seed"] = log.seed;
    return out;
}

std::pair<std::vector<double>, std::vector<double>> py_forward(const DenseNet& net,
                                                               const std::vector<double>& x) {
    ForwardTrace t = forward(net, x);
    return {t.yhat, t.feature()};
}

std::vector<double> py_mixed_grad(const std::vector<double>& yhat_i,
                                  const std::vector<double>& feat_i,
                                  const std::vector<double>& y_i,
                                  const std::vector<double>& yhat_j,
                                  const std::vector<double>& feat_j,
                                  const std::vector<double>& y_j, double lam) {
    return mixed_grad(yhat_i, feat_i, y_i, yhat_j, feat_j, y_j, lam).flat;
}

std::vector<double> py_last_layer_grad(const std::vector<double>& yhat,
                                       const std::vector<double>& feature,
                                       const std::vector<double>& y) {
    return last_layer_grad(yhat, feature, y).flat;
}

std::vector<double> py_true_mixed_grad(const DenseNet& net, const std::vector<double>& xi,
                                       const std::vector<double>& xj,
                                       const std::vector<double>& yi,
                                       const std::vector<double>& yj, double lam) {
    return true_mixed_grad(net, xi, xj, yi, yj, lam).flat;
}

double py_inner(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("inner: lengths differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::size_t py_load_idx_count(const std::string& images, const std::string& labels) {
    return load_idx(images, labels).size();
}

}  // namespace

PYBIND11_MODULE(_gradmix, m) {
    m.doc() = "Gradient-based selective mixup for class-incremental learning";

    py::class_<DenseNet>(m, "DenseNet")
        .def_readonly("input_dim", &DenseNet::input_dim)
        .def_readonly("class_count", &DenseNet::class_count)
        .def("feature_dim", &DenseNet::feature_dim);

    m.def("make_mlp", &py_make_mlp, py::arg("input_dim"), py::arg("hidden"), py::arg("classes"),
          py::arg("seed"), "He-uniform initialized MLP, deterministic per seed");
    m.def("forward", &py_forward, py::arg("net"), py::arg("x"),
          "Returns (softmax prediction, last-layer feature embedding)");
    m.def("cross_entropy", &cross_entropy, py::arg("yhat"), py::arg("y"));
    m.def("mixed_prediction", &mixed_prediction, py::arg("p"), py::arg("q"), py::arg("lam"),
          "Geometric interpolation of two softmax outputs");
    m.def("last_layer_grad", &py_last_layer_grad, py::arg("yhat"), py::arg("feature"),
          py::arg("y"), "Flat last-layer gradient block (bias then weights)");
    m.def("mixed_grad", &py_mixed_grad, py::arg("yhat_i"), py::arg("feat_i"), py::arg("y_i"),
          py::arg("yhat_j"), py::arg("feat_j"), py::arg("y_j"), py::arg("lam"),
          "Closed-form mixed-sample gradient (flat)");
    m.def("true_mixed_grad", &py_true_mixed_grad, py::arg("net"), py::arg("x_i"), py::arg("x_j"),
          py::arg("y_i"), py::arg("y_j"), py::arg("lam"),
          "Ground-truth mixed-sample gradient via an actual forward pass");
    m.def("inner", &py_inner, py::arg("a"), py::arg("b"));
    m.def("run_synthetic", &py_run_synthetic, py::arg("method"), py::arg("classes") = 4,
          py::arg("dim") = 8, py::arg("train_per_class") = 100, py::arg("test_per_class") = 25,
          py::arg("separation") = 5.0, py::arg("classes_per_task") = 2,
          py::arg("stream_seed") = 1, py::arg("seed") = 0, py::arg("epochs") = 3,
          py::arg("lr") = 0.05, py::arg("batch_size") = 16, py::arg("buffer_per_class") = 8,
          py::arg("alpha") = 1.0, py::arg("exemplars") = 8,
          py::arg("hidden") = std::vector<int>{16},
          "Train one method on a synthetic class-incremental stream");
    m.def("load_idx_count", &py_load_idx_count, py::arg("images"), py::arg("labels"),
          "Parse an IDX pair and return the sample count");
}
