#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "unialign/config.hpp"
#include "unialign/dataset.hpp"
#include "unialign/ensemble.hpp"
#include "unialign/eval.hpp"
#include "unialign/losses.hpp"
#include "unialign/model.hpp"
#include "unialign/traffic.hpp"
#include "unialign/trainer.hpp"

namespace py = pybind11;
using namespace unialign;

namespace {

DomainReps reps_from_list(const std::vector<Eigen::MatrixXd>& reps) { return reps; }

RunConfig config_from_kwargs(const py::dict& d) {
    nlohmann::json j = nlohmann::json::object();
    for (auto item : d) {
        const std::string path = py::cast<std::string>(item.first);
        const auto dot = path.find('.');
        if (dot == std::string::npos)
            throw std::invalid_argument("config keys use dotted paths, e.g. 'loss.alpha'");
        nlohmann::json value;
        if (py::isinstance<py::bool_>(item.second))
            value = py::cast<bool>(item.second);
        else if (py::isinstance<py::int_>(item.second))
            value = py::cast<int64_t>(item.second);
        else if (py::isinstance<py::float_>(item.second))
            value = py::cast<double>(item.second);
        else if (py::isinstance<py::str>(item.second))
            value = py::cast<std::string>(item.second);
        else if (py::isinstance<py::list>(item.second))
            value = py::cast<std::vector<std::string>>(item.second);
        else
            throw std::invalid_argument("unsupported config value for " + path);
        j[path.substr(0, dot)][path.substr(dot + 1)] = value;
    }
    return RunConfig::from_json(j);
}

py::dict fold_outcome_to_dict(const FoldOutcome& f) {
    py::dict d;
    d["fold"] = f.fold;
    d["test_domain"] = f.test_domain;
    d["accuracy"] = f.accuracy;
    d["accuracy_ovr"] = f.accuracy_ovr;
    d["weighted_f1"] = f.weighted_f1;
    d["t_s"] = f.t_s ? py::cast(*f.t_s) : py::none();
    d["t_e"] = f.t_e ? py::cast(*f.t_e) : py::none();
    d["stop_epoch"] = f.stop_epoch ? py::cast(*f.stop_epoch) : py::none();
    d["status"] = f.status;
    d["merged_count"] = f.merged_count;
    d["best_epoch"] = f.best_epoch;
    d["jsd"] = f.jsd;
    d["jsd_class"] = f.jsd_class;
    d["val_loss"] = f.val_loss;
    d["val_accuracy"] = f.val_accuracy;
    return d;
}

py::dict report_to_dict(const EvalReport& report) {
    py::dict modes;
    for (const auto& m : report.modes) {
        py::dict md;
        md["acc_avg"] = m.acc_avg;
        md["acc_std"] = m.acc_std;
        md["f1_avg"] = m.f1_avg;
        md["f1_std"] = m.f1_std;
        md["acc_ovr_avg"] = m.acc_ovr_avg;
        md["jsd_avg"] = m.jsd_avg;
        py::list folds;
        for (const auto& f : m.folds) folds.append(fold_outcome_to_dict(f));
        md["folds"] = folds;
        modes[py::str(m.mode)] = md;
    }
    py::dict d;
    d["seed"] = report.seed;
    d["modes"] = modes;
    return d;
}

}  // namespace

PYBIND11_MODULE(_unialign, m) {
    m.doc() = "Robust cross-domain traffic classification: alignment losses, "
              "flat-valley checkpoint merging, synthetic shifted traffic and "
              "the cross-domain evaluation harness.";

    py::class_<DomainDataset>(m, "Dataset")
        .def_property_readonly("num_classes", [](const DomainDataset& d) { return d.num_classes; })
        .def_property_readonly("num_domains", &DomainDataset::num_domains)
        .def_property_readonly("provenance",
                               [](const DomainDataset& d) { return d.provenance; })
        .def("__len__", &DomainDataset::total_samples)
        .def("domain_size",
             [](const DomainDataset& d, int domain) { return d.domains.at(domain).size(); })
        .def("labels", [](const DomainDataset& d, int domain) {
            std::vector<int> out;
            for (const auto& s : d.domains.at(domain)) out.push_back(s.label);
            return out;
        });

    m.def(
        "generate_synthetic",
        [](int classes, int domains, int samples_per_class_domain, double shift_magnitude,
           uint64_t seed) {
            return generate_synthetic(classes, domains, samples_per_class_domain,
                                      ShiftSpec::defaults(domains, shift_magnitude), seed);
        },
        py::arg("classes"), py::arg("domains"), py::arg("samples_per_class_domain"),
        py::arg("shift_magnitude") = 0.5, py::arg("seed") = 1,
        "Deterministic multi-domain synthetic traffic dataset.");

    m.def("save_dataset", &save_dataset, py::arg("path"), py::arg("dataset"));
    m.def(
        "load_dataset", [](const std::string& path) { return load_dataset(path).dataset; },
        py::arg("path"));

    m.def(
        "mean_alignment_loss",
        [](const std::vector<Eigen::MatrixXd>& reps, bool literal_scale) {
            AlignmentResult r = mean_alignment_loss(
                reps_from_list(reps),
                literal_scale ? PairScale::literal : PairScale::pair_mean);
            return py::make_tuple(r.value, r.grads);
        },
        py::arg("reps"), py::arg("literal_scale") = false,
        "Mean alignment loss over per-domain representation matrices; returns "
        "(value, per-domain gradients).");

    m.def(
        "covariance_alignment_loss",
        [](const std::vector<Eigen::MatrixXd>& reps, bool literal_scale) {
            AlignmentResult r = covariance_alignment_loss(
                reps_from_list(reps),
                literal_scale ? PairScale::literal : PairScale::pair_mean);
            return py::make_tuple(r.value, r.grads);
        },
        py::arg("reps"), py::arg("literal_scale") = false);

    m.def(
        "alignment_loss",
        [](const std::vector<Eigen::MatrixXd>& reps, bool literal_scale) {
            CombinedAlignment r = alignment_loss(
                reps_from_list(reps),
                literal_scale ? PairScale::literal : PairScale::pair_mean);
            return py::make_tuple(r.value, r.mean_value, r.cov_value);
        },
        py::arg("reps"), py::arg("literal_scale") = false,
        "Returns (total, mean_term, covariance_term).");

    m.def(
        "smooth_labels",
        [](const std::vector<int>& labels, int num_classes, double epsilon) {
            Eigen::VectorXi v(labels.size());
            for (size_t i = 0; i < labels.size(); ++i) v[static_cast<long>(i)] = labels[i];
            return smooth_labels(v, num_classes, epsilon);
        },
        py::arg("labels"), py::arg("num_classes"), py::arg("epsilon") = 0.1);

    m.def(
        "smoothed_cross_entropy",
        [](const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets) {
            CrossEntropyResult r = smoothed_cross_entropy(logits, targets);
            return py::make_tuple(r.value, r.d_logits);
        },
        py::arg("logits"), py::arg("targets"),
        "Batch-mean soft-target cross entropy; returns (value, d_logits).");

    m.def("find_converge_epoch",
          [](const std::vector<double>& trace, int patience) -> py::object {
              auto r = find_converge_epoch(trace, patience);
              return r ? py::cast(*r) : py::none();
          },
          py::arg("trace"), py::arg("patience") = 10);
    m.def("overfit_threshold", &overfit_threshold, py::arg("trace"), py::arg("t_s"),
          py::arg("patience") = 10, py::arg("tolerance") = 1.1);
    m.def("find_overfit_epoch",
          [](const std::vector<double>& trace, int t_s, double gamma, int patience) -> py::object {
              auto r = find_overfit_epoch(trace, t_s, gamma, patience);
              return r ? py::cast(*r) : py::none();
          },
          py::arg("trace"), py::arg("t_s"), py::arg("gamma"), py::arg("patience") = 5);
    m.def("checkpoint_weight", &checkpoint_weight, py::arg("converge_loss"),
          py::arg("epoch_loss"), py::arg("temperature") = 0.01);

    m.def(
        "compute_metrics",
        [](const std::vector<int>& predictions, const std::vector<int>& labels,
           int num_classes) {
            Metrics r = compute_metrics(predictions, labels, num_classes);
            py::dict d;
            d["accuracy"] = r.accuracy;
            d["accuracy_ovr"] = r.accuracy_ovr;
            d["weighted_f1"] = r.weighted_f1;
            return d;
        },
        py::arg("predictions"), py::arg("labels"), py::arg("num_classes"));

    m.def("jsd_divergence", &jsd_divergence, py::arg("a"), py::arg("b"),
          "Histogram Jensen-Shannon divergence of two representation sets "
          "projected on their joint leading principal component.");

    m.def(
        "run_experiment",
        [](const DomainDataset& dataset, const std::vector<std::string>& modes,
           const py::dict& config_dict) {
            RunConfig config = config_from_kwargs(config_dict);
            std::vector<TrainingMode> parsed;
            for (const auto& name : modes) parsed.push_back(mode_from_string(name));
            FoldPlan plan = make_cross_domain_folds(dataset, config.seed);
            return report_to_dict(run_experiment(dataset, plan, config, parsed));
        },
        py::arg("dataset"), py::arg("modes") = std::vector<std::string>{"unialign", "standard"},
        py::arg("config") = py::dict(),
        "Leave-one-domain-out cross-domain evaluation; returns the report as "
        "a dict.");
}
