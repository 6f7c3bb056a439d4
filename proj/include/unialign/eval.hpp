#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "unialign/config.hpp"
#include "unialign/dataset.hpp"
#include "unialign/trainer.hpp"

namespace unialign {

/// Leave-one-domain-out folds: each fold holds one domain out for testing
/// and splits the pooled remaining data 9:1 into train/validation.
struct FoldPlan {
    struct Fold {
        int test_domain = 0;
        std::vector<SampleRef> train;
        std::vector<SampleRef> val;
    };
    uint64_t seed = 0;
    std::vector<Fold> folds;
};

FoldPlan make_cross_domain_folds(const DomainDataset& dataset, uint64_t seed);

struct IidSplit {
    std::vector<SampleRef> train;
    std::vector<SampleRef> val;
    std::vector<SampleRef> test;
};

/// Per-domain 8:1:1 split, merged across domains.
IidSplit make_iid_split(const DomainDataset& dataset, uint64_t seed);

struct ConfusionCounts {
    std::vector<long> tp, fp, fn, tn;  // one-vs-rest, per class
    std::vector<long> support;         // n_c = tp_c + fn_c
    long total = 0;
};

struct Metrics {
    double accuracy = 0.0;      // conventional top-1 (headline)
    double accuracy_ovr = 0.0;  // one-vs-rest accuracy over per-class counts
    double weighted_f1 = 0.0;
    ConfusionCounts counts;
};

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                        int num_classes);

/// Histogram Jensen-Shannon divergence between two representation sets,
/// projected to 1-D on the leading principal component of their union
/// (sign fixed toward positive skew), 64 shared bins, smoothing 1e-9,
/// natural log. Result lies in [0, ln 2].
double jsd_divergence(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct FoldOutcome {
    int fold = 0;
    int test_domain = 0;
    double accuracy = 0.0;
    double accuracy_ovr = 0.0;
    double weighted_f1 = 0.0;
    std::optional<int> t_s;
    std::optional<int> t_e;
    std::optional<int> stop_epoch;
    std::string status;  // stopped | converged | no-valley
    bool used_fallback = false;
    int merged_count = 0;
    int best_epoch = 0;
    double jsd = 0.0;
    int jsd_class = 0;
    std::vector<double> val_loss;
    std::vector<double> val_accuracy;
};

struct ModeSummary {
    std::string mode;
    std::vector<FoldOutcome> folds;
    double acc_avg = 0.0, acc_std = 0.0;
    double f1_avg = 0.0, f1_std = 0.0;
    double acc_ovr_avg = 0.0, acc_ovr_std = 0.0;
    double jsd_avg = 0.0;
};

struct EvalReport {
    nlohmann::ordered_json config_echo;
    uint64_t seed = 0;
    std::vector<ModeSummary> modes;

    nlohmann::ordered_json to_json() const;
    static EvalReport from_json(const nlohmann::ordered_json& j);
    void save(const std::string& path) const;
    static EvalReport load(const std::string& path);
    const ModeSummary* find_mode(const std::string& name) const;
};

/// Sink for the line-delimited per-epoch diagnostics of every fold run.
class ExperimentLog {
public:
    virtual ~ExperimentLog() = default;
    virtual void record(const nlohmann::ordered_json&) {}
};

/// Trains and evaluates every requested mode on every fold. Modes sharing
/// one training trajectory (same effective loss settings) are trained once
/// and only differ in checkpoint selection.
EvalReport run_experiment(const DomainDataset& dataset, const FoldPlan& plan,
                          const RunConfig& config, const std::vector<TrainingMode>& modes,
                          ExperimentLog* log = nullptr);

struct SingleRunResult {
    FoldOutcome outcome;
    ParamVector params;       // the mode's selected checkpoint
    ModelConfig model_config;
};

/// One fold, one mode; used by the train subcommand.
SingleRunResult run_single_fold(const DomainDataset& dataset, const FoldPlan& plan,
                                size_t fold_index, const RunConfig& config, TrainingMode mode,
                                ExperimentLog* log = nullptr);

}  // namespace unialign
