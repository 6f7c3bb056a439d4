#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "unialign/losses.hpp"
#include "unialign/model.hpp"

namespace unialign {

/// Valley detection and merge hyperparameters.
struct ValleyConfig {
    int converge_patience = 10;  // N_s
    int overfit_patience = 5;    // N_e
    double tolerance = 1.1;      // r
    double temperature = 0.01;   // tau
    int max_epochs = 120;        // T_tr

    void validate() const;
};

/// Validation-loss trace helpers. Epochs are 1-based throughout; `trace[k]`
/// is the loss after epoch k+1.

/// Earliest epoch whose loss is <= every loss in its following
/// `converge_patience`-epoch window; the window start may not exceed
/// T - converge_patience.
std::optional<int> find_converge_epoch(const std::vector<double>& trace, int converge_patience);

/// tolerance * mean of the `converge_patience` losses starting at t_s.
double overfit_threshold(const std::vector<double>& trace, int t_s, int converge_patience,
                         double tolerance);

/// Earliest epoch >= t_s from which the loss stays above `gamma` for
/// `overfit_patience` consecutive epochs.
std::optional<int> find_overfit_epoch(const std::vector<double>& trace, int t_s, double gamma,
                                      int overfit_patience);

/// Stabilized checkpoint weight exp(((e_ts / e_i) - 1) / tau). This is the
/// raw exp((e_ts / e_i) / tau) weight rescaled by the constant exp(-1 / tau),
/// which leaves normalized weights unchanged.
double checkpoint_weight(double converge_loss, double epoch_loss, double temperature);

/// Online valley detection plus weighted parameter merging. Feed one
/// (epoch, params, validation loss) triple per epoch; the tracker maintains
/// the convergence and overfit windows, detects the valley start, merges
/// graduating checkpoints, and reports when training should stop.
class ValleyTracker {
public:
    enum class Status { warming, converged, stopped };

    struct ObserveOutcome {
        bool continue_training = true;
        bool converged_now = false;
        std::vector<int> merged_now;
    };

    explicit ValleyTracker(const ValleyConfig& cfg);

    ObserveOutcome observe(int epoch, std::shared_ptr<const ParamVector> params, double val_loss);

    Status status() const { return status_; }
    std::optional<int> converge_epoch() const { return t_s_; }
    std::optional<int> overfit_epoch() const { return t_e_; }
    std::optional<int> stop_epoch() const { return stop_epoch_; }
    std::optional<double> threshold() const { return gamma_; }
    double converge_loss() const { return e_ts_; }
    const std::vector<int>& merged_epochs() const { return merged_epochs_; }
    const ParamVector* merged_params() const { return merged_ ? &*merged_ : nullptr; }

    size_t converge_queue_size() const { return q_conv_.size(); }
    size_t overfit_queue_size() const { return q_over_.size(); }

private:
    struct Snapshot {
        int epoch;
        std::shared_ptr<const ParamVector> params;
        double loss;
    };

    void merge(const Snapshot& snap);

    ValleyConfig cfg_;
    std::deque<Snapshot> q_conv_;
    std::deque<Snapshot> q_over_;
    std::optional<int> t_s_;
    std::optional<int> t_e_;
    std::optional<int> stop_epoch_;
    std::optional<double> gamma_;
    double e_ts_ = 0.0;
    Status status_ = Status::warming;

    // Merge accumulator. Weights are tracked relative to exp(shift_) so the
    // running sum stays in range for any loss ratio.
    std::optional<ParamVector> merged_;
    double w_cum_ = 0.0;
    double shift_ = 0.0;
    std::vector<int> merged_epochs_;
};

struct EpochRecord {
    int epoch = 0;
    LossBreakdown train;
    double val_ce = 0.0;
    double val_accuracy = 0.0;
};

/// Receives the per-epoch diagnostics stream of a training run.
class DiagnosticsSink {
public:
    virtual ~DiagnosticsSink() = default;
    virtual void on_epoch(const EpochRecord&) {}
    virtual void on_converge(int t_s, double e_ts, double gamma) {}
    virtual void on_merge(int epoch, double log_weight) {}
    virtual void on_stop(int stop_epoch, int t_e) {}
};

/// One epoch of work: advance the parameters over the training data and
/// score a parameter vector on the validation split.
class EpochRunner {
public:
    struct EpochOutcome {
        ParamVector params;
        LossBreakdown train_loss;  // averaged over the epoch's batches
    };
    struct ValScore {
        double ce = 0.0;
        double accuracy = 0.0;
    };

    virtual ~EpochRunner() = default;
    virtual EpochOutcome run_epoch(const ParamVector& params, int epoch) = 0;
    virtual ValScore evaluate(const ParamVector& params) = 0;
};

struct TrainResult {
    std::vector<double> val_loss;
    std::vector<double> val_accuracy;
    std::optional<int> t_s;
    std::optional<int> t_e;
    std::optional<int> stop_epoch;
    std::vector<int> merged_epochs;
    ValleyTracker::Status status = ValleyTracker::Status::warming;
    std::optional<ParamVector> merged_params;
    ParamVector best_params;  // highest validation accuracy (earliest on ties)
    int best_epoch = 0;
    double best_accuracy = 0.0;

    /// Merged parameters when requested and available, otherwise the best
    /// validation-accuracy checkpoint.
    const ParamVector& select(bool use_merged, bool* used_fallback = nullptr) const;
};

/// Online joint optimization: per epoch, run training batches, score the
/// validation split with plain cross entropy, and let the ValleyTracker
/// detect the flat valley, merge checkpoints and stop the run.
TrainResult run_training(EpochRunner& runner, const ParamVector& initial,
                         const ValleyConfig& cfg, DiagnosticsSink* sink = nullptr);

}  // namespace unialign
