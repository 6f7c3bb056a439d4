#include "unialign/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unialign {

void ValleyConfig::validate() const {
    if (overfit_patience < 1) throw std::invalid_argument("overfit_patience must be >= 1");
    if (converge_patience < overfit_patience)
        throw std::invalid_argument("converge_patience must be >= overfit_patience");
    if (max_epochs < converge_patience)
        throw std::invalid_argument("max_epochs must be >= converge_patience");
    if (tolerance <= 0.0) throw std::invalid_argument("tolerance must be > 0");
    if (temperature <= 0.0 || temperature >= 1.0)
        throw std::invalid_argument("temperature must be in (0, 1)");
}

std::optional<int> find_converge_epoch(const std::vector<double>& trace, int converge_patience) {
    const int T = static_cast<int>(trace.size());
    for (int i = 1; i <= T - converge_patience; ++i) {
        bool head_min = true;
        for (int j = 1; j < converge_patience && head_min; ++j)
            if (trace[i - 1 + j] < trace[i - 1]) head_min = false;
        if (head_min) return i;
    }
    return std::nullopt;
}

double overfit_threshold(const std::vector<double>& trace, int t_s, int converge_patience,
                         double tolerance) {
    if (t_s < 1 || t_s + converge_patience - 1 > static_cast<int>(trace.size()))
        throw std::invalid_argument("overfit_threshold window out of range");
    double sum = 0.0;
    for (int j = 0; j < converge_patience; ++j) sum += trace[t_s - 1 + j];
    return tolerance * sum / converge_patience;
}

std::optional<int> find_overfit_epoch(const std::vector<double>& trace, int t_s, double gamma,
                                      int overfit_patience) {
    const int T = static_cast<int>(trace.size());
    for (int i = std::max(t_s, 1); i + overfit_patience - 1 <= T; ++i) {
        bool all_above = true;
        for (int j = 0; j < overfit_patience && all_above; ++j)
            if (trace[i - 1 + j] <= gamma) all_above = false;
        if (all_above) return i;
    }
    return std::nullopt;
}

double checkpoint_weight(double converge_loss, double epoch_loss, double temperature) {
    if (!(converge_loss > 0.0) || !(epoch_loss > 0.0))
        throw std::invalid_argument("checkpoint_weight needs positive losses");
    return std::exp((converge_loss / epoch_loss - 1.0) / temperature);
}

ValleyTracker::ValleyTracker(const ValleyConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

void ValleyTracker::merge(const Snapshot& snap) {
    // Loss floor keeps the weight exponent finite when the validation loss
    // underflows to zero on saturated splits.
    const double e_ts = std::max(e_ts_, 1e-12);
    const double e = std::max(snap.loss, 1e-12);
    const double x = (e_ts / e - 1.0) / cfg_.temperature;
    if (!merged_) {
        merged_ = *snap.params;
        shift_ = x;
        w_cum_ = 1.0;
    } else {
        if (x > shift_) {
            w_cum_ *= std::exp(shift_ - x);
            shift_ = x;
        }
        const double w = std::exp(x - shift_);
        const double beta = w / (w_cum_ + w);
        merged_->values = (1.0 - beta) * merged_->values + beta * snap.params->values;
        w_cum_ += w;
    }
    merged_epochs_.push_back(snap.epoch);
}

ValleyTracker::ObserveOutcome ValleyTracker::observe(int epoch,
                                                     std::shared_ptr<const ParamVector> params,
                                                     double val_loss) {
    if (status_ == Status::stopped) throw std::logic_error("tracker already stopped");
    if (!std::isfinite(val_loss) || val_loss < 0.0)
        throw std::invalid_argument("validation loss must be finite and >= 0");

    ObserveOutcome out;
    q_conv_.push_back({epoch, params, val_loss});
    if (q_conv_.size() > static_cast<size_t>(cfg_.converge_patience)) q_conv_.pop_front();
    q_over_.push_back({epoch, std::move(params), val_loss});

    // Overfit: the last overfit_patience losses all exceed gamma.
    if (gamma_ && q_over_.size() > static_cast<size_t>(cfg_.overfit_patience)) {
        bool all_above = true;
        for (size_t k = q_over_.size() - cfg_.overfit_patience; k < q_over_.size() && all_above;
             ++k)
            if (q_over_[k].loss <= *gamma_) all_above = false;
        if (all_above) {
            status_ = Status::stopped;
            stop_epoch_ = epoch;
            t_e_ = epoch - cfg_.overfit_patience + 1;
            while (q_over_.size() > static_cast<size_t>(cfg_.overfit_patience)) q_over_.pop_front();
            out.continue_training = false;
            return out;
        }
    }

    if (!t_s_ && q_conv_.size() == static_cast<size_t>(cfg_.converge_patience) &&
        epoch < cfg_.max_epochs) {
        // Convergence: window fully observed and its head is the minimum.
        // The final epoch is excluded so the window start never exceeds
        // max_epochs - converge_patience.
        bool head_min = true;
        for (size_t k = 1; k < q_conv_.size() && head_min; ++k)
            if (q_conv_[k].loss < q_conv_.front().loss) head_min = false;
        if (head_min) {
            t_s_ = q_conv_.front().epoch;
            e_ts_ = q_conv_.front().loss;
            double sum = 0.0;
            for (const auto& s : q_conv_) sum += s.loss;
            gamma_ = cfg_.tolerance * sum / cfg_.converge_patience;
            status_ = Status::converged;
            out.converged_now = true;
            const int bulk = cfg_.converge_patience - cfg_.overfit_patience;
            for (int k = 0; k < bulk; ++k) {
                merge(q_conv_[k]);
                out.merged_now.push_back(q_conv_[k].epoch);
            }
        }
    } else if (t_s_) {
        // Converged but not yet overfitted: merge the checkpoint graduating
        // from the overfit window.
        merge(q_over_.front());
        out.merged_now.push_back(q_over_.front().epoch);
        q_over_.pop_front();
    }

    while (q_over_.size() > static_cast<size_t>(cfg_.overfit_patience)) q_over_.pop_front();
    return out;
}

const ParamVector& TrainResult::select(bool use_merged, bool* used_fallback) const {
    if (use_merged && merged_params) {
        if (used_fallback) *used_fallback = false;
        return *merged_params;
    }
    if (used_fallback) *used_fallback = use_merged;
    return best_params;
}

TrainResult run_training(EpochRunner& runner, const ParamVector& initial, const ValleyConfig& cfg,
                         DiagnosticsSink* sink) {
    cfg.validate();
    ValleyTracker tracker(cfg);
    TrainResult res;
    res.best_params = initial;  // replaced after the first epoch
    res.best_accuracy = -1.0;

    ParamVector theta = initial;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto outcome = runner.run_epoch(theta, epoch);
        theta = std::move(outcome.params);
        auto score = runner.evaluate(theta);
        res.val_loss.push_back(score.ce);
        res.val_accuracy.push_back(score.accuracy);
        if (score.accuracy > res.best_accuracy) {
            res.best_accuracy = score.accuracy;
            res.best_epoch = epoch;
            res.best_params = theta;
        }
        if (sink) sink->on_epoch({epoch, outcome.train_loss, score.ce, score.accuracy});

        auto obs = tracker.observe(epoch, std::make_shared<ParamVector>(theta), score.ce);
        if (sink) {
            if (obs.converged_now)
                sink->on_converge(*tracker.converge_epoch(), tracker.converge_loss(),
                                  *tracker.threshold());
            for (int merged_epoch : obs.merged_now) {
                const double e = std::max(res.val_loss[merged_epoch - 1], 1e-12);
                const double e_ts = std::max(tracker.converge_loss(), 1e-12);
                sink->on_merge(merged_epoch, (e_ts / e - 1.0) / cfg.temperature);
            }
        }
        if (!obs.continue_training) {
            if (sink) sink->on_stop(*tracker.stop_epoch(), *tracker.overfit_epoch());
            break;
        }
    }

    res.t_s = tracker.converge_epoch();
    res.t_e = tracker.overfit_epoch();
    res.stop_epoch = tracker.stop_epoch();
    res.merged_epochs = tracker.merged_epochs();
    res.status = tracker.status();
    if (tracker.merged_params()) res.merged_params = *tracker.merged_params();
    return res;
}

}  // namespace unialign
