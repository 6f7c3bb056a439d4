#include "unialign/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "unialign/util.hpp"

namespace unialign {

FoldPlan make_cross_domain_folds(const DomainDataset& dataset, uint64_t seed) {
    dataset.validate();
    const int S = dataset.num_domains();
    if (S < 2) throw std::invalid_argument("cross-domain folds need at least two domains");

    FoldPlan plan;
    plan.seed = seed;
    for (int held_out = 0; held_out < S; ++held_out) {
        FoldPlan::Fold fold;
        fold.test_domain = held_out;
        std::vector<SampleRef> pool;
        for (int d = 0; d < S; ++d) {
            if (d == held_out) continue;
            for (size_t i = 0; i < dataset.domains[d].size(); ++i)
                pool.push_back({d, static_cast<int>(i)});
        }
        Rng rng(mix_seed(seed, 0xF01D5u, static_cast<uint64_t>(held_out)));
        rng.shuffle(pool);
        const size_t val_count = pool.size() / 10;
        fold.val.assign(pool.begin(), pool.begin() + static_cast<long>(val_count));
        fold.train.assign(pool.begin() + static_cast<long>(val_count), pool.end());
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

IidSplit make_iid_split(const DomainDataset& dataset, uint64_t seed) {
    dataset.validate();
    IidSplit split;
    for (int d = 0; d < dataset.num_domains(); ++d) {
        std::vector<SampleRef> pool;
        for (size_t i = 0; i < dataset.domains[d].size(); ++i)
            pool.push_back({d, static_cast<int>(i)});
        Rng rng(mix_seed(seed, 0x11D5u, static_cast<uint64_t>(d)));
        rng.shuffle(pool);
        const size_t n = pool.size();
        const size_t n_test = n / 10;
        const size_t n_val = n / 10;
        split.test.insert(split.test.end(), pool.begin(), pool.begin() + n_test);
        split.val.insert(split.val.end(), pool.begin() + n_test, pool.begin() + n_test + n_val);
        split.train.insert(split.train.end(), pool.begin() + n_test + n_val, pool.end());
    }
    return split;
}

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                        int num_classes) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("predictions/labels size mismatch");
    if (predictions.empty()) throw std::invalid_argument("cannot compute metrics of empty set");
    if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");

    Metrics m;
    auto& c = m.counts;
    c.total = static_cast<long>(labels.size());
    c.tp.assign(num_classes, 0);
    c.fp.assign(num_classes, 0);
    c.fn.assign(num_classes, 0);
    c.tn.assign(num_classes, 0);
    c.support.assign(num_classes, 0);

    long correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        const int p = predictions[i];
        if (y < 0 || y >= num_classes || p < 0 || p >= num_classes)
            throw std::invalid_argument("class id outside [0, num_classes)");
        ++c.support[y];
        if (p == y) {
            ++correct;
            ++c.tp[y];
        } else {
            ++c.fn[y];
            ++c.fp[p];
        }
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(c.total);

    long ovr_num = 0;
    double f1 = 0.0;
    for (int k = 0; k < num_classes; ++k) {
        c.tn[k] = c.total - c.tp[k] - c.fp[k] - c.fn[k];
        ovr_num += c.tp[k] + c.tn[k];
        // Zero-division convention: an undefined precision or recall counts
        // as 0, which zeroes that class's F1 term.
        const double pr =
            c.tp[k] + c.fp[k] > 0 ? static_cast<double>(c.tp[k]) / (c.tp[k] + c.fp[k]) : 0.0;
        const double rec =
            c.tp[k] + c.fn[k] > 0 ? static_cast<double>(c.tp[k]) / (c.tp[k] + c.fn[k]) : 0.0;
        const double class_f1 = pr + rec > 0.0 ? 2.0 * pr * rec / (pr + rec) : 0.0;
        f1 += static_cast<double>(c.support[k]) / static_cast<double>(c.total) * class_f1;
    }
    m.accuracy_ovr =
        static_cast<double>(ovr_num) / (static_cast<double>(c.total) * num_classes);
    m.weighted_f1 = f1;
    return m;
}

double jsd_divergence(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() < 2 || b.rows() < 2)
        throw std::invalid_argument("jsd needs at least two samples per side");
    if (a.cols() != b.cols()) throw std::invalid_argument("jsd dimensionality mismatch");

    Eigen::MatrixXd all(a.rows() + b.rows(), a.cols());
    all.topRows(a.rows()) = a;
    all.bottomRows(b.rows()) = b;

    // First principal component of the union, sign fixed toward positive skew.
    Eigen::RowVectorXd mean = all.colwise().mean();
    Eigen::MatrixXd centered = all.rowwise() - mean;
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(all.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    Eigen::VectorXd axis = solver.eigenvectors().col(cov.cols() - 1);

    Eigen::VectorXd proj = centered * axis;
    const double sd = std::sqrt(proj.squaredNorm() / std::max<long>(1, proj.size() - 1));
    double skew = 0.0;
    if (sd > 0.0) skew = (proj.array() / sd).cube().mean();
    if (skew < 0.0) {
        axis = -axis;
        proj = -proj;
    } else if (skew == 0.0) {
        // Degenerate tie-break: first nonzero axis component positive.
        for (long i = 0; i < axis.size(); ++i) {
            if (axis[i] != 0.0) {
                if (axis[i] < 0.0) {
                    axis = -axis;
                    proj = -proj;
                }
                break;
            }
        }
    }

    constexpr int kBins = 64;
    constexpr double kSmooth = 1e-9;
    const double lo = proj.minCoeff();
    const double hi = proj.maxCoeff();
    const double width = hi - lo;

    std::array<double, kBins> pa{}, pb{};
    auto bin_of = [&](double v) {
        if (width <= 0.0) return 0;
        int bin = static_cast<int>((v - lo) / width * kBins);
        return std::clamp(bin, 0, kBins - 1);
    };
    for (long i = 0; i < a.rows(); ++i) pa[bin_of(proj[i])] += 1.0;
    for (long i = 0; i < b.rows(); ++i) pb[bin_of(proj[a.rows() + i])] += 1.0;

    double sum_a = 0.0, sum_b = 0.0;
    for (int k = 0; k < kBins; ++k) {
        pa[k] += kSmooth;
        pb[k] += kSmooth;
        sum_a += pa[k];
        sum_b += pb[k];
    }
    double jsd = 0.0;
    for (int k = 0; k < kBins; ++k) {
        const double p = pa[k] / sum_a;
        const double q = pb[k] / sum_b;
        const double m = 0.5 * (p + q);
        jsd += 0.5 * p * std::log(p / m) + 0.5 * q * std::log(q / m);
    }
    return std::max(0.0, jsd);
}

namespace {

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / v.size());
}

nlohmann::ordered_json fold_to_json(const FoldOutcome& f) {
    nlohmann::ordered_json j;
    j["fold"] = f.fold;
    j["test_domain"] = f.test_domain;
    j["accuracy"] = f.accuracy;
    j["accuracy_ovr"] = f.accuracy_ovr;
    j["weighted_f1"] = f.weighted_f1;
    j["t_s"] = f.t_s ? nlohmann::ordered_json(*f.t_s) : nlohmann::ordered_json(nullptr);
    j["t_e"] = f.t_e ? nlohmann::ordered_json(*f.t_e) : nlohmann::ordered_json(nullptr);
    j["stop_epoch"] =
        f.stop_epoch ? nlohmann::ordered_json(*f.stop_epoch) : nlohmann::ordered_json(nullptr);
    j["status"] = f.status;
    j["used_fallback"] = f.used_fallback;
    j["merged_count"] = f.merged_count;
    j["best_epoch"] = f.best_epoch;
    j["jsd"] = f.jsd;
    j["jsd_class"] = f.jsd_class;
    j["val_loss"] = f.val_loss;
    j["val_accuracy"] = f.val_accuracy;
    return j;
}

FoldOutcome fold_from_json(const nlohmann::ordered_json& j) {
    FoldOutcome f;
    f.fold = j.at("fold").get<int>();
    f.test_domain = j.at("test_domain").get<int>();
    f.accuracy = j.at("accuracy").get<double>();
    f.accuracy_ovr = j.at("accuracy_ovr").get<double>();
    f.weighted_f1 = j.at("weighted_f1").get<double>();
    if (!j.at("t_s").is_null()) f.t_s = j.at("t_s").get<int>();
    if (!j.at("t_e").is_null()) f.t_e = j.at("t_e").get<int>();
    if (!j.at("stop_epoch").is_null()) f.stop_epoch = j.at("stop_epoch").get<int>();
    f.status = j.at("status").get<std::string>();
    f.used_fallback = j.at("used_fallback").get<bool>();
    f.merged_count = j.at("merged_count").get<int>();
    f.best_epoch = j.at("best_epoch").get<int>();
    f.jsd = j.at("jsd").get<double>();
    f.jsd_class = j.at("jsd_class").get<int>();
    f.val_loss = j.at("val_loss").get<std::vector<double>>();
    f.val_accuracy = j.at("val_accuracy").get<std::vector<double>>();
    return f;
}

void summarize(ModeSummary& s) {
    std::vector<double> acc, f1, ovr, jsd;
    for (const auto& f : s.folds) {
        acc.push_back(f.accuracy);
        f1.push_back(f.weighted_f1);
        ovr.push_back(f.accuracy_ovr);
        jsd.push_back(f.jsd);
    }
    s.acc_avg = mean_of(acc);
    s.acc_std = std_of(acc);
    s.f1_avg = mean_of(f1);
    s.f1_std = std_of(f1);
    s.acc_ovr_avg = mean_of(ovr);
    s.acc_ovr_std = std_of(ovr);
    s.jsd_avg = mean_of(jsd);
}

}  // namespace

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["report"] = "unialign-xdomain";
    j["version"] = 1;
    j["seed"] = seed;
    j["config"] = config_echo;
    j["modes"] = nlohmann::ordered_json::object();
    for (const auto& mode : modes) {
        nlohmann::ordered_json mj;
        mj["acc_avg"] = mode.acc_avg;
        mj["acc_std"] = mode.acc_std;
        mj["f1_avg"] = mode.f1_avg;
        mj["f1_std"] = mode.f1_std;
        mj["acc_ovr_avg"] = mode.acc_ovr_avg;
        mj["acc_ovr_std"] = mode.acc_ovr_std;
        mj["jsd_avg"] = mode.jsd_avg;
        mj["folds"] = nlohmann::ordered_json::array();
        for (const auto& f : mode.folds) mj["folds"].push_back(fold_to_json(f));
        j["modes"][mode.mode] = std::move(mj);
    }
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::ordered_json& j) {
    if (j.value("report", "") != "unialign-xdomain")
        throw std::runtime_error("not an xdomain report file");
    EvalReport r;
    r.seed = j.at("seed").get<uint64_t>();
    r.config_echo = j.at("config");
    for (auto it = j.at("modes").begin(); it != j.at("modes").end(); ++it) {
        ModeSummary s;
        s.mode = it.key();
        s.acc_avg = it->at("acc_avg").get<double>();
        s.acc_std = it->at("acc_std").get<double>();
        s.f1_avg = it->at("f1_avg").get<double>();
        s.f1_std = it->at("f1_std").get<double>();
        s.acc_ovr_avg = it->at("acc_ovr_avg").get<double>();
        s.acc_ovr_std = it->at("acc_ovr_std").get<double>();
        s.jsd_avg = it->at("jsd_avg").get<double>();
        for (const auto& fj : it->at("folds")) s.folds.push_back(fold_from_json(fj));
        r.modes.push_back(std::move(s));
    }
    return r;
}

void EvalReport::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << to_json().dump(2) << '\n';
    if (!os) throw std::runtime_error("short write: " + path);
}

EvalReport EvalReport::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open report: " + path);
    nlohmann::ordered_json j;
    is >> j;
    return from_json(j);
}

const ModeSummary* EvalReport::find_mode(const std::string& name) const {
    for (const auto& m : modes)
        if (m.mode == name) return &m;
    return nullptr;
}

namespace {

struct FoldContext {
    std::vector<int> train_domains;
    std::vector<std::vector<int>> train_indices;
    EvalSet val;
    EvalSet test;
    std::vector<SampleRef> train_refs;
    int jsd_class = 0;
};

FoldContext build_fold_context(const DomainDataset& dataset, const NormalizedStore& store,
                               const FoldPlan::Fold& fold, int jsd_class_override) {
    FoldContext ctx;
    std::map<int, std::vector<int>> by_domain;
    for (const auto& ref : fold.train) by_domain[ref.domain].push_back(ref.index);
    for (auto& [domain, rows] : by_domain) {
        ctx.train_domains.push_back(domain);
        ctx.train_indices.push_back(std::move(rows));
    }
    ctx.val = EvalSet::gather(store, fold.val);
    std::vector<SampleRef> test_refs;
    for (size_t i = 0; i < dataset.domains[fold.test_domain].size(); ++i)
        test_refs.push_back({fold.test_domain, static_cast<int>(i)});
    ctx.test = EvalSet::gather(store, test_refs);
    ctx.train_refs = fold.train;

    if (jsd_class_override >= 0) {
        ctx.jsd_class = jsd_class_override;
    } else {
        // Class with the most test-domain samples; smallest id on ties.
        std::vector<long> counts(dataset.num_classes, 0);
        for (const auto& s : dataset.domains[fold.test_domain]) ++counts[s.label];
        ctx.jsd_class = static_cast<int>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    return ctx;
}

class JsonlSink : public DiagnosticsSink {
public:
    JsonlSink(ExperimentLog* log, std::string mode, int fold)
        : log_(log), mode_(std::move(mode)), fold_(fold) {}

    void on_epoch(const EpochRecord& r) override {
        nlohmann::ordered_json j;
        j["event"] = "epoch";
        j["mode"] = mode_;
        j["fold"] = fold_;
        j["epoch"] = r.epoch;
        j["train_ce_ls"] = r.train.ce_ls;
        j["train_mean"] = r.train.mean;
        j["train_cov"] = r.train.cov;
        j["train_align"] = r.train.align;
        j["train_total"] = r.train.total;
        j["val_ce"] = r.val_ce;
        j["val_accuracy"] = r.val_accuracy;
        emit(j);
    }
    void on_converge(int t_s, double e_ts, double gamma) override {
        nlohmann::ordered_json j;
        j["event"] = "converge";
        j["mode"] = mode_;
        j["fold"] = fold_;
        j["t_s"] = t_s;
        j["e_ts"] = e_ts;
        j["gamma"] = gamma;
        emit(j);
    }
    void on_merge(int epoch, double log_weight) override {
        nlohmann::ordered_json j;
        j["event"] = "merge";
        j["mode"] = mode_;
        j["fold"] = fold_;
        j["epoch"] = epoch;
        j["log_weight"] = log_weight;
        emit(j);
    }
    void on_stop(int stop_epoch, int t_e) override {
        nlohmann::ordered_json j;
        j["event"] = "stop";
        j["mode"] = mode_;
        j["fold"] = fold_;
        j["stop_epoch"] = stop_epoch;
        j["t_e"] = t_e;
        emit(j);
    }

private:
    void emit(const nlohmann::ordered_json& j) {
        if (log_) log_->record(j);
    }
    ExperimentLog* log_;
    std::string mode_;
    int fold_;
};

struct FoldModeResult {
    FoldOutcome outcome;
    ParamVector params;
};

/// Runs one fold for every requested mode, reusing the training trajectory
/// across modes whose effective loss settings coincide.
std::vector<FoldModeResult> run_fold_modes(const DomainDataset& dataset,
                                           const NormalizedStore& store,
                                           const FoldPlan::Fold& fold, size_t fold_idx,
                                           const RunConfig& config,
                                           const std::vector<TrainingMode>& modes,
                                           ExperimentLog* log) {
    FoldContext ctx = build_fold_context(dataset, store, fold, config.jsd_class);
    const uint64_t stream_seed = mix_seed(config.seed, 0x7EA1Au, fold_idx);
    const uint64_t model_seed = mix_seed(config.seed, 0x0D31u, fold_idx);
    ModelConfig mcfg = config.model_config(dataset.num_classes, model_seed);

    std::vector<FoldModeResult> results;
    results.reserve(modes.size());
    std::map<std::pair<double, double>, TrainResult> cache;
    for (const TrainingMode mode : modes) {
        TrainOptions opts = config.train_options(mode, stream_seed);
        auto key = std::make_pair(opts.epsilon, opts.alpha);
        auto it = cache.find(key);
        if (it == cache.end()) {
            SgdEpochRunner runner(mcfg, store, ctx.train_domains, ctx.train_indices, ctx.val,
                                  opts);
            ParamVector init = init_model(mcfg);
            JsonlSink sink(log, to_string(mode), static_cast<int>(fold_idx));
            it = cache.emplace(key, run_training(runner, init, config.valley, &sink)).first;
        }
        const TrainResult& result = it->second;

        FoldOutcome out;
        out.fold = static_cast<int>(fold_idx);
        out.test_domain = fold.test_domain;
        const ParamVector& chosen =
            result.select(RunConfig::mode_uses_merge(mode), &out.used_fallback);

        std::vector<int> preds = predict_set(mcfg, chosen, ctx.test);
        std::vector<int> labels(ctx.test.labels.data(),
                                ctx.test.labels.data() + ctx.test.labels.size());
        Metrics m = compute_metrics(preds, labels, dataset.num_classes);
        out.accuracy = m.accuracy;
        out.accuracy_ovr = m.accuracy_ovr;
        out.weighted_f1 = m.weighted_f1;
        out.t_s = result.t_s;
        out.t_e = result.t_e;
        out.stop_epoch = result.stop_epoch;
        out.merged_count = static_cast<int>(result.merged_epochs.size());
        out.best_epoch = result.best_epoch;
        out.val_loss = result.val_loss;
        out.val_accuracy = result.val_accuracy;
        switch (result.status) {
            case ValleyTracker::Status::stopped: out.status = "stopped"; break;
            case ValleyTracker::Status::converged: out.status = "converged"; break;
            default: out.status = "no-valley";
        }

        out.jsd_class = ctx.jsd_class;
        std::vector<SampleRef> train_cls, test_cls;
        for (const auto& ref : ctx.train_refs)
            if (store.blocks[ref.domain].labels[ref.index] == ctx.jsd_class)
                train_cls.push_back(ref);
        for (size_t i = 0; i < dataset.domains[fold.test_domain].size(); ++i)
            if (dataset.domains[fold.test_domain][i].label == ctx.jsd_class)
                test_cls.push_back({fold.test_domain, static_cast<int>(i)});
        if (train_cls.size() >= 2 && test_cls.size() >= 2) {
            Eigen::MatrixXd train_reps =
                represent_set(mcfg, chosen, EvalSet::gather(store, train_cls));
            Eigen::MatrixXd test_reps =
                represent_set(mcfg, chosen, EvalSet::gather(store, test_cls));
            out.jsd = jsd_divergence(train_reps, test_reps);
        }
        results.push_back({std::move(out), chosen});
    }
    return results;
}

}  // namespace

SingleRunResult run_single_fold(const DomainDataset& dataset, const FoldPlan& plan,
                                size_t fold_index, const RunConfig& config, TrainingMode mode,
                                ExperimentLog* log) {
    config.validate();
    dataset.validate();
    if (fold_index >= plan.folds.size()) throw std::invalid_argument("fold index out of range");
    NormalizedStore store = NormalizedStore::build(dataset);
    auto results =
        run_fold_modes(dataset, store, plan.folds[fold_index], fold_index, config, {mode}, log);
    return {std::move(results[0].outcome), std::move(results[0].params),
            config.model_config(dataset.num_classes, mix_seed(config.seed, 0x0D31u, fold_index))};
}

EvalReport run_experiment(const DomainDataset& dataset, const FoldPlan& plan,
                          const RunConfig& config, const std::vector<TrainingMode>& modes,
                          ExperimentLog* log) {
    config.validate();
    dataset.validate();
    if (plan.folds.empty()) throw std::invalid_argument("fold plan is empty");

    NormalizedStore store = NormalizedStore::build(dataset);

    EvalReport report;
    report.seed = config.seed;
    report.config_echo = config.to_json();
    for (const auto& mode : modes) {
        ModeSummary s;
        s.mode = to_string(mode);
        s.folds.resize(plan.folds.size());
        report.modes.push_back(std::move(s));
    }

    std::mutex log_mutex;
    struct GuardedLog : ExperimentLog {
        ExperimentLog* inner = nullptr;
        std::mutex* mutex = nullptr;
        void record(const nlohmann::ordered_json& j) override {
            std::lock_guard<std::mutex> lock(*mutex);
            if (inner) inner->record(j);
        }
    } guarded;
    guarded.inner = log;
    guarded.mutex = &log_mutex;

    auto run_fold = [&](size_t fold_idx) {
        auto results = run_fold_modes(dataset, store, plan.folds[fold_idx], fold_idx, config,
                                      modes, &guarded);
        for (size_t mi = 0; mi < modes.size(); ++mi)
            report.modes[mi].folds[fold_idx] = std::move(results[mi].outcome);
    };

    const int workers = std::min<int>(config.workers, static_cast<int>(plan.folds.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < plan.folds.size(); ++i) run_fold(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < plan.folds.size(); i = next.fetch_add(1))
                    run_fold(i);
            });
        for (auto& t : pool) t.join();
    }

    for (auto& mode : report.modes) summarize(mode);
    return report;
}

}  // namespace unialign
