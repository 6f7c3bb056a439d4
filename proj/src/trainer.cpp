#include "unialign/trainer.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "unialign/traffic.hpp"
#include "unialign/util.hpp"

namespace unialign {

NormalizedStore NormalizedStore::build(const DomainDataset& dataset) {
    dataset.validate();
    NormalizedStore store;
    store.num_classes = dataset.num_classes;
    store.blocks.resize(dataset.domains.size());
    for (size_t d = 0; d < dataset.domains.size(); ++d) {
        const auto& samples = dataset.domains[d];
        auto& block = store.blocks[d];
        block.bytes.resize(samples.size(), kByteGridLen);
        block.sizes.resize(samples.size(), kTraceLen);
        block.intervals.resize(samples.size(), kTraceLen);
        block.labels.resize(samples.size());
        for (size_t i = 0; i < samples.size(); ++i) {
            NormalizedSample n = normalize(samples[i]);
            block.bytes.row(i) = Eigen::Map<const Eigen::RowVectorXd>(n.bytes.data(),
                                                                      kByteGridLen);
            block.sizes.row(i) = Eigen::Map<const Eigen::RowVectorXd>(n.sizes.data(), kTraceLen);
            block.intervals.row(i) =
                Eigen::Map<const Eigen::RowVectorXd>(n.intervals.data(), kTraceLen);
            block.labels[i] = samples[i].label;
        }
    }
    return store;
}

EvalSet EvalSet::gather(const NormalizedStore& store, const std::vector<SampleRef>& refs) {
    EvalSet set;
    set.bytes.resize(refs.size(), kByteGridLen);
    set.sizes.resize(refs.size(), kTraceLen);
    set.intervals.resize(refs.size(), kTraceLen);
    set.labels.resize(refs.size());
    for (size_t i = 0; i < refs.size(); ++i) {
        const auto& block = store.blocks.at(refs[i].domain);
        set.bytes.row(i) = block.bytes.row(refs[i].index);
        set.sizes.row(i) = block.sizes.row(refs[i].index);
        set.intervals.row(i) = block.intervals.row(refs[i].index);
        set.labels[i] = block.labels[refs[i].index];
    }
    return set;
}

SgdEpochRunner::SgdEpochRunner(const ModelConfig& cfg, const NormalizedStore& store,
                               std::vector<int> train_domains,
                               std::vector<std::vector<int>> train_indices, EvalSet val,
                               const TrainOptions& opts)
    : cfg_(cfg),
      store_(store),
      train_domains_(std::move(train_domains)),
      train_indices_(std::move(train_indices)),
      val_(std::move(val)),
      opts_(opts) {
    if (train_domains_.empty() || train_domains_.size() != train_indices_.size())
        throw std::invalid_argument("runner needs one index list per training domain");
    if (val_.rows() == 0) throw std::invalid_argument("validation split is empty");
    int min_size = std::numeric_limits<int>::max();
    for (const auto& idx : train_indices_) min_size = std::min(min_size, (int)idx.size());
    if (min_size < opts_.batch_per_domain)
        throw std::runtime_error("batch_per_domain (" + std::to_string(opts_.batch_per_domain) +
                                 ") exceeds the smallest training domain (" +
                                 std::to_string(min_size) + " samples)");
}

Batch SgdEpochRunner::make_batch(const std::vector<std::vector<int>>& rows_per_domain) const {
    Batch batch;
    batch.groups.resize(rows_per_domain.size());
    for (size_t k = 0; k < rows_per_domain.size(); ++k) {
        const auto& block = store_.blocks.at(train_domains_[k]);
        const auto& rows = rows_per_domain[k];
        auto& g = batch.groups[k];
        g.domain = train_domains_[k];
        g.bytes.resize(rows.size(), block.bytes.cols());
        g.sizes.resize(rows.size(), block.sizes.cols());
        g.intervals.resize(rows.size(), block.intervals.cols());
        g.labels.resize(rows.size());
        for (size_t i = 0; i < rows.size(); ++i) {
            g.bytes.row(i) = block.bytes.row(rows[i]);
            g.sizes.row(i) = block.sizes.row(rows[i]);
            g.intervals.row(i) = block.intervals.row(rows[i]);
            g.labels[i] = block.labels[rows[i]];
        }
    }
    return batch;
}

EpochRunner::EpochOutcome SgdEpochRunner::run_epoch(const ParamVector& params, int epoch) {
    std::vector<int> sizes;
    sizes.reserve(train_indices_.size());
    for (const auto& idx : train_indices_) sizes.push_back(static_cast<int>(idx.size()));
    BatchPlan plan = domain_batches(sizes, opts_.batch_per_domain, opts_.seed, epoch);

    EpochOutcome out{params, {}};
    LossBreakdown sum;
    for (const auto& batch_rows : plan.batches) {
        // Map the plan's per-domain positions through the split's index lists.
        std::vector<std::vector<int>> rows(batch_rows.size());
        for (size_t k = 0; k < batch_rows.size(); ++k) {
            rows[k].reserve(batch_rows[k].size());
            for (int pos : batch_rows[k]) rows[k].push_back(train_indices_[k][pos]);
        }
        Batch batch = make_batch(rows);

        ForwardResult fwd = forward(cfg_, out.params, batch);
        Eigen::VectorXi labels(batch.total_rows());
        long row = 0;
        for (const auto& g : batch.groups) {
            labels.segment(row, g.labels.size()) = g.labels;
            row += g.labels.size();
        }
        Eigen::MatrixXd targets = smooth_labels(labels, cfg_.num_classes, opts_.epsilon);

        DomainReps reps;
        reps.reserve(fwd.group_rows.size());
        for (auto [off, n] : fwd.group_rows) reps.emplace_back(fwd.reps.middleRows(off, n));

        TotalLossResult loss =
            total_loss(fwd.logits, targets, reps, opts_.alpha, opts_.pair_scale);

        Eigen::MatrixXd d_reps = Eigen::MatrixXd::Zero(fwd.reps.rows(), fwd.reps.cols());
        for (size_t k = 0; k < loss.d_reps.size(); ++k) {
            auto [off, n] = fwd.group_rows[k];
            d_reps.middleRows(off, n) = loss.d_reps[k];
        }
        ParamVector grads = backward(cfg_, out.params, batch, fwd, d_reps, loss.d_logits);
        out.params = sgd_step(out.params, grads, opts_.learning_rate);

        sum.ce_ls += loss.breakdown.ce_ls;
        sum.mean += loss.breakdown.mean;
        sum.cov += loss.breakdown.cov;
        sum.align += loss.breakdown.align;
        sum.total += loss.breakdown.total;
    }
    const double nb = static_cast<double>(plan.batches.size());
    out.train_loss = {sum.ce_ls / nb, sum.mean / nb, sum.cov / nb,
                      sum.align / nb, sum.total / nb, opts_.alpha, false};
    return out;
}

EpochRunner::ValScore SgdEpochRunner::evaluate(const ParamVector& params) {
    return score_set(cfg_, params, val_);
}

namespace {

/// Runs the encoder over a flat set in chunks, invoking `fn(logits, labels)`
/// per chunk.
template <typename Fn>
void forward_chunks(const ModelConfig& cfg, const ParamVector& params, const EvalSet& set,
                    Fn&& fn) {
    constexpr long kChunk = 2048;
    for (long off = 0; off < set.rows(); off += kChunk) {
        const long n = std::min(kChunk, set.rows() - off);
        Batch batch;
        batch.groups.resize(1);
        batch.groups[0].domain = 0;
        batch.groups[0].bytes = set.bytes.middleRows(off, n);
        batch.groups[0].sizes = set.sizes.middleRows(off, n);
        batch.groups[0].intervals = set.intervals.middleRows(off, n);
        batch.groups[0].labels = set.labels.segment(off, n);
        ForwardResult fwd = forward(cfg, params, batch);
        fn(fwd, batch.groups[0].labels);
    }
}

}  // namespace

EpochRunner::ValScore score_set(const ModelConfig& cfg, const ParamVector& params,
                                const EvalSet& set) {
    if (set.rows() == 0) throw std::invalid_argument("cannot score an empty set");
    double ce_sum = 0.0;
    long correct = 0;
    forward_chunks(cfg, params, set, [&](const ForwardResult& fwd, const Eigen::VectorXi& labels) {
        Eigen::MatrixXd targets = smooth_labels(labels, cfg.num_classes, 0.0);
        CrossEntropyResult ce = smoothed_cross_entropy(fwd.logits, targets);
        ce_sum += ce.value * static_cast<double>(fwd.logits.rows());
        for (long i = 0; i < fwd.logits.rows(); ++i) {
            Eigen::Index arg;
            fwd.logits.row(i).maxCoeff(&arg);
            if (static_cast<int>(arg) == labels[i]) ++correct;
        }
    });
    return {ce_sum / static_cast<double>(set.rows()),
            static_cast<double>(correct) / static_cast<double>(set.rows())};
}

std::vector<int> predict_set(const ModelConfig& cfg, const ParamVector& params,
                             const EvalSet& set) {
    std::vector<int> preds;
    preds.reserve(set.rows());
    forward_chunks(cfg, params, set, [&](const ForwardResult& fwd, const Eigen::VectorXi&) {
        for (long i = 0; i < fwd.logits.rows(); ++i) {
            Eigen::Index arg;
            fwd.logits.row(i).maxCoeff(&arg);
            preds.push_back(static_cast<int>(arg));
        }
    });
    return preds;
}

Eigen::MatrixXd represent_set(const ModelConfig& cfg, const ParamVector& params,
                              const EvalSet& set) {
    Eigen::MatrixXd reps(set.rows(), cfg.repr_dim);
    long row = 0;
    forward_chunks(cfg, params, set, [&](const ForwardResult& fwd, const Eigen::VectorXi&) {
        reps.middleRows(row, fwd.reps.rows()) = fwd.reps;
        row += fwd.reps.rows();
    });
    return reps;
}

}  // namespace unialign
