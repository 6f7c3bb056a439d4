#pragma once

#include <Eigen/Dense>
#include <vector>

#include "unialign/dataset.hpp"
#include "unialign/ensemble.hpp"
#include "unialign/losses.hpp"
#include "unialign/model.hpp"

namespace unialign {

/// (domain, position) address of one sample inside a DomainDataset.
struct SampleRef {
    int domain = 0;
    int index = 0;
    auto operator<=>(const SampleRef&) const = default;
};

/// Dataset features normalized once into per-domain matrices.
struct NormalizedStore {
    struct DomainBlock {
        Eigen::MatrixXd bytes;
        Eigen::MatrixXd sizes;
        Eigen::MatrixXd intervals;
        Eigen::VectorXi labels;
    };
    std::vector<DomainBlock> blocks;
    int num_classes = 0;

    static NormalizedStore build(const DomainDataset& dataset);
};

/// Flat feature matrix gathered from sample refs (validation/test splits).
struct EvalSet {
    Eigen::MatrixXd bytes;
    Eigen::MatrixXd sizes;
    Eigen::MatrixXd intervals;
    Eigen::VectorXi labels;

    long rows() const { return bytes.rows(); }
    static EvalSet gather(const NormalizedStore& store, const std::vector<SampleRef>& refs);
};

struct TrainOptions {
    double epsilon = 0.1;
    double alpha = 0.5;
    PairScale pair_scale = PairScale::pair_mean;
    double learning_rate = 2.0e-3;
    int batch_per_domain = 64;
    uint64_t seed = 1;
};

/// Epoch driver over domain-balanced minibatch SGD with the combined
/// objective; validation is scored with plain cross entropy and accuracy.
class SgdEpochRunner : public EpochRunner {
public:
    /// `train_indices[k]` holds row indices into `store.blocks[train_domains[k]]`.
    SgdEpochRunner(const ModelConfig& cfg, const NormalizedStore& store,
                   std::vector<int> train_domains, std::vector<std::vector<int>> train_indices,
                   EvalSet val, const TrainOptions& opts);

    EpochOutcome run_epoch(const ParamVector& params, int epoch) override;
    ValScore evaluate(const ParamVector& params) override;

    Batch make_batch(const std::vector<std::vector<int>>& rows_per_domain) const;

private:
    ModelConfig cfg_;
    const NormalizedStore& store_;
    std::vector<int> train_domains_;
    std::vector<std::vector<int>> train_indices_;
    EvalSet val_;
    TrainOptions opts_;
};

/// Forward pass + plain cross entropy + top-1 accuracy on a flat set.
EpochRunner::ValScore score_set(const ModelConfig& cfg, const ParamVector& params,
                                const EvalSet& set);

/// Predicted classes for a flat set.
std::vector<int> predict_set(const ModelConfig& cfg, const ParamVector& params,
                             const EvalSet& set);

/// Representations of a flat set.
Eigen::MatrixXd represent_set(const ModelConfig& cfg, const ParamVector& params,
                              const EvalSet& set);

}  // namespace unialign
