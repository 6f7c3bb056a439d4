#pragma once

#include <Eigen/Dense>
#include <vector>

namespace unialign {

/// Normalization applied in front of the pairwise sums of the alignment
/// losses. `literal` multiplies by S(S-1)/2, `pair_mean` averages over the
/// S(S-1)/2 domain pairs; both coincide for S = 2.
enum class PairScale { literal, pair_mean };

double pair_scale_factor(PairScale mode, int num_domains);

/// Per-domain representation matrices Z_i (N_i x D), ascending domain order.
using DomainReps = std::vector<Eigen::MatrixXd>;

struct DomainStats {
    Eigen::VectorXd mean;  // D
    Eigen::MatrixXd cov;   // D x D, unbiased
};

/// Sample mean and unbiased covariance of one domain's representations.
/// Covariance requires at least two rows.
DomainStats domain_stats(const Eigen::MatrixXd& reps, bool with_cov = true);

struct AlignmentResult {
    double value = 0.0;
    DomainReps grads;        // same shapes as the input matrices
    bool degenerate = false; // true when fewer than two domains were given
};

AlignmentResult mean_alignment_loss(const DomainReps& reps, PairScale scale);
AlignmentResult covariance_alignment_loss(const DomainReps& reps, PairScale scale);

struct CombinedAlignment {
    double mean_value = 0.0;
    double cov_value = 0.0;
    double value = 0.0;  // mean_value + cov_value
    DomainReps grads;
    bool degenerate = false;
};

CombinedAlignment alignment_loss(const DomainReps& reps, PairScale scale);

/// Soft targets: (1 - eps) * one_hot + eps / K per entry.
Eigen::MatrixXd smooth_labels(const Eigen::VectorXi& labels, int num_classes, double epsilon);

struct CrossEntropyResult {
    double value = 0.0;         // mean over the batch
    Eigen::MatrixXd d_logits;   // gradient of the mean loss
};

/// Batch-mean cross entropy against soft targets, evaluated in the
/// log-sum-exp form. The gradient of the mean is (softmax - target) / B.
CrossEntropyResult smoothed_cross_entropy(const Eigen::MatrixXd& logits,
                                          const Eigen::MatrixXd& targets);

struct LossBreakdown {
    double ce_ls = 0.0;
    double mean = 0.0;
    double cov = 0.0;
    double align = 0.0;  // mean + cov
    double total = 0.0;  // ce_ls + alpha * align
    double alpha = 0.0;
    bool align_degenerate = false;
};

struct TotalLossResult {
    LossBreakdown breakdown;
    Eigen::MatrixXd d_logits;
    DomainReps d_reps;  // per-domain, already scaled by alpha
};

/// Combined training objective. `reps` holds the per-domain slices of the
/// representations that produced `logits` (same row order: domain blocks
/// ascending). With alpha = 0 the alignment terms are skipped entirely.
TotalLossResult total_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets,
                           const DomainReps& reps, double alpha, PairScale scale);

}  // namespace unialign
