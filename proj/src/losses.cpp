#include "unialign/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace unialign {

double pair_scale_factor(PairScale mode, int num_domains) {
    const double pairs = 0.5 * num_domains * (num_domains - 1);
    return mode == PairScale::literal ? pairs : 1.0 / pairs;
}

DomainStats domain_stats(const Eigen::MatrixXd& reps, bool with_cov) {
    const long n = reps.rows();
    if (n < 1) throw std::invalid_argument("domain_stats needs at least one row");
    if (!reps.allFinite()) throw std::invalid_argument("non-finite representation values");
    DomainStats s;
    s.mean = reps.colwise().mean();
    if (with_cov) {
        if (n < 2) throw std::invalid_argument("covariance needs at least two rows per domain");
        Eigen::MatrixXd centered = reps.rowwise() - s.mean.transpose();
        s.cov = centered.transpose() * centered / static_cast<double>(n - 1);
    }
    return s;
}

AlignmentResult mean_alignment_loss(const DomainReps& reps, PairScale scale) {
    const int S = static_cast<int>(reps.size());
    AlignmentResult out;
    out.grads.reserve(reps.size());
    for (const auto& z : reps) out.grads.emplace_back(Eigen::MatrixXd::Zero(z.rows(), z.cols()));
    if (S < 2) {
        out.degenerate = true;
        return out;
    }
    const long D = reps[0].cols();
    const double factor = pair_scale_factor(scale, S);

    std::vector<Eigen::VectorXd> means(S);
    for (int i = 0; i < S; ++i) {
        if (reps[i].cols() != D) throw std::invalid_argument("domain repr dims disagree");
        means[i] = domain_stats(reps[i], false).mean;
    }

    // L = factor * (1/D) * sum_{i<j} ||mu_i - mu_j||^2
    // dL/dmu_i = factor * (2/D) * sum_{j != i} (mu_i - mu_j), dmu_i/dz_ik = 1/N_i.
    double loss = 0.0;
    std::vector<Eigen::VectorXd> d_mean(S, Eigen::VectorXd::Zero(D));
    for (int i = 0; i < S; ++i) {
        for (int j = i + 1; j < S; ++j) {
            Eigen::VectorXd diff = means[i] - means[j];
            loss += diff.squaredNorm();
            d_mean[i] += 2.0 * diff;
            d_mean[j] -= 2.0 * diff;
        }
    }
    out.value = factor * loss / static_cast<double>(D);
    for (int i = 0; i < S; ++i) {
        const double coeff = factor / (static_cast<double>(D) * reps[i].rows());
        out.grads[i].rowwise() = (coeff * d_mean[i]).transpose();
    }
    return out;
}

AlignmentResult covariance_alignment_loss(const DomainReps& reps, PairScale scale) {
    const int S = static_cast<int>(reps.size());
    AlignmentResult out;
    out.grads.reserve(reps.size());
    for (const auto& z : reps) out.grads.emplace_back(Eigen::MatrixXd::Zero(z.rows(), z.cols()));
    if (S < 2) {
        out.degenerate = true;
        return out;
    }
    const long D = reps[0].cols();
    const double factor = pair_scale_factor(scale, S);

    std::vector<Eigen::MatrixXd> centered(S);
    std::vector<Eigen::MatrixXd> covs(S);
    for (int i = 0; i < S; ++i) {
        if (reps[i].cols() != D) throw std::invalid_argument("domain repr dims disagree");
        if (reps[i].rows() < 2)
            throw std::invalid_argument("covariance alignment needs >= 2 rows per domain");
        Eigen::VectorXd mu = reps[i].colwise().mean();
        centered[i] = reps[i].rowwise() - mu.transpose();
        covs[i] = centered[i].transpose() * centered[i] / static_cast<double>(reps[i].rows() - 1);
    }

    // L = factor * (1/D^2) * sum_{i<j} ||C_i - C_j||_F^2. With the symmetric
    // upstream G_i = dL/dC_i, the chain rule through the centered quadratic
    // form gives dL/dZ_i = 2/(N_i - 1) * Zc_i * G_i (see docs/alignment-math.md).
    double loss = 0.0;
    std::vector<Eigen::MatrixXd> d_cov(S, Eigen::MatrixXd::Zero(D, D));
    for (int i = 0; i < S; ++i) {
        for (int j = i + 1; j < S; ++j) {
            Eigen::MatrixXd diff = covs[i] - covs[j];
            loss += diff.squaredNorm();
            d_cov[i] += 2.0 * diff;
            d_cov[j] -= 2.0 * diff;
        }
    }
    const double dd = static_cast<double>(D) * static_cast<double>(D);
    out.value = factor * loss / dd;
    for (int i = 0; i < S; ++i) {
        Eigen::MatrixXd g = (factor / dd) * d_cov[i];
        out.grads[i] = 2.0 / static_cast<double>(reps[i].rows() - 1) * centered[i] * g;
    }
    return out;
}

CombinedAlignment alignment_loss(const DomainReps& reps, PairScale scale) {
    CombinedAlignment out;
    AlignmentResult m = mean_alignment_loss(reps, scale);
    AlignmentResult c = covariance_alignment_loss(reps, scale);
    out.mean_value = m.value;
    out.cov_value = c.value;
    out.value = m.value + c.value;
    out.degenerate = m.degenerate;
    out.grads.reserve(reps.size());
    for (size_t i = 0; i < reps.size(); ++i) out.grads.emplace_back(m.grads[i] + c.grads[i]);
    return out;
}

Eigen::MatrixXd smooth_labels(const Eigen::VectorXi& labels, int num_classes, double epsilon) {
    if (epsilon < 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("label smoothing epsilon must be in [0, 1)");
    if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
    Eigen::MatrixXd targets =
        Eigen::MatrixXd::Constant(labels.size(), num_classes, epsilon / num_classes);
    for (long i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw std::invalid_argument("label outside [0, num_classes)");
        targets(i, labels[i]) += 1.0 - epsilon;
    }
    return targets;
}

CrossEntropyResult smoothed_cross_entropy(const Eigen::MatrixXd& logits,
                                          const Eigen::MatrixXd& targets) {
    if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
        throw std::invalid_argument("logits/targets shape mismatch");
    if (!logits.allFinite()) throw std::invalid_argument("non-finite logits");
    const long B = logits.rows();

    CrossEntropyResult out;
    out.d_logits.resize(logits.rows(), logits.cols());
    double sum = 0.0;
    for (long i = 0; i < B; ++i) {
        const double mx = logits.row(i).maxCoeff();
        Eigen::ArrayXd shifted = logits.row(i).array() - mx;
        const double lse = std::log(shifted.exp().sum());
        // -sum_k y_k * log p_k with log p_k = shifted_k - lse; rows of y sum to 1.
        sum += targets.row(i).sum() * lse - (targets.row(i).array() * shifted.transpose()).sum();
        Eigen::ArrayXd softmax = (shifted - lse).exp();
        out.d_logits.row(i) = (softmax.transpose() - targets.row(i).array()) / B;
    }
    out.value = sum / B;
    return out;
}

TotalLossResult total_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets,
                           const DomainReps& reps, double alpha, PairScale scale) {
    TotalLossResult out;
    CrossEntropyResult ce = smoothed_cross_entropy(logits, targets);
    out.d_logits = std::move(ce.d_logits);
    out.breakdown.ce_ls = ce.value;
    out.breakdown.alpha = alpha;

    out.d_reps.reserve(reps.size());
    if (alpha != 0.0) {
        CombinedAlignment align = alignment_loss(reps, scale);
        out.breakdown.mean = align.mean_value;
        out.breakdown.cov = align.cov_value;
        out.breakdown.align = align.value;
        out.breakdown.align_degenerate = align.degenerate;
        for (auto& g : align.grads) out.d_reps.emplace_back(alpha * g);
    } else {
        out.breakdown.align_degenerate = reps.size() < 2;
        for (const auto& z : reps)
            out.d_reps.emplace_back(Eigen::MatrixXd::Zero(z.rows(), z.cols()));
    }
    out.breakdown.total = out.breakdown.ce_ls + alpha * out.breakdown.align;
    return out;
}

}  // namespace unialign
