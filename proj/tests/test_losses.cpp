#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "support/fd_check.hpp"
#include "unialign/losses.hpp"
#include "unialign/util.hpp"

using namespace unialign;

namespace {

Eigen::MatrixXd random_matrix(long rows, long cols, Rng& rng, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

// Brute-force recomputation of the alignment losses straight from the
// definitions, used as the independent oracle.
double brute_mean_loss(const DomainReps& reps, double factor) {
    const int S = static_cast<int>(reps.size());
    const long D = reps[0].cols();
    double total = 0.0;
    for (int i = 0; i < S; ++i) {
        for (int j = i + 1; j < S; ++j) {
            for (long k = 0; k < D; ++k) {
                double mi = 0.0, mj = 0.0;
                for (long r = 0; r < reps[i].rows(); ++r) mi += reps[i](r, k);
                for (long r = 0; r < reps[j].rows(); ++r) mj += reps[j](r, k);
                mi /= reps[i].rows();
                mj /= reps[j].rows();
                total += (mi - mj) * (mi - mj);
            }
        }
    }
    return factor * total / static_cast<double>(D);
}

double brute_cov_entry(const Eigen::MatrixXd& z, long a, long b) {
    const long n = z.rows();
    double ma = 0.0, mb = 0.0;
    for (long r = 0; r < n; ++r) {
        ma += z(r, a);
        mb += z(r, b);
    }
    ma /= n;
    mb /= n;
    double acc = 0.0;
    for (long r = 0; r < n; ++r) acc += (z(r, a) - ma) * (z(r, b) - mb);
    return acc / (n - 1);
}

double brute_cov_loss(const DomainReps& reps, double factor) {
    const int S = static_cast<int>(reps.size());
    const long D = reps[0].cols();
    double total = 0.0;
    for (int i = 0; i < S; ++i)
        for (int j = i + 1; j < S; ++j)
            for (long a = 0; a < D; ++a)
                for (long b = 0; b < D; ++b) {
                    const double diff =
                        brute_cov_entry(reps[i], a, b) - brute_cov_entry(reps[j], a, b);
                    total += diff * diff;
                }
    return factor * total / static_cast<double>(D * D);
}

}  // namespace

TEST_CASE("domain statistics follow the definitions") {
    Eigen::MatrixXd z(2, 2);
    z << 0, 0, 2, 2;
    DomainStats s = domain_stats(z);
    CHECK(s.mean(0) == 1.0);
    CHECK(s.mean(1) == 1.0);
    CHECK(s.cov(0, 0) == 2.0);
    CHECK(s.cov(0, 1) == 2.0);
    CHECK(s.cov(1, 0) == 2.0);
    CHECK(s.cov(1, 1) == 2.0);

    Eigen::MatrixXd same = Eigen::MatrixXd::Constant(4, 3, 1.7);
    CHECK(domain_stats(same).cov.cwiseAbs().maxCoeff() == 0.0);

    Rng rng(5);
    Eigen::MatrixXd a = random_matrix(6, 3, rng);
    Eigen::MatrixXd b = a;
    b.rowwise() += Eigen::RowVector3d(3.0, -2.0, 0.5);
    CHECK((domain_stats(a).cov - domain_stats(b).cov).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(domain_stats(Eigen::MatrixXd::Zero(1, 3)), std::invalid_argument);
    CHECK(domain_stats(Eigen::MatrixXd::Zero(1, 3), false).mean.size() == 3);
}

TEST_CASE("mean alignment: identical domains give zero loss and gradient") {
    Rng rng(9);
    Eigen::MatrixXd z = random_matrix(4, 3, rng);
    DomainReps reps = {z, z, z};
    AlignmentResult res = mean_alignment_loss(reps, PairScale::pair_mean);
    CHECK(res.value == 0.0);
    for (const auto& g : res.grads) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(res.degenerate);
}

TEST_CASE("mean alignment literal example: S=2, D=1") {
    DomainReps reps = {Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Constant(1, 1, 2.0)};
    AlignmentResult res = mean_alignment_loss(reps, PairScale::literal);
    CHECK(res.value == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("single-domain input degenerates to zero with a warning flag") {
    Rng rng(2);
    DomainReps reps = {random_matrix(5, 2, rng)};
    AlignmentResult m = mean_alignment_loss(reps, PairScale::pair_mean);
    CHECK(m.value == 0.0);
    CHECK(m.degenerate);
    CombinedAlignment c = alignment_loss(reps, PairScale::pair_mean);
    CHECK(c.value == 0.0);
    CHECK(c.degenerate);
}

TEST_CASE("mean alignment matches the brute-force oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        DomainReps reps;
        for (int d = 0; d < 3; ++d) reps.push_back(random_matrix(4, 2, rng, 1.5));
        for (PairScale mode : {PairScale::literal, PairScale::pair_mean}) {
            const double factor = pair_scale_factor(mode, 3);
            AlignmentResult res = mean_alignment_loss(reps, mode);
            CHECK(res.value == doctest::Approx(brute_mean_loss(reps, factor)).epsilon(1e-12));
        }
    }
}

TEST_CASE("covariance alignment invariants and oracle") {
    Rng rng(17);
    Eigen::MatrixXd z1 = random_matrix(5, 3, rng);

    DomainReps identical = {z1, z1};
    CHECK(covariance_alignment_loss(identical, PairScale::pair_mean).value == 0.0);

    Eigen::MatrixXd shifted = z1;
    shifted.rowwise() += Eigen::RowVector3d(10.0, -4.0, 2.5);
    DomainReps translated = {z1, shifted};
    CHECK(covariance_alignment_loss(translated, PairScale::pair_mean).value < 1e-10);

    for (int trial = 0; trial < 20; ++trial) {
        DomainReps reps = {random_matrix(5, 3, rng), random_matrix(5, 3, rng)};
        const double factor = pair_scale_factor(PairScale::pair_mean, 2);
        AlignmentResult res = covariance_alignment_loss(reps, PairScale::pair_mean);
        CHECK(res.value == doctest::Approx(brute_cov_loss(reps, factor)).epsilon(1e-10));
        CHECK(res.value >= 0.0);
    }

    DomainReps thin = {random_matrix(1, 3, rng), random_matrix(5, 3, rng)};
    CHECK_THROWS_AS(covariance_alignment_loss(thin, PairScale::pair_mean),
                    std::invalid_argument);
}

TEST_CASE("combined alignment is the exact sum and passes finite differences") {
    Rng rng(23);
    DomainReps reps = {random_matrix(4, 3, rng), random_matrix(5, 3, rng)};
    AlignmentResult m = mean_alignment_loss(reps, PairScale::pair_mean);
    AlignmentResult c = covariance_alignment_loss(reps, PairScale::pair_mean);
    CombinedAlignment sum = alignment_loss(reps, PairScale::pair_mean);
    CHECK(sum.value == m.value + c.value);
    CHECK(sum.mean_value == m.value);
    CHECK(sum.cov_value == c.value);

    // Finite differences over every entry of both domain matrices.
    for (size_t d = 0; d < reps.size(); ++d) {
        Eigen::Map<const Eigen::VectorXd> flat(reps[d].data(), reps[d].size());
        Eigen::Map<const Eigen::VectorXd> grad(sum.grads[d].data(), sum.grads[d].size());
        auto f = [&](const Eigen::VectorXd& x) {
            DomainReps local = reps;
            local[d] = Eigen::Map<const Eigen::MatrixXd>(x.data(), reps[d].rows(),
                                                         reps[d].cols());
            return alignment_loss(local, PairScale::pair_mean).value;
        };
        CHECK(testsupport::max_rel_grad_error(f, flat, grad) < 1e-5);
    }
}

TEST_CASE("domain-order permutation leaves alignment losses bit-unchanged") {
    Rng rng(41);
    std::map<int, Eigen::MatrixXd> by_domain;
    by_domain[0] = random_matrix(4, 2, rng);
    by_domain[1] = random_matrix(4, 2, rng);
    by_domain[2] = random_matrix(4, 2, rng);

    // The pipeline assembles DomainReps in ascending domain-id order, so the
    // presentation order of the domains cannot influence the result.
    auto assemble = [&](const std::vector<int>& order) {
        std::map<int, Eigen::MatrixXd> sorted;
        for (int id : order) sorted[id] = by_domain[id];
        DomainReps reps;
        for (const auto& [id, z] : sorted) reps.push_back(z);
        return alignment_loss(reps, PairScale::pair_mean);
    };
    CombinedAlignment a = assemble({0, 1, 2});
    CombinedAlignment b = assemble({2, 0, 1});
    CHECK(a.mean_value == b.mean_value);
    CHECK(a.cov_value == b.cov_value);
    CHECK(a.value == b.value);

    // Feeding the matrices in a permuted index order changes only the
    // floating-point summation order of the same pair terms.
    DomainReps rotated = {by_domain[2], by_domain[0], by_domain[1]};
    DomainReps plain = {by_domain[0], by_domain[1], by_domain[2]};
    CHECK(std::abs(alignment_loss(rotated, PairScale::pair_mean).value -
                   alignment_loss(plain, PairScale::pair_mean).value) < 1e-12);
}

TEST_CASE("within-domain row shuffles change losses by < 1e-12") {
    Rng rng(43);
    DomainReps reps = {random_matrix(6, 3, rng), random_matrix(6, 3, rng)};
    DomainReps shuffled = reps;
    shuffled[0].row(0).swap(shuffled[0].row(5));
    shuffled[0].row(1).swap(shuffled[0].row(3));
    CombinedAlignment a = alignment_loss(reps, PairScale::pair_mean);
    CombinedAlignment b = alignment_loss(shuffled, PairScale::pair_mean);
    CHECK(std::abs(a.value - b.value) < 1e-12);
}

TEST_CASE("label smoothing produces the documented targets") {
    Eigen::VectorXi y0(1);
    y0 << 0;
    Eigen::MatrixXd t = smooth_labels(y0, 2, 0.1);
    CHECK(t(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(t(0, 1) == doctest::Approx(0.05).epsilon(1e-15));

    Eigen::MatrixXd hard = smooth_labels(y0, 2, 0.0);
    CHECK(hard(0, 0) == 1.0);
    CHECK(hard(0, 1) == 0.0);

    // 41-class row: true-class mass and row normalization.
    Eigen::VectorXi y5(1);
    y5 << 5;
    Eigen::MatrixXd wide = smooth_labels(y5, 41, 0.1);
    CHECK(wide(0, 5) == doctest::Approx(0.9 + 0.1 / 41).epsilon(1e-15));
    CHECK(wide.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(smooth_labels(y0, 2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(smooth_labels(y0, 2, -0.1), std::invalid_argument);
}

TEST_CASE("smoothed cross entropy values and gradient") {
    // Uniform softmax: loss is log K for any valid target.
    Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(2, 5);
    Eigen::VectorXi labels(2);
    labels << 1, 4;
    CrossEntropyResult flat =
        smoothed_cross_entropy(logits, smooth_labels(labels, 5, 0.3));
    CHECK(flat.value == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    // p = [0.9, 0.1], y = 0, eps = 0.1:
    // loss = -0.95 ln 0.9 - 0.05 ln 0.1 = 0.21522174...
    Eigen::MatrixXd two(1, 2);
    two << std::log(9.0), 0.0;
    Eigen::VectorXi zero(1);
    zero << 0;
    CrossEntropyResult ce = smoothed_cross_entropy(two, smooth_labels(zero, 2, 0.1));
    const double expected = -0.95 * std::log(0.9) - 0.05 * std::log(0.1);
    CHECK(ce.value == doctest::Approx(expected).epsilon(1e-12));

    // Per-sample gradient (B=1) is softmax - target.
    Eigen::VectorXd softmax(2);
    softmax << 0.9, 0.1;
    Eigen::VectorXd target(2);
    target << 0.95, 0.05;
    CHECK((ce.d_logits.row(0).transpose() - (softmax - target)).cwiseAbs().maxCoeff() < 1e-12);

    // Finite differences on a general batch.
    Rng rng(7);
    Eigen::MatrixXd batch_logits = random_matrix(4, 3, rng, 2.0);
    Eigen::VectorXi batch_labels(4);
    batch_labels << 0, 2, 1, 2;
    Eigen::MatrixXd targets = smooth_labels(batch_labels, 3, 0.1);
    CrossEntropyResult res = smoothed_cross_entropy(batch_logits, targets);
    Eigen::Map<const Eigen::VectorXd> logits_flat(batch_logits.data(), batch_logits.size());
    Eigen::Map<const Eigen::VectorXd> grad_flat(res.d_logits.data(), res.d_logits.size());
    auto f = [&](const Eigen::VectorXd& x) {
        Eigen::Map<const Eigen::MatrixXd> l(x.data(), 4, 3);
        return smoothed_cross_entropy(l, targets).value;
    };
    CHECK(testsupport::max_rel_grad_error(f, logits_flat, grad_flat) < 1e-4);

    // Extreme logits stay finite through the log-sum-exp form.
    Eigen::MatrixXd extreme(1, 2);
    extreme << 1000.0, -1000.0;
    CHECK(std::isfinite(smoothed_cross_entropy(extreme, smooth_labels(zero, 2, 0.1)).value));
}

TEST_CASE("smoothing floor: the loss at p = y_ls equals the target entropy") {
    const int K = 4;
    const double eps = 0.1;
    Eigen::VectorXi label(1);
    label << 2;
    Eigen::MatrixXd target = smooth_labels(label, K, eps);
    // Logits = log target reproduce the target softmax exactly.
    Eigen::MatrixXd logits = target.array().log().matrix();
    CrossEntropyResult ce = smoothed_cross_entropy(logits, target);
    double entropy = 0.0;
    for (int k = 0; k < K; ++k) entropy -= target(0, k) * std::log(target(0, k));
    CHECK(ce.value == doctest::Approx(entropy).epsilon(1e-12));
    CHECK(entropy > 0.0);

    // Any other prediction is at least as costly.
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::MatrixXd other = random_matrix(1, K, rng, 2.0);
        CHECK(smoothed_cross_entropy(other, target).value >= entropy - 1e-12);
    }
}

TEST_CASE("total loss composes its parts exactly") {
    Rng rng(67);
    Eigen::MatrixXd logits = random_matrix(6, 3, rng);
    Eigen::VectorXi labels(6);
    labels << 0, 1, 2, 0, 1, 2;
    Eigen::MatrixXd targets = smooth_labels(labels, 3, 0.1);
    DomainReps reps = {random_matrix(3, 4, rng), random_matrix(3, 4, rng)};

    TotalLossResult t = total_loss(logits, targets, reps, 0.5, PairScale::pair_mean);
    CrossEntropyResult ce = smoothed_cross_entropy(logits, targets);
    CombinedAlignment align = alignment_loss(reps, PairScale::pair_mean);
    CHECK(t.breakdown.ce_ls == ce.value);
    CHECK(t.breakdown.align == align.value);
    CHECK(t.breakdown.total == ce.value + 0.5 * align.value);
    CHECK(t.breakdown.align == t.breakdown.mean + t.breakdown.cov);
    for (size_t d = 0; d < reps.size(); ++d)
        CHECK((t.d_reps[d] - 0.5 * align.grads[d]).cwiseAbs().maxCoeff() == 0.0);

    // alpha = 0 collapses to the classification loss alone.
    TotalLossResult plain = total_loss(logits, targets, reps, 0.0, PairScale::pair_mean);
    CHECK(plain.breakdown.total == ce.value);
    CHECK(plain.breakdown.align == 0.0);
    for (const auto& g : plain.d_reps) CHECK(g.cwiseAbs().maxCoeff() == 0.0);

    // Identical domain representations: total reduces to the CE term.
    DomainReps same = {reps[0], reps[0]};
    TotalLossResult aligned = total_loss(logits, targets, same, 0.5, PairScale::pair_mean);
    CHECK(aligned.breakdown.total == ce.value);
}

TEST_CASE("alignment losses are nonnegative and vanish at alignment over random draws") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const int S = 2 + static_cast<int>(rng.randint(3));
        const long D = 1 + static_cast<long>(rng.randint(4));
        DomainReps reps;
        for (int d = 0; d < S; ++d)
            reps.push_back(random_matrix(2 + static_cast<long>(rng.randint(5)), D, rng, 2.0));
        CombinedAlignment c = alignment_loss(reps, PairScale::pair_mean);
        CHECK(c.mean_value >= 0.0);
        CHECK(c.cov_value >= 0.0);
        CHECK(c.value >= 0.0);

        DomainReps same(S, reps[0]);
        CHECK(alignment_loss(same, PairScale::pair_mean).value < 1e-12);
    }
}

TEST_CASE("D=1 representations are handled") {
    Rng rng(55);
    DomainReps reps = {random_matrix(4, 1, rng), random_matrix(4, 1, rng)};
    CombinedAlignment c = alignment_loss(reps, PairScale::pair_mean);
    CHECK(std::isfinite(c.value));
    CHECK(c.value >= 0.0);
}
