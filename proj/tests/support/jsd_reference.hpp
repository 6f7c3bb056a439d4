#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace testsupport {

/// Direct reimplementation of the histogram JSD diagnostic using power
/// iteration and plain loops, kept independent of the library code path.
inline double jsd_reference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const long n = a.rows() + b.rows();
    const long d = a.cols();
    std::vector<std::vector<double>> all;
    all.reserve(n);
    for (long i = 0; i < a.rows(); ++i) {
        std::vector<double> row(d);
        for (long j = 0; j < d; ++j) row[j] = a(i, j);
        all.push_back(row);
    }
    for (long i = 0; i < b.rows(); ++i) {
        std::vector<double> row(d);
        for (long j = 0; j < d; ++j) row[j] = b(i, j);
        all.push_back(row);
    }

    std::vector<double> mean(d, 0.0);
    for (const auto& row : all)
        for (long j = 0; j < d; ++j) mean[j] += row[j];
    for (long j = 0; j < d; ++j) mean[j] /= n;

    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& row : all)
        for (long i = 0; i < d; ++i)
            for (long j = 0; j < d; ++j)
                cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
    for (long i = 0; i < d; ++i)
        for (long j = 0; j < d; ++j) cov[i][j] /= (n - 1);

    // Power iteration for the leading eigenvector.
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    for (int it = 0; it < 1000; ++it) {
        std::vector<double> w(d, 0.0);
        for (long i = 0; i < d; ++i)
            for (long j = 0; j < d; ++j) w[i] += cov[i][j] * v[j];
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) break;
        for (long i = 0; i < d; ++i) v[i] = w[i] / norm;
    }

    std::vector<double> proj(n, 0.0);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j) proj[i] += (all[i][j] - mean[j]) * v[j];

    double var = 0.0;
    for (double p : proj) var += p * p;
    var /= (n - 1);
    double skew = 0.0;
    if (var > 0.0) {
        for (double p : proj) skew += p * p * p;
        skew /= n * std::pow(var, 1.5);
    }
    if (skew < 0.0)
        for (double& p : proj) p = -p;

    double lo = proj[0], hi = proj[0];
    for (double p : proj) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    constexpr int kBins = 64;
    std::vector<double> pa(kBins, 1e-9), pb(kBins, 1e-9);
    auto bin_of = [&](double x) {
        if (hi <= lo) return 0;
        int bin = static_cast<int>((x - lo) / (hi - lo) * kBins);
        if (bin < 0) bin = 0;
        if (bin >= kBins) bin = kBins - 1;
        return bin;
    };
    for (long i = 0; i < a.rows(); ++i) pa[bin_of(proj[i])] += 1.0;
    for (long i = 0; i < b.rows(); ++i) pb[bin_of(proj[a.rows() + i])] += 1.0;

    double sa = 0.0, sb = 0.0;
    for (int k = 0; k < kBins; ++k) {
        sa += pa[k];
        sb += pb[k];
    }
    double jsd = 0.0;
    for (int k = 0; k < kBins; ++k) {
        const double p = pa[k] / sa;
        const double q = pb[k] / sb;
        const double m = 0.5 * (p + q);
        jsd += 0.5 * p * std::log(p / m) + 0.5 * q * std::log(q / m);
    }
    return jsd;
}

}  // namespace testsupport
