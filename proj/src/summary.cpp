#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "chancal/abc.hpp"
#include "chancal/error.hpp"

namespace chancal {

namespace {

// Linear-interpolation sample quantile of a sorted range.
double sorted_quantile(const std::vector<double>& sorted, double q)
{
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double silverman_bandwidth(const Eigen::VectorXd& x)
{
    const auto n = static_cast<double>(x.size());
    const double mean = x.mean();
    const double sd = std::sqrt((x.array() - mean).square().sum() / (n - 1.0));
    std::vector<double> sorted(x.data(), x.data() + x.size());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0))
        spread = sd;
    return 0.9 * spread * std::pow(n, -0.2);
}

} // namespace

SummaryVector summarize(const LogMomentMatrix& z)
{
    const Eigen::Index n = z.rows.rows();
    const Eigen::Index I = z.rows.cols();
    if (n < 2)
        throw ValidationError("summary statistics need at least 2 realizations");

    const Eigen::RowVectorXd mean = z.rows.colwise().mean();
    const RealMatrix centered = z.rows.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

    SummaryVector s;
    s.values.resize(static_cast<Eigen::Index>(SummaryVector::length_for(static_cast<std::size_t>(I))));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < I; ++i)
        s.values[k++] = mean[i];
    for (Eigen::Index i = 0; i < I; ++i)
        for (Eigen::Index j = i; j < I; ++j)
            s.values[k++] = cov(i, j);
    return s;
}

std::vector<Candidate> rejection_select(std::span<const Candidate> candidates, std::size_t m_eps)
{
    if (m_eps > candidates.size())
        throw ValidationError("cannot accept " + std::to_string(m_eps) + " of " + std::to_string(candidates.size()) +
                              " candidates");
    // NaN sorts last.
    auto key = [](const Candidate& c) { return std::isnan(c.mmd2) ? std::numeric_limits<double>::infinity() : c.mmd2; };
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ka = key(candidates[a]), kb = key(candidates[b]);
        if (ka != kb)
            return ka < kb;
        return candidates[a].index < candidates[b].index;
    });
    std::vector<Candidate> out;
    out.reserve(m_eps);
    for (std::size_t k = 0; k < m_eps; ++k)
        out.push_back(candidates[order[k]]);
    return out;
}

MisspecificationReport detect_misspecification(std::span<const SummaryVector> all_summaries, const SummaryVector& s_obs)
{
    if (all_summaries.size() < 2)
        throw ValidationError("misspecification check needs at least 2 simulated summaries");
    const Eigen::Index q = s_obs.values.size();
    Eigen::VectorXd lo = all_summaries.front().values, hi = lo;
    for (const auto& s : all_summaries) {
        if (s.values.size() != q)
            throw ValidationError("summary vectors have different lengths");
        lo = lo.cwiseMin(s.values);
        hi = hi.cwiseMax(s.values);
    }
    MisspecificationReport report;
    report.outside.resize(static_cast<std::size_t>(q));
    for (Eigen::Index k = 0; k < q; ++k) {
        const bool out = s_obs.values[k] < lo[k] || s_obs.values[k] > hi[k];
        report.outside[static_cast<std::size_t>(k)] = out;
        report.misspecified = report.misspecified || out;
    }
    return report;
}

Eigen::VectorXd kde_mode(const RealMatrix& thetas)
{
    const Eigen::Index n = thetas.rows(), p = thetas.cols();
    if (n < 2)
        throw ValidationError("KDE mode needs at least 2 samples");

    Eigen::VectorXd inv_h = Eigen::VectorXd::Zero(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const double h = silverman_bandwidth(thetas.col(k));
        inv_h[k] = h > 0.0 ? 1.0 / h : 0.0; // constant dimension: no contribution
    }

    Eigen::Index best = 0;
    double best_density = -1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        double density = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double e = 0.0;
            for (Eigen::Index k = 0; k < p; ++k) {
                const double u = (thetas(j, k) - thetas(i, k)) * inv_h[k];
                e += u * u;
            }
            density += std::exp(-0.5 * e);
        }
        if (density > best_density) {
            best_density = density;
            best = j;
        }
    }
    return thetas.row(best).transpose();
}

} // namespace chancal
