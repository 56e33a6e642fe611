#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "chancal/abc.hpp"
#include "chancal/error.hpp"

namespace chancal {

namespace {

constexpr double kLogitClamp = 1e-9;
constexpr double kMadToSd = 1.4826;
constexpr double kBoundTol = 1e-6; // relative to the prior width

double median(std::vector<double> v)
{
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0)
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    return m;
}

void check_theta_shape(const RealMatrix& thetas, const PriorBox& prior)
{
    if (static_cast<std::size_t>(thetas.cols()) != prior.size())
        throw ValidationError("parameter matrix width does not match the prior");
}

} // namespace

Eigen::VectorXd epanechnikov_weights(std::span<const double> mmd2)
{
    Eigen::VectorXd w(static_cast<Eigen::Index>(mmd2.size()));
    double delta_max = -std::numeric_limits<double>::infinity();
    for (double d : mmd2)
        delta_max = std::max(delta_max, d);
    for (std::size_t i = 0; i < mmd2.size(); ++i) {
        const double d = mmd2[i];
        double wi = 1.0;
        if (d > 0.0) {
            const double r = d / delta_max;
            wi = std::max(0.0, 1.0 - r * r);
        }
        w[static_cast<Eigen::Index>(i)] = wi;
    }
    return w;
}

RealMatrix to_logit_space(const RealMatrix& thetas, const PriorBox& prior)
{
    check_theta_shape(thetas, prior);
    RealMatrix out(thetas.rows(), thetas.cols());
    for (Eigen::Index i = 0; i < thetas.rows(); ++i)
        for (Eigen::Index j = 0; j < thetas.cols(); ++j) {
            double u = (thetas(i, j) - prior.lower[j]) / (prior.upper[j] - prior.lower[j]);
            u = std::clamp(u, kLogitClamp, 1.0 - kLogitClamp);
            out(i, j) = std::log(u / (1.0 - u));
        }
    return out;
}

RealMatrix from_logit_space(const RealMatrix& phis, const PriorBox& prior)
{
    check_theta_shape(phis, prior);
    RealMatrix out(phis.rows(), phis.cols());
    for (Eigen::Index i = 0; i < phis.rows(); ++i)
        for (Eigen::Index j = 0; j < phis.cols(); ++j) {
            const double u = 1.0 / (1.0 + std::exp(-phis(i, j)));
            const double theta = prior.lower[j] + u * (prior.upper[j] - prior.lower[j]);
            out(i, j) = std::clamp(theta, prior.lower[j], prior.upper[j]);
        }
    return out;
}

LinearAdjustment linear_adjust(const RealMatrix& response, const RealMatrix& regressors, const Eigen::VectorXd& weights)
{
    const Eigen::Index m = response.rows();
    const Eigen::Index q = regressors.cols();
    if (regressors.rows() != m || weights.size() != m)
        throw ValidationError("regression inputs have inconsistent row counts");

    LinearAdjustment out{response, RealMatrix::Zero(q, response.cols()), false};
    if (q == 0) {
        out.solved = true;
        return out;
    }

    const Eigen::VectorXd sw = weights.cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd design(m, q + 1);
    design.col(0) = sw;
    design.rightCols(q) = sw.asDiagonal() * regressors;
    const Eigen::MatrixXd rhs = sw.asDiagonal() * response;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < q + 1)
        return out;

    const Eigen::MatrixXd coef = qr.solve(rhs);
    out.beta = coef.bottomRows(q);
    out.adjusted = response - regressors * out.beta;
    out.solved = true;
    return out;
}

RegressionResult regression_adjust(const RealMatrix& accepted_thetas, std::span<const SummaryVector> summaries,
                                   std::span<const double> mmd2, const SummaryVector& s_obs, const PriorBox& prior,
                                   const RegressionOptions& options)
{
    prior.validate();
    check_theta_shape(accepted_thetas, prior);
    const auto m = static_cast<std::size_t>(accepted_thetas.rows());
    if (summaries.size() != m || mmd2.size() != m)
        throw ValidationError("regression needs one summary and one MMD value per accepted sample");

    RegressionResult result{accepted_thetas, false, {}, {}};
    if (!options.enabled)
        return result;

    const Eigen::Index q = s_obs.values.size();
    std::vector<Eigen::Index> kept;
    std::vector<double> scale;
    for (Eigen::Index c = 0; c < q; ++c) {
        std::vector<double> col(m);
        for (std::size_t i = 0; i < m; ++i) {
            if (summaries[i].values.size() != q)
                throw ValidationError("summary vectors have different lengths");
            col[i] = summaries[i].values[c];
        }
        const double med = median(col);
        for (double& v : col)
            v = std::abs(v - med);
        const double mad = kMadToSd * median(col);
        if (!(mad > 0.0) || !std::isfinite(mad)) {
            result.dropped_coordinates.push_back(static_cast<std::size_t>(c));
            result.warnings.push_back("summary coordinate " + std::to_string(c) +
                                      " has zero median absolute deviation; dropped from the regression");
            continue;
        }
        kept.push_back(c);
        scale.push_back(mad);
    }
    if (kept.empty()) {
        result.fell_back = true;
        result.warnings.push_back("no usable summary coordinates; regression adjustment skipped");
        return result;
    }

    RealMatrix regressors(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < kept.size(); ++k)
            regressors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                (summaries[i].values[kept[k]] - s_obs.values[kept[k]]) / scale[k];

    const LinearAdjustment fit =
        linear_adjust(to_logit_space(accepted_thetas, prior), regressors, epanechnikov_weights(mmd2));
    if (!fit.solved) {
        result.fell_back = true;
        result.warnings.push_back("singular regression design; falling back to rejection samples");
        return result;
    }
    result.adjusted = from_logit_space(fit.adjusted, prior);

    // Extrapolation shows up as adjusted samples landing on the logit clamp.
    const auto half = static_cast<double>(m) / 2.0;
    for (Eigen::Index j = 0; j < accepted_thetas.cols(); ++j) {
        const double tol = kBoundTol * (prior.upper[j] - prior.lower[j]);
        auto at_bound = [&](double v) { return v - prior.lower[j] <= tol || prior.upper[j] - v <= tol; };
        std::size_t moved = 0;
        for (Eigen::Index i = 0; i < accepted_thetas.rows(); ++i)
            if (at_bound(result.adjusted(i, j)) && !at_bound(accepted_thetas(i, j)))
                ++moved;
        if (static_cast<double>(moved) > half)
            result.warnings.push_back(std::to_string(moved) + " of " + std::to_string(m) + " adjusted samples of '" +
                                      prior.names[static_cast<std::size_t>(j)] +
                                      "' were pushed onto a prior bound; the regression is extrapolating");
    }
    return result;
}

RegressionResult regression_adjust(std::span<const Candidate> accepted, const SummaryVector& s_obs,
                                   const PriorBox& prior, const RegressionOptions& options)
{
    if (accepted.empty())
        throw ValidationError("regression needs at least one accepted candidate");
    RealMatrix thetas(static_cast<Eigen::Index>(accepted.size()), accepted.front().theta.size());
    std::vector<SummaryVector> summaries;
    std::vector<double> mmd2;
    for (std::size_t i = 0; i < accepted.size(); ++i) {
        thetas.row(static_cast<Eigen::Index>(i)) = accepted[i].theta.transpose();
        summaries.push_back(accepted[i].summary);
        mmd2.push_back(accepted[i].mmd2);
    }
    return regression_adjust(thetas, summaries, mmd2, s_obs, prior, options);
}

} // namespace chancal
