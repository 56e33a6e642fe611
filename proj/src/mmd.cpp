#include "chancal/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "chancal/error.hpp"

namespace chancal {

namespace {

double squared_distance(const double* a, const double* b, Eigen::Index d)
{
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

// sum_{i != i'} k(x_i, x_i'), using symmetry.
double self_sum(const RealMatrix& X, double inv_l2)
{
    const Eigen::Index n = X.rows(), d = X.cols();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double row = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j)
            row += std::exp(-squared_distance(X.row(i).data(), X.row(j).data(), d) * inv_l2);
        total += row;
    }
    return 2.0 * total;
}

double cross_sum(const RealMatrix& X, const RealMatrix& Y, double inv_l2)
{
    const Eigen::Index d = X.cols();
    double total = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < Y.rows(); ++j)
            row += std::exp(-squared_distance(X.row(i).data(), Y.row(j).data(), d) * inv_l2);
        total += row;
    }
    return total;
}

double self_term(const RealMatrix& X, double inv_l2)
{
    const double n = static_cast<double>(X.rows());
    return self_sum(X, inv_l2) / (n * (n - 1.0));
}

// Strict weak order on point sets: size first, then lexicographic data.
bool canonically_before(const RealMatrix& a, const RealMatrix& b)
{
    if (a.rows() != b.rows())
        return a.rows() < b.rows();
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

void check_pair(const RealMatrix& X, const RealMatrix& Y)
{
    if (X.rows() < 2 || Y.rows() < 2)
        throw ValidationError("MMD estimate needs at least 2 points on each side, got " + std::to_string(X.rows()) +
                              " and " + std::to_string(Y.rows()));
    if (X.cols() != Y.cols())
        throw ValidationError("MMD point sets have different dimensions");
}

} // namespace

Lengthscale::Lengthscale(double l) : l_(l)
{
    if (!std::isfinite(l) || l <= 0.0)
        throw ValidationError("lengthscale must be finite and positive");
}

double se_kernel(std::span<const double> x, std::span<const double> x2, Lengthscale l)
{
    if (x.size() != x2.size())
        throw ValidationError("kernel arguments have different dimensions");
    const double d2 = squared_distance(x.data(), x2.data(), static_cast<Eigen::Index>(x.size()));
    return std::exp(-d2 / (l.value() * l.value()));
}

RealMatrix gram_matrix(const RealMatrix& X, Lengthscale l)
{
    const Eigen::Index n = X.rows();
    const double inv_l2 = 1.0 / (l.value() * l.value());
    RealMatrix K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j)
            K(i, j) = K(j, i) = std::exp(-squared_distance(X.row(i).data(), X.row(j).data(), X.cols()) * inv_l2);
    }
    return K;
}

Lengthscale median_heuristic(const RealMatrix& X)
{
    const Eigen::Index n = X.rows();
    if (n < 2)
        throw ValidationError("median heuristic needs at least 2 points");
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            d2.push_back(squared_distance(X.row(i).data(), X.row(j).data(), X.cols()));

    const std::size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
    double med = d2[mid];
    if (d2.size() % 2 == 0) {
        const double lower = *std::max_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (lower + med);
    }
    if (!(med > 0.0))
        throw DegenerateDataError("median pairwise distance is zero; all points coincide");
    return Lengthscale(std::sqrt(med / 2.0));
}

Mmd2Estimate mmd2_unbiased(const RealMatrix& X, const RealMatrix& Y, Lengthscale l)
{
    check_pair(X, Y);
    const bool swap = canonically_before(Y, X);
    const RealMatrix& A = swap ? Y : X;
    const RealMatrix& B = swap ? X : Y;

    const double inv_l2 = 1.0 / (l.value() * l.value());
    const double na = static_cast<double>(A.rows()), nb = static_cast<double>(B.rows());
    const double value = self_term(A, inv_l2) - 2.0 * cross_sum(A, B, inv_l2) / (na * nb) + self_term(B, inv_l2);
    return {value, static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(Y.rows()), l};
}

double mmd2_gaussian_closed_form(double mu1, double sigma1, double mu2, double sigma2, Lengthscale l)
{
    if (!(sigma1 >= 0.0) || !(sigma2 >= 0.0))
        throw ValidationError("standard deviations must be non-negative");
    if (!std::isfinite(mu1) || !std::isfinite(mu2))
        throw ValidationError("means must be finite");
    const double L2 = l.value() * l.value();
    const double dm = mu1 - mu2;
    const double cross = L2 + 2.0 * sigma1 * sigma1 + 2.0 * sigma2 * sigma2;
    return std::sqrt(L2 / (L2 + 4.0 * sigma1 * sigma1)) + std::sqrt(L2 / (L2 + 4.0 * sigma2 * sigma2)) -
           2.0 * std::sqrt(L2 / cross) * std::exp(-dm * dm / cross);
}

Mmd2Estimate mmd2_transfer_functions(const TransferFunctionDataset& a, const TransferFunctionDataset& b,
                                     std::size_t i_moments, Lengthscale l)
{
    if (!a.grid().compatible_with(b.grid()))
        throw ValidationError("datasets are sampled on different frequency grids");
    return mmd2_unbiased(log_moment_matrix(a, i_moments).rows, log_moment_matrix(b, i_moments).rows, l);
}

MmdReference::MmdReference(RealMatrix observed, Lengthscale l)
    : observed_(std::move(observed)), l_(l), self_term_(0.0)
{
    if (observed_.rows() < 2)
        throw ValidationError("MMD reference needs at least 2 observed points");
    self_term_ = self_term(observed_, 1.0 / (l_.value() * l_.value()));
}

Mmd2Estimate MmdReference::estimate(const RealMatrix& simulated) const
{
    check_pair(simulated, observed_);
    const double inv_l2 = 1.0 / (l_.value() * l_.value());
    const double ns = static_cast<double>(simulated.rows()), no = static_cast<double>(observed_.rows());
    const double value = self_term(simulated, inv_l2) - 2.0 * cross_sum(simulated, observed_, inv_l2) / (ns * no) + self_term_;
    return {value, static_cast<std::size_t>(simulated.rows()), static_cast<std::size_t>(observed_.rows()), l_};
}

} // namespace chancal
