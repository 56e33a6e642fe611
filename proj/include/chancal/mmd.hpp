#pragma once

#include <cstddef>
#include <span>

#include "chancal/signal.hpp"

namespace chancal {

// Lengthscale of the squared-exponential kernel; always finite and > 0.
class Lengthscale {
public:
    explicit Lengthscale(double l);
    double value() const noexcept { return l_; }

private:
    double l_;
};

struct Mmd2Estimate {
    double value;       // may be negative
    std::size_t n_x;
    std::size_t n_y;
    Lengthscale lengthscale;
};

// exp(-||x - x2||^2 / l^2)
double se_kernel(std::span<const double> x, std::span<const double> x2, Lengthscale l);

// Gram matrix of se_kernel over the rows of X.
RealMatrix gram_matrix(const RealMatrix& X, Lengthscale l);

/// l = sqrt(med / 2), med the median squared distance over all pairs i < j.
/// For an even number of pairs the median is the mean of the two middle values.
/// Throws DegenerateDataError when med == 0.
Lengthscale median_heuristic(const RealMatrix& X);

/// Unbiased MMD^2 estimate between the row sets X and Y.
///
/// Kernel sums are accumulated row by row without materialising the Gram
/// matrices, so memory stays O(N_X + N_Y). The arguments are put into a
/// canonical order before summation, which makes the result bit-identical
/// under swapping X and Y.
Mmd2Estimate mmd2_unbiased(const RealMatrix& X, const RealMatrix& Y, Lengthscale l);

// Population MMD^2 between N(mu1, sigma1^2) and N(mu2, sigma2^2) under se_kernel.
double mmd2_gaussian_closed_form(double mu1, double sigma1, double mu2, double sigma2, Lengthscale l);

// MMD^2 between two transfer-function datasets under the kernel
// k_Y(y, y') = se_kernel(A_I(y), A_I(y')), A_I the log-moment map. Evaluated
// through the log moments, which is the same estimator by construction.
Mmd2Estimate mmd2_transfer_functions(const TransferFunctionDataset& a, const TransferFunctionDataset& b,
                                     std::size_t i_moments, Lengthscale l);

// Observed point set with its kernel self-sum cached; used to score many
// simulated sets against the same observations with a frozen lengthscale.
class MmdReference {
public:
    MmdReference(RealMatrix observed, Lengthscale l);

    Mmd2Estimate estimate(const RealMatrix& simulated) const;

    const RealMatrix& observed() const noexcept { return observed_; }
    Lengthscale lengthscale() const noexcept { return l_; }

private:
    RealMatrix observed_;
    Lengthscale l_;
    double self_term_;
};

} // namespace chancal
