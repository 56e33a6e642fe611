#include <cmath>
#include <limits>
#include <random>

#include "chancal/abc.hpp"
#include "chancal/error.hpp"
#include "chancal/random.hpp"

namespace chancal {

void PriorBox::validate() const
{
    const auto p = lower.size();
    if (p < 1)
        throw ValidationError("prior box needs at least one parameter");
    if (upper.size() != p || names.size() != static_cast<std::size_t>(p) || integer_mask.size() != static_cast<std::size_t>(p))
        throw ValidationError("prior box fields have inconsistent lengths");
    for (Eigen::Index j = 0; j < p; ++j)
        if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]) || !(lower[j] < upper[j]))
            throw ValidationError("prior bounds for '" + names[static_cast<std::size_t>(j)] + "' must be finite with lower < upper");
}

bool PriorBox::contains(std::span<const double> theta) const
{
    if (theta.size() != size())
        return false;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        if (!(theta[j] >= lower[jj] && theta[j] <= upper[jj]))
            return false;
    }
    return true;
}

double PriorBox::log_density(std::span<const double> theta) const
{
    if (!contains(theta))
        return -std::numeric_limits<double>::infinity();
    return -(upper - lower).array().log().sum();
}

PriorBox PriorBox::saleh_valenzuela_default()
{
    PriorBox prior;
    prior.names = {"Q", "Lambda", "lambda", "Gamma", "gamma", "sigma_w2"};
    prior.lower.resize(6);
    prior.upper.resize(6);
    prior.lower << 1e-9, 5e6, 5e-9, 5e-9, 5e-10, 2e-10;
    prior.upper << 1e-7, 1e8, 3e9, 5e-8, 5e-9, 2e-9;
    prior.integer_mask.assign(6, false);
    return prior;
}

PriorBox PriorBox::propagation_graph_default()
{
    PriorBox prior;
    prior.names = {"g", "N_scat", "P_vis", "sigma_w2"};
    prior.lower.resize(4);
    prior.upper.resize(4);
    prior.lower << 0.0, 5.0, 0.0, 2e-10;
    prior.upper << 1.0, 35.0, 1.0, 2e-9;
    prior.integer_mask = {false, true, false, false};
    return prior;
}

RealMatrix sample_prior(const PriorBox& prior, std::size_t m, std::uint64_t seed)
{
    prior.validate();
    if (m < 1)
        throw ValidationError("prior sample size must be at least 1");
    const auto p = static_cast<Eigen::Index>(prior.size());
    RealMatrix out(static_cast<Eigen::Index>(m), p);
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            out(i, j) = prior.lower[j] + unit(rng) * (prior.upper[j] - prior.lower[j]);
    return out;
}

} // namespace chancal
