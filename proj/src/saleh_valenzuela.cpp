#include "chancal/saleh_valenzuela.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "chancal/error.hpp"

namespace chancal {

namespace {

constexpr std::size_t kLanes = 8;
// Phasors are advanced by complex multiplication and re-anchored with an exact
// exp() every kAnchor frequency steps to bound rounding drift.
constexpr std::size_t kAnchor = 64;

void require_positive(double v, const char* name)
{
    if (!std::isfinite(v) || v <= 0.0)
        throw ValidationError(std::string("S-V parameter ") + name + " must be finite and positive");
}

} // namespace

SalehValenzuelaParams SalehValenzuelaParams::from_vector(std::span<const double> theta)
{
    if (theta.size() != 6)
        throw ValidationError("S-V model takes 6 parameters [Q, Lambda, lambda, Gamma, gamma, sigma_w2], got " +
                              std::to_string(theta.size()));
    SalehValenzuelaParams p{theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]};
    p.validate();
    return p;
}

std::vector<double> SalehValenzuelaParams::to_vector() const
{
    return {q, big_lambda, small_lambda, big_gamma, small_gamma, sigma_w2};
}

void SalehValenzuelaParams::validate() const
{
    require_positive(q, "Q");
    require_positive(big_lambda, "Lambda");
    require_positive(small_lambda, "lambda");
    require_positive(big_gamma, "Gamma");
    require_positive(small_gamma, "gamma");
    if (!std::isfinite(sigma_w2) || sigma_w2 < 0.0)
        throw ValidationError("S-V noise variance must be finite and non-negative");
}

std::vector<MultipathComponent> sample_sv_components(const SalehValenzuelaParams& params, double t_max_s, Rng& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::poisson_distribution<long> n_clusters_dist(params.big_lambda * t_max_s);
    const long n_clusters = n_clusters_dist(rng);
    std::vector<double> onsets(static_cast<std::size_t>(n_clusters));
    for (auto& t : onsets)
        t = unit(rng) * t_max_s;
    std::sort(onsets.begin(), onsets.end());

    std::vector<MultipathComponent> out;
    std::vector<double> offsets;
    for (std::size_t l = 0; l < onsets.size(); ++l) {
        const double onset = onsets[l];
        const double window = t_max_s - onset;
        std::poisson_distribution<long> n_rays_dist(params.small_lambda * window);
        const long n_rays = n_rays_dist(rng);

        offsets.assign(1, 0.0);
        for (long k = 0; k < n_rays; ++k)
            offsets.push_back(unit(rng) * window);
        std::sort(offsets.begin() + 1, offsets.end());

        const double cluster_power = params.q * std::exp(-onset / params.big_gamma);
        for (std::size_t k = 0; k < offsets.size(); ++k) {
            const double var = cluster_power * std::exp(-offsets[k] / params.small_gamma);
            const double sd = std::sqrt(var / 2.0);
            const double re = normal(rng) * sd;
            const double im = normal(rng) * sd;
            out.push_back({onset + offsets[k], cdouble(re, im), l, onset, k == 0});
        }
    }
    return out;
}

void synthesize_transfer_function(std::span<const MultipathComponent> components, const FrequencyGrid& grid,
                                  std::span<cdouble> out)
{
    const std::size_t n_s = grid.n_s();
    if (out.size() != n_s)
        throw ValidationError("output length does not match the frequency grid");

    // Structure-of-arrays, padded to whole lanes with zero-gain entries.
    const std::size_t n_paths = components.size();
    const std::size_t padded = (n_paths + kLanes - 1) / kLanes * kLanes;
    std::vector<double> wr(padded, 0.0), wi(padded, 0.0), zr(padded, 1.0), zi(padded, 0.0);
    const double two_pi_df = 2.0 * std::numbers::pi * grid.delta_f_hz();
    for (std::size_t p = 0; p < n_paths; ++p) {
        const cdouble z = std::polar(1.0, -two_pi_df * components[p].delay_s);
        zr[p] = z.real();
        zi[p] = z.imag();
    }

    for (std::size_t n = 0; n < n_s; ++n) {
        if (n % kAnchor == 0) {
            for (std::size_t p = 0; p < n_paths; ++p) {
                const cdouble w = components[p].gain *
                                  std::polar(1.0, -two_pi_df * static_cast<double>(n) * components[p].delay_s);
                wr[p] = w.real();
                wi[p] = w.imag();
            }
        }
        std::array<double, kLanes> acc_r{}, acc_i{};
        for (std::size_t b = 0; b < padded; b += kLanes) {
            for (std::size_t l = 0; l < kLanes; ++l) {
                const std::size_t p = b + l;
                acc_r[l] += wr[p];
                acc_i[l] += wi[p];
                const double nr = wr[p] * zr[p] - wi[p] * zi[p];
                const double ni = wr[p] * zi[p] + wi[p] * zr[p];
                wr[p] = nr;
                wi[p] = ni;
            }
        }
        double hr = 0.0, hi = 0.0;
        for (std::size_t l = 0; l < kLanes; ++l) {
            hr += acc_r[l];
            hi += acc_i[l];
        }
        out[n] = cdouble(hr, hi);
    }
}

TransferFunctionDataset simulate_sv(const SalehValenzuelaParams& params, std::size_t n_realizations,
                                    const FrequencyGrid& grid, std::uint64_t seed, const SvOptions& options)
{
    params.validate();
    if (n_realizations < 1)
        throw ValidationError("at least one realization is required");
    const double t_max = grid.t_max_s();
    const double expected_paths = params.big_lambda * params.small_lambda * t_max * t_max;
    if (expected_paths > options.max_expected_paths)
        throw ResourceGuardError("S-V expected path count " + std::to_string(expected_paths) + " exceeds the cap " +
                                 std::to_string(options.max_expected_paths));

    const auto n_s = static_cast<Eigen::Index>(grid.n_s());
    ComplexMatrix h(static_cast<Eigen::Index>(n_realizations), n_s);
    Rng rng(derive_seed(seed, 0));
    for (std::size_t k = 0; k < n_realizations; ++k) {
        const auto components = sample_sv_components(params, t_max, rng);
        synthesize_transfer_function(components, grid, {h.row(static_cast<Eigen::Index>(k)).data(), grid.n_s()});
    }
    return TransferFunctionDataset(grid, add_noise(h, params.sigma_w2, derive_seed(seed, 1)));
}

std::vector<std::string> SalehValenzuelaModel::parameter_names() const
{
    return {"Q", "Lambda", "lambda", "Gamma", "gamma", "sigma_w2"};
}

TransferFunctionDataset SalehValenzuelaModel::simulate(std::span<const double> theta, std::size_t n_realizations,
                                                       const FrequencyGrid& grid, std::uint64_t seed) const
{
    return simulate_sv(SalehValenzuelaParams::from_vector(theta), n_realizations, grid, seed, options_);
}

} // namespace chancal
