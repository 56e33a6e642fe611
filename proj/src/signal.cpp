#include "chancal/signal.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include <fftw3.h>

#include "chancal/error.hpp"

namespace chancal {

namespace {

// FFTW planning is not thread-safe; execution of a cached plan on new arrays is.
class PlanCache {
public:
    static PlanCache& instance()
    {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(int n, int sign)
    {
        std::lock_guard lock(mutex_);
        auto key = std::make_pair(n, sign);
        if (auto it = plans_.find(key); it != plans_.end())
            return it->second;
        std::vector<fftw_complex> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
        fftw_plan plan = fftw_plan_dft_1d(n, in.data(), out.data(), sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
        return plan;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache()
    {
        for (auto& [key, plan] : plans_)
            fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::pair<int, int>, fftw_plan> plans_;
};

void dft(const cdouble* in, cdouble* out, std::size_t n, int sign)
{
    fftw_plan plan = PlanCache::instance().get(static_cast<int>(n), sign);
    // std::complex<double> is layout-compatible with fftw_complex.
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cdouble*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
}

bool all_finite(std::span<const cdouble> v)
{
    for (const auto& x : v)
        if (!std::isfinite(x.real()) || !std::isfinite(x.imag()))
            return false;
    return true;
}

} // namespace

FrequencyGrid::FrequencyGrid(std::size_t n_s, double bandwidth_hz, double f_start_hz)
    : n_s_(n_s), bandwidth_hz_(bandwidth_hz),
      delta_f_hz_(bandwidth_hz / static_cast<double>(n_s - 1)), f_start_hz_(f_start_hz)
{
}

FrequencyGrid FrequencyGrid::make(std::size_t n_s, double bandwidth_hz, double f_start_hz)
{
    if (n_s < 2)
        throw ValidationError("frequency grid needs at least 2 points, got " + std::to_string(n_s));
    if (!std::isfinite(bandwidth_hz) || bandwidth_hz <= 0.0)
        throw ValidationError("bandwidth must be finite and positive");
    if (!std::isfinite(f_start_hz) || f_start_hz < 0.0)
        throw ValidationError("start frequency must be finite and non-negative");
    return FrequencyGrid(n_s, bandwidth_hz, f_start_hz);
}

FrequencyGrid FrequencyGrid::measurement_default()
{
    return make(801, 4e9, 58e9);
}

bool FrequencyGrid::compatible_with(const FrequencyGrid& other) const noexcept
{
    return n_s_ == other.n_s_ && bandwidth_hz_ == other.bandwidth_hz_;
}

TransferFunctionDataset::TransferFunctionDataset(FrequencyGrid grid, ComplexMatrix samples)
    : grid_(grid), samples_(std::move(samples))
{
    if (samples_.rows() < 1)
        throw ValidationError("dataset must contain at least one realization");
    if (static_cast<std::size_t>(samples_.cols()) != grid_.n_s())
        throw ValidationError("dataset has " + std::to_string(samples_.cols()) + " frequency points, grid expects " +
                              std::to_string(grid_.n_s()));
    if (!all_finite({samples_.data(), static_cast<std::size_t>(samples_.size())}))
        throw ValidationError("dataset contains non-finite entries");
}

std::span<const cdouble> TransferFunctionDataset::row(std::size_t k) const
{
    return {samples_.data() + k * static_cast<std::size_t>(samples_.cols()), static_cast<std::size_t>(samples_.cols())};
}

TimeDomainSignal to_time_domain(std::span<const cdouble> tf_row, const FrequencyGrid& grid)
{
    if (tf_row.size() != grid.n_s())
        throw ValidationError("transfer function row length does not match the frequency grid");
    if (!all_finite(tf_row))
        throw ValidationError("transfer function row contains non-finite entries");

    const std::size_t n = grid.n_s();
    TimeDomainSignal sig{grid, Eigen::VectorXcd(static_cast<Eigen::Index>(n))};
    dft(tf_row.data(), sig.values.data(), n, FFTW_BACKWARD);
    sig.values /= static_cast<double>(n);
    return sig;
}

Eigen::VectorXcd to_frequency_domain(const TimeDomainSignal& sig)
{
    const std::size_t n = sig.grid.n_s();
    if (static_cast<std::size_t>(sig.values.size()) != n)
        throw ValidationError("time-domain signal length does not match the frequency grid");
    Eigen::VectorXcd out(static_cast<Eigen::Index>(n));
    dft(sig.values.data(), out.data(), n, FFTW_FORWARD);
    return out;
}

Eigen::VectorXd temporal_moments(const TimeDomainSignal& sig, std::size_t i_moments)
{
    if (i_moments < 1)
        throw ValidationError("at least one temporal moment is required");
    const double dt = sig.grid.delay_step_s();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(i_moments));
    for (Eigen::Index k = 0; k < sig.values.size(); ++k) {
        const double t = static_cast<double>(k) * dt;
        double w = std::norm(sig.values[k]) * dt;
        for (std::size_t i = 0; i < i_moments; ++i) {
            m[static_cast<Eigen::Index>(i)] += w;
            w *= t;
        }
    }
    return m;
}

LogMomentMatrix log_moment_matrix(const TransferFunctionDataset& ds, std::size_t i_moments)
{
    if (i_moments < 1)
        throw ValidationError("at least one temporal moment is required");
    LogMomentMatrix out{RealMatrix(static_cast<Eigen::Index>(ds.n_obs()), static_cast<Eigen::Index>(i_moments))};
    for (std::size_t k = 0; k < ds.n_obs(); ++k) {
        const Eigen::VectorXd m = temporal_moments(to_time_domain(ds.row(k), ds.grid()), i_moments);
        for (std::size_t i = 0; i < i_moments; ++i) {
            const double mi = m[static_cast<Eigen::Index>(i)];
            if (!(mi > 0.0))
                throw DegenerateSignalError("realization " + std::to_string(k) + " has non-positive temporal moment m" +
                                                std::to_string(i),
                                            k);
            out.rows(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = std::log(mi);
        }
    }
    return out;
}

Eigen::VectorXd apdp(const TransferFunctionDataset& ds)
{
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.grid().n_s()));
    for (std::size_t k = 0; k < ds.n_obs(); ++k)
        acc += to_time_domain(ds.row(k), ds.grid()).values.cwiseAbs2();
    return acc / static_cast<double>(ds.n_obs());
}

ValidationStats standardized_moments(std::span<const double> m)
{
    if (m.size() < 3)
        throw ValidationError("standardized moments need m0, m1 and m2");
    if (!(m[0] > 0.0))
        throw NumericalError("standardized moments need m0 > 0");
    const double mean_delay = m[1] / m[0];
    double radicand = m[2] / m[0] - mean_delay * mean_delay;
    if (radicand < 0.0) {
        // Relative to the scale of m2/m0 so the tolerance is unit-free.
        const double scale = std::max(std::abs(m[2] / m[0]), 1e-300);
        if (radicand < -1e-12 * scale)
            throw NumericalError("negative rms delay spread radicand");
        radicand = 0.0;
    }
    return {m[0], mean_delay, std::sqrt(radicand)};
}

std::vector<ValidationStats> realization_stats(const TransferFunctionDataset& ds)
{
    std::vector<ValidationStats> out;
    out.reserve(ds.n_obs());
    for (std::size_t k = 0; k < ds.n_obs(); ++k) {
        const Eigen::VectorXd m = temporal_moments(to_time_domain(ds.row(k), ds.grid()), 3);
        out.push_back(standardized_moments({m.data(), 3}));
    }
    return out;
}

double snr_db(double mean_m0_noiseless, double bandwidth_hz, double sigma_w2)
{
    if (!(mean_m0_noiseless > 0.0) || !(bandwidth_hz > 0.0) || !(sigma_w2 > 0.0))
        throw ValidationError("SNR needs positive m0, bandwidth and noise variance");
    return 10.0 * std::log10(mean_m0_noiseless * bandwidth_hz / sigma_w2);
}

} // namespace chancal
