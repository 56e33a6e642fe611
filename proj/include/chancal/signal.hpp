#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace chancal {

using cdouble = std::complex<double>;
using ComplexMatrix = Eigen::Matrix<cdouble, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Equidistant frequency grid of a VNA-style sweep. Only n_s and delta_f enter
// the time-domain transform; f_start is kept for the physical models.
class FrequencyGrid {
public:
    static FrequencyGrid make(std::size_t n_s, double bandwidth_hz, double f_start_hz = 0.0);

    // 801 points over 58-62 GHz: delta_f = 5 MHz, t_max = 200 ns.
    static FrequencyGrid measurement_default();

    std::size_t n_s() const noexcept { return n_s_; }
    double bandwidth_hz() const noexcept { return bandwidth_hz_; }
    double delta_f_hz() const noexcept { return delta_f_hz_; }
    double t_max_s() const noexcept { return 1.0 / delta_f_hz_; }
    double f_start_hz() const noexcept { return f_start_hz_; }

    double frequency_hz(std::size_t n) const noexcept { return f_start_hz_ + static_cast<double>(n) * delta_f_hz_; }
    double delay_s(std::size_t k) const noexcept { return static_cast<double>(k) * t_max_s() / static_cast<double>(n_s_); }
    double delay_step_s() const noexcept { return t_max_s() / static_cast<double>(n_s_); }

    // Same sampling (n_s and bandwidth); f_start may differ.
    bool compatible_with(const FrequencyGrid& other) const noexcept;
    bool operator==(const FrequencyGrid&) const = default;

private:
    FrequencyGrid(std::size_t n_s, double bandwidth_hz, double f_start_hz);

    std::size_t n_s_;
    double bandwidth_hz_;
    double delta_f_hz_;
    double f_start_hz_;
};

// N_obs x N_s complex transfer-function samples, one realization per row.
class TransferFunctionDataset {
public:
    TransferFunctionDataset(FrequencyGrid grid, ComplexMatrix samples);

    const FrequencyGrid& grid() const noexcept { return grid_; }
    const ComplexMatrix& samples() const noexcept { return samples_; }
    std::size_t n_obs() const noexcept { return static_cast<std::size_t>(samples_.rows()); }
    std::span<const cdouble> row(std::size_t k) const;

private:
    FrequencyGrid grid_;
    ComplexMatrix samples_;
};

struct TimeDomainSignal {
    FrequencyGrid grid;
    Eigen::VectorXcd values; // y(t_k), t_k = k * t_max / N_t with N_t = N_s
};

// Log temporal moments, one row z_k = [ln m0, ..., ln m_{I-1}] per realization.
struct LogMomentMatrix {
    RealMatrix rows;

    std::size_t i_moments() const noexcept { return static_cast<std::size_t>(rows.cols()); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(rows.rows()); }
};

struct ValidationStats {
    double p0 = 0.0;
    double mean_delay_s = 0.0;
    double rms_delay_spread_s = 0.0;
};

// y(t_k) = (1/N_s) sum_n Y_n exp(j 2 pi n delta_f t_k) on N_t = N_s uniform delays in [0, t_max).
TimeDomainSignal to_time_domain(std::span<const cdouble> tf_row, const FrequencyGrid& grid);

// Inverse of to_time_domain on the same grid.
Eigen::VectorXcd to_frequency_domain(const TimeDomainSignal& sig);

// m_i = int_0^t_max t^i |y(t)|^2 dt for i = 0..I-1, left Riemann sum with dt = t_max / N_t.
Eigen::VectorXd temporal_moments(const TimeDomainSignal& sig, std::size_t i_moments);

/// Maps every realization of the dataset to its log temporal moments.
/// Throws DegenerateSignalError naming the first row with a non-positive moment.
LogMomentMatrix log_moment_matrix(const TransferFunctionDataset& ds, std::size_t i_moments);

// Averaged power delay profile: mean over realizations of |y(t_k)|^2.
Eigen::VectorXd apdp(const TransferFunctionDataset& ds);

// Received power, mean delay and rms delay spread from m0, m1, m2.
ValidationStats standardized_moments(std::span<const double> m);

// Per-realization standardized moments of a dataset.
std::vector<ValidationStats> realization_stats(const TransferFunctionDataset& ds);

double snr_db(double mean_m0_noiseless, double bandwidth_hz, double sigma_w2);

} // namespace chancal
