#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "chancal/io.hpp"
#include "chancal/mmd.hpp"

namespace chancal {

// Environment variable holding the worker count for candidate evaluation.
inline constexpr const char* kWorkersEnv = "CHANCAL_WORKERS";

// Parses CHANCAL_WORKERS; falls back to the hardware thread count when unset.
std::size_t workers_from_env();

// Two significant digits in the style "4.7e-8 (4.6e-9)" or "0.50 (0.019)".
std::string format_estimate(double mean, double sd);

// Sorted values paired with the empirical cdf i / n, i = 1..n.
std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values);

// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
double ks_distance(std::vector<double> a, std::vector<double> b);

struct SimulateReport {
    std::uint64_t seed = 0;
    std::size_t rows = 0;
    std::vector<double> theta;
};

// theta defaults to the prior midpoint. Writes the dataset and its sidecar;
// the sidecar also records model, theta and seed.
SimulateReport cmd_simulate(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

// Writes posterior_t<k>.csv after every iteration, then diagnostics.json,
// estimate.json and config.json. A failing iteration keeps everything written
// before it; the failure is reported in diagnostics.json and the result.
PmcResult cmd_calibrate(const RunConfig& config, const std::filesystem::path& data, const std::filesystem::path& out_dir,
                        std::ostream& log);

// Lengthscale from the log moments of `a` by the median heuristic.
Mmd2Estimate cmd_mmd(const std::filesystem::path& a, const std::filesystem::path& b, std::size_t i_moments);

struct ValidateReport {
    std::vector<double> theta; // posterior mean used for the model simulation
    double ks_p0 = 0.0;
    double ks_mean_delay = 0.0;
    double ks_rms_delay_spread = 0.0;
};

// Simulates n_obs realizations at the posterior mean and writes apdp.csv
// (delay_s, data_db, model_db), cdf_p0_db.csv, cdf_mean_delay_s.csv,
// cdf_rms_delay_spread_s.csv (source, value, cdf) and validation.json.
ValidateReport cmd_validate(const RunConfig& config, const std::filesystem::path& data,
                            const std::filesystem::path& posterior, const std::filesystem::path& out_dir, std::ostream& log);

// Exit codes: 0 success, 2 validation error (bad flags, files, configs),
// 3 numerical or degeneracy error, 1 anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace chancal
