#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chancal/channel_model.hpp"
#include "chancal/mmd.hpp"
#include "chancal/signal.hpp"

namespace chancal {

// Uniform prior on a box; integer-masked dimensions stay real-valued in the
// engine and are rounded by the simulator.
struct PriorBox {
    std::vector<std::string> names;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    std::vector<bool> integer_mask;

    std::size_t size() const noexcept { return static_cast<std::size_t>(lower.size()); }
    void validate() const;
    bool contains(std::span<const double> theta) const;
    double log_density(std::span<const double> theta) const;

    static PriorBox saleh_valenzuela_default();
    static PriorBox propagation_graph_default();
};

// I sample means of z followed by the I(I+1)/2 upper-triangular entries of
// the unbiased sample covariance, row by row: (0,0), (0,1), ..., (1,1), ...
struct SummaryVector {
    Eigen::VectorXd values;

    static std::size_t length_for(std::size_t i_moments) noexcept { return (i_moments * i_moments + 3 * i_moments) / 2; }
};

struct Candidate {
    std::size_t index = 0;
    Eigen::VectorXd theta;
    LogMomentMatrix log_moments;
    SummaryVector summary;
    double mmd2 = 0.0;
};

struct MisspecificationReport {
    bool misspecified = false;
    std::vector<bool> outside; // per summary coordinate
};

struct WeightedPopulation {
    std::size_t iteration = 0;
    RealMatrix thetas_accepted;  // draws that passed rejection, before adjustment
    RealMatrix thetas_adjusted;  // M_eps x p
    Eigen::VectorXd weights;     // sums to 1
    Eigen::VectorXd sigma_diag;  // proposal variances, 2 x empirical variance of the adjusted samples
    Eigen::VectorXd mmd2;        // MMD^2 of the accepted candidates
    bool misspecified = false;
};

RealMatrix sample_prior(const PriorBox& prior, std::size_t m, std::uint64_t seed);

SummaryVector summarize(const LogMomentMatrix& z);

// The m_eps candidates with smallest MMD^2, ties broken by candidate index.
std::vector<Candidate> rejection_select(std::span<const Candidate> candidates, std::size_t m_eps);

MisspecificationReport detect_misspecification(std::span<const SummaryVector> all_summaries, const SummaryVector& s_obs);

// Mode of a product-Gaussian KDE (Silverman bandwidth per dimension),
// searched over the sample points themselves.
Eigen::VectorXd kde_mode(const RealMatrix& thetas);

// --- regression adjustment -------------------------------------------------

// 1 - (delta / delta_max)^2 with delta_max the largest value; 1 for delta <= 0.
Eigen::VectorXd epanechnikov_weights(std::span<const double> mmd2);

// Elementwise logit of the position inside the prior box, clamped 1e-9 from the edges.
RealMatrix to_logit_space(const RealMatrix& thetas, const PriorBox& prior);
RealMatrix from_logit_space(const RealMatrix& phis, const PriorBox& prior);

struct LinearAdjustment {
    RealMatrix adjusted;  // response - regressors * beta
    RealMatrix beta;      // q x p
    bool solved = false;  // false: design was rank deficient and beta = 0 was used
};

/// Weighted least squares of each response column on [1, regressors]
/// followed by the linear correction. `regressors` holds s_i - s_obs.
LinearAdjustment linear_adjust(const RealMatrix& response, const RealMatrix& regressors, const Eigen::VectorXd& weights);

struct RegressionOptions {
    bool enabled = true; // false forces beta = 0, i.e. plain rejection ABC
};

struct RegressionResult {
    RealMatrix adjusted;
    bool fell_back = false;
    std::vector<std::size_t> dropped_coordinates; // summary coordinates with zero MAD
    std::vector<std::string> warnings;
};

RegressionResult regression_adjust(const RealMatrix& accepted_thetas, std::span<const SummaryVector> summaries,
                                   std::span<const double> mmd2, const SummaryVector& s_obs, const PriorBox& prior,
                                   const RegressionOptions& options = {});
RegressionResult regression_adjust(std::span<const Candidate> accepted, const SummaryVector& s_obs,
                                   const PriorBox& prior, const RegressionOptions& options = {});

// --- population Monte Carlo ------------------------------------------------

Eigen::VectorXd proposal_variances(const RealMatrix& adjusted, const PriorBox& prior);

RealMatrix pmc_propose(const WeightedPopulation& prev, std::size_t m, const PriorBox& prior, std::uint64_t seed);

// w_j proportional to p(theta_j) / sum_i w_i phi(theta_j; theta~_i, Sigma), with
// phi the unnormalised box-truncated Gaussian kernel. Normalised to sum 1.
Eigen::VectorXd pmc_weights(const RealMatrix& current, const WeightedPopulation& prev, const PriorBox& prior);

Eigen::VectorXd posterior_mean(const WeightedPopulation& pop);
Eigen::VectorXd posterior_std(const WeightedPopulation& pop);

struct PmcConfig {
    std::size_t m = 2000;
    std::size_t m_eps = 100;
    std::size_t t_iterations = 10;
    std::size_t n_sim = 100;
    std::size_t i_moments = 4;
    std::uint64_t seed = 1;
    bool regression = true;
    std::size_t workers = 1;

    void validate() const;
};

struct RunDiagnostics {
    double lengthscale = 0.0;
    SummaryVector s_obs;
    MisspecificationReport misspecification;
    std::vector<SummaryVector> s_obs_used; // per iteration
    std::vector<double> iteration_seconds;
    std::vector<std::string> warnings;
};

struct RunFailure {
    std::size_t iteration = 0;
    std::string message;
    bool numerical = true;
};

struct PmcResult {
    std::vector<WeightedPopulation> populations;
    RunDiagnostics diagnostics;
    std::optional<RunFailure> failure; // populations hold everything before the failing iteration
};

using IterationCallback = std::function<void(const WeightedPopulation&)>;

/// Population Monte Carlo ABC with MMD rejection and regression adjustment.
/// The lengthscale comes from the observed log moments and stays fixed.
/// Misspecification is checked on the first-iteration summaries; when flagged,
/// s_obs is replaced every iteration by the summary of a simulation at the
/// KDE mode of the accepted draws.
PmcResult run_pmc_abc(const ChannelModel& model, const TransferFunctionDataset& observed, const PriorBox& prior,
                      const PmcConfig& config, const IterationCallback& on_iteration = {});

} // namespace chancal
