#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <string>
#include <thread>

#include "chancal/abc.hpp"
#include "chancal/error.hpp"
#include "chancal/random.hpp"

namespace chancal {

namespace {

constexpr std::size_t kMaxProposalAttempts = 10'000; // acceptance rate floor of 1e-4
constexpr double kMinRelativeSd = 1e-9;

// Stream tags kept far from candidate indices.
constexpr std::uint64_t kPriorStream = 1ull << 40;
constexpr std::uint64_t kProposalStream = 2ull << 40;
constexpr std::uint64_t kPseudoObservedStream = 3ull << 40;

std::vector<Candidate> evaluate_candidates(const ChannelModel& model, const RealMatrix& thetas,
                                           const FrequencyGrid& grid, const PmcConfig& config,
                                           const MmdReference& reference, std::size_t iteration)
{
    const auto m = static_cast<std::size_t>(thetas.rows());
    std::vector<Candidate> out(m);
    std::vector<std::exception_ptr> errors(m);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t i = next++; i < m; i = next++) {
            try {
                Candidate& c = out[i];
                c.index = i;
                c.theta = thetas.row(static_cast<Eigen::Index>(i)).transpose();
                const auto ds = model.simulate({c.theta.data(), static_cast<std::size_t>(c.theta.size())}, config.n_sim,
                                               grid, derive_seed(config.seed, iteration, i));
                c.log_moments = log_moment_matrix(ds, config.i_moments);
                c.mmd2 = reference.estimate(c.log_moments.rows).value;
                c.summary = summarize(c.log_moments);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    const std::size_t workers = std::min(config.workers, m);
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work);
    }
    // Lowest failing index wins, independent of scheduling.
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

RealMatrix thetas_of(const std::vector<Candidate>& cs)
{
    RealMatrix out(static_cast<Eigen::Index>(cs.size()), cs.front().theta.size());
    for (std::size_t i = 0; i < cs.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = cs[i].theta.transpose();
    return out;
}

} // namespace

void PmcConfig::validate() const
{
    if (m < 1)
        throw ValidationError("M must be at least 1");
    if (m_eps < 2 || m_eps > m)
        throw ValidationError("M_eps must satisfy 2 <= M_eps <= M");
    if (t_iterations < 1)
        throw ValidationError("at least one iteration is required");
    if (n_sim < 2)
        throw ValidationError("N_sim must be at least 2");
    if (i_moments < 1)
        throw ValidationError("at least one temporal moment is required");
    if (workers < 1)
        throw ValidationError("worker count must be at least 1");
}

Eigen::VectorXd proposal_variances(const RealMatrix& adjusted, const PriorBox& prior)
{
    const Eigen::Index p = adjusted.cols();
    const auto n = static_cast<double>(adjusted.rows());
    Eigen::VectorXd var(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double floor_sd = kMinRelativeSd * (prior.upper[j] - prior.lower[j]);
        double v = 0.0;
        if (adjusted.rows() > 1) {
            const double mean = adjusted.col(j).mean();
            v = 2.0 * (adjusted.col(j).array() - mean).square().sum() / (n - 1.0);
        }
        var[j] = std::max(v, floor_sd * floor_sd);
    }
    return var;
}

RealMatrix pmc_propose(const WeightedPopulation& prev, std::size_t m, const PriorBox& prior, std::uint64_t seed)
{
    prior.validate();
    const Eigen::Index p = prev.thetas_adjusted.cols();
    if (static_cast<std::size_t>(p) != prior.size() || prev.sigma_diag.size() != p ||
        prev.weights.size() != prev.thetas_adjusted.rows())
        throw ValidationError("population does not match the prior dimensions");

    Rng rng(seed);
    std::discrete_distribution<std::size_t> pick(prev.weights.data(), prev.weights.data() + prev.weights.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::VectorXd sd = prev.sigma_diag.cwiseSqrt();

    RealMatrix out(static_cast<Eigen::Index>(m), p);
    Eigen::VectorXd theta(p);
    for (std::size_t i = 0; i < m; ++i) {
        const auto j = static_cast<Eigen::Index>(pick(rng));
        std::size_t attempts = 0;
        for (;;) {
            for (Eigen::Index k = 0; k < p; ++k)
                theta[k] = prev.thetas_adjusted(j, k) + sd[k] * normal(rng);
            if (prior.contains({theta.data(), static_cast<std::size_t>(p)}))
                break;
            if (++attempts >= kMaxProposalAttempts)
                throw StuckProposalError("proposal kernel keeps leaving the prior box (acceptance rate below 1e-4)");
        }
        out.row(static_cast<Eigen::Index>(i)) = theta.transpose();
    }
    return out;
}

Eigen::VectorXd pmc_weights(const RealMatrix& current, const WeightedPopulation& prev, const PriorBox& prior)
{
    const Eigen::Index p = current.cols();
    if (prev.thetas_adjusted.cols() != p || prev.sigma_diag.size() != p ||
        prev.weights.size() != prev.thetas_adjusted.rows())
        throw ValidationError("population does not match the current parameter dimensions");

    const double neg_inf = -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd inv_var = prev.sigma_diag.cwiseInverse();
    Eigen::VectorXd log_w(current.rows());
    std::vector<double> terms(static_cast<std::size_t>(prev.thetas_adjusted.rows()));

    for (Eigen::Index j = 0; j < current.rows(); ++j) {
        const double lp = prior.log_density({current.row(j).data(), static_cast<std::size_t>(p)});
        if (lp == neg_inf) {
            log_w[j] = neg_inf; // outside R: the indicator in phi also vanishes
            continue;
        }
        double max_term = neg_inf;
        for (Eigen::Index i = 0; i < prev.thetas_adjusted.rows(); ++i) {
            double q = 0.0;
            for (Eigen::Index k = 0; k < p; ++k) {
                const double d = current(j, k) - prev.thetas_adjusted(i, k);
                q += d * d * inv_var[k];
            }
            const double wi = prev.weights[i];
            const double t = wi > 0.0 ? std::log(wi) - 0.5 * q : neg_inf;
            terms[static_cast<std::size_t>(i)] = t;
            max_term = std::max(max_term, t);
        }
        if (max_term == neg_inf) {
            log_w[j] = std::numeric_limits<double>::infinity();
            continue;
        }
        double s = 0.0;
        for (double t : terms)
            s += std::exp(t - max_term);
        log_w[j] = lp - (max_term + std::log(s));
    }

    const double top = log_w.maxCoeff();
    if (top == neg_inf || std::isnan(top))
        throw DegenerateWeightsError("all importance weights are zero");
    if (top == std::numeric_limits<double>::infinity())
        throw DegenerateWeightsError("importance weight denominator vanished for a sample");
    Eigen::VectorXd w = (log_w.array() - top).exp().matrix();
    return w / w.sum();
}

Eigen::VectorXd posterior_mean(const WeightedPopulation& pop)
{
    return pop.thetas_adjusted.colwise().mean().transpose();
}

Eigen::VectorXd posterior_std(const WeightedPopulation& pop)
{
    const auto n = static_cast<double>(pop.thetas_adjusted.rows());
    const Eigen::RowVectorXd mean = pop.thetas_adjusted.colwise().mean();
    if (n < 2)
        return Eigen::VectorXd::Zero(pop.thetas_adjusted.cols());
    return ((pop.thetas_adjusted.rowwise() - mean).array().square().colwise().sum() / (n - 1.0)).sqrt().transpose();
}

PmcResult run_pmc_abc(const ChannelModel& model, const TransferFunctionDataset& observed, const PriorBox& prior,
                      const PmcConfig& config, const IterationCallback& on_iteration)
{
    config.validate();
    prior.validate();
    if (model.parameter_names().size() != prior.size())
        throw ValidationError("prior has " + std::to_string(prior.size()) + " parameters, model '" + model.name() +
                              "' expects " + std::to_string(model.parameter_names().size()));

    PmcResult result;
    const LogMomentMatrix z = log_moment_matrix(observed, config.i_moments);
    const Lengthscale l = median_heuristic(z.rows);
    const MmdReference reference(z.rows, l);
    result.diagnostics.lengthscale = l.value();
    result.diagnostics.s_obs = summarize(z);

    const FrequencyGrid& grid = observed.grid();
    for (std::size_t t = 1; t <= config.t_iterations; ++t) {
        try {
            const auto start = std::chrono::steady_clock::now();
            const RealMatrix thetas = t == 1 ? sample_prior(prior, config.m, derive_seed(config.seed, kPriorStream, t))
                                             : pmc_propose(result.populations.back(), config.m, prior,
                                                           derive_seed(config.seed, kProposalStream, t));

            const std::vector<Candidate> candidates = evaluate_candidates(model, thetas, grid, config, reference, t);
            const std::vector<Candidate> accepted = rejection_select(candidates, config.m_eps);
            const RealMatrix accepted_thetas = thetas_of(accepted);

            if (t == 1) {
                std::vector<SummaryVector> all;
                all.reserve(candidates.size());
                for (const auto& c : candidates)
                    all.push_back(c.summary);
                result.diagnostics.misspecification = detect_misspecification(all, result.diagnostics.s_obs);
            }

            SummaryVector s_used = result.diagnostics.s_obs;
            if (result.diagnostics.misspecification.misspecified) {
                const Eigen::VectorXd mode = kde_mode(accepted_thetas);
                const auto pseudo = model.simulate({mode.data(), static_cast<std::size_t>(mode.size())}, observed.n_obs(),
                                                   grid, derive_seed(config.seed, kPseudoObservedStream, t));
                s_used = summarize(log_moment_matrix(pseudo, config.i_moments));
            }
            result.diagnostics.s_obs_used.push_back(s_used);

            const RegressionResult reg = regression_adjust(accepted, s_used, prior, {config.regression});
            for (const auto& w : reg.warnings)
                result.diagnostics.warnings.push_back("iteration " + std::to_string(t) + ": " + w);

            WeightedPopulation pop;
            pop.iteration = t;
            pop.thetas_accepted = accepted_thetas;
            pop.thetas_adjusted = reg.adjusted;
            pop.weights = t == 1 ? Eigen::VectorXd::Constant(accepted_thetas.rows(), 1.0 / static_cast<double>(accepted_thetas.rows()))
                                 : pmc_weights(accepted_thetas, result.populations.back(), prior);
            pop.sigma_diag = proposal_variances(pop.thetas_adjusted, prior);
            pop.mmd2.resize(static_cast<Eigen::Index>(accepted.size()));
            for (std::size_t i = 0; i < accepted.size(); ++i)
                pop.mmd2[static_cast<Eigen::Index>(i)] = accepted[i].mmd2;
            pop.misspecified = result.diagnostics.misspecification.misspecified;

            result.diagnostics.iteration_seconds.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
            result.populations.push_back(std::move(pop));
            if (on_iteration)
                on_iteration(result.populations.back());
        } catch (const ValidationError& e) {
            result.failure = RunFailure{t, e.what(), false};
            break;
        } catch (const std::exception& e) {
            result.failure = RunFailure{t, e.what(), true};
            break;
        }
    }
    return result;
}

} // namespace chancal
