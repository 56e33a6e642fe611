#include <catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <random>

#include "chancal/abc.hpp"
#include "chancal/error.hpp"
#include "chancal/random.hpp"

using namespace chancal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Exponentially decaying power profile with a random level per realization:
// |y(t_k)|^2 = exp(mu + 0.3 e) exp(-k / decay), e ~ N(0, 1).
class DecayModel final : public ChannelModel {
public:
    std::string name() const override { return "decay"; }
    std::vector<std::string> parameter_names() const override { return {"mu", "decay"}; }

    TransferFunctionDataset simulate(std::span<const double> theta, std::size_t n, const FrequencyGrid& grid,
                                     std::uint64_t seed) const override
    {
        if (theta.size() != 2)
            throw ValidationError("decay model takes 2 parameters");
        if (theta[1] > 1e3)
            throw NumericalError("decay out of range");
        Rng rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        ComplexMatrix h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid.n_s()));
        for (std::size_t r = 0; r < n; ++r) {
            TimeDomainSignal s{grid, Eigen::VectorXcd(static_cast<Eigen::Index>(grid.n_s()))};
            const double level = theta[0] + 0.3 * nd(rng);
            for (Eigen::Index k = 0; k < s.values.size(); ++k)
                s.values[k] = std::sqrt(std::exp(level - static_cast<double>(k) / theta[1]));
            h.row(static_cast<Eigen::Index>(r)) = to_frequency_domain(s).transpose();
        }
        return TransferFunctionDataset(grid, h);
    }
};

// Fails once a fixed number of simulations has been served.
class FlakyModel final : public ChannelModel {
public:
    explicit FlakyModel(std::size_t budget) : budget_(budget) {}
    std::string name() const override { return "flaky"; }
    std::vector<std::string> parameter_names() const override { return inner_.parameter_names(); }
    TransferFunctionDataset simulate(std::span<const double> theta, std::size_t n, const FrequencyGrid& grid,
                                     std::uint64_t seed) const override
    {
        if (calls_++ >= budget_)
            throw NumericalError("simulation budget exhausted");
        return inner_.simulate(theta, n, grid, seed);
    }

private:
    DecayModel inner_;
    std::size_t budget_;
    mutable std::atomic<std::size_t> calls_{0};
};

PriorBox decay_prior()
{
    PriorBox b;
    b.names = {"mu", "decay"};
    b.lower = Eigen::Vector2d(-2.0, 1.0);
    b.upper = Eigen::Vector2d(2.0, 20.0);
    b.integer_mask = {false, false};
    return b;
}

FrequencyGrid toy_grid() { return FrequencyGrid::make(32, 31e6); }

PmcConfig toy_config()
{
    PmcConfig c;
    c.m = 200;
    c.m_eps = 20;
    c.t_iterations = 3;
    c.n_sim = 30;
    c.i_moments = 3;
    c.seed = 5;
    return c;
}

WeightedPopulation single_particle(const Eigen::Vector2d& at, const Eigen::Vector2d& var)
{
    WeightedPopulation pop;
    pop.thetas_adjusted = at.transpose();
    pop.thetas_accepted = pop.thetas_adjusted;
    pop.weights = Eigen::VectorXd::Ones(1);
    pop.sigma_diag = var;
    pop.mmd2 = Eigen::VectorXd::Zero(1);
    return pop;
}

} // namespace

TEST_CASE("proposal variances", "[pmc]")
{
    const auto prior = decay_prior();
    RealMatrix x(4, 2);
    x << 0, 2, 1, 4, 2, 6, 3, 8;
    const auto v = proposal_variances(x, prior);
    CHECK_THAT(v[0], WithinRel(2.0 * 5.0 / 3.0, 1e-14));
    CHECK_THAT(v[1], WithinRel(2.0 * 20.0 / 3.0, 1e-14));

    RealMatrix flat(3, 2);
    flat.rowwise() = Eigen::RowVector2d(0.5, 3.0);
    CHECK((proposal_variances(flat, prior).array() > 0.0).all());
}

TEST_CASE("proposal draws", "[pmc]")
{
    const auto prior = decay_prior();

    SECTION("inside the box and centred on a lone particle")
    {
        const auto pop = single_particle({0.0, 10.5}, {0.5, 4.0});
        const RealMatrix x = pmc_propose(pop, 5000, prior, 1);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            CHECK(prior.contains({x.row(i).data(), 2}));
        CHECK(std::abs(x.col(0).mean() - 0.0) < 3.0 * std::sqrt(0.5 / 5000.0));
        CHECK(std::abs(x.col(1).mean() - 10.5) < 3.0 * std::sqrt(4.0 / 5000.0));
    }
    SECTION("vanishing perturbation resamples the particles")
    {
        WeightedPopulation pop;
        pop.thetas_adjusted.resize(3, 2);
        pop.thetas_adjusted << -1.0, 2.0, 0.0, 5.0, 1.5, 19.0;
        pop.weights = Eigen::Vector3d(0.2, 0.3, 0.5);
        pop.sigma_diag = Eigen::Vector2d(1e-30, 1e-30);
        const RealMatrix x = pmc_propose(pop, 3000, prior, 2);
        std::array<int, 3> hits{};
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            int found = -1;
            for (int j = 0; j < 3; ++j)
                if ((x.row(i) - pop.thetas_adjusted.row(j)).cwiseAbs().maxCoeff() < 1e-12)
                    found = j;
            REQUIRE(found >= 0);
            ++hits[static_cast<std::size_t>(found)];
        }
        CHECK(std::abs(hits[2] / 3000.0 - 0.5) < 0.05);
        CHECK(std::abs(hits[0] / 3000.0 - 0.2) < 0.05);
    }
    SECTION("stuck proposal")
    {
        auto pop = single_particle({1.999999, 19.999999}, {1e6, 1e8});
        CHECK_THROWS_AS(pmc_propose(pop, 10, prior, 3), StuckProposalError);
    }
    SECTION("determinism")
    {
        const auto pop = single_particle({0.0, 10.5}, {0.5, 4.0});
        CHECK(pmc_propose(pop, 50, prior, 9) == pmc_propose(pop, 50, prior, 9));
    }
}

TEST_CASE("importance weights", "[pmc][property]")
{
    const auto prior = decay_prior();

    SECTION("lone particle: inverse Gaussian kernel")
    {
        const Eigen::Vector2d c(0.0, 10.0), var(0.3, 2.0);
        const auto pop = single_particle(c, var);
        RealMatrix x(4, 2);
        x << 0.1, 10.0, -0.5, 11.0, 1.0, 8.0, 0.0, 10.0;
        const auto w = pmc_weights(x, pop, prior);
        Eigen::VectorXd oracle(4);
        for (int j = 0; j < 4; ++j) {
            const double q = std::pow(x(j, 0) - c[0], 2) / var[0] + std::pow(x(j, 1) - c[1], 2) / var[1];
            oracle[j] = 1.0 / std::exp(-0.5 * q);
        }
        oracle /= oracle.sum();
        CHECK((w - oracle).cwiseAbs().maxCoeff() < 1e-12);
        CHECK_THAT(w.sum(), WithinAbs(1.0, 1e-12));
    }
    SECTION("mixture denominator")
    {
        WeightedPopulation pop;
        pop.thetas_adjusted.resize(3, 2);
        pop.thetas_adjusted << -1.0, 2.0, 0.0, 5.0, 1.5, 19.0;
        pop.weights = Eigen::Vector3d(0.2, 0.3, 0.5);
        pop.sigma_diag = Eigen::Vector2d(0.4, 9.0);
        std::mt19937_64 rng(4);
        const RealMatrix x = sample_prior(prior, 30, 4);
        const auto w = pmc_weights(x, pop, prior);
        Eigen::VectorXd oracle(30);
        for (int j = 0; j < 30; ++j) {
            double den = 0.0;
            for (int i = 0; i < 3; ++i) {
                const double q = std::pow(x(j, 0) - pop.thetas_adjusted(i, 0), 2) / 0.4 +
                                 std::pow(x(j, 1) - pop.thetas_adjusted(i, 1), 2) / 9.0;
                den += pop.weights[i] * std::exp(-0.5 * q);
            }
            oracle[j] = 1.0 / den;
        }
        oracle /= oracle.sum();
        CHECK((w - oracle).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((w.array() >= 0.0).all());
        CHECK_THAT(w.sum(), WithinAbs(1.0, 1e-12));
    }
    SECTION("far-away samples survive through log-sum-exp")
    {
        const auto pop = single_particle({0.0, 10.0}, {1e-4, 1e-4});
        RealMatrix x(2, 2);
        x << 1.0, 10.0, 0.9, 10.0;
        const auto w = pmc_weights(x, pop, prior);
        CHECK(w.allFinite());
        CHECK_THAT(w.sum(), WithinAbs(1.0, 1e-12));
        CHECK(w[0] > w[1]);
    }
    SECTION("all samples outside the prior")
    {
        const auto pop = single_particle({0.0, 10.0}, {1.0, 1.0});
        RealMatrix x(2, 2);
        x << 5.0, 10.0, 0.0, 50.0;
        CHECK_THROWS_AS(pmc_weights(x, pop, prior), DegenerateWeightsError);
    }
}

TEST_CASE("posterior moments", "[pmc]")
{
    WeightedPopulation pop;
    pop.thetas_adjusted.resize(2, 2);
    pop.thetas_adjusted << 1.0, 4.0, 3.0, 8.0;
    CHECK(posterior_mean(pop) == Eigen::Vector2d(2.0, 6.0));
    CHECK_THAT(posterior_std(pop)[1], WithinRel(std::sqrt(8.0), 1e-14));

    pop.thetas_adjusted.resize(3, 2);
    pop.thetas_adjusted.rowwise() = Eigen::RowVector2d(0.25, -7.0);
    CHECK(posterior_mean(pop) == Eigen::Vector2d(0.25, -7.0));
}

TEST_CASE("config validation", "[pmc]")
{
    PmcConfig c = toy_config();
    CHECK_NOTHROW(c.validate());
    c.m_eps = c.m + 1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = toy_config();
    c.t_iterations = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = toy_config();
    c.workers = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("PMC-ABC on a toy model", "[pmc][integration]")
{
    const DecayModel model;
    const auto prior = decay_prior();
    const double truth[] = {0.5, 6.0};
    const auto observed = model.simulate(truth, 100, toy_grid(), 99);

    PmcConfig config = toy_config();
    config.workers = 1;
    std::size_t callbacks = 0;
    const auto r1 = run_pmc_abc(model, observed, prior, config, [&](const WeightedPopulation&) { ++callbacks; });
    REQUIRE_FALSE(r1.failure);
    REQUIRE(r1.populations.size() == 3);
    CHECK(callbacks == 3);

    for (const auto& pop : r1.populations) {
        CHECK(pop.thetas_adjusted.rows() == 20);
        CHECK_THAT(pop.weights.sum(), WithinAbs(1.0, 1e-12));
        CHECK((pop.weights.array() >= 0.0).all());
        CHECK((pop.sigma_diag.array() > 0.0).all());
        for (Eigen::Index i = 0; i < pop.thetas_adjusted.rows(); ++i)
            CHECK(prior.contains({pop.thetas_adjusted.row(i).data(), 2}));
    }
    const auto mean = posterior_mean(r1.populations.back());
    CHECK(std::abs(mean[0] - 0.5) < 0.3);
    CHECK(std::abs(mean[1] - 6.0) < 2.0);
    CHECK(r1.diagnostics.lengthscale > 0.0);

    SECTION("bit-identical across worker counts")
    {
        for (std::size_t workers : {2, 3, 8}) {
            config.workers = workers;
            const auto r = run_pmc_abc(model, observed, prior, config);
            REQUIRE(r.populations.size() == 3);
            for (std::size_t t = 0; t < 3; ++t) {
                CHECK(r.populations[t].thetas_adjusted == r1.populations[t].thetas_adjusted);
                CHECK(r.populations[t].weights == r1.populations[t].weights);
                CHECK(r.populations[t].mmd2 == r1.populations[t].mmd2);
            }
        }
    }
    SECTION("regression off is rejection ABC")
    {
        config.regression = false;
        config.t_iterations = 1;
        const auto r = run_pmc_abc(model, observed, prior, config);
        REQUIRE(r.populations.size() == 1);
        const auto& pop = r.populations[0];
        CHECK(pop.thetas_adjusted == pop.thetas_accepted);

        // oracle: score every prior draw directly and keep the best M_eps
        const RealMatrix draws = sample_prior(prior, config.m, derive_seed(config.seed, 1ull << 40, 1));
        const auto z = log_moment_matrix(observed, config.i_moments);
        const MmdReference ref(z.rows, median_heuristic(z.rows));
        std::vector<std::pair<double, std::size_t>> scored;
        for (Eigen::Index i = 0; i < draws.rows(); ++i) {
            const auto ds = model.simulate({draws.row(i).data(), 2}, config.n_sim, observed.grid(),
                                           derive_seed(config.seed, 1, static_cast<std::uint64_t>(i)));
            scored.emplace_back(ref.estimate(log_moment_matrix(ds, config.i_moments).rows).value, static_cast<std::size_t>(i));
        }
        std::sort(scored.begin(), scored.end());
        for (std::size_t k = 0; k < config.m_eps; ++k)
            CHECK(pop.thetas_accepted.row(static_cast<Eigen::Index>(k)) == draws.row(static_cast<Eigen::Index>(scored[k].second)));
    }
    SECTION("failures keep earlier iterations")
    {
        const FlakyModel flaky(config.m);
        const auto r = run_pmc_abc(flaky, observed, prior, config);
        REQUIRE(r.failure);
        CHECK(r.failure->iteration == 2);
        CHECK(r.failure->numerical);
        REQUIRE(r.populations.size() == 1);
        CHECK(r.populations[0].thetas_adjusted == r1.populations[0].thetas_adjusted);
    }
    SECTION("setup errors throw")
    {
        PriorBox three = prior;
        three.names.push_back("x");
        three.lower.conservativeResize(3);
        three.upper.conservativeResize(3);
        three.lower[2] = 0.0;
        three.upper[2] = 1.0;
        three.integer_mask.push_back(false);
        CHECK_THROWS_AS(run_pmc_abc(model, observed, three, config), ValidationError);
    }
}

TEST_CASE("misspecified data switch to the pseudo-observed summary", "[pmc][integration]")
{
    const DecayModel model;
    const auto prior = decay_prior();
    const double truth[] = {0.5, 6.0};
    // all realizations share one level but carry tiny jitter: far less spread than the model can produce
    const auto one = model.simulate(truth, 1, toy_grid(), 3);
    ComplexMatrix tiled(60, 32);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(0.0, 1e-3);
    for (int r = 0; r < 60; ++r)
        for (int c = 0; c < 32; ++c)
            tiled(r, c) = one.samples()(0, c) + cdouble(nd(rng), nd(rng));
    const TransferFunctionDataset observed(toy_grid(), tiled);

    const auto r = run_pmc_abc(model, observed, prior, toy_config());
    REQUIRE_FALSE(r.failure);
    CHECK(r.diagnostics.misspecification.misspecified);
    REQUIRE(r.diagnostics.s_obs_used.size() == 3);
    CHECK(r.diagnostics.s_obs_used[0].values != r.diagnostics.s_obs.values);
    for (const auto& pop : r.populations) {
        CHECK(pop.misspecified);
        for (Eigen::Index i = 0; i < pop.thetas_adjusted.rows(); ++i)
            CHECK(prior.contains({pop.thetas_adjusted.row(i).data(), 2}));
    }
}
