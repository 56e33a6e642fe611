#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "chancal/error.hpp"
#include "chancal/mmd.hpp"
#include "chancal/saleh_valenzuela.hpp"

using namespace chancal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

RealMatrix gaussian(std::size_t n, std::size_t d, double mu, double sigma, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd(mu, sigma);
    RealMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = nd(rng);
    return x;
}

double k_oracle(const RealMatrix& a, Eigen::Index i, const RealMatrix& b, Eigen::Index j, double l)
{
    double s = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c)
        s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
    return std::exp(-s / (l * l));
}

// Brute-force evaluation of the three sums.
double mmd2_oracle(const RealMatrix& x, const RealMatrix& y, double l)
{
    const double nx = static_cast<double>(x.rows()), ny = static_cast<double>(y.rows());
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.rows(); ++j)
            if (i != j)
                sxx += k_oracle(x, i, x, j, l);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < y.rows(); ++j)
            sxy += k_oracle(x, i, y, j, l);
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < y.rows(); ++j)
            if (i != j)
                syy += k_oracle(y, i, y, j, l);
    return sxx / (nx * (nx - 1.0)) - 2.0 * sxy / (nx * ny) + syy / (ny * (ny - 1.0));
}

} // namespace

TEST_CASE("squared-exponential kernel", "[kernel]")
{
    const Lengthscale l(2.0);
    const double a[] = {1.0, -2.0, 0.5};
    const double b[] = {1.0, 0.0, 0.5};
    CHECK(se_kernel(a, a, l) == 1.0);
    CHECK_THAT(se_kernel(a, b, l), WithinRel(std::exp(-1.0), 1e-15));
    CHECK(se_kernel(a, b, l) == se_kernel(b, a, l));
    const double c[] = {1.0, 0.0};
    CHECK_THROWS_AS(se_kernel(a, c, l), ValidationError);
    CHECK_THROWS_AS(Lengthscale(0.0), ValidationError);
    CHECK_THROWS_AS(Lengthscale(-1.0), ValidationError);
    CHECK_THROWS_AS(Lengthscale(std::numeric_limits<double>::infinity()), ValidationError);
}

TEST_CASE("Gram matrix is symmetric positive semidefinite", "[kernel][property]")
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const RealMatrix x = gaussian(60, 4, 0.0, 1.0 + trial, rng);
        const RealMatrix g = gram_matrix(x, Lengthscale(0.5 + trial));
        CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(g), Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
}

TEST_CASE("median heuristic", "[median]")
{
    RealMatrix x(3, 1);
    x << 0.0, 1.0, 3.0;
    CHECK_THAT(median_heuristic(x).value(), WithinRel(std::sqrt(2.0), 1e-15));

    // six pairs: squared distances sorted 1 1 4 9 9 16, median (4 + 9) / 2
    RealMatrix y(4, 1);
    y << 0.0, 1.0, 3.0, 4.0;
    CHECK_THAT(median_heuristic(y).value(), WithinRel(std::sqrt(6.5 / 2.0), 1e-15));

    RealMatrix same(2, 3);
    same.setConstant(1.5);
    CHECK_THROWS_AS(median_heuristic(same), DegenerateDataError);
    CHECK_THROWS_AS(median_heuristic(RealMatrix::Zero(1, 2)), ValidationError);

    std::mt19937_64 rng(11);
    const RealMatrix z = gaussian(40, 3, 0.0, 1.0, rng);
    CHECK_THAT(median_heuristic(-3.5 * z).value(), WithinRel(3.5 * median_heuristic(z).value(), 1e-12));
}

TEST_CASE("unbiased estimator against brute force", "[mmd][property]")
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const RealMatrix x = gaussian(5, 3, 0.0, 1.0, rng);
        const RealMatrix y = gaussian(5 + trial % 3, 3, 0.5, 1.2, rng);
        const double l = 0.7 + 0.3 * trial;
        const auto e = mmd2_unbiased(x, y, Lengthscale(l));
        CHECK_THAT(e.value, WithinAbs(mmd2_oracle(x, y, l), 1e-12));
        CHECK(e.n_x == 5);
        CHECK(e.n_y == static_cast<std::size_t>(5 + trial % 3));
    }
    // larger sets: estimator streams rows, oracle loops
    const RealMatrix x = gaussian(300, 4, 0.0, 1.0, rng);
    const RealMatrix y = gaussian(200, 4, 0.3, 1.0, rng);
    CHECK_THAT(mmd2_unbiased(x, y, Lengthscale(1.3)).value, WithinAbs(mmd2_oracle(x, y, 1.3), 1e-12));
}

TEST_CASE("estimator symmetry and errors", "[mmd]")
{
    std::mt19937_64 rng(2);
    const RealMatrix x = gaussian(37, 4, 0.0, 1.0, rng);
    const RealMatrix y = gaussian(53, 4, 0.2, 1.0, rng);
    const RealMatrix w = gaussian(37, 4, 0.2, 1.0, rng);
    const Lengthscale l(1.1);
    CHECK(mmd2_unbiased(x, y, l).value == mmd2_unbiased(y, x, l).value);
    CHECK(mmd2_unbiased(x, w, l).value == mmd2_unbiased(w, x, l).value);

    CHECK_THROWS_AS(mmd2_unbiased(x.topRows(1), y, l), ValidationError);
    CHECK_THROWS_AS(mmd2_unbiased(x, y.leftCols(3), l), ValidationError);
}

TEST_CASE("estimator is unbiased at zero", "[mmd][statistical]")
{
    std::mt19937_64 rng(3);
    const int reps = 200;
    std::vector<double> v;
    for (int r = 0; r < reps; ++r)
        v.push_back(mmd2_unbiased(gaussian(30, 2, 0.0, 1.0, rng), gaussian(30, 2, 0.0, 1.0, rng), Lengthscale(1.0)).value);
    double mean = 0.0, var = 0.0;
    for (double x : v)
        mean += x;
    mean /= reps;
    for (double x : v)
        var += (x - mean) * (x - mean);
    var /= reps - 1;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(var / reps));
}

TEST_CASE("closed form", "[closed-form]")
{
    const Lengthscale l(1.0);
    CHECK(mmd2_gaussian_closed_form(0.3, 1.2, 0.3, 1.2, l) == Catch::Approx(0.0).margin(1e-15));
    CHECK_THAT(mmd2_gaussian_closed_form(0.0, 0.0, 1.5, 0.0, Lengthscale(2.0)),
               WithinRel(2.0 - 2.0 * std::exp(-2.25 / 4.0), 1e-14));
    CHECK(mmd2_gaussian_closed_form(0.0, 1.0, 1.0, 1.5, l) > 0.0);
    CHECK_THROWS_AS(mmd2_gaussian_closed_form(0.0, -1.0, 0.0, 1.0, l), ValidationError);

    // Monte Carlo oracle: E k(X,X') - 2 E k(X,Y) + E k(Y,Y') by sampling
    std::mt19937_64 rng(9);
    std::normal_distribution<double> a(0.0, 1.0), b(1.0, 1.5);
    const int n = 400000;
    double kxx = 0.0, kxy = 0.0, kyy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x1 = a(rng), x2 = a(rng), y1 = b(rng), y2 = b(rng);
        kxx += std::exp(-(x1 - x2) * (x1 - x2));
        kxy += std::exp(-(x1 - y1) * (x1 - y1));
        kyy += std::exp(-(y1 - y2) * (y1 - y2));
    }
    CHECK_THAT(mmd2_gaussian_closed_form(0.0, 1.0, 1.0, 1.5, l), WithinAbs((kxx - 2.0 * kxy + kyy) / n, 5e-3));
}

TEST_CASE("error shrinks as N doubles", "[mmd][statistical]")
{
    const Lengthscale l(1.0);
    const double truth = mmd2_gaussian_closed_form(0.0, 1.0, 1.0, 1.5, l);
    std::mt19937_64 rng(5);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {125, 250, 500, 1000}) {
        double err = 0.0;
        for (int t = 0; t < 100; ++t)
            err += std::abs(mmd2_unbiased(gaussian(n, 1, 0.0, 1.0, rng), gaussian(n, 1, 1.0, 1.5, rng), l).value - truth);
        err /= 100.0;
        CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("cached reference matches the plain estimator", "[mmd]")
{
    std::mt19937_64 rng(4);
    const RealMatrix obs = gaussian(80, 4, 0.0, 1.0, rng);
    const Lengthscale l = median_heuristic(obs);
    const MmdReference ref(obs, l);
    for (int t = 0; t < 4; ++t) {
        const RealMatrix sim = gaussian(50 + 10 * t, 4, 0.1 * t, 1.0, rng);
        CHECK_THAT(ref.estimate(sim).value, WithinAbs(mmd2_unbiased(obs, sim, l).value, 1e-13));
    }
}

TEST_CASE("transfer-function kernel equals the log-moment estimator", "[mmd]")
{
    const auto grid = FrequencyGrid::measurement_default();
    const SalehValenzuelaParams a{5e-8, 2e7, 1e9, 1e-8, 2e-9, 1e-9};
    const SalehValenzuelaParams b{2e-8, 6e7, 1e8, 2e-8, 1e-9, 5e-10};
    const auto da = simulate_sv(a, 30, grid, 1);
    const auto db = simulate_sv(b, 20, grid, 2);
    const auto za = log_moment_matrix(da, 4), zb = log_moment_matrix(db, 4);
    const Lengthscale l = median_heuristic(za.rows);
    const auto direct = mmd2_transfer_functions(da, db, 4, l);
    CHECK(direct.value == mmd2_unbiased(za.rows, zb.rows, l).value);
    CHECK(direct.value > 0.0);
}
