#include "chancal/propagation_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "chancal/error.hpp"
#include "chancal/random.hpp"

namespace chancal {

namespace {

using CMat = Eigen::MatrixXcd;

struct Edge {
    Eigen::Index from;
    Eigen::Index to;
    double delay_s;
    double phase;
};

double spectral_radius(const CMat& B)
{
    Eigen::ComplexEigenSolver<CMat> solver(B, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

// exp(j (phase - omega_n tau)) for a set of delays, advanced across the
// frequency grid by one complex multiplication and re-anchored every kAnchor steps.
constexpr std::size_t kAnchor = 64;

class PhasorBank {
public:
    void add(double delay_s, double phase)
    {
        delay_.push_back(delay_s);
        phase_.push_back(phase);
    }
    std::size_t size() const noexcept { return delay_.size(); }

    void start(double delta_omega)
    {
        re_.resize(size());
        im_.resize(size());
        step_re_.resize(size());
        step_im_.resize(size());
        for (std::size_t e = 0; e < size(); ++e) {
            step_re_[e] = std::cos(delta_omega * delay_[e]);
            step_im_[e] = -std::sin(delta_omega * delay_[e]);
        }
    }
    void advance(std::size_t n, double omega)
    {
        if (n % kAnchor == 0) {
            for (std::size_t e = 0; e < size(); ++e) {
                re_[e] = std::cos(phase_[e] - omega * delay_[e]);
                im_[e] = std::sin(phase_[e] - omega * delay_[e]);
            }
            return;
        }
        for (std::size_t e = 0; e < size(); ++e) {
            const double r = re_[e] * step_re_[e] - im_[e] * step_im_[e];
            im_[e] = re_[e] * step_im_[e] + im_[e] * step_re_[e];
            re_[e] = r;
        }
    }
    double re(std::size_t e) const noexcept { return re_[e]; }
    double im(std::size_t e) const noexcept { return im_[e]; }

private:
    std::vector<double> delay_, phase_, re_, im_, step_re_, step_im_;
};

// Solves A X = RHS in place on the row-major augmented array [A | RHS] (n rows,
// n + k columns, split real and imaginary parts) by elimination without
// pivoting. Only called for strictly column diagonally dominant A, where this is stable.
void solve_augmented(std::vector<double>& ar, std::vector<double>& ai, std::size_t n, std::size_t k,
                     std::vector<double>& xr, std::vector<double>& xi)
{
    const std::size_t c = n + k;
    for (std::size_t p = 0; p < n; ++p) {
        const double pr = ar[p * c + p], pi = ai[p * c + p];
        const double den = pr * pr + pi * pi;
        const double ir = pr / den, ii = -pi / den;
        const double* rr = &ar[p * c];
        const double* ri = &ai[p * c];
        for (std::size_t i = p + 1; i < n; ++i) {
            double* er = &ar[i * c];
            double* ei = &ai[i * c];
            const double lr = er[p] * ir - ei[p] * ii;
            const double li = er[p] * ii + ei[p] * ir;
            if (lr == 0.0 && li == 0.0)
                continue;
            for (std::size_t j = p + 1; j < c; ++j) {
                er[j] -= lr * rr[j] - li * ri[j];
                ei[j] -= lr * ri[j] + li * rr[j];
            }
        }
    }
    xr.assign(n * k, 0.0);
    xi.assign(n * k, 0.0);
    for (std::size_t p = n; p-- > 0;) {
        const double pr = ar[p * c + p], pi = ai[p * c + p];
        const double den = pr * pr + pi * pi;
        for (std::size_t m = 0; m < k; ++m) {
            double sr = ar[p * c + n + m], si = ai[p * c + n + m];
            for (std::size_t j = p + 1; j < n; ++j) {
                const double a_r = ar[p * c + j], a_i = ai[p * c + j];
                sr -= a_r * xr[j * k + m] - a_i * xi[j * k + m];
                si -= a_r * xi[j * k + m] + a_i * xr[j * k + m];
            }
            xr[p * k + m] = (sr * pr + si * pi) / den;
            xi[p * k + m] = (si * pr - sr * pi) / den;
        }
    }
}

} // namespace

PropagationGraphParams PropagationGraphParams::from_vector(std::span<const double> theta)
{
    if (theta.size() != 4)
        throw ValidationError("PG model takes 4 parameters [g, N_scat, P_vis, sigma_w2], got " +
                              std::to_string(theta.size()));
    if (!std::isfinite(theta[1]))
        throw ValidationError("PG scatterer count must be finite");
    const double rounded = std::round(theta[1]);
    if (rounded < 1.0)
        throw ValidationError("PG scatterer count must round to at least 1");
    PropagationGraphParams p{theta[0], static_cast<std::size_t>(rounded), theta[2], theta[3]};
    p.validate();
    return p;
}

void PropagationGraphParams::validate() const
{
    if (!std::isfinite(g) || g < 0.0)
        throw ValidationError("PG reflection gain must be finite and non-negative");
    if (n_scat < 1)
        throw ValidationError("PG needs at least one scatterer");
    if (!std::isfinite(p_vis) || p_vis < 0.0 || p_vis > 1.0)
        throw ValidationError("PG visibility probability must lie in [0, 1]");
    if (!std::isfinite(sigma_w2) || sigma_w2 < 0.0)
        throw ValidationError("PG noise variance must be finite and non-negative");
}

void RoomGeometry::validate() const
{
    if (!(dimensions_m.array() > 0.0).all() || !dimensions_m.allFinite())
        throw ValidationError("room dimensions must be finite and positive");
    if (tx_positions_m.empty() || rx_positions_m.empty())
        throw ValidationError("geometry needs at least one Tx and one Rx position");
    auto inside = [&](const Eigen::Vector3d& p) {
        return p.allFinite() && (p.array() >= 0.0).all() && (p.array() <= dimensions_m.array()).all();
    };
    for (const auto& p : tx_positions_m)
        if (!inside(p))
            throw ValidationError("Tx position outside the room");
    for (const auto& p : rx_positions_m)
        if (!inside(p))
            throw ValidationError("Rx position outside the room");
}

std::vector<Eigen::Vector3d> RoomGeometry::planar_array(const Eigen::Vector3d& center, std::size_t n, double spacing_m)
{
    std::vector<Eigen::Vector3d> out;
    out.reserve(n * n);
    const double half = 0.5 * static_cast<double>(n - 1) * spacing_m;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.emplace_back(center.x() - half + static_cast<double>(i) * spacing_m,
                             center.y() - half + static_cast<double>(j) * spacing_m, center.z());
    return out;
}

RoomGeometry RoomGeometry::conference_room(std::size_t elements_per_side, double spacing_m)
{
    if (elements_per_side < 1)
        throw ValidationError("array needs at least one element per side");
    if (spacing_m <= 0.0)
        spacing_m = speed_of_light_m_s / 60e9 / 2.0;
    RoomGeometry geo;
    geo.dimensions_m = {3.0, 4.0, 3.0};
    geo.tx_positions_m = planar_array({0.8, 0.7, 1.3}, elements_per_side, spacing_m);
    geo.rx_positions_m = planar_array({2.1, 3.2, 1.3}, elements_per_side, spacing_m);
    geo.validate();
    return geo;
}

TransferFunctionDataset simulate_pg(const PropagationGraphParams& params, const RoomGeometry& geometry,
                                    const FrequencyGrid& grid, std::uint64_t seed, const PgOptions& options)
{
    params.validate();
    geometry.validate();
    if (!(grid.f_start_hz() > 0.0))
        throw ValidationError("the propagation graph model needs absolute frequencies (f_start > 0)");

    const auto n_scat = static_cast<Eigen::Index>(params.n_scat);
    const auto n_tx = static_cast<Eigen::Index>(geometry.tx_positions_m.size());
    const auto n_rx = static_cast<Eigen::Index>(geometry.rx_positions_m.size());
    const double two_pi = 2.0 * std::numbers::pi;

    Rng rng(derive_seed(seed, 0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution visible(params.p_vis);

    std::vector<Eigen::Vector3d> scatterers(static_cast<std::size_t>(n_scat));
    for (auto& s : scatterers)
        for (int d = 0; d < 3; ++d)
            s[d] = unit(rng) * geometry.dimensions_m[d];

    // Every Tx element-scatterer and scatterer-Rx element pair is its own edge.
    Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic> vis_t(n_scat, n_tx), vis_r(n_rx, n_scat);
    Eigen::MatrixXd phase_t(n_scat, n_tx), phase_r(n_rx, n_scat);
    for (Eigen::Index k = 0; k < n_scat; ++k) {
        for (Eigen::Index m = 0; m < n_tx; ++m) {
            vis_t(k, m) = visible(rng);
            phase_t(k, m) = two_pi * unit(rng);
        }
        for (Eigen::Index r = 0; r < n_rx; ++r) {
            vis_r(r, k) = visible(rng);
            phase_r(r, k) = two_pi * unit(rng);
        }
    }

    std::vector<Edge> inter;
    std::vector<int> out_degree(scatterers.size(), 0);
    for (Eigen::Index j = 0; j < n_scat; ++j) {
        for (Eigen::Index i = 0; i < n_scat; ++i) {
            if (i == j)
                continue;
            const bool vis = visible(rng);
            const double phase = two_pi * unit(rng);
            if (!vis)
                continue;
            const double d = (scatterers[static_cast<std::size_t>(i)] - scatterers[static_cast<std::size_t>(j)]).norm();
            inter.push_back({j, i, d / speed_of_light_m_s, phase});
            ++out_degree[static_cast<std::size_t>(j)];
        }
    }

    Eigen::MatrixXd tau_t(n_scat, n_tx), tau_r(n_rx, n_scat), tau_d(n_rx, n_tx);
    for (Eigen::Index k = 0; k < n_scat; ++k) {
        for (Eigen::Index m = 0; m < n_tx; ++m)
            tau_t(k, m) = (scatterers[static_cast<std::size_t>(k)] - geometry.tx_positions_m[static_cast<std::size_t>(m)]).norm() /
                          speed_of_light_m_s;
        for (Eigen::Index r = 0; r < n_rx; ++r)
            tau_r(r, k) = (scatterers[static_cast<std::size_t>(k)] - geometry.rx_positions_m[static_cast<std::size_t>(r)]).norm() /
                          speed_of_light_m_s;
    }
    for (Eigen::Index r = 0; r < n_rx; ++r)
        for (Eigen::Index m = 0; m < n_tx; ++m)
            tau_d(r, m) = (geometry.rx_positions_m[static_cast<std::size_t>(r)] -
                           geometry.tx_positions_m[static_cast<std::size_t>(m)]).norm() /
                          speed_of_light_m_s;

    const bool any_tx = (vis_t.array() != 0).any();
    const bool any_rx = (vis_r.array() != 0).any();
    const bool check_radius = params.g >= 1.0 && !inter.empty();
    const double gain = options.illumination_gain;

    // Edge phasors; the 1 / (2 omega tau) amplitude of illumination edges is
    // split into a per-edge 1 / (2 tau) and a per-frequency 1 / omega.
    PhasorBank inter_ph, tx_ph, rx_ph, direct_ph;
    std::vector<double> inter_amp;
    for (const auto& e : inter) {
        inter_ph.add(e.delay_s, e.phase);
        inter_amp.push_back(params.g / out_degree[static_cast<std::size_t>(e.from)]);
    }
    struct Illum {
        Eigen::Index scat, elem;
        double amp;
    };
    std::vector<Illum> tx_edges, rx_edges;
    for (Eigen::Index k = 0; k < n_scat; ++k) {
        for (Eigen::Index m = 0; m < n_tx; ++m)
            if (vis_t(k, m)) {
                tx_ph.add(tau_t(k, m), phase_t(k, m));
                tx_edges.push_back({k, m, gain / (2.0 * tau_t(k, m))});
            }
        for (Eigen::Index r = 0; r < n_rx; ++r)
            if (vis_r(r, k)) {
                rx_ph.add(tau_r(r, k), phase_r(r, k));
                rx_edges.push_back({k, r, gain / (2.0 * tau_r(r, k))});
            }
    }
    if (options.direct_edges)
        for (Eigen::Index r = 0; r < n_rx; ++r)
            for (Eigen::Index m = 0; m < n_tx; ++m)
                direct_ph.add(tau_d(r, m), 0.0);

    const double delta_omega = two_pi * grid.delta_f_hz();
    for (PhasorBank* bank : {&inter_ph, &tx_ph, &rx_ph, &direct_ph})
        bank->start(delta_omega);

    const auto ns = static_cast<std::size_t>(n_scat);
    const auto ntx = static_cast<std::size_t>(n_tx);
    const std::size_t cols = ns + ntx;
    std::vector<double> ar(ns * cols), ai(ns * cols), xr, xi;

    ComplexMatrix h = ComplexMatrix::Zero(n_tx * n_rx, static_cast<Eigen::Index>(grid.n_s()));
    CMat B(n_scat, n_scat), T(n_scat, n_tx), X(n_scat, n_tx), H(n_rx, n_tx);
    const CMat identity = CMat::Identity(n_scat, n_scat);

    for (std::size_t n = 0; n < grid.n_s(); ++n) {
        const double w = two_pi * grid.frequency_hz(n);
        for (PhasorBank* bank : {&inter_ph, &tx_ph, &rx_ph, &direct_ph})
            bank->advance(n, w);
        H.setZero();

        if (any_tx && any_rx) {
            if (check_radius) {
                B.setZero();
                for (std::size_t e = 0; e < inter.size(); ++e)
                    B(inter[e].to, inter[e].from) = inter_amp[e] * cdouble(inter_ph.re(e), inter_ph.im(e));
                if (spectral_radius(B) >= 1.0)
                    throw DivergentGraphError("propagation graph diverges: spectral radius of B reaches 1 with g = " +
                                              std::to_string(params.g));
                T.setZero();
                for (std::size_t e = 0; e < tx_edges.size(); ++e)
                    T(tx_edges[e].scat, tx_edges[e].elem) = tx_edges[e].amp / w * cdouble(tx_ph.re(e), tx_ph.im(e));
                X = (identity - B).partialPivLu().solve(T);
            } else {
                // I - B is strictly column diagonally dominant here (column sums of |B| equal g < 1).
                std::fill(ar.begin(), ar.end(), 0.0);
                std::fill(ai.begin(), ai.end(), 0.0);
                for (std::size_t k = 0; k < ns; ++k)
                    ar[k * cols + k] = 1.0;
                for (std::size_t e = 0; e < inter.size(); ++e) {
                    const std::size_t at = static_cast<std::size_t>(inter[e].to) * cols + static_cast<std::size_t>(inter[e].from);
                    ar[at] -= inter_amp[e] * inter_ph.re(e);
                    ai[at] -= inter_amp[e] * inter_ph.im(e);
                }
                for (std::size_t e = 0; e < tx_edges.size(); ++e) {
                    const std::size_t at = static_cast<std::size_t>(tx_edges[e].scat) * cols + ns +
                                           static_cast<std::size_t>(tx_edges[e].elem);
                    ar[at] = tx_edges[e].amp / w * tx_ph.re(e);
                    ai[at] = tx_edges[e].amp / w * tx_ph.im(e);
                }
                solve_augmented(ar, ai, ns, ntx, xr, xi);
                for (std::size_t k = 0; k < ns; ++k)
                    for (std::size_t m = 0; m < ntx; ++m)
                        X(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = cdouble(xr[k * ntx + m], xi[k * ntx + m]);
            }
            for (std::size_t e = 0; e < rx_edges.size(); ++e) {
                const cdouble r = rx_edges[e].amp / w * cdouble(rx_ph.re(e), rx_ph.im(e));
                H.row(rx_edges[e].elem) += r * X.row(rx_edges[e].scat);
            }
        }
        for (std::size_t e = 0; e < direct_ph.size(); ++e) {
            const auto r = static_cast<Eigen::Index>(e) / n_tx, m = static_cast<Eigen::Index>(e) % n_tx;
            H(r, m) += gain / (2.0 * w * tau_d(r, m)) * cdouble(direct_ph.re(e), direct_ph.im(e));
        }

        for (Eigen::Index m = 0; m < n_tx; ++m)
            for (Eigen::Index r = 0; r < n_rx; ++r)
                h(m * n_rx + r, static_cast<Eigen::Index>(n)) = H(r, m);
    }
    return TransferFunctionDataset(grid, add_noise(h, params.sigma_w2, derive_seed(seed, 1)));
}

TransferFunctionDataset simulate_pg_pooled(const PropagationGraphParams& params, const RoomGeometry& geometry,
                                           const FrequencyGrid& grid, std::size_t n_calls, std::uint64_t seed,
                                           const PgOptions& options)
{
    if (n_calls < 1)
        throw ValidationError("pooling needs at least one model call");
    std::vector<TransferFunctionDataset> calls;
    calls.reserve(n_calls);
    for (std::size_t c = 0; c < n_calls; ++c)
        calls.push_back(simulate_pg(params, geometry, grid, derive_seed(seed, 2, c), options));

    const auto rows = static_cast<Eigen::Index>(geometry.n_pairs());
    ComplexMatrix out(rows, static_cast<Eigen::Index>(grid.n_s()));
    for (Eigen::Index r = 0; r < rows; ++r)
        out.row(r) = calls[static_cast<std::size_t>(r) % n_calls].samples().row(r);
    return TransferFunctionDataset(grid, std::move(out));
}

PropagationGraphModel::PropagationGraphModel(RoomGeometry geometry, PgOptions options)
    : geometry_(std::move(geometry)), options_(options)
{
    geometry_.validate();
}

std::vector<std::string> PropagationGraphModel::parameter_names() const
{
    return {"g", "N_scat", "P_vis", "sigma_w2"};
}

TransferFunctionDataset PropagationGraphModel::simulate(std::span<const double> theta, std::size_t n_realizations,
                                                        const FrequencyGrid& grid, std::uint64_t seed) const
{
    if (n_realizations < 1)
        throw ValidationError("at least one realization is required");
    const auto params = PropagationGraphParams::from_vector(theta);
    const std::size_t pairs = geometry_.n_pairs();
    const std::size_t n_blocks = (n_realizations + pairs - 1) / pairs;
    auto block = [&](std::uint64_t block_seed) {
        return options_.pooled_calls > 1
                   ? simulate_pg_pooled(params, geometry_, grid, options_.pooled_calls, block_seed, options_)
                   : simulate_pg(params, geometry_, grid, block_seed, options_);
    };
    if (n_blocks == 1) {
        auto ds = block(derive_seed(seed, 1));
        if (n_realizations == pairs)
            return ds;
        return TransferFunctionDataset(grid, ds.samples().topRows(static_cast<Eigen::Index>(n_realizations)));
    }
    ComplexMatrix out(static_cast<Eigen::Index>(n_realizations), static_cast<Eigen::Index>(grid.n_s()));
    Eigen::Index filled = 0;
    for (std::size_t c = 0; c < n_blocks; ++c) {
        const auto ds = block(derive_seed(seed, 1, c));
        const Eigen::Index take = std::min<Eigen::Index>(ds.samples().rows(), out.rows() - filled);
        out.middleRows(filled, take) = ds.samples().topRows(take);
        filled += take;
    }
    return TransferFunctionDataset(grid, std::move(out));
}

} // namespace chancal
