#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "chancal/channel_model.hpp"

namespace chancal {

// theta = [g, N_scat, P_vis, sigma_w2]; N_scat is carried as a real number by
// the engine and rounded to the nearest integer here.
struct PropagationGraphParams {
    double g = 0.0;          // reflection gain of a scatterer-to-scatterer bounce
    std::size_t n_scat = 1;  // number of scatterers
    double p_vis = 0.0;      // edge visibility probability
    double sigma_w2 = 0.0;   // noise variance

    static PropagationGraphParams from_vector(std::span<const double> theta);
    void validate() const;
};

struct RoomGeometry {
    Eigen::Vector3d dimensions_m{3.0, 4.0, 3.0};
    std::vector<Eigen::Vector3d> tx_positions_m;
    std::vector<Eigen::Vector3d> rx_positions_m;

    std::size_t n_pairs() const noexcept { return tx_positions_m.size() * rx_positions_m.size(); }
    void validate() const;

    // Square horizontal n x n array centred at `center` with the given element spacing.
    static std::vector<Eigen::Vector3d> planar_array(const Eigen::Vector3d& center, std::size_t n, double spacing_m);

    // 3 x 4 x 3 m room with an n x n virtual array at each end, half-wavelength
    // spacing at 60 GHz unless given.
    static RoomGeometry conference_room(std::size_t elements_per_side = 5, double spacing_m = 0.0);
};

struct PgOptions {
    bool direct_edges = false;     // NLOS by default
    // Amplitude factor on Tx/Rx illumination edges (and direct edges), on top
    // of the free-space 1 / (4 pi f tau) term. Lumps antenna and system gains.
    // 37 puts the mean received power of the 5x5 conference-room setup at
    // m0 * B ~ 1.3e-7 for theta = (0.5, 18, 0.99).
    double illumination_gain = 37.0;
    // Model calls pooled into every block of n_pairs simulated rows (see
    // simulate_pg_pooled). Match it to the way the observed data was built.
    std::size_t pooled_calls = 1;
};

/// One model call: draws scatterer positions uniformly in the room, the edge
/// set and the edge phases once, then evaluates
///   H(f) = D(f) + R(f) (I - B(f))^{-1} T(f)
/// on every grid frequency for all Tx-Rx pairs. Row index = tx * n_rx + rx.
///
/// Every array element is a vertex: each element-scatterer edge is visible
/// with probability P_vis and carries its own uniform phase.
/// Each scatterer splits the gain g evenly over its outgoing scatterer edges,
/// so the spectral radius of B(f) never exceeds g. For g >= 1 the radius is
/// checked per frequency and DivergentGraphError is thrown when it reaches 1.
TransferFunctionDataset simulate_pg(const PropagationGraphParams& params, const RoomGeometry& geometry,
                                    const FrequencyGrid& grid, std::uint64_t seed, const PgOptions& options = {});

// Dataset of n_pairs rows where row r comes from call (r mod n_calls), so
// the rows mix several independent scatterer configurations.
TransferFunctionDataset simulate_pg_pooled(const PropagationGraphParams& params, const RoomGeometry& geometry,
                                           const FrequencyGrid& grid, std::size_t n_calls, std::uint64_t seed,
                                           const PgOptions& options = {});

class PropagationGraphModel final : public ChannelModel {
public:
    PropagationGraphModel(RoomGeometry geometry, PgOptions options = {});

    std::string name() const override { return "pg"; }
    std::vector<std::string> parameter_names() const override;

    // ceil(n / n_pairs) independent blocks of n_pairs rows, concatenated and
    // truncated to n. A block is one call, or a pooled dataset when
    // options.pooled_calls > 1.
    TransferFunctionDataset simulate(std::span<const double> theta, std::size_t n_realizations,
                                     const FrequencyGrid& grid, std::uint64_t seed) const override;

    const RoomGeometry& geometry() const noexcept { return geometry_; }

private:
    RoomGeometry geometry_;
    PgOptions options_;
};

} // namespace chancal
