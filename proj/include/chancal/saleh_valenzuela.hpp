#pragma once

#include <cstdint>
#include <vector>

#include "chancal/channel_model.hpp"
#include "chancal/random.hpp"

namespace chancal {

// theta = [Q, Lambda, lambda, Gamma, gamma, sigma_w2]
struct SalehValenzuelaParams {
    double q = 0.0;            // power of the first component of a cluster at zero delay
    double big_lambda = 0.0;   // cluster arrival rate [1/s]
    double small_lambda = 0.0; // ray arrival rate [1/s]
    double big_gamma = 0.0;    // cluster power decay [s]
    double small_gamma = 0.0;  // ray power decay [s]
    double sigma_w2 = 0.0;     // noise variance

    static SalehValenzuelaParams from_vector(std::span<const double> theta);
    std::vector<double> to_vector() const;
    void validate() const;
};

struct SvOptions {
    // Resource guard on the expected path count Lambda * lambda * t_max^2.
    double max_expected_paths = 1e6;
};

struct MultipathComponent {
    double delay_s;           // T_l + tau_kl
    cdouble gain;             // beta_kl
    std::size_t cluster;      // index l, clusters sorted by arrival
    double cluster_arrival_s; // T_l
    bool first_in_cluster;    // tau_kl == 0
};

// One realization of the clustered point process on [0, t_max).
// Clusters follow a homogeneous Poisson process of rate Lambda; within cluster l
// the first ray sits at the cluster onset and further rays follow a Poisson
// process of rate lambda on [0, t_max - T_l). Components beyond t_max are not generated.
std::vector<MultipathComponent> sample_sv_components(const SalehValenzuelaParams& params, double t_max_s, Rng& rng);

// H_n = sum_k beta_k exp(-j 2 pi n delta_f tau_k), n = 0..N_s-1, written into out.
void synthesize_transfer_function(std::span<const MultipathComponent> components, const FrequencyGrid& grid,
                                  std::span<cdouble> out);

TransferFunctionDataset simulate_sv(const SalehValenzuelaParams& params, std::size_t n_realizations,
                                    const FrequencyGrid& grid, std::uint64_t seed, const SvOptions& options = {});

class SalehValenzuelaModel final : public ChannelModel {
public:
    explicit SalehValenzuelaModel(SvOptions options = {}) : options_(options) {}

    std::string name() const override { return "sv"; }
    std::vector<std::string> parameter_names() const override;
    TransferFunctionDataset simulate(std::span<const double> theta, std::size_t n_realizations,
                                     const FrequencyGrid& grid, std::uint64_t seed) const override;

private:
    SvOptions options_;
};

} // namespace chancal
