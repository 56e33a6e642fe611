#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chancal/signal.hpp"

namespace chancal {

constexpr double speed_of_light_m_s = 299'792'458.0;

// Uniform simulator contract used by the calibration engine.
// Identical (theta, n_realizations, grid, seed) must give bit-identical output.
class ChannelModel {
public:
    virtual ~ChannelModel() = default;

    virtual std::string name() const = 0;
    virtual std::vector<std::string> parameter_names() const = 0;

    // The noise variance is the last parameter of both built-in models.
    virtual TransferFunctionDataset simulate(std::span<const double> theta, std::size_t n_realizations,
                                             const FrequencyGrid& grid, std::uint64_t seed) const = 0;
};

// Adds iid circularly symmetric complex Gaussian noise of variance sigma_w2
// (sigma_w2 / 2 per real and imaginary part). sigma_w2 == 0 returns h unchanged.
ComplexMatrix add_noise(const ComplexMatrix& h, double sigma_w2, std::uint64_t seed);

} // namespace chancal
