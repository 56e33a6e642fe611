#include <cmath>

#include "chancal/channel_model.hpp"
#include "chancal/error.hpp"
#include "chancal/random.hpp"

namespace chancal {

ComplexMatrix add_noise(const ComplexMatrix& h, double sigma_w2, std::uint64_t seed)
{
    if (!std::isfinite(sigma_w2) || sigma_w2 < 0.0)
        throw ValidationError("noise variance must be finite and non-negative");
    ComplexMatrix out = h;
    if (sigma_w2 == 0.0)
        return out;

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(sigma_w2 / 2.0));
    cdouble* p = out.data();
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        const double re = normal(rng);
        const double im = normal(rng);
        p[k] += cdouble(re, im);
    }
    return out;
}

} // namespace chancal
