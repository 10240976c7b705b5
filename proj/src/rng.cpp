#include "regseg/rng.hpp"

#include <cmath>

namespace regseg {

double Rng::normal() {
    // Box-Muller; u1 nudged away from 0 so the log stays finite
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1 + 1e-300));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

} // namespace regseg
