// helpers.hpp - shared generators and numeric utilities for the test suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "regseg/filters.hpp"
#include "regseg/rng.hpp"
#include "regseg/volume.hpp"

namespace testutil {

using namespace regseg;

inline Volume random_volume(Dims d, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Volume v(d);
    Rng rng(seed);
    for (double& x : v.data) x = rng.uniform(lo, hi);
    return v;
}

// Smooth band-limited volume: a few long-wavelength cosine modes plus a
// gentle ramp; every local window carries variance.
inline Volume smooth_volume(Dims d, std::uint64_t seed) {
    Volume v(d, 0.5);
    Rng rng(seed);
    for (int m = 0; m < 4; ++m) {
        const double ax = rng.uniform(-1.0, 1.0), ay = rng.uniform(-1.0, 1.0),
                     az = rng.uniform(-1.0, 1.0);
        const double period = rng.uniform(32.0, 48.0);
        const double phase = rng.uniform(0.0, 6.28318);
        const double amp = rng.uniform(0.02, 0.04);
        std::size_t idx = 0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x, ++idx)
                    v.data[idx] +=
                        amp * std::cos(6.28318 * (ax * x + ay * y + az * z) / period + phase);
    }
    std::size_t idx = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++idx)
                v.data[idx] += 0.003 * x + 0.002 * y + 0.001 * z;
    return v;
}

// Gaussian-smoothed noise field rescaled so the largest vector magnitude is
// max_mag, tapered to zero at the volume faces so nothing samples outside
// the grid.
inline DisplacementField smooth_field(Dims d, std::uint64_t seed, double max_mag,
                                      double sigma = 8.0) {
    DisplacementField f(d);
    Rng rng(seed);
    for (double& x : f.data) x = rng.normal();
    gaussian_blur_field(f, sigma);
    auto taper = [](int p, int n) {
        const double e = std::min(p, n - 1 - p);
        const double w = e / 5.0;
        return w >= 1.0 ? 1.0 : w * w * (3.0 - 2.0 * w);
    };
    std::size_t idx = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++idx) {
                const double w = taper(x, d.nx) * taper(y, d.ny) * taper(z, d.nz);
                const Vec3 v = f.get(idx);
                f.set(idx, {v.x * w, v.y * w, v.z * w});
            }
    double worst = 0.0;
    const std::size_t n = d.voxel_count();
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, f.get(i).norm());
    if (worst > 0) {
        const double s = max_mag / worst;
        for (double& x : f.data) x *= s;
    }
    return f;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double rel_vec_err(const std::vector<double>& approx, const std::vector<double>& ref) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < approx.size(); ++i) {
        num += (approx[i] - ref[i]) * (approx[i] - ref[i]);
        den += ref[i] * ref[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

} // namespace testutil
