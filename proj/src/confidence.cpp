#include "regseg/confidence.hpp"

#include <cmath>
#include <stdexcept>

namespace regseg {

DisplacementField composite_mirror_field(const DisplacementField& phi_prime,
                                         std::vector<std::uint8_t>* valid) {
    const DisplacementField phi_mirr = build_mirror_field(phi_prime.dims);
    std::vector<std::uint8_t> v1, v2;
    // inner composition: phi_prime followed by the mirror flip
    DisplacementField a = compose(phi_mirr, phi_prime, valid ? &v1 : nullptr);
    // outer composition: leading mirror flip
    DisplacementField out = compose(a, phi_mirr, valid ? &v2 : nullptr);
    if (valid) {
        // the outer resample lands on integer mirrored positions, so carry
        // the inner flags through the same index flip and AND them in
        const Dims d = phi_prime.dims;
        valid->assign(d.voxel_count(), 1);
        std::size_t idx = 0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x, ++idx) {
                    const std::size_t mirrored =
                        static_cast<std::size_t>(d.nx - 1 - x) +
                        static_cast<std::size_t>(d.nx) *
                            (static_cast<std::size_t>(y) + static_cast<std::size_t>(d.ny) * z);
                    (*valid)[idx] = v2[idx] & v1[mirrored];
                }
    }
    return out;
}

Volume error_map(const DisplacementField& Phi, const DisplacementField& phi) {
    if (!(Phi.dims == phi.dims)) throw std::invalid_argument("error_map: dimension mismatch");
    Volume out(Phi.dims, 0.0, phi.spacing);
    const std::size_t n = Phi.dims.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 d = Phi.get(i) - phi.get(i);
        out.data[i] = d.norm();
    }
    return out;
}

std::pair<Volume, double> confidence_map(const Volume& E) {
    const std::size_t n = E.dims.voxel_count();
    double mean = 0.0;
    for (double e : E.data) {
        if (e < 0.0) throw std::invalid_argument("confidence_map: negative error");
        mean += e;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double e : E.data) var += (e - mean) * (e - mean);
    const double sigma = std::sqrt(var / static_cast<double>(n)); // population std

    Volume C(E.dims, 1.0, E.spacing);
    if (sigma >= 1e-8) {
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (std::size_t i = 0; i < n; ++i) C.data[i] = std::exp(-E.data[i] * E.data[i] * inv);
    }
    return {std::move(C), sigma};
}

ConfidencePack perceive(const Volume& atlas, const Volume& unlabeled, const RegConfig& cfg,
                        const WeakPair* weak) {
    if (!(atlas.dims == unlabeled.dims))
        throw std::invalid_argument("perceive: dimension mismatch");

    ConfidencePack pack;
    pack.phi = register_volumes(atlas, unlabeled, cfg, weak).phi;

    const Volume atlas_m = mirror(atlas);
    const Volume unl_m = mirror(unlabeled);
    WeakPair weak_m;
    const WeakPair* weak_m_ptr = nullptr;
    if (weak) {
        weak_m.moving_labels = mirror(weak->moving_labels);
        weak_m.fixed_pred = mirror(weak->fixed_pred);
        weak_m_ptr = &weak_m;
    }
    pack.phi_prime = register_volumes(atlas_m, unl_m, cfg, weak_m_ptr).phi;

    pack.Phi = composite_mirror_field(pack.phi_prime, &pack.valid);
    pack.E = error_map(pack.Phi, pack.phi);
    auto [c, sigma] = confidence_map(pack.E);
    pack.C = std::move(c);
    pack.sigma = sigma;
    return pack;
}

} // namespace regseg
