// confidence.hpp - optimization-free registration error perception: the
// original and mirrored registrations are compared through a composite
// field, giving a per-voxel error map and a Gaussian confidence map.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "regseg/registration.hpp"
#include "regseg/volume.hpp"

namespace regseg {

struct ConfidencePack {
    DisplacementField phi;       // original-space registration
    DisplacementField phi_prime; // mirrored-space registration
    DisplacementField Phi;       // composite: mirror -> phi_prime -> mirror as one field
    Volume E;                    // per-voxel error, voxel units
    Volume C;                    // confidence in (0, 1]
    double sigma = 0.0;
    // 0 where the composition had to clamp a resample position; error values
    // there are kept but should not be trusted
    std::vector<std::uint8_t> valid;
};

// Phi = phi_mirr + (phi_prime + phi_mirr o phi_prime) o phi_mirr, built with
// two compose() calls in exactly that order. Warping with the result equals
// mirroring, warping with phi_prime, and mirroring back.
DisplacementField composite_mirror_field(const DisplacementField& phi_prime,
                                         std::vector<std::uint8_t>* valid = nullptr);

// E(x) = || Phi(x) - phi(x) ||_2
Volume error_map(const DisplacementField& Phi, const DisplacementField& phi);

// C = exp(-E^2 / (2 sigma^2)) with sigma the population standard deviation
// of E; degenerate sigma (< 1e-8) gives C == 1.
std::pair<Volume, double> confidence_map(const Volume& E);

// Runs register(atlas, unlabeled) and register(mirror(atlas),
// mirror(unlabeled)) with the same configuration (weak labels mirrored for
// the second call), then composes, differences and converts to confidence.
ConfidencePack perceive(const Volume& atlas, const Volume& unlabeled, const RegConfig& cfg,
                        const WeakPair* weak = nullptr);

} // namespace regseg
