// phantom.hpp - synthetic mirror-symmetric test volumes with controllable
// asymmetric deformation and style variation.
#pragma once

#include <cstdint>
#include <optional>

#include "regseg/volume.hpp"

namespace regseg {

struct PhantomSpec {
    Dims dims{48, 48, 48};
    int num_structures = 4; // foreground labels (1..6); class count is num_structures + 1

    // asymmetric perturbation: a Gaussian bump displacement applied to the
    // symmetric base. amplitude 0 disables it. center in voxel coordinates;
    // (0,0,0) picks a default spot inside the left hemisphere.
    double deform_amplitude = 0.0;
    Vec3 bump_center{0, 0, 0};
    double bump_radius = 6.0;

    // style parameters
    double gamma = 1.0;          // intensity curve, sensible range [0.5, 2]
    double bias_amplitude = 0.0; // multiplicative low-frequency bias field
    double noise_sigma = 0.0;    // additive Gaussian noise

    std::uint64_t seed = 0;
};

struct PhantomOutput {
    Volume image;
    LabelVolume labels;
    // exact deformation used when deform_amplitude > 0, so endpoint-error
    // oracles exist
    std::optional<DisplacementField> gt_field;
};

// Base volume is bit-exactly mirror symmetric when deform_amplitude and
// noise_sigma are zero. Labels follow the intensity structures.
PhantomOutput make_phantom(const PhantomSpec& spec);

// The bump field by itself (unit direction fixed); exposed for oracle tests.
DisplacementField bump_field(Dims dims, Vec3 center, double radius, double amplitude);

// Shared random affine resample of an image and its labels (trilinear for
// the image, one-hot-linear + argmax for the labels). Rotation in degrees.
std::pair<Volume, LabelVolume> random_affine(const Volume& vol, const LabelVolume& labels,
                                             double max_rot_deg, double max_scale,
                                             double max_shift, std::uint64_t seed);

} // namespace regseg
