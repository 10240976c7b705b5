// volume.hpp - dense 3D grid types, trilinear sampling, warping, mirroring
// and displacement-field composition.
//
// Conventions used throughout the project:
//   * memory order is x-fastest C order: index = x + nx*(y + ny*z)
//   * displacements are stored in voxel units; spacing is metadata used only
//     where physical millimetres are reported
//   * warping is pull-back: out(x) = in(x + phi(x))
//   * sampling outside the grid clamps to the nearest edge voxel
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace regseg {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double norm() const;
};

struct Dims {
    int nx = 0, ny = 0, nz = 0;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    bool operator==(const Dims&) const = default;
};

struct Spacing {
    double sx = 1.0, sy = 1.0, sz = 1.0;
};

// Dense scalar grid (image, error map, confidence map, ...).
struct Volume {
    Dims dims;
    Spacing spacing;
    std::vector<double> data;

    Volume() = default;
    explicit Volume(Dims d, double fill = 0.0, Spacing s = {});

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims.nx) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z));
    }
    double& at(int x, int y, int z) { return data[index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[index(x, y, z)]; }
};

// Per-voxel class indices in [0, num_classes); class 0 is background.
struct LabelVolume {
    Dims dims;
    Spacing spacing;
    int num_classes = 2;
    std::vector<std::int32_t> data;

    LabelVolume() = default;
    LabelVolume(Dims d, int k, Spacing s = {});

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims.nx) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z));
    }
    std::int32_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
    std::int32_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
};

// Per-voxel class probabilities; channel-major storage (channel k occupies
// data[k*nvox .. (k+1)*nvox)). Channel sums stay within 1e-4 of 1.
struct ProbVolume {
    Dims dims;
    Spacing spacing;
    int num_classes = 0;
    std::vector<double> data;

    ProbVolume() = default;
    ProbVolume(Dims d, int k, Spacing s = {});

    const double* channel(int k) const { return data.data() + static_cast<std::size_t>(k) * dims.voxel_count(); }
    double* channel(int k) { return data.data() + static_cast<std::size_t>(k) * dims.voxel_count(); }
    double& at(int k, std::size_t vox) { return data[static_cast<std::size_t>(k) * dims.voxel_count() + vox]; }
    double at(int k, std::size_t vox) const { return data[static_cast<std::size_t>(k) * dims.voxel_count() + vox]; }
};

// Per-voxel displacement vectors in voxel units; component-major storage
// (dx block, then dy block, then dz block — the same layout the D3F file
// format uses).
struct DisplacementField {
    Dims dims;
    Spacing spacing;
    std::vector<double> data;

    DisplacementField() = default;
    explicit DisplacementField(Dims d, Spacing s = {});

    const double* component(int c) const { return data.data() + static_cast<std::size_t>(c) * dims.voxel_count(); }
    double* component(int c) { return data.data() + static_cast<std::size_t>(c) * dims.voxel_count(); }
    double& at(int c, std::size_t vox) { return data[static_cast<std::size_t>(c) * dims.voxel_count() + vox]; }
    double at(int c, std::size_t vox) const { return data[static_cast<std::size_t>(c) * dims.voxel_count() + vox]; }

    Vec3 get(std::size_t vox) const {
        const std::size_t n = dims.voxel_count();
        return {data[vox], data[n + vox], data[2 * n + vox]};
    }
    void set(std::size_t vox, const Vec3& v) {
        const std::size_t n = dims.voxel_count();
        data[vox] = v.x;
        data[n + vox] = v.y;
        data[2 * n + vox] = v.z;
    }
};

// Trilinear interpolation at a continuous voxel coordinate, clamp-to-edge.
double sample_trilinear(const Volume& vol, double px, double py, double pz);

// Raw-buffer variant so displacement components and probability channels can
// be sampled without wrapping them in a Volume.
double sample_trilinear_raw(const double* data, Dims dims, double px, double py, double pz);

struct SampleGrad {
    double value = 0.0;
    Vec3 d; // derivative w.r.t. the sample position; zero along clamped axes
};
SampleGrad sample_trilinear_grad(const double* data, Dims dims, double px, double py, double pz);

// out(x) = vol(x + phi(x))
Volume warp(const Volume& vol, const DisplacementField& phi);

// Each channel warped like a scalar volume, then channels renormalized to
// sum 1 (guard eps = 1e-7).
ProbVolume warp_prob(const ProbVolume& p, const DisplacementField& phi);

// Index flip along the first axis (x -> nx-1-x). For displacement fields the
// dx component is additionally negated so the mirrored vectors point the
// mirrored way.
Volume mirror(const Volume& v);
LabelVolume mirror(const LabelVolume& v);
ProbVolume mirror(const ProbVolume& v);
DisplacementField mirror(const DisplacementField& f);

// The mirror operation as a fixed field: value at x is (nx-1-2x, 0, 0).
// Warping with it reproduces mirror() exactly (integer targets, no
// interpolation).
DisplacementField build_mirror_field(Dims dims);

// Composition such that warp(warp(v, inner), outer) == warp(v, compose(inner, outer)):
// out(x) = outer(x) + inner(x + outer(x)), inner resampled component-wise.
// When `valid` is non-null it receives one flag per voxel, 0 where the
// resample position fell outside the grid and was clamped.
DisplacementField compose(const DisplacementField& inner, const DisplacementField& outer,
                          std::vector<std::uint8_t>* valid = nullptr);

ProbVolume one_hot(const LabelVolume& labels);
LabelVolume argmax_labels(const ProbVolume& p);

// Nearest-neighbour label warping; used as an oracle for hardened soft warps
// and for resampling ground-truth masks.
LabelVolume warp_labels_nn(const LabelVolume& labels, const DisplacementField& phi);

} // namespace regseg
