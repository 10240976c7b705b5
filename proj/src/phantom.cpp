#include "regseg/phantom.hpp"

#include <cmath>
#include <stdexcept>

#include "regseg/rng.hpp"

namespace regseg {

namespace {

constexpr double kBackground = 0.05;
constexpr double kFalloff = 0.375; // logistic scale; 10-90% transition ~ 1.5 voxels

struct Ellipsoid {
    Vec3 center_frac; // of (n-1); x < 0.5 for paired units
    Vec3 semi_frac;   // of n
    double level;
    bool paired; // true: this structure and its x-mirror share the label
};

// Fixed catalogue: a big midline "head", two mirrored pairs, a midline
// structure, then two extras for higher structure counts.
const Ellipsoid kCatalogue[6] = {
    {{0.50, 0.50, 0.50}, {0.360, 0.320, 0.320}, 0.40, false},
    {{0.30, 0.40, 0.42}, {0.100, 0.090, 0.090}, 0.75, true},
    {{0.32, 0.64, 0.55}, {0.085, 0.080, 0.090}, 0.95, true},
    {{0.50, 0.55, 0.63}, {0.070, 0.100, 0.080}, 0.60, false},
    {{0.28, 0.60, 0.30}, {0.070, 0.070, 0.070}, 0.85, true},
    {{0.50, 0.35, 0.40}, {0.060, 0.080, 0.100}, 0.55, false},
};

struct UnitGeom {
    Vec3 c_left; // voxel coords; midline units sit exactly on (nx-1)/2
    Vec3 semi;   // voxels
    double level;
    bool paired;
};

// rho^2 of the normalized ellipsoid equation; bit-symmetric because the
// squared x offset of the mirrored twin at the mirrored voxel is identical.
inline double rho2(double x, double y, double z, const Vec3& c, const Vec3& a) {
    const double dx = (x - c.x) / a.x;
    const double dy = (y - c.y) / a.y;
    const double dz = (z - c.z) / a.z;
    return dx * dx + dy * dy + dz * dz;
}

inline double soft_weight(double r2, const Vec3& a) {
    const double scale = std::cbrt(a.x * a.y * a.z);
    const double d = (1.0 - std::sqrt(r2)) * scale; // approx voxels to the boundary
    return 1.0 / (1.0 + std::exp(-d / kFalloff));
}

} // namespace

DisplacementField bump_field(Dims dims, Vec3 center, double radius, double amplitude) {
    DisplacementField f(dims);
    if (amplitude == 0.0) return f;
    const Vec3 dir{0.8, 0.48, 0.36}; // unit vector
    const double inv2r2 = 1.0 / (2.0 * radius * radius);
    std::size_t idx = 0;
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x, ++idx) {
                const double dx = x - center.x, dy = y - center.y, dz = z - center.z;
                const double g = std::exp(-(dx * dx + dy * dy + dz * dz) * inv2r2);
                const double m = amplitude * g;
                f.at(0, idx) = m * dir.x;
                f.at(1, idx) = m * dir.y;
                f.at(2, idx) = m * dir.z;
            }
    return f;
}

PhantomOutput make_phantom(const PhantomSpec& spec) {
    const Dims d = spec.dims;
    if (d.nx < 8 || d.ny < 8 || d.nz < 8)
        throw std::invalid_argument("make_phantom: dims too small");
    if (spec.num_structures < 1 || spec.num_structures > 6)
        throw std::invalid_argument("make_phantom: num_structures must be in [1,6]");

    std::vector<UnitGeom> units;
    for (int s = 0; s < spec.num_structures; ++s) {
        const Ellipsoid& e = kCatalogue[s];
        UnitGeom u;
        u.c_left = {e.center_frac.x * (d.nx - 1), e.center_frac.y * (d.ny - 1),
                    e.center_frac.z * (d.nz - 1)};
        u.semi = {e.semi_frac.x * d.nx, e.semi_frac.y * d.ny, e.semi_frac.z * d.nz};
        u.level = e.level;
        u.paired = e.paired;
        const double m = 1.5; // voxel margin
        if (u.c_left.x - u.semi.x < -m || u.c_left.x + u.semi.x > d.nx - 1 + m ||
            u.c_left.y - u.semi.y < -m || u.c_left.y + u.semi.y > d.ny - 1 + m ||
            u.c_left.z - u.semi.z < -m || u.c_left.z + u.semi.z > d.nz - 1 + m)
            throw std::invalid_argument("make_phantom: structure out of bounds");
        units.push_back(u);
    }

    PhantomOutput out;
    out.image = Volume(d, 0.0);
    out.labels = LabelVolume(d, spec.num_structures + 1);

    std::size_t idx = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++idx) {
                // A paired unit's twin is evaluated at the mirrored integer
                // coordinate rather than from a mirrored center, which keeps
                // the construction bit-exactly symmetric.
                const int xm = d.nx - 1 - x;
                double intensity = kBackground;
                int label = 0;
                for (std::size_t s = 0; s < units.size(); ++s) {
                    const UnitGeom& u = units[s];
                    const double rl = rho2(x, y, z, u.c_left, u.semi);
                    double w = soft_weight(rl, u.semi);
                    bool inside = rl <= 1.0;
                    if (u.paired) {
                        const double rr = rho2(xm, y, z, u.c_left, u.semi);
                        const double wr = soft_weight(rr, u.semi);
                        w = w + wr - w * wr;
                        inside = inside || rr <= 1.0;
                    }
                    intensity = intensity * (1.0 - w) + u.level * w;
                    if (inside) label = static_cast<int>(s) + 1;
                }
                out.image.data[idx] = intensity;
                out.labels.data[idx] = label;
            }

    if (spec.gamma != 1.0)
        for (double& v : out.image.data) v = std::pow(std::max(v, 0.0), spec.gamma);

    if (spec.bias_amplitude != 0.0) {
        idx = 0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x, ++idx) {
                    // the x mode uses |u| so the field stays bit-symmetric
                    const double ux = std::fabs((2.0 * x - (d.nx - 1)) / (d.nx - 1));
                    const double uy = (2.0 * y - (d.ny - 1)) / (d.ny - 1);
                    const double uz = (2.0 * z - (d.nz - 1)) / (d.nz - 1);
                    const double bias = 1.0 + spec.bias_amplitude * std::cos(1.3 * M_PI * ux) *
                                                  std::cos(1.1 * M_PI * uy + 0.4) *
                                                  std::cos(0.7 * M_PI * uz - 0.3);
                    out.image.data[idx] *= bias;
                }
    }

    if (spec.noise_sigma > 0.0) {
        Rng rng(derive_seed(spec.seed, "phantom-noise"));
        for (double& v : out.image.data) v += spec.noise_sigma * rng.normal();
    }

    if (spec.deform_amplitude != 0.0) {
        Vec3 c = spec.bump_center;
        if (c.x == 0 && c.y == 0 && c.z == 0)
            c = {0.30 * (d.nx - 1), 0.45 * (d.ny - 1), 0.45 * (d.nz - 1)};
        DisplacementField f = bump_field(d, c, spec.bump_radius, spec.deform_amplitude);
        out.image = warp(out.image, f);
        out.labels = argmax_labels(warp_prob(one_hot(out.labels), f));
        out.gt_field = std::move(f);
    }
    return out;
}

std::pair<Volume, LabelVolume> random_affine(const Volume& vol, const LabelVolume& labels,
                                             double max_rot_deg, double max_scale,
                                             double max_shift, std::uint64_t seed) {
    if (!(vol.dims == labels.dims))
        throw std::invalid_argument("random_affine: dimension mismatch");
    Rng rng(seed);
    const double deg2rad = M_PI / 180.0;
    const double rx = rng.uniform(-max_rot_deg, max_rot_deg) * deg2rad;
    const double ry = rng.uniform(-max_rot_deg, max_rot_deg) * deg2rad;
    const double rz = rng.uniform(-max_rot_deg, max_rot_deg) * deg2rad;
    const double sx = rng.uniform(1.0 - max_scale, 1.0 + max_scale);
    const double sy = rng.uniform(1.0 - max_scale, 1.0 + max_scale);
    const double sz = rng.uniform(1.0 - max_scale, 1.0 + max_scale);
    const double tx = rng.uniform(-max_shift, max_shift);
    const double ty = rng.uniform(-max_shift, max_shift);
    const double tz = rng.uniform(-max_shift, max_shift);

    const double cx = std::cos(rx), sxr = std::sin(rx);
    const double cy = std::cos(ry), syr = std::sin(ry);
    const double cz = std::cos(rz), szr = std::sin(rz);
    // M = Rz * Ry * Rx * diag(s)
    double m[3][3] = {
        {cz * cy, cz * syr * sxr - szr * cx, cz * syr * cx + szr * sxr},
        {szr * cy, szr * syr * sxr + cz * cx, szr * syr * cx - cz * sxr},
        {-syr, cy * sxr, cy * cx},
    };
    for (int r = 0; r < 3; ++r) {
        m[r][0] *= sx;
        m[r][1] *= sy;
        m[r][2] *= sz;
    }

    const Dims d = vol.dims;
    const Vec3 c{(d.nx - 1) / 2.0, (d.ny - 1) / 2.0, (d.nz - 1) / 2.0};
    Volume out_img(d, 0.0, vol.spacing);
    ProbVolume oh = one_hot(labels);
    ProbVolume out_prob(d, labels.num_classes, labels.spacing);

    std::size_t idx = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++idx) {
                const double px = x - c.x, py = y - c.y, pz = z - c.z;
                const double qx = m[0][0] * px + m[0][1] * py + m[0][2] * pz + c.x + tx;
                const double qy = m[1][0] * px + m[1][1] * py + m[1][2] * pz + c.y + ty;
                const double qz = m[2][0] * px + m[2][1] * py + m[2][2] * pz + c.z + tz;
                out_img.data[idx] = sample_trilinear_raw(vol.data.data(), d, qx, qy, qz);
                for (int k = 0; k < labels.num_classes; ++k)
                    out_prob.channel(k)[idx] = sample_trilinear_raw(oh.channel(k), d, qx, qy, qz);
            }
    return {std::move(out_img), argmax_labels(out_prob)};
}

} // namespace regseg
