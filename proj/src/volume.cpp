#include "regseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace regseg {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Volume::Volume(Dims d, double fill, Spacing s)
    : dims(d), spacing(s), data(d.voxel_count(), fill) {}

LabelVolume::LabelVolume(Dims d, int k, Spacing s)
    : dims(d), spacing(s), num_classes(k), data(d.voxel_count(), 0) {}

ProbVolume::ProbVolume(Dims d, int k, Spacing s)
    : dims(d), spacing(s), num_classes(k),
      data(d.voxel_count() * static_cast<std::size_t>(k), 0.0) {}

DisplacementField::DisplacementField(Dims d, Spacing s)
    : dims(d), spacing(s), data(d.voxel_count() * 3, 0.0) {}

namespace {

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
    if (!(a == b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

inline double clampd(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

} // namespace

double sample_trilinear_raw(const double* data, Dims dims, double px, double py, double pz) {
    px = clampd(px, 0.0, dims.nx - 1.0);
    py = clampd(py, 0.0, dims.ny - 1.0);
    pz = clampd(pz, 0.0, dims.nz - 1.0);

    int x0 = static_cast<int>(px);
    int y0 = static_cast<int>(py);
    int z0 = static_cast<int>(pz);
    if (x0 > dims.nx - 2) x0 = std::max(0, dims.nx - 2);
    if (y0 > dims.ny - 2) y0 = std::max(0, dims.ny - 2);
    if (z0 > dims.nz - 2) z0 = std::max(0, dims.nz - 2);
    const int x1 = std::min(x0 + 1, dims.nx - 1);
    const int y1 = std::min(y0 + 1, dims.ny - 1);
    const int z1 = std::min(z0 + 1, dims.nz - 1);
    const double fx = px - x0, fy = py - y0, fz = pz - z0;

    const std::size_t sx = 1;
    const std::size_t sy = static_cast<std::size_t>(dims.nx);
    const std::size_t sz = sy * static_cast<std::size_t>(dims.ny);
    const std::size_t i000 = x0 * sx + y0 * sy + z0 * sz;
    const std::size_t i100 = x1 * sx + y0 * sy + z0 * sz;
    const std::size_t i010 = x0 * sx + y1 * sy + z0 * sz;
    const std::size_t i110 = x1 * sx + y1 * sy + z0 * sz;
    const std::size_t i001 = x0 * sx + y0 * sy + z1 * sz;
    const std::size_t i101 = x1 * sx + y0 * sy + z1 * sz;
    const std::size_t i011 = x0 * sx + y1 * sy + z1 * sz;
    const std::size_t i111 = x1 * sx + y1 * sy + z1 * sz;

    // a*(1-t) + b*t keeps the arithmetic symmetric under index reversal
    const double c00 = data[i000] * (1.0 - fx) + data[i100] * fx;
    const double c10 = data[i010] * (1.0 - fx) + data[i110] * fx;
    const double c01 = data[i001] * (1.0 - fx) + data[i101] * fx;
    const double c11 = data[i011] * (1.0 - fx) + data[i111] * fx;
    const double c0 = c00 * (1.0 - fy) + c10 * fy;
    const double c1 = c01 * (1.0 - fy) + c11 * fy;
    return c0 * (1.0 - fz) + c1 * fz;
}

double sample_trilinear(const Volume& vol, double px, double py, double pz) {
    return sample_trilinear_raw(vol.data.data(), vol.dims, px, py, pz);
}

SampleGrad sample_trilinear_grad(const double* data, Dims dims, double px, double py, double pz) {
    const bool cx = px <= 0.0 || px >= dims.nx - 1.0;
    const bool cy = py <= 0.0 || py >= dims.ny - 1.0;
    const bool cz = pz <= 0.0 || pz >= dims.nz - 1.0;

    px = clampd(px, 0.0, dims.nx - 1.0);
    py = clampd(py, 0.0, dims.ny - 1.0);
    pz = clampd(pz, 0.0, dims.nz - 1.0);

    int x0 = static_cast<int>(px);
    int y0 = static_cast<int>(py);
    int z0 = static_cast<int>(pz);
    if (x0 > dims.nx - 2) x0 = std::max(0, dims.nx - 2);
    if (y0 > dims.ny - 2) y0 = std::max(0, dims.ny - 2);
    if (z0 > dims.nz - 2) z0 = std::max(0, dims.nz - 2);
    const int x1 = std::min(x0 + 1, dims.nx - 1);
    const int y1 = std::min(y0 + 1, dims.ny - 1);
    const int z1 = std::min(z0 + 1, dims.nz - 1);
    const double fx = px - x0, fy = py - y0, fz = pz - z0;

    const std::size_t sy = static_cast<std::size_t>(dims.nx);
    const std::size_t sz = sy * static_cast<std::size_t>(dims.ny);
    auto v = [&](int x, int y, int z) {
        return data[static_cast<std::size_t>(x) + y * sy + z * sz];
    };

    const double v000 = v(x0, y0, z0), v100 = v(x1, y0, z0);
    const double v010 = v(x0, y1, z0), v110 = v(x1, y1, z0);
    const double v001 = v(x0, y0, z1), v101 = v(x1, y0, z1);
    const double v011 = v(x0, y1, z1), v111 = v(x1, y1, z1);

    const double c00 = v000 * (1.0 - fx) + v100 * fx;
    const double c10 = v010 * (1.0 - fx) + v110 * fx;
    const double c01 = v001 * (1.0 - fx) + v101 * fx;
    const double c11 = v011 * (1.0 - fx) + v111 * fx;
    const double c0 = c00 * (1.0 - fy) + c10 * fy;
    const double c1 = c01 * (1.0 - fy) + c11 * fy;

    SampleGrad g;
    g.value = c0 * (1.0 - fz) + c1 * fz;

    const double dx00 = v100 - v000, dx10 = v110 - v010;
    const double dx01 = v101 - v001, dx11 = v111 - v011;
    g.d.x = cx ? 0.0
               : ((dx00 * (1.0 - fy) + dx10 * fy) * (1.0 - fz) +
                  (dx01 * (1.0 - fy) + dx11 * fy) * fz);
    g.d.y = cy ? 0.0 : ((c10 - c00) * (1.0 - fz) + (c11 - c01) * fz);
    g.d.z = cz ? 0.0 : (c1 - c0);
    return g;
}

Volume warp(const Volume& vol, const DisplacementField& phi) {
    require_same_dims(vol.dims, phi.dims, "warp");
    Volume out(vol.dims, 0.0, vol.spacing);
    const std::size_t n = vol.dims.voxel_count();
    const double* fx = phi.component(0);
    const double* fy = phi.component(1);
    const double* fz = phi.component(2);
    std::size_t idx = 0;
    for (int z = 0; z < vol.dims.nz; ++z)
        for (int y = 0; y < vol.dims.ny; ++y)
            for (int x = 0; x < vol.dims.nx; ++x, ++idx)
                out.data[idx] = sample_trilinear_raw(vol.data.data(), vol.dims,
                                                     x + fx[idx], y + fy[idx], z + fz[idx]);
    (void)n;
    return out;
}

ProbVolume warp_prob(const ProbVolume& p, const DisplacementField& phi) {
    require_same_dims(p.dims, phi.dims, "warp_prob");
    ProbVolume out(p.dims, p.num_classes, p.spacing);
    const std::size_t n = p.dims.voxel_count();
    const double* fx = phi.component(0);
    const double* fy = phi.component(1);
    const double* fz = phi.component(2);

    for (int k = 0; k < p.num_classes; ++k) {
        const double* src = p.channel(k);
        double* dst = out.channel(k);
        std::size_t idx = 0;
        for (int z = 0; z < p.dims.nz; ++z)
            for (int y = 0; y < p.dims.ny; ++y)
                for (int x = 0; x < p.dims.nx; ++x, ++idx)
                    dst[idx] = sample_trilinear_raw(src, p.dims, x + fx[idx], y + fy[idx], z + fz[idx]);
    }

    constexpr double eps = 1e-7;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < p.num_classes; ++k) s += out.channel(k)[i];
        const double inv = 1.0 / std::max(s, eps);
        for (int k = 0; k < p.num_classes; ++k) out.channel(k)[i] *= inv;
    }
    return out;
}

namespace {

template <typename T>
void mirror_scalar(const T* in, T* out, Dims d) {
    const std::size_t sy = static_cast<std::size_t>(d.nx);
    const std::size_t sz = sy * static_cast<std::size_t>(d.ny);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y) {
            const T* row_in = in + y * sy + z * sz;
            T* row_out = out + y * sy + z * sz;
            for (int x = 0; x < d.nx; ++x) row_out[x] = row_in[d.nx - 1 - x];
        }
}

} // namespace

Volume mirror(const Volume& v) {
    Volume out(v.dims, 0.0, v.spacing);
    mirror_scalar(v.data.data(), out.data.data(), v.dims);
    return out;
}

LabelVolume mirror(const LabelVolume& v) {
    LabelVolume out(v.dims, v.num_classes, v.spacing);
    mirror_scalar(v.data.data(), out.data.data(), v.dims);
    return out;
}

ProbVolume mirror(const ProbVolume& v) {
    ProbVolume out(v.dims, v.num_classes, v.spacing);
    for (int k = 0; k < v.num_classes; ++k)
        mirror_scalar(v.channel(k), out.channel(k), v.dims);
    return out;
}

DisplacementField mirror(const DisplacementField& f) {
    DisplacementField out(f.dims, f.spacing);
    for (int c = 0; c < 3; ++c) mirror_scalar(f.component(c), out.component(c), f.dims);
    double* dx = out.component(0);
    const std::size_t n = f.dims.voxel_count();
    for (std::size_t i = 0; i < n; ++i) dx[i] = -dx[i];
    return out;
}

DisplacementField build_mirror_field(Dims dims) {
    DisplacementField out(dims);
    double* dx = out.component(0);
    std::size_t idx = 0;
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x, ++idx)
                dx[idx] = static_cast<double>(dims.nx - 1 - 2 * x);
    return out;
}

DisplacementField compose(const DisplacementField& inner, const DisplacementField& outer,
                          std::vector<std::uint8_t>* valid) {
    require_same_dims(inner.dims, outer.dims, "compose");
    const Dims d = inner.dims;
    DisplacementField out(d, outer.spacing);
    if (valid) valid->assign(d.voxel_count(), 1);

    const double* ox = outer.component(0);
    const double* oy = outer.component(1);
    const double* oz = outer.component(2);
    std::size_t idx = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++idx) {
                const double px = x + ox[idx];
                const double py = y + oy[idx];
                const double pz = z + oz[idx];
                if (valid && (px < 0.0 || px > d.nx - 1.0 || py < 0.0 || py > d.ny - 1.0 ||
                              pz < 0.0 || pz > d.nz - 1.0))
                    (*valid)[idx] = 0;
                for (int c = 0; c < 3; ++c)
                    out.at(c, idx) = outer.at(c, idx) +
                                     sample_trilinear_raw(inner.component(c), d, px, py, pz);
            }
    return out;
}

ProbVolume one_hot(const LabelVolume& labels) {
    ProbVolume out(labels.dims, labels.num_classes, labels.spacing);
    const std::size_t n = labels.dims.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t k = labels.data[i];
        if (k < 0 || k >= labels.num_classes)
            throw std::invalid_argument("one_hot: label out of range");
        out.channel(k)[i] = 1.0;
    }
    return out;
}

LabelVolume argmax_labels(const ProbVolume& p) {
    LabelVolume out(p.dims, p.num_classes, p.spacing);
    const std::size_t n = p.dims.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double bv = p.channel(0)[i];
        for (int k = 1; k < p.num_classes; ++k) {
            const double v = p.channel(k)[i];
            if (v > bv) {
                bv = v;
                best = k;
            }
        }
        out.data[i] = best;
    }
    return out;
}

LabelVolume warp_labels_nn(const LabelVolume& labels, const DisplacementField& phi) {
    require_same_dims(labels.dims, phi.dims, "warp_labels_nn");
    const Dims d = labels.dims;
    LabelVolume out(d, labels.num_classes, labels.spacing);
    const double* fx = phi.component(0);
    const double* fy = phi.component(1);
    const double* fz = phi.component(2);
    std::size_t idx = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++idx) {
                const int sx = std::clamp(static_cast<int>(std::lround(x + fx[idx])), 0, d.nx - 1);
                const int sy = std::clamp(static_cast<int>(std::lround(y + fy[idx])), 0, d.ny - 1);
                const int sz = std::clamp(static_cast<int>(std::lround(z + fz[idx])), 0, d.nz - 1);
                out.data[idx] = labels.at(sx, sy, sz);
            }
    return out;
}

} // namespace regseg
