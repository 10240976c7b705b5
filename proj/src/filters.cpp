#include "regseg/filters.hpp"

#include <algorithm>
#include <cmath>

namespace regseg {

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Sliding clamped box sum along one line: S(i) = sum_{d=-r..r} in[clamp(i+d)].
void box_line(const double* in, double* out, int n, int stride, int r) {
    double s = 0.0;
    for (int d = -r; d <= r; ++d) s += in[clampi(d, 0, n - 1) * stride];
    out[0] = s;
    for (int i = 1; i < n; ++i) {
        s -= in[clampi(i - 1 - r, 0, n - 1) * stride];
        s += in[clampi(i + r, 0, n - 1) * stride];
        out[i * stride] = s;
    }
}

// Adjoint of box_line. Interior voxels gather the zero-extended window of
// coefficients; the two edge voxels additionally absorb the clamped mass
// (window center i reaches voxel 0 with multiplicity r-i+1, symmetrically on
// the right).
void box_line_adjoint(const double* c, double* out, int n, int stride, int r) {
    if (n == 1) {
        out[0] += static_cast<double>(2 * r + 1) * c[0];
        return;
    }
    // interior: sliding zero-extended sum
    double s = 0.0;
    for (int j = -r; j <= r; ++j)
        if (j >= 0 && j < n) s += c[j * stride];
    for (int j = 1; j < n - 1; ++j) {
        const int drop = j - 1 - r;
        const int add = j + r;
        if (drop >= 0 && drop < n) s -= c[drop * stride];
        if (add >= 0 && add < n) s += c[add * stride];
        out[j * stride] += s;
    }
    // edges: full clamped multiplicity
    double left = 0.0;
    for (int i = 0; i <= std::min(r, n - 1); ++i)
        left += static_cast<double>(r - i + 1) * c[i * stride];
    out[0] += left;
    double right = 0.0;
    for (int i = n - 1; i >= std::max(0, n - 1 - r); --i)
        right += static_cast<double>(r - (n - 1 - i) + 1) * c[i * stride];
    out[(n - 1) * stride] += right;
}

template <typename LineOp>
void apply_separable(const double* in, double* out, Dims d, LineOp&& op_x, LineOp&& op_y,
                     LineOp&& op_z, std::vector<double>& tmp) {
    const std::size_t n = d.voxel_count();
    tmp.resize(n);
    const int nx = d.nx, ny = d.ny, nz = d.nz;
    const int sy = nx, sz = nx * ny;

    // x lines: in -> out
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            op_x(in + static_cast<std::size_t>(y) * sy + static_cast<std::size_t>(z) * sz,
                 out + static_cast<std::size_t>(y) * sy + static_cast<std::size_t>(z) * sz, nx, 1);
    // y lines: out -> tmp
    for (int z = 0; z < nz; ++z)
        for (int x = 0; x < nx; ++x)
            op_y(out + static_cast<std::size_t>(x) + static_cast<std::size_t>(z) * sz,
                 tmp.data() + static_cast<std::size_t>(x) + static_cast<std::size_t>(z) * sz, ny, sy);
    // z lines: tmp -> out
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            op_z(tmp.data() + static_cast<std::size_t>(x) + static_cast<std::size_t>(y) * sy,
                 out + static_cast<std::size_t>(x) + static_cast<std::size_t>(y) * sy, nz, sz);
}

} // namespace

void box_sum_3d(const double* in, double* out, Dims dims, int radius) {
    std::vector<double> tmp;
    auto op = [radius](const double* a, double* b, int n, int stride) {
        box_line(a, b, n, stride, radius);
    };
    apply_separable(in, out, dims, op, op, op, tmp);
}

void box_sum_adjoint_3d(const double* in, double* out, Dims dims, int radius) {
    std::vector<double> tmp;
    auto op = [radius](const double* a, double* b, int n, int stride) {
        // zero the destination line first, box_line_adjoint accumulates
        for (int i = 0; i < n; ++i) b[i * stride] = 0.0;
        box_line_adjoint(a, b, n, stride, radius);
    };
    apply_separable(in, out, dims, op, op, op, tmp);
}

void gaussian_blur_3d(double* data, Dims dims, double sigma) {
    if (sigma <= 0.0) return;
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(r + 1);
    double norm = 0.0;
    for (int d = 0; d <= r; ++d) {
        kernel[d] = std::exp(-0.5 * d * d / (sigma * sigma));
        norm += (d == 0) ? kernel[d] : 2.0 * kernel[d];
    }
    for (double& k : kernel) k /= norm;

    auto op = [&kernel, r](const double* a, double* b, int n, int stride) {
        for (int i = 0; i < n; ++i) {
            double s = kernel[0] * a[clampi(i, 0, n - 1) * stride];
            for (int d = 1; d <= r; ++d)
                s += kernel[d] *
                     (a[clampi(i - d, 0, n - 1) * stride] + a[clampi(i + d, 0, n - 1) * stride]);
            b[i * stride] = s;
        }
    };

    std::vector<double> tmp;
    std::vector<double> out(dims.voxel_count());
    apply_separable(data, out.data(), dims, op, op, op, tmp);
    std::copy(out.begin(), out.end(), data);
}

void gaussian_blur_field(DisplacementField& f, double sigma) {
    for (int c = 0; c < 3; ++c) gaussian_blur_3d(f.component(c), f.dims, sigma);
}

} // namespace regseg
