#include "regseg/style.hpp"

#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace regseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW planning is not thread-safe; execution is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

void dft3(const Dims& d, std::vector<std::complex<double>>& buf, int sign) {
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        // x is the fastest-varying index, so it is FFTW's last dimension
        plan = fftw_plan_dft_3d(d.nz, d.ny, d.nx, reinterpret_cast<fftw_complex*>(buf.data()),
                                reinterpret_cast<fftw_complex*>(buf.data()), sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_destroy_plan(plan);
    }
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
    if (!(a == b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

} // namespace

Spectrum fft3(const Volume& vol) {
    const std::size_t n = vol.dims.voxel_count();
    std::vector<std::complex<double>> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = vol.data[i];
    dft3(vol.dims, buf, FFTW_FORWARD);

    Spectrum spec;
    spec.dims = vol.dims;
    spec.amp.resize(n);
    spec.phase.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        spec.amp[i] = std::abs(buf[i]);
        double ph = std::arg(buf[i]);
        if (ph <= -kPi) ph += 2.0 * kPi;
        spec.phase[i] = ph;
    }
    return spec;
}

Volume ifft3(const Spectrum& spec) {
    const std::size_t n = spec.dims.voxel_count();
    std::vector<std::complex<double>> buf(n);
    for (std::size_t i = 0; i < n; ++i)
        buf[i] = std::polar(spec.amp[i], spec.phase[i]);
    dft3(spec.dims, buf, FFTW_BACKWARD);

    Volume out(spec.dims);
    const double scale = 1.0 / static_cast<double>(n);
    double real_sq = 0.0, imag_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double re = buf[i].real() * scale;
        const double im = buf[i].imag() * scale;
        out.data[i] = re;
        real_sq += re * re;
        imag_sq += im * im;
    }
    if (imag_sq > 1e-6 * real_sq && imag_sq > 1e-24)
        throw std::runtime_error("ifft3: imaginary residual too large, spectrum is not that of a real image");
    return out;
}

Spectrum ist_spectrum(const Volume& warped_atlas, const Volume& unlabeled, double beta) {
    require_same_dims(warped_atlas.dims, unlabeled.dims, "ist");
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("ist: beta outside [0,1]");
    Spectrum sa = fft3(warped_atlas);
    const Spectrum su = fft3(unlabeled);
    const std::size_t n = sa.amp.size();
    for (std::size_t i = 0; i < n; ++i)
        sa.amp[i] = (1.0 - beta) * sa.amp[i] + beta * su.amp[i];
    return sa;
}

Volume ist(const Volume& warped_atlas, const Volume& unlabeled, double beta) {
    Volume out = ifft3(ist_spectrum(warped_atlas, unlabeled, beta));
    out.spacing = warped_atlas.spacing;
    return out;
}

std::vector<std::uint8_t> BinMasks::mask(int n) const {
    std::vector<std::uint8_t> out(bin.size());
    for (std::size_t i = 0; i < bin.size(); ++i) out[i] = bin[i] == n ? 1 : 0;
    return out;
}

BinMasks confidence_bins(const Volume& C, int n) {
    if (n < 1 || n > 255) throw std::invalid_argument("confidence_bins: need 1 <= n <= 255");
    BinMasks out;
    out.dims = C.dims;
    out.n_bins = n;
    out.bin.resize(C.data.size());
    for (std::size_t i = 0; i < C.data.size(); ++i) {
        const double c = C.data[i];
        if (c < 0.0 || c > 1.0)
            throw std::invalid_argument("confidence_bins: confidence outside [0,1]");
        int b = static_cast<int>(std::floor(c * n));
        if (b >= n) b = n - 1; // C == 1 stays in the top bin
        out.bin[i] = static_cast<std::uint8_t>(b);
    }
    return out;
}

WistResult wist(const Volume& warped_atlas, const Volume& unlabeled, const Volume& C, int n_bins,
                Rng& rng) {
    require_same_dims(warped_atlas.dims, C.dims, "wist");
    const BinMasks bins = confidence_bins(C, n_bins);

    WistResult res;
    res.betas.resize(n_bins);
    for (int n = 0; n < n_bins; ++n)
        res.betas[n] = (static_cast<double>(n) + rng.uniform()) / static_cast<double>(n_bins);

    // Share the two forward transforms across bins; the per-bin result is
    // bit-identical to calling ist() with that bin's beta.
    Spectrum sa = fft3(warped_atlas);
    const Spectrum su = fft3(unlabeled);
    const std::vector<double> amp_a = sa.amp;

    res.out = Volume(warped_atlas.dims, 0.0, warped_atlas.spacing);
    bool bin_used[256] = {};
    for (std::size_t i = 0; i < bins.bin.size(); ++i) bin_used[bins.bin[i]] = true;

    for (int n = 0; n < n_bins; ++n) {
        if (!bin_used[n]) continue;
        const double beta = res.betas[n];
        for (std::size_t i = 0; i < sa.amp.size(); ++i)
            sa.amp[i] = (1.0 - beta) * amp_a[i] + beta * su.amp[i];
        const Volume styled = ifft3(sa);
        for (std::size_t i = 0; i < bins.bin.size(); ++i)
            if (bins.bin[i] == n) res.out.data[i] = styled.data[i];
    }
    return res;
}

} // namespace regseg
