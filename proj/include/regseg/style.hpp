// style.hpp - Fourier-domain style transformation: amplitude/phase spectra,
// image-aligned style transfer (ist) and its confidence-weighted form (wist).
#pragma once

#include <cstdint>
#include <vector>

#include "regseg/rng.hpp"
#include "regseg/volume.hpp"

namespace regseg {

// Full 3D DFT of a volume stored as per-frequency amplitude and phase,
// same x-fastest layout as the source grid. Phase lies in (-pi, pi].
struct Spectrum {
    Dims dims;
    std::vector<double> amp;
    std::vector<double> phase;
};

Spectrum fft3(const Volume& vol);

// Inverse transform of amp * exp(i*phase); returns the real part. Throws if
// the imaginary residual exceeds 1e-3 of the real RMS (a reconstructed
// spectrum of a real image is conjugate-symmetric, so a large residual means
// the spectrum was not one).
Volume ifft3(const Spectrum& spec);

// Mixed spectrum behind ist(): amplitude (1-beta)*A(warped_atlas) +
// beta*A(unlabeled), phase of warped_atlas. Exposed so the exact amplitude
// mix can be checked before the real-part projection.
Spectrum ist_spectrum(const Volume& warped_atlas, const Volume& unlabeled, double beta);

// Amplitude-mixed style transfer: ifft3(ist_spectrum(...)). beta in [0,1];
// beta = 0 reproduces warped_atlas, beta = 1 swaps in the unlabeled image's
// amplitude spectrum.
Volume ist(const Volume& warped_atlas, const Volume& unlabeled, double beta);

// Exact partition of the confidence range into n bins: voxel v lands in bin
// floor(C(v)*n), except C == 1 which stays in the top bin.
struct BinMasks {
    Dims dims;
    int n_bins = 0;
    std::vector<std::uint8_t> bin; // per-voxel bin index

    std::vector<std::uint8_t> mask(int n) const;
};

BinMasks confidence_bins(const Volume& C, int n);

struct WistResult {
    Volume out;
    std::vector<double> betas; // per-bin draws, in bin order
};

// Confidence-weighted style transfer: per bin n a strength beta_n drawn
// uniformly from [n/N, (n+1)/N), the full-volume ist computed for each
// beta_n, and voxels assembled from their bin's result. Deterministic given
// the stream state.
WistResult wist(const Volume& warped_atlas, const Volume& unlabeled, const Volume& C, int n_bins,
                Rng& rng);

inline WistResult wist(const Volume& warped_atlas, const Volume& unlabeled, const Volume& C,
                       int n_bins, std::uint64_t seed) {
    Rng rng(seed);
    return wist(warped_atlas, unlabeled, C, n_bins, rng);
}

} // namespace regseg
