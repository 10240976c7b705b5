// filters.hpp - separable 1D/3D filters over x-fastest grids: clamped box
// sums (and their exact adjoint) and Gaussian smoothing.
#pragma once

#include <vector>

#include "regseg/volume.hpp"

namespace regseg {

// out(i) = sum of in over the (2r+1)^3 window centered at i, indices clamped
// to the grid (edge samples repeat, so every window has (2r+1)^3 terms).
void box_sum_3d(const double* in, double* out, Dims dims, int radius);

// Exact adjoint of box_sum_3d: given per-window coefficients c, accumulates
// sum_i c(i) * (multiplicity of voxel j in window i) into out(j). Needed for
// analytic gradients of window statistics.
void box_sum_adjoint_3d(const double* in, double* out, Dims dims, int radius);

// In-place separable Gaussian; kernel radius ceil(3*sigma), clamp-to-edge.
// sigma <= 0 is a no-op.
void gaussian_blur_3d(double* data, Dims dims, double sigma);

void gaussian_blur_field(DisplacementField& f, double sigma);

} // namespace regseg
