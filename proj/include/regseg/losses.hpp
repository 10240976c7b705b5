// losses.hpp - differentiable objectives: windowed correlation similarity,
// field smoothness, soft Dice variants, and the composite registration and
// segmentation objectives.
#pragma once

#include <span>
#include <vector>

#include "regseg/volume.hpp"

namespace regseg {

struct LossValue {
    double value = 0.0;
    // Gradient layout matches the differentiated argument's storage; empty
    // when the gradient was not requested.
    std::vector<double> grad;
};

// Correlation coefficient of two equal-length sequences. Returns 0 when
// either centered sum of squares falls below 1e-5 (constant-input guard).
double pearson(std::span<const double> x, std::span<const double> y);

// Local-window correlation similarity: -(1/N) * sum over voxels of the
// squared window correlation, one window per voxel with clamp-to-edge
// padding. Value in [-1, 0]; gradient w.r.t. `a`.
LossValue nlcc_loss(const Volume& a, const Volume& b, int window = 9, bool with_grad = false);

// Mean over voxels of the squared forward differences of all three field
// components (far-edge differences count as zero). Gradient w.r.t. phi.
LossValue smoothness_loss(const DisplacementField& phi, bool with_grad = false);

// Soft Dice over foreground classes (k >= 1), squared-sum denominators,
// eps = 1e-5. Optional per-voxel weights in [0,1] enter squared, matching
// Dice(w*p, w*q). Returns the mean over foreground classes.
double soft_dice(const ProbVolume& p, const ProbVolume& q, const Volume* weights = nullptr);

// d soft_dice / d p, same layout as p.data.
std::vector<double> soft_dice_grad_p(const ProbVolume& p, const ProbVolume& q,
                                     const Volume* weights = nullptr);

// Confidence-guided Dice loss: -soft_dice(s_hat_u, s_pseudo, weights = C).
// Gradient w.r.t. s_hat_u. C == 1 reduces to the plain Dice loss through the
// identical code path.
LossValue cgd_loss(const Volume& C, const ProbVolume& s_hat_u, const ProbVolume& s_pseudo,
                   bool with_grad = false);

// Weak-supervision Dice loss: -soft_dice(s_pseudo, s_hat_u), gradient w.r.t.
// s_pseudo (so it can flow through warp_prob to the field).
LossValue weak_loss(const ProbVolume& s_pseudo, const ProbVolume& s_hat_u,
                    bool with_grad = false);

struct RegWeakInputs {
    const ProbVolume* moving_labels = nullptr; // warped by phi inside the objective
    const ProbVolume* fixed_pred = nullptr;    // frozen segmenter output on the fixed image
};

struct RegLoss {
    double total = 0.0, ic = 0.0, smo = 0.0, weak = 0.0;
    std::vector<double> grad_phi; // DisplacementField layout
};

// Iteration-dependent registration objective:
//   iter == 0: ic + lambda_smo * smo
//   iter >= 1: ic + lambda_smo * smo + lambda_weak * weak
// where ic compares warp(moving, phi) against fixed and weak compares
// warp_prob(moving_labels, phi) against fixed_pred. Gradient w.r.t. phi.
// Throws if iter >= 1 and the weak inputs are missing.
RegLoss reg_objective(int iter, const Volume& moving, const Volume& fixed,
                      const DisplacementField& phi, double lambda_smo, double lambda_weak,
                      int nlcc_window, const RegWeakInputs& weak, bool with_grad);

// l_d + lambda * l_cgd with elementwise-combined gradients. Empty gradients
// are treated as zeros of the other term's shape.
LossValue seg_objective(const LossValue& l_d, const LossValue& l_cgd, double lambda = 0.5);

} // namespace regseg
