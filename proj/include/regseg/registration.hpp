// registration.hpp - multi-resolution first-order optimization of a dense
// displacement field under the iteration-dependent objective.
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "regseg/losses.hpp"
#include "regseg/volume.hpp"

namespace regseg {

struct RegConfig {
    int pyramid_levels = 3;
    int steps_per_level = 150;
    double step_size = 0.5;       // voxels; per-parameter RMS-scaled
    double lambda_smo = 1.0;
    double lambda_weak = 1.0;
    double field_blur_sigma = 1.0; // update smoothing, voxels
    // Amplitude of the seeded, smoothed field-noise initialization. The two
    // registrations behind error perception share one configuration; the
    // grid-anchored noise is what de-correlates their optimization paths
    // where the data does not pin the solution down.
    double init_noise = 0.4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TraceRow {
    int step = 0;
    int level = 0;
    double total = 0, ic = 0, smo = 0, weak = 0;
};

struct RegistrationResult {
    DisplacementField phi;
    std::vector<TraceRow> loss_trace; // one row per optimization step
    bool converged = false;           // relative loss change < 1e-5 over the last 10 steps
};

struct WeakPair {
    ProbVolume moving_labels; // propagated through the field inside the objective
    ProbVolume fixed_pred;    // frozen segmenter prediction of the fixed image
};

// Coarse-to-fine dense-field registration of moving onto fixed. When weak is
// present the objective includes the weak-supervision Dice term (iteration
// >= 1 behavior). Deterministic given cfg.seed.
RegistrationResult register_volumes(const Volume& moving, const Volume& fixed,
                                    const RegConfig& cfg,
                                    const WeakPair* weak = nullptr);

// 2x average pooling (ceil sizes, partial edge blocks averaged over their
// actual count).
Volume downsample_volume(const Volume& v);
ProbVolume downsample_prob(const ProbVolume& p);
// vectors averaged then halved
DisplacementField downsample_field(const DisplacementField& f);
// trilinear resample to target dims, components rescaled by the dimension
// ratio (doubling for an exact 2x upsample)
DisplacementField upsample_field(const DisplacementField& f, Dims target);

// "step,level,total,ic,smo,weak" CSV rows
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

// window used by the similarity term at a pyramid level (9 at the finest)
int nlcc_window_for_level(int level);

} // namespace regseg
