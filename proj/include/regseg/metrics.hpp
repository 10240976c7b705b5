// metrics.hpp - evaluation metrics: exact set Dice and surface Hausdorff
// distance in millimetres.
#pragma once

#include <array>
#include <vector>

#include "regseg/volume.hpp"

namespace regseg {

enum class HausdorffMode { directed, symmetric };

// Exact set Dice for class k; both-empty pairs score 1.
double dice_score(const LabelVolume& a, const LabelVolume& b, int k);

// Surface Hausdorff distance for class k in mm. Surface voxels are class-k
// voxels with at least one six-connected non-k neighbour (the volume border
// counts as non-k). Distances are spacing-scaled Euclidean. Throws when
// either class-k set is empty.
double hausdorff(const LabelVolume& a, const LabelVolume& b, int k,
                 HausdorffMode mode = HausdorffMode::symmetric);

struct MetricReport {
    std::vector<int> classes;       // foreground classes evaluated
    std::vector<double> dice;       // per class
    std::vector<double> hd_sym_mm;  // per class; NaN where a surface was empty
    std::vector<double> hd_dir_mm;  // directed a -> b
    double mean_dice = 0.0;
    double mean_hd_sym = 0.0;       // over classes with defined HD
    double mean_hd_dir = 0.0;
};

// Per-foreground-class Dice and Hausdorff of prediction a vs reference b.
MetricReport evaluate_labels(const LabelVolume& a, const LabelVolume& b);

// Surface voxel coordinates for class k (shared definition used by the
// Hausdorff computation).
std::vector<std::array<int, 3>> surface_voxels(const LabelVolume& v, int k);

} // namespace regseg
