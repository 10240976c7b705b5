// segmenter.hpp - trainable per-voxel MLP segmenter over local intensity
// features, optimized with the Dice-based segmentation objective.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "regseg/rng.hpp"
#include "regseg/volume.hpp"

namespace regseg {

inline constexpr int kFeatureDim = 30; // 3^3 intensity patch + 3 normalized coords

// One hidden tanh layer, K-way softmax output. Weight layout is row-major:
// w1[h*30 + i], w2[k*hidden + h].
struct VoxelNet {
    int hidden = 32;
    int num_classes = 2;
    std::vector<double> w1, b1, w2, b2;
    std::uint64_t seed = 0;

    static VoxelNet init(int num_classes, int hidden, std::uint64_t seed);
};

struct SegConfig {
    int epochs = 30;
    int voxels_per_batch = 8192;
    double step_size = 1e-2; // RMS-adaptive
    double lambda = 0.5;     // weight of the confidence-guided term
    std::uint64_t seed = 0;

    void validate() const;
};

// (image, soft target) pair supervising the plain Dice term.
struct SupervisedPair {
    Volume image;
    ProbVolume target;
};

// (image, pseudo target, confidence) triple supervising the
// confidence-guided term.
struct WeightedPair {
    Volume image;
    ProbVolume pseudo;
    Volume conf;
};

// Zero-mean unit-variance copy (guarded for constant volumes); the
// normalization applied before feature extraction everywhere.
Volume normalize_volume(const Volume& v);

// Feature vector at a voxel of a pre-normalized volume: clamp-padded 3^3
// neighborhood in (dz, dy, dx) order, then coordinates scaled to [-1, 1].
void features(const Volume& normalized, int x, int y, int z, double out[kFeatureDim]);

// Per-voxel softmax probabilities; deterministic.
ProbVolume predict(const VoxelNet& net, const Volume& vol);

struct NetGrad {
    std::vector<double> w1, b1, w2, b2;

    explicit NetGrad(const VoxelNet& net)
        : w1(net.w1.size(), 0.0),
          b1(net.b1.size(), 0.0),
          w2(net.w2.size(), 0.0),
          b2(net.b2.size(), 0.0) {}
};

// Dice loss over a sampled voxel batch (weighted when conf is given, the
// confidence-guided form) with backpropagated weight gradients accumulated
// into grad when non-null. `normalized` must already be zero-mean
// unit-variance. This is the objective one optimization step sees.
double seg_batch_loss(const VoxelNet& net, const Volume& normalized, const ProbVolume& target,
                      const Volume* conf, std::span<const std::size_t> voxels, NetGrad* grad);

struct SegTraceRow {
    int epoch = 0;
    int batch = 0;
    double total = 0, l_d = 0, l_cgd = 0;
};

// Incremental trainer so callers can refresh the training set between epochs
// (style copies are redrawn per epoch in the pipeline) while optimizer state
// persists.
class SegTrainer {
public:
    SegTrainer(VoxelNet net, const SegConfig& cfg);

    // one pass: max(|sup|, |weighted|) batches, pairs cycled; sup must be
    // non-empty
    void run_epoch(std::span<const SupervisedPair> sup, std::span<const WeightedPair> weighted);

    const VoxelNet& net() const { return net_; }
    VoxelNet take_net() { return std::move(net_); }
    const std::vector<SegTraceRow>& trace() const { return trace_; }
    int epochs_run() const { return epoch_; }

private:
    VoxelNet net_;
    SegConfig cfg_;
    Rng rng_;
    std::vector<double> rms_w1_, rms_b1_, rms_w2_, rms_b2_;
    std::vector<SegTraceRow> trace_;
    int epoch_ = 0;
};

struct SegTrainResult {
    VoxelNet net;
    std::vector<SegTraceRow> trace;
};

// cfg.epochs passes over fixed pairs; deterministic given cfg.seed.
SegTrainResult train_seg(const VoxelNet& net, std::span<const SupervisedPair> sup,
                         std::span<const WeightedPair> weighted, const SegConfig& cfg);

} // namespace regseg
