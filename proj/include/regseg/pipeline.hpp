// pipeline.hpp - the full iterative dual-model loop: registration with error
// perception feeding pseudo masks, confidence-binned style copies and the
// confidence-guided term into segmenter training, which in turn weakly
// supervises the next registration round.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "regseg/registration.hpp"
#include "regseg/segmenter.hpp"
#include "regseg/volume.hpp"

namespace regseg {

enum class StyleMode { wist, ist, none };

const char* style_mode_name(StyleMode m);
StyleMode parse_style_mode(const std::string& s);

struct PipelineConfig {
    int iterations = 3;
    StyleMode style = StyleMode::wist;
    int wist_bins = 10;
    double lambda = 0.5; // weight of the confidence-guided seg term
    bool use_cgd = true;
    double affine_aug_prob = 0.5;
    int seg_hidden = 32;
    RegConfig reg;
    SegConfig seg;
    std::uint64_t master_seed = 0;

    std::string out_dir;      // empty: nothing persisted
    bool save_volumes = false;

    // informational path snapshot for the manifest (filled by the CLI)
    std::string atlas_image_path, atlas_labels_path;
    std::vector<std::string> unlabeled_paths, test_image_paths, test_label_paths;

    void validate() const;
};

struct PipelineData {
    Volume atlas_image;
    LabelVolume atlas_labels;
    std::vector<Volume> unlabeled;
    std::vector<Volume> test_images;
    std::vector<LabelVolume> test_labels;
};

struct IterationReport {
    int iteration = 0;
    double reg_dice = 0, reg_hd = 0; // warped-atlas labels vs test references
    double seg_dice = 0, seg_hd = 0; // segmenter predictions vs test references
};

struct RunManifest {
    nlohmann::json doc;
    std::vector<IterationReport> iterations;

    // manifest with volatile fields (timings) removed, for reproducibility
    // comparisons
    nlohmann::json reproducible() const;
};

// Runs the full loop and returns the manifest; persists outputs under
// cfg.out_dir when set. Deterministic given cfg.master_seed.
RunManifest run_pipeline(const PipelineConfig& cfg, const PipelineData& data);

// The trained segmenter of the last completed pipeline run is also returned
// through this variant for callers that keep working with it in memory.
RunManifest run_pipeline(const PipelineConfig& cfg, const PipelineData& data, VoxelNet* net_out);

} // namespace regseg
