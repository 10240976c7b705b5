#include "regseg/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "regseg/confidence.hpp"
#include "regseg/io.hpp"
#include "regseg/metrics.hpp"
#include "regseg/phantom.hpp"
#include "regseg/rng.hpp"
#include "regseg/style.hpp"

namespace regseg {

const char* style_mode_name(StyleMode m) {
    switch (m) {
        case StyleMode::wist: return "wist";
        case StyleMode::ist: return "ist";
        case StyleMode::none: return "none";
    }
    return "?";
}

StyleMode parse_style_mode(const std::string& s) {
    if (s == "wist") return StyleMode::wist;
    if (s == "ist") return StyleMode::ist;
    if (s == "none") return StyleMode::none;
    throw std::invalid_argument("unknown style mode '" + s + "' (wist|ist|none)");
}

void PipelineConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("pipeline: iterations >= 1");
    if (wist_bins < 1) throw std::invalid_argument("pipeline: wist bins >= 1");
    if (affine_aug_prob < 0.0 || affine_aug_prob > 1.0)
        throw std::invalid_argument("pipeline: affine_aug_prob in [0,1]");
    reg.validate();
    seg.validate();
}

nlohmann::json RunManifest::reproducible() const {
    nlohmann::json j = doc;
    j.erase("timings_sec");
    return j;
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

nlohmann::json config_json(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["iterations"] = cfg.iterations;
    j["style"] = style_mode_name(cfg.style);
    j["wist_bins"] = cfg.wist_bins;
    j["lambda"] = cfg.lambda;
    j["use_cgd"] = cfg.use_cgd;
    j["affine_aug_prob"] = cfg.affine_aug_prob;
    j["seg_hidden"] = cfg.seg_hidden;
    j["master_seed"] = cfg.master_seed;
    j["reg"] = {{"pyramid_levels", cfg.reg.pyramid_levels},
                {"steps_per_level", cfg.reg.steps_per_level},
                {"step_size", cfg.reg.step_size},
                {"lambda_smo", cfg.reg.lambda_smo},
                {"lambda_weak", cfg.reg.lambda_weak},
                {"field_blur_sigma", cfg.reg.field_blur_sigma},
                {"init_noise", cfg.reg.init_noise}};
    j["seg"] = {{"epochs", cfg.seg.epochs},
                {"voxels_per_batch", cfg.seg.voxels_per_batch},
                {"step_size", cfg.seg.step_size}};
    j["paths"] = {{"atlas_image", cfg.atlas_image_path},
                  {"atlas_labels", cfg.atlas_labels_path},
                  {"unlabeled", cfg.unlabeled_paths},
                  {"test_images", cfg.test_image_paths},
                  {"test_labels", cfg.test_label_paths}};
    return j;
}

// at least one class had both surfaces non-empty
bool hd_defined(const MetricReport& r) {
    for (double v : r.hd_sym_mm)
        if (!std::isnan(v)) return true;
    return false;
}

} // namespace

RunManifest run_pipeline(const PipelineConfig& cfg, const PipelineData& data) {
    return run_pipeline(cfg, data, nullptr);
}

RunManifest run_pipeline(const PipelineConfig& cfg, const PipelineData& data, VoxelNet* net_out) {
    cfg.validate();
    if (data.unlabeled.empty()) throw std::invalid_argument("pipeline: need >= 1 unlabeled image");
    if (!(data.atlas_image.dims == data.atlas_labels.dims))
        throw std::invalid_argument("pipeline: atlas image/label dims mismatch");
    if (data.test_images.size() != data.test_labels.size())
        throw std::invalid_argument("pipeline: test image/label count mismatch");
    for (const Volume& u : data.unlabeled)
        if (!(u.dims == data.atlas_image.dims))
            throw std::invalid_argument("pipeline: unlabeled dims mismatch");

    const auto t_start = clock_type::now();
    const std::size_t n_unl = data.unlabeled.size();
    const int num_classes = data.atlas_labels.num_classes;
    const ProbVolume atlas_onehot = one_hot(data.atlas_labels);

    SegConfig seg_cfg = cfg.seg;
    seg_cfg.lambda = cfg.lambda;
    seg_cfg.seed = derive_seed(cfg.master_seed, "seg");
    SegTrainer trainer(
        VoxelNet::init(num_classes, cfg.seg_hidden, derive_seed(cfg.master_seed, "seg-init")),
        seg_cfg);

    RunManifest manifest;
    manifest.doc["config"] = config_json(cfg);
    manifest.doc["seeds"] = {{"master", cfg.master_seed},
                             {"derivation", "splitmix64(master, stage, index)"}};
    manifest.doc["iterations"] = nlohmann::json::array();
    nlohmann::json timings = nlohmann::json::object();

    const bool persist = !cfg.out_dir.empty();
    if (persist) std::filesystem::create_directories(cfg.out_dir);

    for (int it = 0; it < cfg.iterations; ++it) {
        nlohmann::json it_json;
        it_json["iteration"] = it;
        const auto t_iter = clock_type::now();

        // --- registration stage: perceive each unlabeled image ------------
        // iteration >= 1 adds weak supervision from the frozen segmenter
        std::vector<DisplacementField> phis(n_unl);
        std::vector<Volume> confidences(n_unl);
        std::vector<Volume> warped_atlases(n_unl);
        std::vector<LabelVolume> pseudo_hard(n_unl);
        std::vector<double> sigmas(n_unl);
        for (std::size_t j = 0; j < n_unl; ++j) {
            RegConfig rc = cfg.reg;
            rc.seed = derive_seed(cfg.master_seed, "reg",
                                  (static_cast<std::uint64_t>(it) << 16) | j);
            WeakPair weak;
            const WeakPair* weak_ptr = nullptr;
            if (it >= 1) {
                weak.moving_labels = atlas_onehot;
                weak.fixed_pred = predict(trainer.net(), data.unlabeled[j]);
                weak_ptr = &weak;
            }
            ConfidencePack pack = perceive(data.atlas_image, data.unlabeled[j], rc, weak_ptr);
            warped_atlases[j] = warp(data.atlas_image, pack.phi);
            pseudo_hard[j] = argmax_labels(warp_prob(atlas_onehot, pack.phi));
            pseudo_hard[j].num_classes = num_classes;
            sigmas[j] = pack.sigma;
            confidences[j] = std::move(pack.C);
            phis[j] = std::move(pack.phi);

            if (persist && cfg.save_volumes) {
                const std::string dir = cfg.out_dir + "/iter" + std::to_string(it);
                std::filesystem::create_directories(dir);
                const std::string tag = std::to_string(j);
                write_d3f(dir + "/phi_" + tag + ".d3f", phis[j]);
                write_v3d(dir + "/confidence_" + tag + ".v3d", confidences[j]);
                write_v3d(dir + "/warped_atlas_" + tag + ".v3d", warped_atlases[j]);
                write_v3d(dir + "/pseudo_" + tag + ".v3d", pseudo_hard[j]);
            }
        }
        it_json["perceive_sigma"] = sigmas;
        timings["iter" + std::to_string(it) + "_register"] = seconds_since(t_iter);

        // --- registration metrics on the test set -------------------------
        const auto t_regtest = clock_type::now();
        if (!data.test_images.empty()) {
            double dice_sum = 0, hd_sum = 0;
            int hd_n = 0;
            for (std::size_t t = 0; t < data.test_images.size(); ++t) {
                RegConfig rc = cfg.reg;
                rc.seed = derive_seed(cfg.master_seed, "reg-test",
                                      (static_cast<std::uint64_t>(it) << 16) | t);
                WeakPair weak;
                const WeakPair* weak_ptr = nullptr;
                if (it >= 1) {
                    weak.moving_labels = atlas_onehot;
                    weak.fixed_pred = predict(trainer.net(), data.test_images[t]);
                    weak_ptr = &weak;
                }
                const RegistrationResult rr =
                    register_volumes(data.atlas_image, data.test_images[t], rc, weak_ptr);
                LabelVolume warped_labels = argmax_labels(warp_prob(atlas_onehot, rr.phi));
                warped_labels.num_classes = num_classes;
                const MetricReport rep = evaluate_labels(warped_labels, data.test_labels[t]);
                dice_sum += rep.mean_dice;
                if (hd_defined(rep)) {
                    hd_sum += rep.mean_hd_sym;
                    ++hd_n;
                }
            }
            it_json["reg_dice"] = dice_sum / static_cast<double>(data.test_images.size());
            it_json["reg_hd_mm"] = hd_n ? hd_sum / hd_n : 0.0;
        }
        timings["iter" + std::to_string(it) + "_reg_test"] = seconds_since(t_regtest);

        // --- segmentation stage -------------------------------------------
        // style copies are redrawn per epoch; the confidence-guided pairs use
        // the unlabeled images with their hardened pseudo masks
        const auto t_seg = clock_type::now();
        nlohmann::json draws = nlohmann::json::array();
        std::vector<WeightedPair> weighted;
        if (cfg.use_cgd) {
            for (std::size_t j = 0; j < n_unl; ++j)
                weighted.push_back({data.unlabeled[j], one_hot(pseudo_hard[j]), confidences[j]});
        }
        for (int e = 0; e < cfg.seg.epochs; ++e) {
            std::vector<SupervisedPair> sup;
            for (std::size_t j = 0; j < n_unl; ++j) {
                const std::uint64_t idx =
                    (static_cast<std::uint64_t>(it) << 32) |
                    (static_cast<std::uint64_t>(e) << 16) | j;
                Volume copy;
                if (cfg.style == StyleMode::wist) {
                    Rng rng(derive_seed(cfg.master_seed, "wist", idx));
                    WistResult w = wist(warped_atlases[j], data.unlabeled[j], confidences[j],
                                        cfg.wist_bins, rng);
                    draws.push_back(w.betas);
                    copy = std::move(w.out);
                } else if (cfg.style == StyleMode::ist) {
                    Rng rng(derive_seed(cfg.master_seed, "ist", idx));
                    const double beta = rng.uniform();
                    draws.push_back(std::vector<double>{beta});
                    copy = ist(warped_atlases[j], data.unlabeled[j], beta);
                } else {
                    copy = warped_atlases[j];
                }

                LabelVolume target = pseudo_hard[j];
                Rng aug_rng(derive_seed(cfg.master_seed, "affine", idx));
                if (aug_rng.uniform() < cfg.affine_aug_prob) {
                    auto [img_a, lab_a] =
                        random_affine(copy, target, 5.0, 0.05, 2.0, aug_rng.next_u64());
                    copy = std::move(img_a);
                    target = std::move(lab_a);
                    target.num_classes = num_classes;
                }
                sup.push_back({std::move(copy), one_hot(target)});
            }
            trainer.run_epoch(sup, weighted);
        }
        it_json["style_draws"] = draws;
        timings["iter" + std::to_string(it) + "_seg"] = seconds_since(t_seg);

        // --- segmentation metrics on the test set -------------------------
        const auto t_segtest = clock_type::now();
        if (!data.test_images.empty()) {
            double dice_sum = 0, hd_sum = 0;
            int hd_n = 0;
            for (std::size_t t = 0; t < data.test_images.size(); ++t) {
                LabelVolume pred = argmax_labels(predict(trainer.net(), data.test_images[t]));
                pred.num_classes = num_classes;
                const MetricReport rep = evaluate_labels(pred, data.test_labels[t]);
                dice_sum += rep.mean_dice;
                if (hd_defined(rep)) {
                    hd_sum += rep.mean_hd_sym;
                    ++hd_n;
                }
            }
            it_json["seg_dice"] = dice_sum / static_cast<double>(data.test_images.size());
            it_json["seg_hd_mm"] = hd_n ? hd_sum / hd_n : 0.0;
        }
        timings["iter" + std::to_string(it) + "_seg_test"] = seconds_since(t_segtest);

        IterationReport rep;
        rep.iteration = it;
        rep.reg_dice = it_json.value("reg_dice", 0.0);
        rep.reg_hd = it_json.value("reg_hd_mm", 0.0);
        rep.seg_dice = it_json.value("seg_dice", 0.0);
        rep.seg_hd = it_json.value("seg_hd_mm", 0.0);
        manifest.iterations.push_back(rep);
        manifest.doc["iterations"].push_back(std::move(it_json));

        if (persist) {
            write_net1(cfg.out_dir + "/net_iter" + std::to_string(it) + ".net1", trainer.net());
        }
    }

    timings["total"] = seconds_since(t_start);
    manifest.doc["timings_sec"] = std::move(timings);

    if (net_out) *net_out = trainer.net();
    if (persist) {
        std::ofstream f(cfg.out_dir + "/manifest.json");
        f << manifest.doc.dump(2) << '\n';
    }
    return manifest;
}

} // namespace regseg
