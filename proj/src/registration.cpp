#include "regseg/registration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "regseg/filters.hpp"
#include "regseg/rng.hpp"

namespace regseg {

void RegConfig::validate() const {
    if (pyramid_levels < 1) throw std::invalid_argument("RegConfig: pyramid_levels >= 1");
    if (steps_per_level < 0) throw std::invalid_argument("RegConfig: steps_per_level >= 0");
    if (step_size <= 0.0) throw std::invalid_argument("RegConfig: step_size > 0");
    if (field_blur_sigma < 0.0) throw std::invalid_argument("RegConfig: field_blur_sigma >= 0");
    if (init_noise < 0.0) throw std::invalid_argument("RegConfig: init_noise >= 0");
}

int nlcc_window_for_level(int level) {
    return std::max(3, (9 >> level) | 1);
}

namespace {

Dims half_dims(Dims d) {
    return {(d.nx + 1) / 2, (d.ny + 1) / 2, (d.nz + 1) / 2};
}

void pool_block(const double* src, Dims d, int x, int y, int z, double& acc, int& cnt) {
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const int sx = 2 * x + dx, sy = 2 * y + dy, sz = 2 * z + dz;
                if (sx >= d.nx || sy >= d.ny || sz >= d.nz) continue;
                acc += src[static_cast<std::size_t>(sx) +
                           d.nx * (static_cast<std::size_t>(sy) + static_cast<std::size_t>(d.ny) * sz)];
                ++cnt;
            }
}

void pool_channel(const double* src, double* dst, Dims d, Dims h) {
    std::size_t idx = 0;
    for (int z = 0; z < h.nz; ++z)
        for (int y = 0; y < h.ny; ++y)
            for (int x = 0; x < h.nx; ++x, ++idx) {
                double acc = 0.0;
                int cnt = 0;
                pool_block(src, d, x, y, z, acc, cnt);
                dst[idx] = acc / cnt;
            }
}

} // namespace

Volume downsample_volume(const Volume& v) {
    if (v.dims.nx < 2 || v.dims.ny < 2 || v.dims.nz < 2)
        throw std::invalid_argument("downsample_volume: dims too small");
    const Dims h = half_dims(v.dims);
    Volume out(h, 0.0, {v.spacing.sx * 2, v.spacing.sy * 2, v.spacing.sz * 2});
    pool_channel(v.data.data(), out.data.data(), v.dims, h);
    return out;
}

ProbVolume downsample_prob(const ProbVolume& p) {
    if (p.dims.nx < 2 || p.dims.ny < 2 || p.dims.nz < 2)
        throw std::invalid_argument("downsample_prob: dims too small");
    const Dims h = half_dims(p.dims);
    ProbVolume out(h, p.num_classes, {p.spacing.sx * 2, p.spacing.sy * 2, p.spacing.sz * 2});
    for (int k = 0; k < p.num_classes; ++k)
        pool_channel(p.channel(k), out.channel(k), p.dims, h);
    // averaging preserves the channel sum, renormalize anyway
    const std::size_t n = h.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < p.num_classes; ++k) s += out.channel(k)[i];
        const double inv = 1.0 / std::max(s, 1e-7);
        for (int k = 0; k < p.num_classes; ++k) out.channel(k)[i] *= inv;
    }
    return out;
}

DisplacementField downsample_field(const DisplacementField& f) {
    if (f.dims.nx < 2 || f.dims.ny < 2 || f.dims.nz < 2)
        throw std::invalid_argument("downsample_field: dims too small");
    const Dims h = half_dims(f.dims);
    DisplacementField out(h, {f.spacing.sx * 2, f.spacing.sy * 2, f.spacing.sz * 2});
    for (int c = 0; c < 3; ++c) {
        pool_channel(f.component(c), out.component(c), f.dims, h);
        double* dst = out.component(c);
        const std::size_t n = h.voxel_count();
        for (std::size_t i = 0; i < n; ++i) dst[i] *= 0.5;
    }
    return out;
}

DisplacementField upsample_field(const DisplacementField& f, Dims target) {
    DisplacementField out(target, f.spacing);
    const double ratio[3] = {static_cast<double>(target.nx) / f.dims.nx,
                             static_cast<double>(target.ny) / f.dims.ny,
                             static_cast<double>(target.nz) / f.dims.nz};
    for (int c = 0; c < 3; ++c) {
        const double* src = f.component(c);
        double* dst = out.component(c);
        std::size_t idx = 0;
        for (int z = 0; z < target.nz; ++z)
            for (int y = 0; y < target.ny; ++y)
                for (int x = 0; x < target.nx; ++x, ++idx) {
                    // pixel-center mapping, the inverse of 2x pooling geometry
                    const double px = (x + 0.5) / ratio[0] - 0.5;
                    const double py = (y + 0.5) / ratio[1] - 0.5;
                    const double pz = (z + 0.5) / ratio[2] - 0.5;
                    dst[idx] = ratio[c] * sample_trilinear_raw(src, f.dims, px, py, pz);
                }
    }
    return out;
}

RegistrationResult register_volumes(const Volume& moving, const Volume& fixed,
                                    const RegConfig& cfg, const WeakPair* weak) {
    cfg.validate();
    if (!(moving.dims == fixed.dims))
        throw std::invalid_argument("register_volumes: dimension mismatch");
    if (weak) {
        if (!(weak->moving_labels.dims == moving.dims) ||
            !(weak->fixed_pred.dims == moving.dims))
            throw std::invalid_argument("register_volumes: weak label dimension mismatch");
    }

    // build pyramids, level 0 = finest
    std::vector<Volume> mov_pyr{moving}, fix_pyr{fixed};
    std::vector<ProbVolume> ml_pyr, fp_pyr;
    if (weak) {
        ml_pyr.push_back(weak->moving_labels);
        fp_pyr.push_back(weak->fixed_pred);
    }
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
        const Dims cur = mov_pyr.back().dims;
        if (cur.nx < 4 || cur.ny < 4 || cur.nz < 4) break; // stop before degenerate grids
        mov_pyr.push_back(downsample_volume(mov_pyr.back()));
        fix_pyr.push_back(downsample_volume(fix_pyr.back()));
        if (weak) {
            ml_pyr.push_back(downsample_prob(ml_pyr.back()));
            fp_pyr.push_back(downsample_prob(fp_pyr.back()));
        }
    }
    const int levels = static_cast<int>(mov_pyr.size());
    const int iter_mode = weak ? 1 : 0;

    RegistrationResult res;

    // seeded smoothed noise init at the coarsest level
    DisplacementField phi(mov_pyr[levels - 1].dims);
    if (cfg.init_noise > 0.0) {
        Rng rng(derive_seed(cfg.seed, "reg-init"));
        for (double& v : phi.data) v = cfg.init_noise * rng.normal();
        gaussian_blur_field(phi, 1.5);
    }

    for (int level = levels - 1; level >= 0; --level) {
        const Volume& mov = mov_pyr[level];
        const Volume& fix = fix_pyr[level];
        if (!(phi.dims == mov.dims)) phi = upsample_field(phi, mov.dims);

        RegWeakInputs weak_in;
        if (weak) {
            weak_in.moving_labels = &ml_pyr[level];
            weak_in.fixed_pred = &fp_pyr[level];
        }
        const int window = nlcc_window_for_level(level);
        const std::size_t nparam = phi.data.size();
        std::vector<double> rms(nparam, 0.0);
        std::vector<double> update(nparam);

        for (int step = 0; step < cfg.steps_per_level; ++step) {
            RegLoss rl = reg_objective(iter_mode, mov, fix, phi, cfg.lambda_smo, cfg.lambda_weak,
                                       window, weak_in, true);
            if (!std::isfinite(rl.total))
                throw std::runtime_error("register_volumes: non-finite loss at level " +
                                         std::to_string(level) + " step " + std::to_string(step));
            res.loss_trace.push_back({step, level, rl.total, rl.ic, rl.smo, rl.weak});

            // decaying step keeps the RMS-normalized updates from oscillating
            // at a fixed floor, so the field settles into the objective's
            // optimum by the end of the level
            const double lr =
                cfg.step_size *
                std::exp(-3.0 * step / std::max(1, cfg.steps_per_level - 1));
            for (std::size_t i = 0; i < nparam; ++i) {
                const double g = rl.grad_phi[i];
                rms[i] = 0.99 * rms[i] + 0.01 * g * g;
                update[i] = lr * g / std::sqrt(rms[i] + 1e-8);
            }
            DisplacementField upd(phi.dims);
            upd.data = update;
            gaussian_blur_field(upd, cfg.field_blur_sigma);
            for (std::size_t i = 0; i < nparam; ++i) phi.data[i] -= upd.data[i];
        }
    }

    // convergence heuristic over the last 10 recorded steps
    const std::size_t nt = res.loss_trace.size();
    if (nt >= 11) {
        const double last = res.loss_trace[nt - 1].total;
        const double earlier = res.loss_trace[nt - 11].total;
        const double denom = std::max({std::fabs(last), std::fabs(earlier), 1e-12});
        res.converged = std::fabs(last - earlier) / denom < 1e-5;
    }
    res.phi = std::move(phi);
    res.phi.spacing = fixed.spacing;
    return res;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
    os << "step,level,total,ic,smo,weak\n";
    for (const TraceRow& r : trace)
        os << r.step << ',' << r.level << ',' << r.total << ',' << r.ic << ',' << r.smo << ','
           << r.weak << '\n';
}

} // namespace regseg
