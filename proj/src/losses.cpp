#include "regseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "regseg/filters.hpp"

namespace regseg {

namespace {

constexpr double kVarGuard = 1e-5;  // centered-sum-of-squares guard
constexpr double kDiceEps = 1e-5;
constexpr double kRenormEps = 1e-7; // warp_prob channel-sum guard

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
    if (!(a == b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

} // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    if (vx < kVarGuard || vy < kVarGuard) return 0.0;
    return (sxy - sx * sy / n) / std::sqrt(vx * vy);
}

LossValue nlcc_loss(const Volume& a, const Volume& b, int window, bool with_grad) {
    require_same_dims(a.dims, b.dims, "nlcc_loss");
    if (window < 1 || window % 2 == 0) throw std::invalid_argument("nlcc_loss: window must be odd");
    const Dims d = a.dims;
    const std::size_t n = d.voxel_count();
    const int r = window / 2;
    const double wcount = static_cast<double>(window) * window * window;

    std::vector<double> sa(n), sb(n), saa(n), sbb(n), sab(n), tmp(n);
    box_sum_3d(a.data.data(), sa.data(), d, r);
    box_sum_3d(b.data.data(), sb.data(), d, r);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = a.data[i] * a.data[i];
    box_sum_3d(tmp.data(), saa.data(), d, r);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = b.data[i] * b.data[i];
    box_sum_3d(tmp.data(), sbb.data(), d, r);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = a.data[i] * b.data[i];
    box_sum_3d(tmp.data(), sab.data(), d, r);

    // Per window i: rho_i^2 = cov^2 / (vx*vy). The gradient w.r.t. a sample
    // X_j of window i is alpha_i*(Y_j - meanY_i) + beta_i*(X_j - meanX_i)
    // with alpha = -(2/N) cov/(vx*vy), beta = (2/N) cov^2/(vx^2*vy); summing
    // over windows containing a voxel is the adjoint clamped box sum.
    std::vector<double> ca, cb, cc;
    if (with_grad) {
        ca.assign(n, 0.0);
        cb.assign(n, 0.0);
        cc.assign(n, 0.0);
    }
    double acc = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double vx = saa[i] - sa[i] * sa[i] / wcount;
        const double vy = sbb[i] - sb[i] * sb[i] / wcount;
        if (vx < kVarGuard || vy < kVarGuard) continue;
        const double cov = sab[i] - sa[i] * sb[i] / wcount;
        const double rho2 = cov * cov / (vx * vy);
        acc += rho2;
        if (with_grad) {
            const double alpha = -2.0 * inv_n * cov / (vx * vy);
            const double beta = 2.0 * inv_n * cov * cov / (vx * vx * vy);
            const double mean_a = sa[i] / wcount;
            const double mean_b = sb[i] / wcount;
            ca[i] = alpha;
            cb[i] = beta;
            cc[i] = alpha * mean_b + beta * mean_a;
        }
    }

    LossValue out;
    out.value = -acc * inv_n;
    if (with_grad) {
        out.grad.assign(n, 0.0);
        std::vector<double> adj(n);
        box_sum_adjoint_3d(ca.data(), adj.data(), d, r);
        for (std::size_t i = 0; i < n; ++i) out.grad[i] = b.data[i] * adj[i];
        box_sum_adjoint_3d(cb.data(), adj.data(), d, r);
        for (std::size_t i = 0; i < n; ++i) out.grad[i] += a.data[i] * adj[i];
        box_sum_adjoint_3d(cc.data(), adj.data(), d, r);
        for (std::size_t i = 0; i < n; ++i) out.grad[i] -= adj[i];
    }
    return out;
}

LossValue smoothness_loss(const DisplacementField& phi, bool with_grad) {
    const Dims d = phi.dims;
    const std::size_t n = d.voxel_count();
    const std::size_t stride[3] = {1, static_cast<std::size_t>(d.nx),
                                   static_cast<std::size_t>(d.nx) * d.ny};
    const int ext[3] = {d.nx, d.ny, d.nz};

    LossValue out;
    if (with_grad) out.grad.assign(3 * n, 0.0);
    double acc = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int c = 0; c < 3; ++c) {
        const double* f = phi.component(c);
        double* g = with_grad ? out.grad.data() + static_cast<std::size_t>(c) * n : nullptr;
        std::size_t idx = 0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x, ++idx) {
                    const int pos[3] = {x, y, z};
                    for (int axis = 0; axis < 3; ++axis) {
                        if (pos[axis] + 1 >= ext[axis]) continue; // far-edge rule: zero difference
                        const double diff = f[idx + stride[axis]] - f[idx];
                        acc += diff * diff;
                        if (g) {
                            const double t = 2.0 * inv_n * diff;
                            g[idx + stride[axis]] += t;
                            g[idx] -= t;
                        }
                    }
                }
    }
    out.value = acc * inv_n;
    return out;
}

namespace {

struct DiceAccum {
    double a = 0.0; // sum w^2 p q
    double b = 0.0; // sum w^2 (p^2 + q^2)
};

void check_dice_inputs(const ProbVolume& p, const ProbVolume& q, const Volume* w,
                       const char* what) {
    require_same_dims(p.dims, q.dims, what);
    if (p.num_classes != q.num_classes)
        throw std::invalid_argument(std::string(what) + ": class count mismatch");
    if (w) {
        require_same_dims(p.dims, w->dims, what);
        for (double v : w->data)
            if (v < 0.0 || v > 1.0)
                throw std::invalid_argument(std::string(what) + ": weights outside [0,1]");
    }
}

} // namespace

double soft_dice(const ProbVolume& p, const ProbVolume& q, const Volume* weights) {
    check_dice_inputs(p, q, weights, "soft_dice");
    const std::size_t n = p.dims.voxel_count();
    const int k = p.num_classes;
    double total = 0.0;
    for (int c = 1; c < k; ++c) {
        DiceAccum acc;
        const double* pc = p.channel(c);
        const double* qc = q.channel(c);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weights ? weights->data[i] : 1.0;
            const double w2 = w * w;
            acc.a += w2 * pc[i] * qc[i];
            acc.b += w2 * (pc[i] * pc[i] + qc[i] * qc[i]);
        }
        total += (2.0 * acc.a + kDiceEps) / (acc.b + kDiceEps);
    }
    return total / static_cast<double>(k - 1);
}

std::vector<double> soft_dice_grad_p(const ProbVolume& p, const ProbVolume& q,
                                     const Volume* weights) {
    check_dice_inputs(p, q, weights, "soft_dice_grad_p");
    const std::size_t n = p.dims.voxel_count();
    const int k = p.num_classes;
    std::vector<double> grad(n * static_cast<std::size_t>(k), 0.0);
    const double inv_classes = 1.0 / static_cast<double>(k - 1);
    for (int c = 1; c < k; ++c) {
        DiceAccum acc;
        const double* pc = p.channel(c);
        const double* qc = q.channel(c);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weights ? weights->data[i] : 1.0;
            const double w2 = w * w;
            acc.a += w2 * pc[i] * qc[i];
            acc.b += w2 * (pc[i] * pc[i] + qc[i] * qc[i]);
        }
        const double num = 2.0 * acc.a + kDiceEps;
        const double den = acc.b + kDiceEps;
        double* gc = grad.data() + static_cast<std::size_t>(c) * n;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weights ? weights->data[i] : 1.0;
            const double w2 = w * w;
            gc[i] = inv_classes * (2.0 * w2 * qc[i] * den - num * 2.0 * w2 * pc[i]) / (den * den);
        }
    }
    return grad;
}

LossValue cgd_loss(const Volume& C, const ProbVolume& s_hat_u, const ProbVolume& s_pseudo,
                   bool with_grad) {
    LossValue out;
    out.value = -soft_dice(s_hat_u, s_pseudo, &C);
    if (with_grad) {
        out.grad = soft_dice_grad_p(s_hat_u, s_pseudo, &C);
        for (double& g : out.grad) g = -g;
    }
    return out;
}

LossValue weak_loss(const ProbVolume& s_pseudo, const ProbVolume& s_hat_u, bool with_grad) {
    LossValue out;
    out.value = -soft_dice(s_pseudo, s_hat_u);
    if (with_grad) {
        out.grad = soft_dice_grad_p(s_pseudo, s_hat_u);
        for (double& g : out.grad) g = -g;
    }
    return out;
}

RegLoss reg_objective(int iter, const Volume& moving, const Volume& fixed,
                      const DisplacementField& phi, double lambda_smo, double lambda_weak,
                      int nlcc_window, const RegWeakInputs& weak, bool with_grad) {
    if (iter < 0) throw std::invalid_argument("reg_objective: iter must be >= 0");
    require_same_dims(moving.dims, fixed.dims, "reg_objective");
    require_same_dims(moving.dims, phi.dims, "reg_objective");
    const bool use_weak = iter >= 1;
    if (use_weak && (!weak.moving_labels || !weak.fixed_pred))
        throw std::invalid_argument("reg_objective: weak inputs required for iter >= 1");

    const Dims d = moving.dims;
    const std::size_t n = d.voxel_count();
    const double* fx = phi.component(0);
    const double* fy = phi.component(1);
    const double* fz = phi.component(2);

    RegLoss out;
    if (with_grad) out.grad_phi.assign(3 * n, 0.0);

    // similarity term through the warp
    Volume warped = warp(moving, phi);
    LossValue ic = nlcc_loss(warped, fixed, nlcc_window, with_grad);
    out.ic = ic.value;
    if (with_grad) {
        std::size_t idx = 0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x, ++idx) {
                    const SampleGrad sg = sample_trilinear_grad(
                        moving.data.data(), d, x + fx[idx], y + fy[idx], z + fz[idx]);
                    out.grad_phi[idx] += ic.grad[idx] * sg.d.x;
                    out.grad_phi[n + idx] += ic.grad[idx] * sg.d.y;
                    out.grad_phi[2 * n + idx] += ic.grad[idx] * sg.d.z;
                }
    }

    LossValue smo = smoothness_loss(phi, with_grad);
    out.smo = smo.value;
    if (with_grad)
        for (std::size_t i = 0; i < 3 * n; ++i) out.grad_phi[i] += lambda_smo * smo.grad[i];

    if (use_weak) {
        require_same_dims(weak.moving_labels->dims, d, "reg_objective weak");
        require_same_dims(weak.fixed_pred->dims, d, "reg_objective weak");
        const ProbVolume& ml = *weak.moving_labels;
        const int k = ml.num_classes;

        ProbVolume pseudo = warp_prob(ml, phi);
        LossValue wl = weak_loss(pseudo, *weak.fixed_pred, with_grad);
        out.weak = wl.value;

        if (with_grad) {
            // chain: grad w.r.t. renormalized channels -> raw warped channels
            // (renorm Jacobian) -> sample positions -> phi
            std::vector<double> raw_sum(n, 0.0);
            for (int c = 0; c < k; ++c) {
                const double* src = ml.channel(c);
                std::size_t idx = 0;
                for (int z = 0; z < d.nz; ++z)
                    for (int y = 0; y < d.ny; ++y)
                        for (int x = 0; x < d.nx; ++x, ++idx)
                            raw_sum[idx] += sample_trilinear_raw(src, d, x + fx[idx],
                                                                 y + fy[idx], z + fz[idx]);
            }
            std::size_t idx = 0;
            for (int z = 0; z < d.nz; ++z)
                for (int y = 0; y < d.ny; ++y)
                    for (int x = 0; x < d.nx; ++x, ++idx) {
                        const double s = std::max(raw_sum[idx], kRenormEps);
                        const double inv_s = 1.0 / s;
                        double dot = 0.0; // sum_k g_k * P_k
                        if (raw_sum[idx] > kRenormEps) {
                            for (int c = 0; c < k; ++c)
                                dot += wl.grad[static_cast<std::size_t>(c) * n + idx] *
                                       pseudo.channel(c)[idx];
                        }
                        Vec3 gpos{0, 0, 0};
                        for (int c = 0; c < k; ++c) {
                            const double gW =
                                (wl.grad[static_cast<std::size_t>(c) * n + idx] - dot) * inv_s;
                            const SampleGrad sg = sample_trilinear_grad(
                                ml.channel(c), d, x + fx[idx], y + fy[idx], z + fz[idx]);
                            gpos.x += gW * sg.d.x;
                            gpos.y += gW * sg.d.y;
                            gpos.z += gW * sg.d.z;
                        }
                        out.grad_phi[idx] += lambda_weak * gpos.x;
                        out.grad_phi[n + idx] += lambda_weak * gpos.y;
                        out.grad_phi[2 * n + idx] += lambda_weak * gpos.z;
                    }
        }
    }

    out.total = out.ic + lambda_smo * out.smo + (use_weak ? lambda_weak * out.weak : 0.0);
    return out;
}

LossValue seg_objective(const LossValue& l_d, const LossValue& l_cgd, double lambda) {
    LossValue out;
    out.value = l_d.value + lambda * l_cgd.value;
    if (l_d.grad.empty() && l_cgd.grad.empty()) return out;
    const std::size_t n = std::max(l_d.grad.size(), l_cgd.grad.size());
    if (!l_d.grad.empty() && !l_cgd.grad.empty() && l_d.grad.size() != l_cgd.grad.size())
        throw std::invalid_argument("seg_objective: gradient shape mismatch");
    out.grad.assign(n, 0.0);
    for (std::size_t i = 0; i < l_d.grad.size(); ++i) out.grad[i] += l_d.grad[i];
    for (std::size_t i = 0; i < l_cgd.grad.size(); ++i) out.grad[i] += lambda * l_cgd.grad[i];
    return out;
}

} // namespace regseg
