#include "regseg/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace regseg {

namespace {
constexpr double kDiceEps = 1e-5;
constexpr double kRmsEps = 1e-8;
} // namespace

VoxelNet VoxelNet::init(int num_classes, int hidden, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("VoxelNet: need at least 2 classes");
    if (hidden < 1) throw std::invalid_argument("VoxelNet: need at least 1 hidden unit");
    VoxelNet net;
    net.hidden = hidden;
    net.num_classes = num_classes;
    net.seed = seed;
    net.w1.resize(static_cast<std::size_t>(hidden) * kFeatureDim);
    net.b1.assign(hidden, 0.0);
    // output layer zeroed: the untrained net predicts the uniform distribution
    net.w2.assign(static_cast<std::size_t>(num_classes) * hidden, 0.0);
    net.b2.assign(num_classes, 0.0);

    Rng rng(seed);
    const double bound = std::sqrt(6.0 / (kFeatureDim + hidden));
    for (double& w : net.w1) w = rng.uniform(-bound, bound);
    return net;
}

void SegConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("SegConfig: epochs >= 0");
    if (voxels_per_batch < 1) throw std::invalid_argument("SegConfig: voxels_per_batch >= 1");
    if (step_size <= 0.0) throw std::invalid_argument("SegConfig: step_size > 0");
}

Volume normalize_volume(const Volume& v) {
    const std::size_t n = v.dims.voxel_count();
    double mean = 0.0;
    for (double x : v.data) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : v.data) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n);
    Volume out(v.dims, 0.0, v.spacing);
    if (var < 1e-24) return out; // constant volume normalizes to zero
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = (v.data[i] - mean) * inv;
    return out;
}

void features(const Volume& normalized, int x, int y, int z, double out[kFeatureDim]) {
    const Dims d = normalized.dims;
    int i = 0;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int sx = std::clamp(x + dx, 0, d.nx - 1);
                const int sy = std::clamp(y + dy, 0, d.ny - 1);
                const int sz = std::clamp(z + dz, 0, d.nz - 1);
                out[i++] = normalized.at(sx, sy, sz);
            }
    out[27] = d.nx > 1 ? 2.0 * x / (d.nx - 1) - 1.0 : 0.0;
    out[28] = d.ny > 1 ? 2.0 * y / (d.ny - 1) - 1.0 : 0.0;
    out[29] = d.nz > 1 ? 2.0 * z / (d.nz - 1) - 1.0 : 0.0;
}

namespace {

// forward pass for one voxel; h and p must hold hidden and num_classes slots
void forward(const VoxelNet& net, const double* f, double* h, double* p) {
    for (int j = 0; j < net.hidden; ++j) {
        double z = net.b1[j];
        const double* w = net.w1.data() + static_cast<std::size_t>(j) * kFeatureDim;
        for (int i = 0; i < kFeatureDim; ++i) z += w[i] * f[i];
        h[j] = std::tanh(z);
    }
    double zmax = -1e300;
    for (int k = 0; k < net.num_classes; ++k) {
        double z = net.b2[k];
        const double* w = net.w2.data() + static_cast<std::size_t>(k) * net.hidden;
        for (int j = 0; j < net.hidden; ++j) z += w[j] * h[j];
        p[k] = z;
        zmax = std::max(zmax, z);
    }
    double sum = 0.0;
    for (int k = 0; k < net.num_classes; ++k) {
        p[k] = std::exp(p[k] - zmax);
        sum += p[k];
    }
    const double inv = 1.0 / sum;
    for (int k = 0; k < net.num_classes; ++k) p[k] *= inv;
}

// Draw the batch's voxel indices: every voxel exactly once when the batch
// covers the volume, uniform with replacement otherwise.
std::vector<std::size_t> draw_batch(std::size_t nvox, int batch, Rng& rng) {
    if (static_cast<std::size_t>(batch) >= nvox) {
        std::vector<std::size_t> all(nvox);
        for (std::size_t i = 0; i < nvox; ++i) all[i] = i;
        return all;
    }
    std::vector<std::size_t> out(batch);
    for (int i = 0; i < batch; ++i)
        out[i] = static_cast<std::size_t>(rng.next_u64() % nvox);
    return out;
}

} // namespace

double seg_batch_loss(const VoxelNet& net, const Volume& normalized, const ProbVolume& target,
                      const Volume* conf, std::span<const std::size_t> voxels, NetGrad* grad) {
    const Dims d = normalized.dims;
    const int K = net.num_classes;
    const int H = net.hidden;
    const std::size_t B = voxels.size();
    if (target.num_classes != K)
        throw std::invalid_argument("segmenter: class count mismatch with target");

    std::vector<double> feats(B * kFeatureDim), hs(B * H), ps(B * K), ws(B);
    const std::size_t plane = static_cast<std::size_t>(d.nx) * d.ny;
    for (std::size_t i = 0; i < B; ++i) {
        const std::size_t v = voxels[i];
        const int z = static_cast<int>(v / plane);
        const int rem = static_cast<int>(v % plane);
        const int y = rem / d.nx;
        const int x = rem % d.nx;
        features(normalized, x, y, z, feats.data() + i * kFeatureDim);
        forward(net, feats.data() + i * kFeatureDim, hs.data() + i * H, ps.data() + i * K);
        ws[i] = conf ? conf->data[v] : 1.0;
    }

    // per-class sums of the weighted soft Dice
    std::vector<double> sum_pq(K, 0.0), sum_pp_qq(K, 0.0);
    for (std::size_t i = 0; i < B; ++i) {
        const double w2 = ws[i] * ws[i];
        for (int k = 1; k < K; ++k) {
            const double p = ps[i * K + k];
            const double q = target.at(k, voxels[i]);
            sum_pq[k] += w2 * p * q;
            sum_pp_qq[k] += w2 * (p * p + q * q);
        }
    }
    double dice = 0.0;
    std::vector<double> num(K), den(K);
    for (int k = 1; k < K; ++k) {
        num[k] = 2.0 * sum_pq[k] + kDiceEps;
        den[k] = sum_pp_qq[k] + kDiceEps;
        dice += num[k] / den[k];
    }
    dice /= static_cast<double>(K - 1);

    if (!grad) return -dice;

    // backprop of -dice
    const double invc = 1.0 / static_cast<double>(K - 1);
    std::vector<double> dp(K), dz2(K), dh(H), dz1(H);
    for (std::size_t i = 0; i < B; ++i) {
        const double w2 = ws[i] * ws[i];
        dp[0] = 0.0;
        for (int k = 1; k < K; ++k) {
            const double p = ps[i * K + k];
            const double q = target.at(k, voxels[i]);
            const double ddice_dp =
                invc * (2.0 * w2 * q * den[k] - num[k] * 2.0 * w2 * p) / (den[k] * den[k]);
            dp[k] = -ddice_dp;
        }
        // softmax jacobian
        double dot = 0.0;
        for (int k = 0; k < K; ++k) dot += dp[k] * ps[i * K + k];
        for (int k = 0; k < K; ++k) dz2[k] = ps[i * K + k] * (dp[k] - dot);

        const double* h = hs.data() + i * H;
        const double* f = feats.data() + i * kFeatureDim;
        for (int k = 0; k < K; ++k) {
            grad->b2[k] += dz2[k];
            double* gw = grad->w2.data() + static_cast<std::size_t>(k) * H;
            for (int j = 0; j < H; ++j) gw[j] += dz2[k] * h[j];
        }
        for (int j = 0; j < H; ++j) {
            double s = 0.0;
            for (int k = 0; k < K; ++k) s += dz2[k] * net.w2[static_cast<std::size_t>(k) * H + j];
            dh[j] = s;
            dz1[j] = s * (1.0 - h[j] * h[j]);
        }
        for (int j = 0; j < H; ++j) {
            grad->b1[j] += dz1[j];
            double* gw = grad->w1.data() + static_cast<std::size_t>(j) * kFeatureDim;
            for (int i2 = 0; i2 < kFeatureDim; ++i2) gw[i2] += dz1[j] * f[i2];
        }
    }
    return -dice;
}

namespace {

void rms_step(std::vector<double>& w, std::vector<double>& rms, const std::vector<double>& g,
              double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        rms[i] = 0.99 * rms[i] + 0.01 * g[i] * g[i];
        w[i] -= lr * g[i] / std::sqrt(rms[i] + kRmsEps);
    }
}

void add_scaled(NetGrad& dst, const NetGrad& src, double s) {
    for (std::size_t i = 0; i < dst.w1.size(); ++i) dst.w1[i] += s * src.w1[i];
    for (std::size_t i = 0; i < dst.b1.size(); ++i) dst.b1[i] += s * src.b1[i];
    for (std::size_t i = 0; i < dst.w2.size(); ++i) dst.w2[i] += s * src.w2[i];
    for (std::size_t i = 0; i < dst.b2.size(); ++i) dst.b2[i] += s * src.b2[i];
}

} // namespace

ProbVolume predict(const VoxelNet& net, const Volume& vol) {
    const Volume norm = normalize_volume(vol);
    ProbVolume out(vol.dims, net.num_classes, vol.spacing);
    std::vector<double> f(kFeatureDim), h(net.hidden), p(net.num_classes);
    std::size_t idx = 0;
    for (int z = 0; z < vol.dims.nz; ++z)
        for (int y = 0; y < vol.dims.ny; ++y)
            for (int x = 0; x < vol.dims.nx; ++x, ++idx) {
                features(norm, x, y, z, f.data());
                forward(net, f.data(), h.data(), p.data());
                for (int k = 0; k < net.num_classes; ++k) out.channel(k)[idx] = p[k];
            }
    return out;
}

SegTrainer::SegTrainer(VoxelNet net, const SegConfig& cfg)
    : net_(std::move(net)),
      cfg_(cfg),
      rng_(derive_seed(cfg.seed, "seg-train")),
      rms_w1_(net_.w1.size(), 0.0),
      rms_b1_(net_.b1.size(), 0.0),
      rms_w2_(net_.w2.size(), 0.0),
      rms_b2_(net_.b2.size(), 0.0) {
    cfg.validate();
}

void SegTrainer::run_epoch(std::span<const SupervisedPair> sup,
                           std::span<const WeightedPair> weighted) {
    if (sup.empty())
        throw std::invalid_argument("SegTrainer: supervised pairs are mandatory");
    for (const auto& s : sup)
        if (!(s.image.dims == s.target.dims))
            throw std::invalid_argument("SegTrainer: supervised pair dimension mismatch");
    for (const auto& w : weighted)
        if (!(w.image.dims == w.pseudo.dims) || !(w.image.dims == w.conf.dims))
            throw std::invalid_argument("SegTrainer: weighted pair dimension mismatch");

    // cache normalized images for this epoch
    std::vector<Volume> sup_norm, wt_norm;
    sup_norm.reserve(sup.size());
    for (const auto& s : sup) sup_norm.push_back(normalize_volume(s.image));
    wt_norm.reserve(weighted.size());
    for (const auto& w : weighted) wt_norm.push_back(normalize_volume(w.image));

    // enough batches per pair to visit roughly every voxel once per epoch
    const std::size_t nvox0 = sup[0].image.dims.voxel_count();
    const int chunks = static_cast<int>(
        std::max<std::size_t>(1, (nvox0 + cfg_.voxels_per_batch - 1) / cfg_.voxels_per_batch));
    const int batches = static_cast<int>(std::max(sup.size(), weighted.size())) * chunks;
    for (int b = 0; b < batches; ++b) {
        const std::size_t si = b % sup.size();
        NetGrad g_total(net_);
        const auto sup_voxels = draw_batch(sup[si].image.dims.voxel_count(),
                                           cfg_.voxels_per_batch, rng_);
        const double l_d = seg_batch_loss(net_, sup_norm[si], sup[si].target, nullptr,
                                          sup_voxels, &g_total);

        double l_cgd = 0.0;
        if (!weighted.empty()) {
            const std::size_t wi = b % weighted.size();
            NetGrad g_cgd(net_);
            const auto wt_voxels = draw_batch(weighted[wi].image.dims.voxel_count(),
                                              cfg_.voxels_per_batch, rng_);
            l_cgd = seg_batch_loss(net_, wt_norm[wi], weighted[wi].pseudo, &weighted[wi].conf,
                                   wt_voxels, &g_cgd);
            add_scaled(g_total, g_cgd, cfg_.lambda);
        }

        if (!std::isfinite(l_d) || !std::isfinite(l_cgd))
            throw std::runtime_error("SegTrainer: non-finite loss");

        rms_step(net_.w1, rms_w1_, g_total.w1, cfg_.step_size);
        rms_step(net_.b1, rms_b1_, g_total.b1, cfg_.step_size);
        rms_step(net_.w2, rms_w2_, g_total.w2, cfg_.step_size);
        rms_step(net_.b2, rms_b2_, g_total.b2, cfg_.step_size);

        trace_.push_back({epoch_, b, l_d + cfg_.lambda * l_cgd, l_d, l_cgd});
    }
    ++epoch_;
}

SegTrainResult train_seg(const VoxelNet& net, std::span<const SupervisedPair> sup,
                         std::span<const WeightedPair> weighted, const SegConfig& cfg) {
    cfg.validate();
    if (sup.empty()) throw std::invalid_argument("train_seg: supervised pairs are mandatory");
    SegTrainer trainer(net, cfg);
    for (int e = 0; e < cfg.epochs; ++e) trainer.run_epoch(sup, weighted);
    SegTrainResult res;
    res.trace = trainer.trace();
    res.net = trainer.take_net();
    return res;
}

} // namespace regseg
