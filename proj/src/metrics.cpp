#include "regseg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace regseg {

namespace {

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
    if (!(a == b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

double directed_hd(const std::vector<std::array<int, 3>>& from,
                   const std::vector<std::array<int, 3>>& to, const Spacing& sp) {
    double worst = 0.0;
    for (const auto& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : to) {
            const double dx = (a[0] - b[0]) * sp.sx;
            const double dy = (a[1] - b[1]) * sp.sy;
            const double dz = (a[2] - b[2]) * sp.sz;
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < best) {
                best = d2;
                if (best <= worst) break; // cannot raise the max any more
            }
        }
        if (best > worst) worst = best;
    }
    return std::sqrt(worst);
}

} // namespace

std::vector<std::array<int, 3>> surface_voxels(const LabelVolume& v, int k) {
    std::vector<std::array<int, 3>> out;
    const Dims d = v.dims;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                if (v.at(x, y, z) != k) continue;
                const bool boundary =
                    x == 0 || v.at(x - 1, y, z) != k || x == d.nx - 1 || v.at(x + 1, y, z) != k ||
                    y == 0 || v.at(x, y - 1, z) != k || y == d.ny - 1 || v.at(x, y + 1, z) != k ||
                    z == 0 || v.at(x, y, z - 1) != k || z == d.nz - 1 || v.at(x, y, z + 1) != k;
                if (boundary) out.push_back({x, y, z});
            }
    return out;
}

double dice_score(const LabelVolume& a, const LabelVolume& b, int k) {
    require_same_dims(a.dims, b.dims, "dice_score");
    const std::size_t n = a.dims.voxel_count();
    std::size_t na = 0, nb = 0, ni = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool ia = a.data[i] == k;
        const bool ib = b.data[i] == k;
        na += ia;
        nb += ib;
        ni += ia && ib;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

double hausdorff(const LabelVolume& a, const LabelVolume& b, int k, HausdorffMode mode) {
    require_same_dims(a.dims, b.dims, "hausdorff");
    const auto sa = surface_voxels(a, k);
    const auto sb = surface_voxels(b, k);
    if (sa.empty() || sb.empty())
        throw std::invalid_argument("hausdorff: class set is empty, metric undefined");
    const double ab = directed_hd(sa, sb, a.spacing);
    if (mode == HausdorffMode::directed) return ab;
    const double ba = directed_hd(sb, sa, a.spacing);
    return std::max(ab, ba);
}

MetricReport evaluate_labels(const LabelVolume& a, const LabelVolume& b) {
    require_same_dims(a.dims, b.dims, "evaluate_labels");
    MetricReport rep;
    const int k = std::max(a.num_classes, b.num_classes);
    double dice_sum = 0.0, hd_sym_sum = 0.0, hd_dir_sum = 0.0;
    int hd_count = 0;
    for (int c = 1; c < k; ++c) {
        rep.classes.push_back(c);
        const double dc = dice_score(a, b, c);
        rep.dice.push_back(dc);
        dice_sum += dc;
        double hs = std::numeric_limits<double>::quiet_NaN();
        double hdir = std::numeric_limits<double>::quiet_NaN();
        try {
            hs = hausdorff(a, b, c, HausdorffMode::symmetric);
            hdir = hausdorff(a, b, c, HausdorffMode::directed);
            hd_sym_sum += hs;
            hd_dir_sum += hdir;
            ++hd_count;
        } catch (const std::invalid_argument&) {
            // empty surface: HD undefined for this class, excluded from means
        }
        rep.hd_sym_mm.push_back(hs);
        rep.hd_dir_mm.push_back(hdir);
    }
    const int fg = k - 1;
    rep.mean_dice = fg > 0 ? dice_sum / fg : 0.0;
    rep.mean_hd_sym = hd_count > 0 ? hd_sym_sum / hd_count : 0.0;
    rep.mean_hd_dir = hd_count > 0 ? hd_dir_sum / hd_count : 0.0;
    return rep;
}

} // namespace regseg
