#include "doctest.h"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "regseg/losses.hpp"
#include "regseg/metrics.hpp"

#include "helpers.hpp"

using namespace regseg;
using namespace testutil;

namespace {

// Independent brute-force oracle: recomputes surfaces from scratch with set
// semantics and takes the max-min over every pair with no early exits.
std::vector<std::array<int, 3>> oracle_surface(const LabelVolume& v, int k) {
    std::vector<std::array<int, 3>> out;
    const int nbr[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int z = 0; z < v.dims.nz; ++z)
        for (int y = 0; y < v.dims.ny; ++y)
            for (int x = 0; x < v.dims.nx; ++x) {
                if (v.at(x, y, z) != k) continue;
                bool edge = false;
                for (const auto& nb : nbr) {
                    const int ax = x + nb[0], ay = y + nb[1], az = z + nb[2];
                    if (ax < 0 || ay < 0 || az < 0 || ax >= v.dims.nx || ay >= v.dims.ny ||
                        az >= v.dims.nz || v.at(ax, ay, az) != k) {
                        edge = true;
                        break;
                    }
                }
                if (edge) out.push_back({x, y, z});
            }
    return out;
}

double oracle_directed(const std::vector<std::array<int, 3>>& a,
                       const std::vector<std::array<int, 3>>& b, Spacing sp) {
    double worst = 0.0;
    for (const auto& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : b) {
            const double dx = (p[0] - q[0]) * sp.sx;
            const double dy = (p[1] - q[1]) * sp.sy;
            const double dz = (p[2] - q[2]) * sp.sz;
            best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
        }
        worst = std::max(worst, best);
    }
    return worst;
}

double oracle_dice(const LabelVolume& a, const LabelVolume& b, int k) {
    std::size_t na = 0, nb = 0, ni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        na += a.data[i] == k;
        nb += b.data[i] == k;
        ni += a.data[i] == k && b.data[i] == k;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

LabelVolume random_labels(Dims d, int k, std::uint64_t seed, Spacing sp = {}) {
    LabelVolume lab(d, k, sp);
    Rng rng(seed);
    // blobby random masks: threshold smoothed noise per class
    for (auto& l : lab.data) l = 0;
    for (int c = 1; c < k; ++c) {
        Volume noise = random_volume(d, seed * 31 + c);
        gaussian_blur_3d(noise.data.data(), d, 1.5);
        for (std::size_t i = 0; i < lab.data.size(); ++i)
            if (noise.data[i] > 0.55) lab.data[i] = c;
    }
    return lab;
}

} // namespace

TEST_CASE("dice of identical and disjoint masks") {
    LabelVolume a({4, 4, 4}, 2), b({4, 4, 4}, 2);
    for (int i = 0; i < 8; ++i) a.data[i] = 1;
    CHECK(dice_score(a, a, 1) == 1.0);
    for (int i = 20; i < 28; ++i) b.data[i] = 1;
    CHECK(dice_score(a, b, 1) == 0.0);
}

TEST_CASE("dice matches the hard-set arithmetic") {
    LabelVolume a({4, 1, 1}, 2), b({4, 1, 1}, 2);
    a.data = {1, 1, 0, 0};
    b.data = {0, 1, 1, 0};
    CHECK(dice_score(a, b, 1) == 0.5);
}

TEST_CASE("dice of two empty sets is 1 by convention") {
    LabelVolume a({4, 4, 4}, 3), b({4, 4, 4}, 3);
    CHECK(dice_score(a, b, 2) == 1.0);
}

TEST_CASE("hausdorff of identical masks is zero") {
    LabelVolume a({6, 6, 6}, 2);
    for (int z = 2; z < 4; ++z)
        for (int y = 2; y < 4; ++y)
            for (int x = 2; x < 4; ++x) a.at(x, y, z) = 1;
    CHECK(hausdorff(a, a, 1) == 0.0);
}

TEST_CASE("hausdorff of two single voxels is the spacing-scaled distance") {
    LabelVolume a({8, 4, 4}, 2), b({8, 4, 4}, 2);
    a.at(1, 1, 1) = 1;
    b.at(4, 1, 1) = 1;
    CHECK(hausdorff(a, b, 1) == doctest::Approx(3.0));

    LabelVolume as({8, 4, 4}, 2, {2.0, 1.0, 1.0}), bs({8, 4, 4}, 2, {2.0, 1.0, 1.0});
    as.at(1, 1, 1) = 1;
    bs.at(4, 1, 1) = 1;
    CHECK(hausdorff(as, bs, 1) == doctest::Approx(6.0));
}

TEST_CASE("hausdorff on an empty set is an error") {
    LabelVolume a({4, 4, 4}, 2), b({4, 4, 4}, 2);
    a.at(1, 1, 1) = 1;
    CHECK_THROWS_AS(hausdorff(a, b, 1), std::invalid_argument);
}

TEST_CASE("hausdorff matches the brute-force oracle exactly on random masks") {
    const Spacing sp{1.0, 1.25, 0.8};
    for (std::uint64_t s = 0; s < 12; ++s) {
        const LabelVolume a = random_labels({12, 12, 12}, 3, 300 + s, sp);
        const LabelVolume b = random_labels({12, 12, 12}, 3, 400 + s, sp);
        for (int k = 1; k < 3; ++k) {
            const auto sa = oracle_surface(a, k);
            const auto sb = oracle_surface(b, k);
            if (sa.empty() || sb.empty()) continue;
            const double dir = oracle_directed(sa, sb, sp);
            const double sym = std::max(dir, oracle_directed(sb, sa, sp));
            CHECK(hausdorff(a, b, k, HausdorffMode::directed) == dir);
            CHECK(hausdorff(a, b, k, HausdorffMode::symmetric) == sym);
            CHECK(dice_score(a, b, k) == oracle_dice(a, b, k));
        }
    }
}

TEST_CASE("directed hausdorff never exceeds the symmetric one") {
    for (std::uint64_t s = 0; s < 6; ++s) {
        const LabelVolume a = random_labels({10, 10, 10}, 2, 500 + s);
        const LabelVolume b = random_labels({10, 10, 10}, 2, 600 + s);
        if (oracle_surface(a, 1).empty() || oracle_surface(b, 1).empty()) continue;
        CHECK(hausdorff(a, b, 1, HausdorffMode::directed) <=
              hausdorff(a, b, 1, HausdorffMode::symmetric));
    }
}

TEST_CASE("hard dice agrees with soft dice on one-hot encodings") {
    const LabelVolume a = random_labels({10, 10, 10}, 3, 700);
    const LabelVolume b = random_labels({10, 10, 10}, 3, 701);
    for (int k = 1; k < 3; ++k) {
        LabelVolume ab(a.dims, 2), bb(b.dims, 2);
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            ab.data[i] = a.data[i] == k;
            bb.data[i] = b.data[i] == k;
        }
        CHECK(std::fabs(dice_score(a, b, k) - soft_dice(one_hot(ab), one_hot(bb))) <= 1e-4);
    }
}

TEST_CASE("evaluate_labels aggregates per-class results") {
    const LabelVolume a = random_labels({10, 10, 10}, 4, 702);
    const MetricReport rep = evaluate_labels(a, a);
    CHECK(rep.classes.size() == 3);
    CHECK(rep.mean_dice == doctest::Approx(1.0));
    for (double h : rep.hd_sym_mm)
        if (!std::isnan(h)) CHECK(h == 0.0);
}
