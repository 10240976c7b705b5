#include "doctest.h"

#include <cmath>
#include <functional>

#include "regseg/losses.hpp"
#include "regseg/phantom.hpp"

#include "helpers.hpp"

using namespace regseg;
using namespace testutil;

namespace {

// Central finite differences over a sampled subset of coordinates. The
// sampler skips coordinates whose perturbation would cross a trilinear cell
// boundary (the analytic derivative is one-sided at the kink).
double fd_check(const std::function<double(const std::vector<double>&)>& f,
                std::vector<double> x, const std::vector<double>& grad_analytic,
                std::uint64_t seed, int samples = 160, double step = 1e-3,
                const std::function<bool(std::size_t)>& usable = nullptr) {
    Rng rng(seed);
    std::vector<double> g_fd, g_an;
    int tried = 0;
    while (static_cast<int>(g_fd.size()) < samples && tried < samples * 20) {
        ++tried;
        const std::size_t i = static_cast<std::size_t>(rng.next_u64() % x.size());
        if (usable && !usable(i)) continue;
        const double orig = x[i];
        x[i] = orig + step;
        const double fp = f(x);
        x[i] = orig - step;
        const double fm = f(x);
        x[i] = orig;
        g_fd.push_back((fp - fm) / (2.0 * step));
        g_an.push_back(grad_analytic[i]);
    }
    REQUIRE(!g_fd.empty());
    return rel_vec_err(g_an, g_fd);
}

Volume textured_phantom(Dims d, std::uint64_t seed) {
    PhantomSpec spec;
    spec.dims = d;
    spec.bias_amplitude = 0.3;
    spec.noise_sigma = 0.0;
    spec.seed = seed;
    Volume v = make_phantom(spec).image;
    // gentle ramp so no window is constant
    std::size_t idx = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++idx) v.data[idx] += 0.01 * x + 0.006 * y + 0.004 * z;
    return v;
}

ProbVolume random_prob(Dims d, int k, std::uint64_t seed) {
    ProbVolume p(d, k);
    Rng rng(seed);
    const std::size_t n = d.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < k; ++c) {
            const double v = rng.uniform(0.05, 1.0);
            p.at(c, i) = v;
            s += v;
        }
        for (int c = 0; c < k; ++c) p.at(c, i) /= s;
    }
    return p;
}

ProbVolume one_hot_box(Dims d, int k, int fg, int x0, int x1) {
    LabelVolume lab(d, k);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = x0; x < x1; ++x) lab.at(x, y, z) = fg;
    return one_hot(lab);
}

} // namespace

TEST_CASE("pearson basics") {
    std::vector<double> x = {1, 2, 3, 4, 5};
    std::vector<double> y = {2, 4, 6, 8, 10};
    CHECK(pearson(x, x) == doctest::Approx(1.0));
    CHECK(pearson(x, y) == doctest::Approx(1.0));
    std::vector<double> neg = {-1, -3, -5, -7, -9}; // a<0 affine map of x
    CHECK(pearson(x, neg) == doctest::Approx(-1.0));
    std::vector<double> constant = {3, 3, 3, 3, 3};
    CHECK(pearson(x, constant) == 0.0);
    std::vector<double> shorter = {1, 2};
    CHECK_THROWS_AS(pearson(x, shorter), std::invalid_argument);
}

TEST_CASE("nlcc of a volume with itself is -1 when no window is constant") {
    const Volume v = textured_phantom({24, 24, 24}, 40);
    const LossValue l = nlcc_loss(v, v, 9);
    CHECK(std::fabs(l.value + 1.0) <= 1e-6);
}

TEST_CASE("nlcc is invariant under positive affine intensity maps") {
    const Volume v = textured_phantom({20, 20, 20}, 41);
    Volume w(v.dims);
    for (std::size_t i = 0; i < v.data.size(); ++i) w.data[i] = 2.5 * v.data[i] + 0.7;
    const double base = nlcc_loss(v, v, 9).value;
    const double mapped = nlcc_loss(v, w, 9).value;
    CHECK(std::fabs(base - mapped) <= 1e-6);
    CHECK(std::fabs(mapped + 1.0) <= 1e-6);
}

TEST_CASE("nlcc of independent white noise is near zero but negative") {
    const Volume a = random_volume({64, 64, 64}, 42);
    const Volume b = random_volume({64, 64, 64}, 43);
    const double l = nlcc_loss(a, b, 9).value;
    CHECK(l > -0.05);
    CHECK(l < 0.0);
}

TEST_CASE("nlcc stays in [-1, 0] on random pairs") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Volume a = random_volume({12, 12, 12}, 100 + s);
        const Volume b = smooth_volume({12, 12, 12}, 200 + s);
        const double l = nlcc_loss(a, b, 5).value;
        CHECK(l <= 0.0);
        CHECK(l >= -1.0);
    }
}

TEST_CASE("nlcc analytic gradient matches finite differences") {
    const Dims d{12, 12, 12};
    const Volume a = smooth_volume(d, 44);
    const Volume b = textured_phantom(d, 45);
    const LossValue l = nlcc_loss(a, b, 9, true);
    auto f = [&](const std::vector<double>& xs) {
        Volume av(d);
        av.data = xs;
        return nlcc_loss(av, b, 9).value;
    };
    CHECK(fd_check(f, a.data, l.grad, 46) <= 1e-3);
}

TEST_CASE("smoothness of a constant field is zero") {
    DisplacementField f({10, 10, 10});
    for (std::size_t i = 0; i < f.dims.voxel_count(); ++i) f.set(i, {1.5, -2.0, 0.25});
    CHECK(smoothness_loss(f).value == 0.0);
}

TEST_CASE("smoothness of a linear ramp matches the closed form") {
    // phi_x = s*x: every in-range forward difference along x is s, the far
    // face contributes zero, so the mean is s^2 (nx-1)/nx
    const Dims d{14, 10, 9};
    const double s = 0.375;
    DisplacementField f(d);
    std::size_t idx = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++idx) f.at(0, idx) = s * x;
    const double expected = s * s * (d.nx - 1) / static_cast<double>(d.nx);
    CHECK(smoothness_loss(f).value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("smoothness of the mirror field matches the closed form") {
    const Dims d{16, 8, 8};
    const DisplacementField f = build_mirror_field(d);
    const double expected = 4.0 * (d.nx - 1) / static_cast<double>(d.nx);
    CHECK(smoothness_loss(f).value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("smoothness analytic gradient matches finite differences") {
    const Dims d{12, 12, 12};
    const DisplacementField f = smooth_field(d, 47, 2.0);
    const LossValue l = smoothness_loss(f, true);
    auto fn = [&](const std::vector<double>& xs) {
        DisplacementField g(d);
        g.data = xs;
        return smoothness_loss(g).value;
    };
    CHECK(fd_check(fn, f.data, l.grad, 48) <= 1e-3);
}

TEST_CASE("soft dice of identical one-hot masks is 1") {
    const Dims d{8, 8, 8};
    const ProbVolume p = one_hot_box(d, 2, 1, 2, 6);
    CHECK(soft_dice(p, p) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("soft dice of disjoint masks is near zero") {
    const Dims d{8, 8, 8};
    const ProbVolume p = one_hot_box(d, 2, 1, 0, 3);
    const ProbVolume q = one_hot_box(d, 2, 1, 5, 8);
    CHECK(soft_dice(p, q) <= 1e-4);
    CHECK(soft_dice(p, q) > 0.0);
}

TEST_CASE("soft dice matches the 2|A^B|/(|A|+|B|) arithmetic on hard sets") {
    const Dims d{4, 1, 1};
    LabelVolume a(d, 2), b(d, 2);
    a.data = {1, 1, 0, 0}; // |A| = 2
    b.data = {0, 1, 1, 0}; // |B| = 2, intersection 1
    const double dice = soft_dice(one_hot(a), one_hot(b));
    CHECK(dice == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("soft dice is symmetric under shared weights") {
    const Dims d{6, 6, 6};
    const ProbVolume p = random_prob(d, 3, 49);
    const ProbVolume q = random_prob(d, 3, 50);
    Volume w(d);
    Rng rng(51);
    for (double& x : w.data) x = rng.uniform();
    CHECK(soft_dice(p, q, &w) == doctest::Approx(soft_dice(q, p, &w)).epsilon(1e-12));
}

TEST_CASE("soft dice rejects weights outside [0,1]") {
    const Dims d{4, 4, 4};
    const ProbVolume p = random_prob(d, 2, 52);
    Volume w(d, 1.5);
    CHECK_THROWS_AS(soft_dice(p, p, &w), std::invalid_argument);
}

TEST_CASE("cgd loss with unit confidence equals the plain dice loss bit-for-bit") {
    const Dims d{8, 8, 8};
    const ProbVolume pred = random_prob(d, 3, 53);
    const ProbVolume pseudo = random_prob(d, 3, 54);
    const Volume ones(d, 1.0);
    const LossValue with_c = cgd_loss(ones, pred, pseudo, true);
    CHECK(with_c.value == -soft_dice(pred, pseudo));
    const LossValue plain = weak_loss(pred, pseudo, true); // same code path, grad w.r.t. pred
    CHECK(with_c.value == plain.value);
    CHECK(with_c.grad == plain.grad);
}

TEST_CASE("cgd loss with zero confidence is -1 with zero gradient") {
    const Dims d{6, 6, 6};
    const ProbVolume pred = random_prob(d, 3, 55);
    const ProbVolume pseudo = random_prob(d, 3, 56);
    const Volume zeros(d, 0.0);
    const LossValue l = cgd_loss(zeros, pred, pseudo, true);
    CHECK(l.value == doctest::Approx(-1.0).epsilon(1e-12));
    for (double g : l.grad) CHECK(g == 0.0);
}

TEST_CASE("cgd loss of identical one-hot volumes is -1 for any confidence") {
    const Dims d{8, 8, 8};
    const ProbVolume p = one_hot_box(d, 3, 2, 2, 6);
    Volume c(d);
    Rng rng(57);
    for (double& x : c.data) x = rng.uniform();
    CHECK(cgd_loss(c, p, p).value == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("cgd gradient matches finite differences") {
    const Dims d{6, 6, 6};
    ProbVolume pred = random_prob(d, 2, 58);
    const ProbVolume pseudo = random_prob(d, 2, 59);
    Volume c(d);
    Rng rng(60);
    for (double& x : c.data) x = rng.uniform();
    const LossValue l = cgd_loss(c, pred, pseudo, true);
    auto f = [&](const std::vector<double>& xs) {
        ProbVolume pv = pred;
        pv.data = xs;
        return cgd_loss(c, pv, pseudo).value;
    };
    CHECK(fd_check(f, pred.data, l.grad, 61) <= 1e-3);
}

TEST_CASE("weak loss bounds and trivial cases") {
    const Dims d{8, 8, 8};
    const ProbVolume p = one_hot_box(d, 2, 1, 2, 6);
    CHECK(weak_loss(p, p).value == doctest::Approx(-1.0).epsilon(1e-6));
    const ProbVolume q = one_hot_box(d, 2, 1, 6, 8);
    CHECK(weak_loss(one_hot_box(d, 2, 1, 0, 2), q).value >= -1e-4);
}

TEST_CASE("weak-supervision gradient w.r.t. the field matches finite differences") {
    // the full chain: phi -> warp_prob -> renormalize -> dice
    const Dims d{16, 16, 16};
    PhantomSpec spec;
    spec.dims = d;
    spec.num_structures = 2;
    const PhantomOutput ph = make_phantom(spec);
    const ProbVolume moving_labels = one_hot(ph.labels);
    const ProbVolume fixed_pred = random_prob(d, moving_labels.num_classes, 62);
    DisplacementField phi = smooth_field(d, 63, 1.2);

    // gradient via the registration objective with the similarity and
    // smoothness terms switched off
    Volume flat(d, 0.0);
    const RegWeakInputs weak{&moving_labels, &fixed_pred};
    auto value = [&](const std::vector<double>& xs) {
        DisplacementField f(d);
        f.data = xs;
        return weak_loss(warp_prob(moving_labels, f), fixed_pred).value;
    };
    RegLoss rl = reg_objective(1, flat, flat, phi, 0.0, 1.0, 3, weak, true);
    // similarity on constant volumes is guarded to zero, so grad is weak-only
    const std::size_t n = d.voxel_count();
    auto usable = [&](std::size_t i) {
        const std::size_t vox = i % n;
        const Vec3 v = phi.get(vox);
        const double pos[3] = {static_cast<double>(vox % d.nx) + v.x,
                               static_cast<double>((vox / d.nx) % d.ny) + v.y,
                               static_cast<double>(vox / (static_cast<std::size_t>(d.nx) * d.ny)) + v.z};
        for (double p : pos) {
            const double fr = p - std::floor(p);
            if (fr < 0.05 || fr > 0.95) return false; // keep clear of cell kinks
            if (p < 0.5 || p > d.nx - 1.5) return false;
        }
        return true;
    };
    CHECK(fd_check(value, phi.data, rl.grad_phi, 64, 120, 1e-3, usable) <= 1e-3);
}

TEST_CASE("registration objective excludes the weak term at iteration 0") {
    const Dims d{12, 12, 12};
    const Volume mov = textured_phantom(d, 65);
    const Volume fix = smooth_volume(d, 66);
    const DisplacementField phi = smooth_field(d, 67, 1.0);
    PhantomSpec spec;
    spec.dims = d;
    spec.num_structures = 2;
    const ProbVolume labels = one_hot(make_phantom(spec).labels);
    const ProbVolume pred = random_prob(d, labels.num_classes, 68);
    const RegWeakInputs weak{&labels, &pred};

    const RegLoss l0 = reg_objective(0, mov, fix, phi, 1.0, 1.0, 5, {}, false);
    CHECK(l0.weak == 0.0);
    CHECK(l0.total == doctest::Approx(l0.ic + l0.smo).epsilon(1e-12));

    const RegLoss l1_nw = reg_objective(1, mov, fix, phi, 1.0, 0.0, 5, weak, false);
    CHECK(l1_nw.total == doctest::Approx(l0.total).epsilon(1e-12));

    CHECK_THROWS_AS(reg_objective(1, mov, fix, phi, 1.0, 1.0, 5, {}, false),
                    std::invalid_argument);
}

TEST_CASE("registration objective components sum to the total") {
    const Dims d{12, 12, 12};
    const Volume mov = textured_phantom(d, 69);
    const Volume fix = smooth_volume(d, 70);
    const DisplacementField phi = smooth_field(d, 71, 1.0);
    PhantomSpec spec;
    spec.dims = d;
    spec.num_structures = 2;
    const ProbVolume labels = one_hot(make_phantom(spec).labels);
    const ProbVolume pred = random_prob(d, labels.num_classes, 72);
    const RegWeakInputs weak{&labels, &pred};
    const double ls = 0.8, lw = 1.3;
    const RegLoss l = reg_objective(1, mov, fix, phi, ls, lw, 5, weak, false);
    CHECK(std::fabs(l.total - (l.ic + ls * l.smo + lw * l.weak)) <= 1e-9);
}

TEST_CASE("full registration objective gradient matches finite differences") {
    const Dims d{12, 12, 12};
    const Volume mov = textured_phantom(d, 73);
    Volume fix = textured_phantom(d, 74);
    // offset fixed slightly so the similarity term has a signal
    for (std::size_t i = 0; i < fix.data.size(); ++i) fix.data[i] = 0.9 * fix.data[i] + 0.05;
    DisplacementField phi = smooth_field(d, 75, 0.8);
    for (double& v : phi.data) v += 0.31; // keep sample positions off the lattice
    PhantomSpec spec;
    spec.dims = d;
    spec.num_structures = 2;
    const ProbVolume labels = one_hot(make_phantom(spec).labels);
    const ProbVolume pred = random_prob(d, labels.num_classes, 76);
    const RegWeakInputs weak{&labels, &pred};

    for (int iter : {0, 1}) {
        const RegLoss l = reg_objective(iter, mov, fix, phi, 0.7, 1.1, 5, weak, true);
        auto f = [&](const std::vector<double>& xs) {
            DisplacementField g(d);
            g.data = xs;
            return reg_objective(iter, mov, fix, g, 0.7, 1.1, 5, weak, false).total;
        };
        const std::size_t n = d.voxel_count();
        auto usable = [&](std::size_t i) {
            const std::size_t vox = i % n;
            const Vec3 v = phi.get(vox);
            const double pos[3] = {
                static_cast<double>(vox % d.nx) + v.x,
                static_cast<double>((vox / d.nx) % d.ny) + v.y,
                static_cast<double>(vox / (static_cast<std::size_t>(d.nx) * d.ny)) + v.z};
            for (double p : pos) {
                const double fr = p - std::floor(p);
                if (fr < 0.05 || fr > 0.95) return false;
                if (p < 0.5 || p > d.nx - 1.5) return false;
            }
            return true;
        };
        CHECK(fd_check(f, phi.data, l.grad_phi, 77 + iter, 100, 1e-3, usable) <= 1e-3);
    }
}

TEST_CASE("seg objective combines values and gradients linearly") {
    LossValue ld{-1.0, {0.5, -0.25, 1.0}};
    LossValue lcgd{-1.0, {1.0, 2.0, -4.0}};
    const LossValue combined = seg_objective(ld, lcgd, 0.5);
    CHECK(combined.value == doctest::Approx(-1.5).epsilon(1e-12));
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::fabs(combined.grad[i] - (ld.grad[i] + 0.5 * lcgd.grad[i])) <= 1e-9);

    const LossValue zero_lambda = seg_objective(ld, lcgd, 0.0);
    CHECK(zero_lambda.value == ld.value);
}
