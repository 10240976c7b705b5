#include "doctest.h"

#include <cmath>

#include "regseg/phantom.hpp"
#include "regseg/volume.hpp"

#include "helpers.hpp"

using namespace regseg;
using namespace testutil;

TEST_CASE("trilinear sampling at integer coordinates is exact lookup") {
    const Volume v = random_volume({5, 6, 7}, 11);
    for (int z = 0; z < 7; z += 3)
        for (int y = 0; y < 6; y += 2)
            for (int x = 0; x < 5; x += 2)
                CHECK(sample_trilinear(v, x, y, z) == v.at(x, y, z));
}

TEST_CASE("trilinear sampling at a midpoint averages the two voxels") {
    Volume v({4, 4, 4});
    v.at(1, 2, 2) = 3.0;
    v.at(2, 2, 2) = 5.0;
    CHECK(sample_trilinear(v, 1.5, 2, 2) == doctest::Approx(4.0));
}

TEST_CASE("sampling outside the grid clamps to the edge") {
    const Volume v = random_volume({4, 4, 4}, 12);
    CHECK(sample_trilinear(v, -5, 0, 0) == v.at(0, 0, 0));
    CHECK(sample_trilinear(v, 100, 3, 3) == v.at(3, 3, 3));
}

TEST_CASE("warp with a zero field is the identity") {
    const Volume v = random_volume({6, 5, 4}, 13);
    const DisplacementField zero(v.dims);
    const Volume w = warp(v, zero);
    CHECK(w.data == v.data);
}

TEST_CASE("warp with a constant integer field shifts content toward lower x") {
    const Volume v = random_volume({8, 4, 4}, 14);
    DisplacementField phi(v.dims);
    const std::size_t n = v.dims.voxel_count();
    for (std::size_t i = 0; i < n; ++i) phi.at(0, i) = 2.0;
    const Volume w = warp(v, phi);
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 8; ++x)
                CHECK(w.at(x, y, z) == v.at(std::min(x + 2, 7), y, z));
}

TEST_CASE("warp with the mirror field equals mirror, bit-exact") {
    // oracle: direct index permutation
    const Volume v = random_volume({9, 5, 6}, 15);
    const Volume via_field = warp(v, build_mirror_field(v.dims));
    const Volume direct = mirror(v);
    CHECK(via_field.data == direct.data);
}

TEST_CASE("mirror is an involution on all four grid types") {
    const Dims d{6, 5, 4};
    const Volume v = random_volume(d, 16);
    CHECK(mirror(mirror(v)).data == v.data);

    LabelVolume lab(d, 4);
    Rng rng(17);
    for (auto& l : lab.data) l = rng.uniform_int(4);
    const LabelVolume lm = mirror(mirror(lab));
    CHECK(lm.data == lab.data);

    ProbVolume p(d, 3);
    for (auto& x : p.data) x = rng.uniform();
    CHECK(mirror(mirror(p)).data == p.data);

    DisplacementField f(d);
    for (auto& x : f.data) x = rng.uniform(-2.0, 2.0);
    CHECK(mirror(mirror(f)).data == f.data);
}

TEST_CASE("mirror maps x=0 to x=nx-1") {
    Volume v({4, 1, 1});
    v.data = {1, 2, 3, 4};
    const Volume m = mirror(v);
    CHECK(m.data == std::vector<double>{4, 3, 2, 1});
}

TEST_CASE("a volume symmetric about the mid plane is a fixed point of mirror") {
    PhantomSpec spec;
    spec.dims = {20, 16, 16};
    const PhantomOutput ph = make_phantom(spec);
    CHECK(mirror(ph.image).data == ph.image.data);
}

TEST_CASE("mirror of a displacement field negates dx") {
    DisplacementField f({4, 2, 2});
    const std::size_t n = f.dims.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        f.at(0, i) = 1.0 + static_cast<double>(i);
        f.at(1, i) = 0.5;
        f.at(2, i) = -0.25;
    }
    const DisplacementField m = mirror(f);
    // voxel (0,y,z) of the mirrored field holds the negated dx of (3,y,z)
    CHECK(m.at(0, 0) == -f.at(0, 3));
    CHECK(m.at(1, 0) == f.at(1, 3));
    CHECK(m.at(2, 0) == f.at(2, 3));
}

TEST_CASE("mirror field values") {
    const DisplacementField f5 = build_mirror_field({5, 3, 3});
    CHECK(f5.at(0, 2) == 0.0);  // x=2 is the center of a 5-wide axis
    CHECK(f5.at(0, 0) == 4.0);

    const DisplacementField f4 = build_mirror_field({4, 1, 1});
    CHECK(f4.at(0, 0) == 3.0);
    CHECK(f4.at(0, 3) == -3.0);
}

TEST_CASE("compose identity elements") {
    const Dims d{10, 8, 8};
    const DisplacementField phi = smooth_field(d, 18, 2.0);
    const DisplacementField zero(d);
    CHECK(compose(zero, phi).data == phi.data);
    CHECK(compose(phi, zero).data == phi.data);
}

TEST_CASE("composing constant integer translations adds them") {
    const Dims d{12, 12, 12};
    DisplacementField t1(d), t2(d);
    const std::size_t n = d.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        t1.set(i, {1, 0, 2});
        t2.set(i, {2, 1, 0});
    }
    const DisplacementField c = compose(t1, t2);
    // voxels whose resample position stays inside the grid see exactly t1+t2
    for (int z = 0; z < 10; ++z)
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 10; ++x) {
                const std::size_t i =
                    static_cast<std::size_t>(x) + 12 * (y + 12 * static_cast<std::size_t>(z));
                CHECK(c.get(i).x == doctest::Approx(3.0));
                CHECK(c.get(i).y == doctest::Approx(1.0));
                CHECK(c.get(i).z == doctest::Approx(2.0));
            }
}

TEST_CASE("sequential warping equals composed-field warping within tolerance") {
    // oracle: sequential warping
    const Dims d{32, 32, 32};
    const Volume v = smooth_volume(d, 19);
    const DisplacementField f1 = smooth_field(d, 20, 3.0);
    const DisplacementField f2 = smooth_field(d, 21, 3.0);
    const Volume seq = warp(warp(v, f1), f2);
    const Volume comp = warp(v, compose(f1, f2));
    CHECK(max_abs_diff(seq.data, comp.data) <= 5e-3);
}

TEST_CASE("composition is associative up to interpolation error") {
    const Dims d{32, 32, 32};
    const DisplacementField f1 = smooth_field(d, 22, 2.0);
    const DisplacementField f2 = smooth_field(d, 23, 2.0);
    const DisplacementField f3 = smooth_field(d, 24, 2.0);
    const DisplacementField left = compose(compose(f1, f2), f3);
    const DisplacementField right = compose(f1, compose(f2, f3));
    CHECK(max_abs_diff(left.data, right.data) <= 1e-2);
}

TEST_CASE("warp is linear in the volume argument") {
    const Dims d{16, 16, 16};
    const Volume u = random_volume(d, 25);
    const Volume v = random_volume(d, 26);
    const DisplacementField phi = smooth_field(d, 27, 2.0);
    const double a = 1.7, b = -0.6;
    Volume mix(d);
    for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * u.data[i] + b * v.data[i];
    const Volume lhs = warp(mix, phi);
    const Volume wu = warp(u, phi);
    const Volume wv = warp(v, phi);
    for (std::size_t i = 0; i < lhs.data.size(); ++i) {
        const double rhs = a * wu.data[i] + b * wv.data[i];
        CHECK(std::fabs(lhs.data[i] - rhs) <= 1e-6 * std::max(1.0, std::fabs(rhs)));
    }
}

TEST_CASE("warp_prob keeps one-hot volumes intact under the zero field") {
    LabelVolume lab({6, 6, 6}, 3);
    Rng rng(28);
    for (auto& l : lab.data) l = rng.uniform_int(3);
    const ProbVolume p = one_hot(lab);
    const ProbVolume w = warp_prob(p, DisplacementField(lab.dims));
    CHECK(w.data == p.data);
}

TEST_CASE("warp_prob translates one-hot volumes exactly for integer shifts") {
    LabelVolume lab({8, 6, 6}, 3);
    Rng rng(29);
    for (auto& l : lab.data) l = rng.uniform_int(3);
    DisplacementField phi(lab.dims);
    for (std::size_t i = 0; i < lab.dims.voxel_count(); ++i) phi.at(0, i) = 3.0;
    const ProbVolume w = warp_prob(one_hot(lab), phi);
    const LabelVolume moved = argmax_labels(w);
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 5; ++x)
                CHECK(moved.at(x, y, z) == lab.at(x + 3, y, z));
}

TEST_CASE("warp_prob channel sums stay within 1e-4 of one") {
    LabelVolume lab({12, 12, 12}, 4);
    Rng rng(30);
    for (auto& l : lab.data) l = rng.uniform_int(4);
    const DisplacementField phi = smooth_field(lab.dims, 31, 2.5);
    const ProbVolume w = warp_prob(one_hot(lab), phi);
    for (std::size_t i = 0; i < w.dims.voxel_count(); ++i) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += w.at(k, i);
        CHECK(std::fabs(s - 1.0) <= 1e-4);
    }
}

TEST_CASE("hardened soft label warp matches nearest-neighbour warping on almost all interior voxels") {
    // oracle: brute-force nearest-neighbour label warp on a 32^3 phantom
    PhantomSpec spec;
    spec.dims = {32, 32, 32};
    const PhantomOutput ph = make_phantom(spec);
    const DisplacementField phi = smooth_field(spec.dims, 32, 1.5);

    const LabelVolume hardened = argmax_labels(warp_prob(one_hot(ph.labels), phi));
    const LabelVolume nn = warp_labels_nn(ph.labels, phi);

    std::size_t agree = 0, total = 0;
    for (int z = 1; z < 31; ++z)
        for (int y = 1; y < 31; ++y)
            for (int x = 1; x < 31; ++x) {
                ++total;
                agree += hardened.at(x, y, z) == nn.at(x, y, z);
            }
    CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("dimension mismatches are rejected") {
    const Volume v = random_volume({4, 4, 4}, 33);
    const DisplacementField phi({5, 4, 4});
    CHECK_THROWS_AS(warp(v, phi), std::invalid_argument);
    CHECK_THROWS_AS(compose(DisplacementField({4, 4, 4}), phi), std::invalid_argument);
}
