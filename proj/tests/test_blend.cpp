#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"

#include "affseg/affinity.hpp"
#include "affseg/blend.hpp"
#include "blend_experiment.hpp"
#include "oracles.hpp"

using namespace affseg;

namespace {

std::array<double, 3> at(double z, double y, double x)
{
    return {z, y, x};
}

ImageVolume constant(const Shape& s, float c)
{
    ImageVolume v(s);
    std::fill(v.data().begin(), v.data().end(), c);
    return v;
}

}  // namespace

TEST_CASE("bump_logweight closed-form values")
{
    const BlendProfile prof;
    CHECK(bump_logweight(at(0.5, 0.5, 0.5), {2, 2, 2}, prof) == -24.0);
    CHECK(bump_logweight(at(0, 0, 0), {1, 1, 1}, prof) == -24.0);

    BlendProfile t1;
    t1.t = {1.0, 1.0, 1.0};
    CHECK(bump_logweight(at(0, 0, 0), {1, 1, 1}, t1) == -12.0);

    BlendProfile lit;
    lit.literal = true;
    CHECK(bump_logweight(at(0, 0, 0), {1, 1, 1}, lit) == doctest::Approx(3.0 * 8.0));
}

TEST_CASE("bump_logweight is symmetric and peaks at the centre")
{
    const BlendProfile prof;
    const Shape p{5, 8, 13};
    for (std::size_t z = 0; z < p.z; ++z)
        for (std::size_t y = 0; y < p.y; ++y)
            for (std::size_t x = 0; x < p.x; ++x) {
                const double a = bump_logweight(at(z, y, x), p, prof);
                const double b = bump_logweight(at(p.z - 1 - z, p.y - 1 - y, p.x - 1 - x), p, prof);
                CHECK(a == b);
                CHECK(a <= 0.0);
                CHECK(a <= bump_logweight(at(2, 3.5, 6), p, prof));
            }
}

TEST_CASE("bump_logweight decays monotonically toward each border")
{
    const BlendProfile prof;
    const Shape p{1, 1, 16};
    for (std::size_t x = 0; x + 1 < 8; ++x)
        CHECK(bump_logweight(at(0, 0, x), p, prof) < bump_logweight(at(0, 0, x + 1), p, prof));
    for (std::size_t x = 8; x + 1 < 16; ++x)
        CHECK(bump_logweight(at(0, 0, x), p, prof) > bump_logweight(at(0, 0, x + 1), p, prof));
    CHECK_THROWS_AS(bump_logweight(at(0, 0, 16), p, prof), std::invalid_argument);
    CHECK_THROWS_AS(bump_logweight(at(0, -1, 0), p, prof), std::invalid_argument);
}

TEST_CASE("make_layout uses the overlap stride with a final flush patch")
{
    const auto l = make_layout({10, 20, 9}, {10, 8, 4}, 0.5);
    std::set<std::ptrdiff_t> zs, ys, xs;
    for (const auto& o : l.origins) {
        zs.insert(o.z);
        ys.insert(o.y);
        xs.insert(o.x);
    }
    CHECK(zs == std::set<std::ptrdiff_t>{0});
    CHECK(ys == std::set<std::ptrdiff_t>{0, 4, 8, 12});
    CHECK(xs == std::set<std::ptrdiff_t>{0, 2, 4, 5});
    CHECK(l.origins.size() == 16);
    CHECK(l.origins[1] == Coord{0, 0, 2});

    CHECK(make_layout({3, 3, 3}, {1, 1, 1}, 0.9).origins.size() == 27);
    CHECK_THROWS_AS(make_layout({4, 4, 4}, {5, 1, 1}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(make_layout({4, 4, 4}, {2, 2, 2}, 1.0), std::invalid_argument);
}

TEST_CASE("blending constant patches returns the constant")
{
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 10; ++trial) {
        const Shape vol{4 + gen() % 12, 4 + gen() % 20, 4 + gen() % 20};
        const Shape patch{1 + gen() % vol.z, 1 + gen() % vol.y, 1 + gen() % vol.x};
        const auto layout = make_layout(vol, patch, 0.5);
        const float c = std::uniform_real_distribution<float>(0.0f, 1.0f)(gen);
        const std::vector<ImageVolume> patches(layout.origins.size(), constant(patch, c));
        const auto out = blend_patches(layout, patches, BlendProfile{});
        for (float v : out.data())
            CHECK(std::abs(static_cast<double>(v) - c) <= 1e-12);
    }
}

TEST_CASE("a single patch covering the volume is returned unchanged")
{
    std::mt19937_64 gen(2);
    const auto a = oracle::random_affinities(gen, {3, 5, 6}, nn_offsets());
    const auto layout = make_layout({3, 5, 6}, {3, 5, 6}, 0.5);
    REQUIRE(layout.origins.size() == 1);
    CHECK(blend_patches(layout, std::vector<AffinityVolume>{a}, BlendProfile{}) == a);
}

TEST_CASE("blended values are convex combinations")
{
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    const Shape vol{6, 17, 15}, patch{4, 8, 8};
    const auto layout = make_layout(vol, patch, 0.5);
    std::vector<ImageVolume> patches;
    for (std::size_t i = 0; i < layout.origins.size(); ++i) {
        ImageVolume p(patch);
        for (auto& v : p.data())
            v = u(gen);
        patches.push_back(std::move(p));
    }
    const auto out = blend_patches(layout, patches, BlendProfile{});
    for (std::size_t z = 0; z < vol.z; ++z)
        for (std::size_t y = 0; y < vol.y; ++y)
            for (std::size_t x = 0; x < vol.x; ++x) {
                float lo = 2, hi = -1;
                for (std::size_t i = 0; i < patches.size(); ++i) {
                    const Coord& o = layout.origins[i];
                    const Coord l{static_cast<std::ptrdiff_t>(z) - o.z, static_cast<std::ptrdiff_t>(y) - o.y,
                                  static_cast<std::ptrdiff_t>(x) - o.x};
                    if (!contains(patch, l))
                        continue;
                    const float v = patches[i].at(static_cast<std::size_t>(l.z), static_cast<std::size_t>(l.y),
                                                  static_cast<std::size_t>(l.x));
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                CHECK(out.at(z, y, x) >= lo);
                CHECK(out.at(z, y, x) <= hi);
            }

    // Patch order does not matter beyond rounding.
    auto rev_layout = layout;
    std::reverse(rev_layout.origins.begin(), rev_layout.origins.end());
    auto rev = patches;
    std::reverse(rev.begin(), rev.end());
    const auto out2 = blend_patches(rev_layout, rev, BlendProfile{});
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(std::abs(out[i] - out2[i]) <= 1e-6f);
}

TEST_CASE("large exponents and patches stay finite")
{
    BlendProfile steep;
    steep.t = {8.0, 8.0, 8.0};
    const Shape patch{1, 1, 10000};
    CHECK(std::isfinite(bump_logweight(at(0, 0, 5000), patch, steep)));
    const double edge = bump_logweight(at(0, 0, 0), patch, steep);
    CHECK((std::isinf(edge) || edge < -1e30));

    const Shape vol{1, 1, 15000};
    const auto layout = make_layout(vol, patch, 0.5);
    const std::vector<ImageVolume> patches(layout.origins.size(), constant(patch, 0.25f));
    const auto out = blend_patches(layout, patches, steep);
    for (float v : out.data())
        CHECK(v == 0.25f);
}

TEST_CASE("corrupted patch borders are suppressed in the blended interior")
{
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Shape patch{8 + gen() % 9, 8 + gen() % 17, 8 + gen() % 17};
        const Shape vol{patch.z + gen() % 20, patch.y + gen() % 30, patch.x + gen() % 30};
        const auto r = corrupted_border_experiment(gen, vol, patch, BlendProfile{});
        const std::string where = to_string(vol) + " / " + to_string(patch);
        CAPTURE(where);
        CHECK(r.interior_error < r.min_border_error);
        CHECK(r.interior_error < 1e-3);
    }
}

TEST_CASE("affinity blending ignores entries whose partner leaves the patch")
{
    const Shape vol{1, 1, 6}, patch{1, 1, 4};
    const auto layout = make_layout(vol, patch, 0.5);
    REQUIRE(layout.origins.size() == 2);
    std::vector<AffinityVolume> patches;
    for (int i = 0; i < 2; ++i) {
        AffinityVolume a(patch, OffsetSet{{0, 0, 1}});
        for (std::size_t x = 0; x < 3; ++x)
            a.at(0, 0, 0, x) = i == 0 ? 0.25f : 0.75f;
        a.at(0, 0, 0, 3) = 99.0f;  // out of bounds, must not leak
        patches.push_back(std::move(a));
    }
    const auto out = blend_patches(layout, patches, BlendProfile{});
    CHECK(out.at(0, 0, 0, 0) == 0.25f);
    CHECK(out.at(0, 0, 0, 3) == 0.75f);
    CHECK(out.at(0, 0, 0, 4) == 0.75f);
    CHECK(out.at(0, 0, 0, 5) == 0.0f);
    const double w0 = bump_logweight(at(0, 0, 2), patch, BlendProfile{});
    const double w1 = bump_logweight(at(0, 0, 0), patch, BlendProfile{});
    const double mixed = (0.25 + 0.75 * std::exp(w1 - w0)) / (1.0 + std::exp(w1 - w0));
    CHECK(out.at(0, 0, 0, 2) == static_cast<float>(mixed));
}

TEST_CASE("blend argument checks")
{
    const Shape vol{4, 4, 4}, patch{2, 2, 2};
    auto layout = make_layout(vol, patch, 0.5);
    std::vector<ImageVolume> patches(layout.origins.size(), constant(patch, 1.0f));
    CHECK_THROWS_AS(blend_patches(layout, std::span(patches).first(1), BlendProfile{}), std::invalid_argument);

    auto wrong = patches;
    wrong[0] = constant({2, 2, 3}, 1.0f);
    CHECK_THROWS_AS(blend_patches(layout, wrong, BlendProfile{}), std::invalid_argument);

    PatchLayout sparse{vol, patch, {{0, 0, 0}}};
    CHECK_THROWS_AS(blend_patches(sparse, std::span(patches).first(1), BlendProfile{}), std::invalid_argument);

    PatchLayout outside{vol, patch, {{3, 0, 0}}};
    CHECK_THROWS_AS(blend_patches(outside, std::span(patches).first(1), BlendProfile{}), std::invalid_argument);

    BlendProfile bad;
    bad.t[1] = 0.0;
    CHECK_THROWS_AS(blend_patches(layout, patches, bad), std::invalid_argument);
}

TEST_CASE("tta_average")
{
    std::mt19937_64 gen(5);
    const auto a = oracle::random_affinities(gen, {3, 4, 4}, nn_offsets());
    CHECK(tta_average({{DihedralTransform{}, a}}) == a);

    const auto b = oracle::random_affinities(gen, {3, 4, 4}, nn_offsets());
    const auto m = tta_average({{DihedralTransform{}, a}, {DihedralTransform{}, b}});
    for (std::size_t i = 0; i < a.data().size(); ++i)
        CHECK(m.data()[i] == static_cast<float>((static_cast<double>(a.data()[i]) + b.data()[i]) / 2.0));

    for (int trial = 0; trial < 5; ++trial) {
        const SegVolume seg = oracle::blocky_labels(gen, {4, 6, 6}, 2, 4, true);
        for (const OffsetSet& offs : {nn_offsets(), long_range_offsets()}) {
            const auto truth = affinities_from_labels(seg, offs);
            std::vector<std::pair<DihedralTransform, AffinityVolume>> outs;
            for (const auto& t : tta_variants(16))
                outs.emplace_back(t, affinities_from_labels(transform_image(seg, t), offs));
            CHECK(tta_average(outs) == truth);
        }
    }

    CHECK_THROWS_AS(tta_average({}), std::invalid_argument);
    const auto c = oracle::random_affinities(gen, {3, 4, 5}, nn_offsets());
    CHECK_THROWS_AS(tta_average({{DihedralTransform{}, a}, {DihedralTransform{}, c}}), std::invalid_argument);
}
