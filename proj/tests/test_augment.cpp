#include <array>
#include <set>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"

#include "affseg/affinity.hpp"
#include "affseg/augment.hpp"
#include "affseg/rng.hpp"
#include "oracles.hpp"

using namespace affseg;

namespace {

ImageVolume random_image(std::mt19937_64& gen, Shape s)
{
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageVolume v(s);
    for (auto& x : v.data())
        x = u(gen);
    return v;
}

template <std::size_t N>
double chi_squared_p(const std::array<std::size_t, N>& counts)
{
    std::size_t n = 0;
    for (auto c : counts)
        n += c;
    const double expected = static_cast<double>(n) / N;
    double stat = 0;
    for (auto c : counts)
        stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
    const boost::math::chi_squared dist(N - 1);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_CASE("pcg32 reproduces the reference sequence")
{
    SeededRng rng(42, 54);
    const std::uint32_t expected[] = {0xa15c02b7, 0x7b47f409, 0xba1d3330,
                                      0x83d2f293, 0xbfa4784b, 0xcbed606e};
    for (auto e : expected)
        CHECK(rng.next_u32() == e);
    CHECK(rng.position() == 6);
}

TEST_CASE("splitmix64 and derive_seed")
{
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(derive_seed(1, "synth") == derive_seed(1, "synth"));
    CHECK(derive_seed(1, "synth") != derive_seed(1, "corrupt"));
    CHECK(derive_seed(1, "synth") != derive_seed(2, "synth"));
}

TEST_CASE("rng draws stay in range")
{
    SeededRng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const auto k = rng.uniform_int(3, 9);
        CHECK((k >= 3 && k <= 9));
        const double u = rng.uniform01();
        CHECK((u >= 0.0 && u < 1.0));
    }
    CHECK(rng.uniform_int(5, 5) == 5);
    CHECK_THROWS_AS(rng.uniform_int(2, 1), std::invalid_argument);
}

TEST_CASE("zero misalignment is a plain centre crop for both kinds")
{
    std::mt19937_64 gen(1);
    const auto img = random_image(gen, {4, 12, 14});
    const auto lab = oracle::random_labels(gen, {4, 12, 14}, 30);
    for (auto kind : {DefectKind::slip, DefectKind::translation}) {
        const DefectSpec spec{kind, 2, 0, 0, std::nullopt, 0.0f, 0.0};
        const auto [i, l] = misalign(img, lab, spec, 3);
        CHECK(i.shape() == Shape{4, 6, 8});
        for (std::size_t z = 0; z < 4; ++z)
            for (std::size_t y = 0; y < 6; ++y)
                for (std::size_t x = 0; x < 8; ++x) {
                    CHECK(i.at(z, y, x) == img.at(z, y + 3, x + 3));
                    CHECK(l.at(z, y, x) == lab.at(z, y + 3, x + 3));
                }
    }
}

TEST_CASE("a slip changes only its own slice")
{
    std::mt19937_64 gen(2);
    const auto img = random_image(gen, {5, 16, 16});
    const DefectSpec none{DefectKind::slip, 0, 0, 0, std::nullopt, 0.0f, 0.0};
    const DefectSpec slip{DefectKind::slip, 3, 3, 0, std::nullopt, 0.0f, 0.0};
    const auto base = misalign_volume(img, none, 4);
    const auto out = misalign_volume(img, slip, 4);
    for (std::size_t z = 0; z < 5; ++z) {
        bool same = true;
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x)
                same = same && out.at(z, y, x) == base.at(z, y, x);
        CHECK(same == (z != 3));
    }
}

TEST_CASE("misalignment matches the slice-wise crop reference")
{
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t margin = 1 + gen() % 6;
        const Shape s{1 + gen() % 6, 2 * margin + 1 + gen() % 8, 2 * margin + 1 + gen() % 8};
        const auto img = random_image(gen, s);
        const auto lab = oracle::random_labels(gen, s, 50);
        DefectSpec spec;
        spec.kind = gen() % 2 ? DefectKind::slip : DefectKind::translation;
        spec.z = gen() % s.z;
        spec.dx = static_cast<int>(gen() % (margin + 1));
        spec.dy = static_cast<int>(gen() % (margin + 1));
        const auto [i, l] = misalign(img, lab, spec, margin);
        CHECK(i == oracle::crop_slices(img, spec, margin));
        CHECK(l == oracle::crop_slices(lab, spec, margin));

        AffinityVolume canvas(s, nn_offsets());
        for (auto& v : canvas.data())
            v = 1.0f;
        const auto a = misalign_affinity(canvas, spec, margin);
        CHECK(a.shape() == i.shape());
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t v = 0; v < a.shape().voxels(); ++v) {
                const Shape& os = a.shape();
                const std::size_t z = v / os.slice(), y = v / os.x % os.y, x = v % os.x;
                CHECK(a.at(c, v) == (a.in_bounds(c, z, y, x) ? 1.0f : 0.0f));
            }
    }
}

TEST_CASE("misalignment argument checks")
{
    const ImageVolume img({3, 10, 10});
    const SegVolume lab({3, 10, 10});
    CHECK_THROWS_AS(misalign(img, lab, {DefectKind::slip, 0, 4, 0, {}, 0, 0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(misalign(img, lab, {DefectKind::slip, 0, -1, 0, {}, 0, 0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(misalign(img, lab, {DefectKind::slip, 3, 1, 0, {}, 0, 0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(misalign(img, lab, {DefectKind::missing, 0, 0, 0, {}, 0, 0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(misalign(img, lab, {DefectKind::slip, 0, 0, 0, {}, 0, 0}, 5), std::invalid_argument);
    CHECK_THROWS_AS(misalign(img, SegVolume({3, 10, 9}), {DefectKind::slip, 0, 0, 0, {}, 0, 0}, 1),
                    std::invalid_argument);
}

TEST_CASE("a slip on a two-label volume cuts z-edges exactly where labels disagree")
{
    const Shape s{4, 10, 20};
    SegVolume lab(s);
    for (std::size_t z = 0; z < s.z; ++z)
        for (std::size_t y = 0; y < s.y; ++y)
            for (std::size_t x = 0; x < s.x; ++x)
                lab.at(z, y, x) = x < 10 ? 1 : 2;
    const DefectSpec slip{DefectKind::slip, 2, 3, 1, std::nullopt, 0.0f, 0.0};
    const auto out = misalign_volume(lab, slip, 4);
    const auto aff = affinities_from_labels(out, nn_offsets());
    const std::size_t cz = static_cast<std::size_t>(find_channel(aff.offsets(), {1, 0, 0}));
    std::size_t cut = 0;
    for (std::size_t z = 0; z + 1 < out.shape().z; ++z)
        for (std::size_t y = 0; y < out.shape().y; ++y)
            for (std::size_t x = 0; x < out.shape().x; ++x) {
                const bool same = out.at(z, y, x) == out.at(z + 1, y, x);
                CHECK(aff.at(cz, z, y, x) == (same ? 1.0f : 0.0f));
                if (!same) {
                    CHECK((z == 1 || z == 2));
                    ++cut;
                }
            }
    // Three columns change label on each side of the slipped slice.
    CHECK(cut == 2 * 3 * out.shape().y);
}

TEST_CASE("missing_section")
{
    std::mt19937_64 gen(4);
    const auto img = random_image(gen, {3, 8, 9});

    DefectSpec full{DefectKind::missing, 1, 0, 0, std::nullopt, 0.5f, 0.0};
    const auto a = missing_section(img, full);
    for (std::size_t z = 0; z < 3; ++z)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 9; ++x)
                CHECK(a.at(z, y, x) == (z == 1 ? 0.5f : img.at(z, y, x)));

    DefectSpec empty{DefectKind::missing, 0, 0, 0, Rect{2, 2, 0, 5}, 0.0f, 0.0};
    CHECK(missing_section(img, empty) == img);

    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t h = 1 + gen() % 8, w = 1 + gen() % 9;
        const Rect r{gen() % (8 - h + 1), gen() % (9 - w + 1), h, w};
        const DefectSpec d{DefectKind::missing, gen() % 3, 0, 0, r, 2.0f / 3.0f, 0.0};
        const auto out = missing_section(img, d);
        std::size_t diff = 0;
        for (std::size_t i = 0; i < img.size(); ++i)
            diff += out[i] != img[i];
        CHECK(diff == h * w);
    }

    CHECK_THROWS_AS(missing_section(img, {DefectKind::missing, 3, 0, 0, {}, 0.5f, 0}), std::invalid_argument);
    CHECK_THROWS_AS(missing_section(img, {DefectKind::missing, 0, 0, 0, Rect{5, 0, 4, 1}, 0.5f, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(missing_section(img, {DefectKind::missing, 0, 0, 0, {}, 1.5f, 0}), std::invalid_argument);
}

TEST_CASE("gaussian_kernel")
{
    const auto k = gaussian_kernel(1.3);
    CHECK(k.size() == 2 * 4 + 1);
    double sum = 0;
    for (auto v : k)
        sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(k[i] == k[8 - i]);
        CHECK(k[i] < k[i + 1]);
    }
    CHECK(gaussian_kernel(0.1).size() == 3);
    CHECK_THROWS_AS(gaussian_kernel(0.0), std::invalid_argument);
}

TEST_CASE("out_of_focus")
{
    std::mt19937_64 gen(5);
    const auto img = random_image(gen, {2, 7, 7});

    SUBCASE("zero sigma is the identity")
    {
        CHECK(out_of_focus(img, {DefectKind::blur, 1, 0, 0, std::nullopt, 0, 0.0}) == img);
    }
    SUBCASE("constant slices stay constant")
    {
        ImageVolume c({1, 9, 11});
        for (auto& v : c.data())
            v = 0.375f;
        for (double sigma : {0.3, 1.0, 2.7, 5.0})
            CHECK(out_of_focus(c, {DefectKind::blur, 0, 0, 0, std::nullopt, 0, sigma}) == c);
    }
    SUBCASE("matches dense convolution on a 7x7 slice")
    {
        const auto got = out_of_focus(img, {DefectKind::blur, 1, 0, 0, std::nullopt, 0, 1.3});
        const auto ref = oracle::blur_dense(img, 1, 1.3, Rect{0, 0, 7, 7});
        for (std::size_t i = 0; i < img.size(); ++i)
            CHECK(std::abs(got[i] - ref[i]) <= 1e-6);
        for (std::size_t i = 0; i < 49; ++i)
            CHECK(got[i] == img[i]);
    }
    SUBCASE("rectangles and large sigma against the dense reference")
    {
        for (int trial = 0; trial < 10; ++trial) {
            const Shape s{2, 5 + gen() % 10, 5 + gen() % 10};
            const auto v = random_image(gen, s);
            const std::size_t h = 1 + gen() % s.y, w = 1 + gen() % s.x;
            const Rect r{gen() % (s.y - h + 1), gen() % (s.x - w + 1), h, w};
            const double sigma = 5.0 * std::uniform_real_distribution<double>(0.01, 1.0)(gen);
            const auto got = out_of_focus(v, {DefectKind::blur, 0, 0, 0, r, 0, sigma});
            const auto ref = oracle::blur_dense(v, 0, sigma, r);
            for (std::size_t i = 0; i < v.size(); ++i) {
                CHECK(std::abs(got[i] - ref[i]) <= 1e-6);
                CHECK((got[i] >= 0.0f && got[i] <= 1.0f));
            }
        }
    }
    CHECK_THROWS_AS(out_of_focus(img, {DefectKind::blur, 0, 0, 0, {}, 0, 5.5}), std::invalid_argument);
    CHECK_THROWS_AS(out_of_focus(img, {DefectKind::missing, 0, 0, 0, {}, 0, 1.0}), std::invalid_argument);
}

TEST_CASE("sample_defects structure")
{
    const Shape s{10, 32, 24};
    const AugmentParams p;
    SeededRng a(99), b(99);
    CHECK(sample_defects(a, s, p) == sample_defects(b, s, p));

    SeededRng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const auto d = sample_defects(rng, s, p);
        REQUIRE(!d.empty());
        CHECK((d[0].kind == DefectKind::slip || d[0].kind == DefectKind::translation));
        CHECK(d[0].z < s.z);
        std::set<std::size_t> missing_z, blur_z;
        for (std::size_t k = 1; k < d.size(); ++k) {
            CHECK((d[k].kind == DefectKind::missing || d[k].kind == DefectKind::blur));
            auto& zs = d[k].kind == DefectKind::missing ? missing_z : blur_z;
            CHECK(zs.insert(d[k].z).second);
            if (d[k].region) {
                const Rect& r = *d[k].region;
                CHECK((r.h >= 8 && r.h <= 24));
                CHECK((r.w >= 6 && r.w <= 18));
                CHECK(r.y0 + r.h <= s.y);
                CHECK(r.x0 + r.w <= s.x);
            }
            CHECK((d[k].fill >= 0.0f && d[k].fill <= 1.0f));
        }
        CHECK(missing_z.size() <= 5);
        CHECK(blur_z.size() <= 5);
    }

    AugmentParams bad;
    bad.margin = 3;
    CHECK_THROWS_AS(sample_defects(rng, s, bad), std::invalid_argument);
}

TEST_CASE("sampled parameters follow their distributions")
{
    const Shape s{6, 20, 20};
    const AugmentParams p;
    SeededRng rng(2024);
    std::array<std::size_t, 18> dx{}, dy{};
    std::array<std::size_t, 6> n_missing{}, n_blur{};
    std::array<std::size_t, 2> kind{};
    double sigma_sum = 0, sigma_min = 10, sigma_max = -1;
    std::size_t n_sigma = 0;
    for (int i = 0; i < 100000; ++i) {
        const auto d = sample_defects(rng, s, p);
        ++dx[static_cast<std::size_t>(d[0].dx)];
        ++dy[static_cast<std::size_t>(d[0].dy)];
        ++kind[d[0].kind == DefectKind::slip];
        std::size_t m = 0, b = 0;
        for (const auto& e : d) {
            if (e.kind == DefectKind::missing)
                ++m;
            if (e.kind == DefectKind::blur) {
                ++b;
                sigma_sum += e.sigma;
                sigma_min = std::min(sigma_min, e.sigma);
                sigma_max = std::max(sigma_max, e.sigma);
                ++n_sigma;
            }
        }
        ++n_missing[m];
        ++n_blur[b];
    }
    CHECK(chi_squared_p(dx) > 0.001);
    CHECK(chi_squared_p(dy) > 0.001);
    CHECK(chi_squared_p(n_missing) > 0.001);
    CHECK(chi_squared_p(n_blur) > 0.001);
    CHECK(chi_squared_p(kind) > 0.001);
    CHECK(sigma_min >= 0.0);
    CHECK(sigma_max <= 5.0);
    CHECK(std::abs(sigma_sum / static_cast<double>(n_sigma) - 2.5) <= 0.02);
}

TEST_CASE("defect lists round trip through JSON and replay deterministically")
{
    SeededRng rng(11);
    const Shape canvas{6, 40, 40};
    AugmentParams p;
    p.margin = 17;
    const Shape cropped{6, 6, 6};
    for (int i = 0; i < 50; ++i) {
        const auto d = sample_defects(rng, cropped, p);
        CHECK(defects_from_json(defects_to_json(d)) == d);
    }
    CHECK_THROWS_AS(defects_from_json("[{\"kind\":\"warp\",\"z\":0}]"), std::invalid_argument);
    CHECK_THROWS_AS(defects_from_json("[{\"kind\":\"slip\"}]"), std::invalid_argument);

    std::mt19937_64 gen(6);
    const auto img = random_image(gen, canvas);
    const auto lab = oracle::random_labels(gen, canvas, 8);
    const auto defects = sample_defects(rng, cropped, p);
    const auto one = apply_defects(img, lab, defects, 17, nn_offsets());
    const auto two = apply_defects(img, lab, defects_from_json(defects_to_json(defects)), 17, nn_offsets());
    CHECK(one.image == two.image);
    CHECK(one.label == two.label);
    CHECK(one.affinity == two.affinity);
    CHECK(one.label.shape() == cropped);
    CHECK(one.affinity == affinities_from_labels(one.label, nn_offsets()));
    CHECK(one.label == misalign_volume(lab, defects[0], 17));
}
