#include "affseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "affseg/affinity.hpp"

namespace affseg {

using nlohmann::json;

namespace {

bool is_misalignment(DefectKind k)
{
    return k == DefectKind::slip || k == DefectKind::translation;
}

Shape cropped_shape(const Shape& s, std::size_t margin)
{
    if (s.y <= 2 * margin || s.x <= 2 * margin)
        throw std::invalid_argument("canvas " + to_string(s) + " too small for margin " +
                                    std::to_string(margin));
    return {s.z, s.y - 2 * margin, s.x - 2 * margin};
}

void check_misalignment(const DefectSpec& spec, std::size_t z_extent, std::size_t margin)
{
    if (!is_misalignment(spec.kind))
        throw std::invalid_argument("defect is not a misalignment");
    if (spec.dx < 0 || spec.dy < 0)
        throw std::invalid_argument("misalignment displacements must be non-negative");
    if (margin < static_cast<std::size_t>(std::max(spec.dx, spec.dy)))
        throw std::invalid_argument("margin " + std::to_string(margin) +
                                    " smaller than displacement " +
                                    std::to_string(std::max(spec.dx, spec.dy)));
    if (spec.z >= z_extent)
        throw std::invalid_argument("defect slice outside the volume");
}

bool shifted(const DefectSpec& spec, std::size_t z)
{
    return spec.kind == DefectKind::slip ? z == spec.z : z >= spec.z;
}

Rect region_of(const DefectSpec& spec, const Shape& s)
{
    if (spec.z >= s.z)
        throw std::invalid_argument("defect slice " + std::to_string(spec.z) + " outside volume");
    if (!spec.region)
        return {0, 0, s.y, s.x};
    const Rect& r = *spec.region;
    if (r.y0 + r.h > s.y || r.x0 + r.w > s.x)
        throw std::invalid_argument("defect region exceeds the slice");
    return r;
}

// Half-sample symmetric reflection: ... c b a | a b c ... | c b a ...
std::size_t reflect(std::ptrdiff_t i, std::size_t n)
{
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    i %= period;
    if (i < 0)
        i += period;
    const auto u = static_cast<std::size_t>(i);
    return u < n ? u : 2 * n - 1 - u;
}

// Distinct slice indices drawn by a partial Fisher-Yates shuffle.
std::vector<std::size_t> distinct_slices(SeededRng& rng, std::size_t z_extent, std::size_t count)
{
    std::vector<std::size_t> pool(z_extent);
    std::iota(pool.begin(), pool.end(), 0);
    count = std::min(count, z_extent);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(i, z_extent - 1));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

// Full slice or an axis-aligned rectangle with sides in [25%, 75%] of the extent.
std::optional<Rect> sample_region(SeededRng& rng, const Shape& s)
{
    if (rng.coin())
        return std::nullopt;
    auto side = [&](std::size_t extent) {
        const auto lo = std::max<std::size_t>(1, (extent + 3) / 4);
        const auto hi = std::max(lo, extent * 3 / 4);
        return static_cast<std::size_t>(rng.uniform_int(lo, std::min(hi, extent)));
    };
    Rect r;
    r.h = side(s.y);
    r.w = side(s.x);
    r.y0 = static_cast<std::size_t>(rng.uniform_int(0, s.y - r.h));
    r.x0 = static_cast<std::size_t>(rng.uniform_int(0, s.x - r.w));
    return r;
}

}  // namespace

std::string to_string(DefectKind k)
{
    switch (k) {
    case DefectKind::slip: return "slip";
    case DefectKind::translation: return "translation";
    case DefectKind::missing: return "missing";
    case DefectKind::blur: return "blur";
    }
    return "?";
}

DefectKind parse_defect_kind(const std::string& s)
{
    if (s == "slip") return DefectKind::slip;
    if (s == "translation") return DefectKind::translation;
    if (s == "missing") return DefectKind::missing;
    if (s == "blur") return DefectKind::blur;
    throw std::invalid_argument("unknown defect kind \"" + s + "\"");
}

template <class T>
Volume<T> misalign_volume(const Volume<T>& canvas, const DefectSpec& spec, std::size_t margin)
{
    const Shape& s = canvas.shape();
    check_misalignment(spec, s.z, margin);
    const Shape out_shape = cropped_shape(s, margin);
    Volume<T> out(out_shape);
    for (std::size_t z = 0; z < s.z; ++z) {
        const bool move = shifted(spec, z);
        const std::size_t oy = margin + (move ? static_cast<std::size_t>(spec.dy) : 0);
        const std::size_t ox = margin + (move ? static_cast<std::size_t>(spec.dx) : 0);
        for (std::size_t y = 0; y < out_shape.y; ++y)
            for (std::size_t x = 0; x < out_shape.x; ++x)
                out.at(z, y, x) = canvas.at(z, y + oy, x + ox);
    }
    return out;
}

template ImageVolume misalign_volume(const ImageVolume&, const DefectSpec&, std::size_t);
template SegVolume misalign_volume(const SegVolume&, const DefectSpec&, std::size_t);

std::pair<ImageVolume, SegVolume> misalign(const ImageVolume& image, const SegVolume& label,
                                           const DefectSpec& spec, std::size_t margin)
{
    if (!(image.shape() == label.shape()))
        throw std::invalid_argument("image and label shapes differ");
    return {misalign_volume(image, spec, margin), misalign_volume(label, spec, margin)};
}

AffinityVolume misalign_affinity(const AffinityVolume& canvas, const DefectSpec& spec,
                                 std::size_t margin)
{
    const Shape& s = canvas.shape();
    check_misalignment(spec, s.z, margin);
    const Shape out_shape = cropped_shape(s, margin);
    AffinityVolume out(out_shape, canvas.offsets());
    for (std::size_t c = 0; c < canvas.channels(); ++c)
        for (std::size_t z = 0; z < s.z; ++z) {
            const bool move = shifted(spec, z);
            const std::size_t oy = margin + (move ? static_cast<std::size_t>(spec.dy) : 0);
            const std::size_t ox = margin + (move ? static_cast<std::size_t>(spec.dx) : 0);
            for (std::size_t y = 0; y < out_shape.y; ++y)
                for (std::size_t x = 0; x < out_shape.x; ++x)
                    out.at(c, z, y, x) = canvas.at(c, z, y + oy, x + ox);
        }
    mask_out_of_bounds(out);
    return out;
}

ImageVolume missing_section(const ImageVolume& image, const DefectSpec& spec)
{
    if (spec.kind != DefectKind::missing)
        throw std::invalid_argument("defect is not a missing section");
    if (!(spec.fill >= 0.0f && spec.fill <= 1.0f))
        throw std::invalid_argument("missing-section fill must be in [0,1]");
    const Rect r = region_of(spec, image.shape());
    ImageVolume out = image;
    for (std::size_t y = r.y0; y < r.y0 + r.h; ++y)
        for (std::size_t x = r.x0; x < r.x0 + r.w; ++x)
            out.at(spec.z, y, x) = spec.fill;
    return out;
}

std::vector<double> gaussian_kernel(double sigma)
{
    if (!(sigma > 0.0))
        throw std::invalid_argument("gaussian kernel needs sigma > 0");
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k)
        v /= sum;
    return k;
}

ImageVolume out_of_focus(const ImageVolume& image, const DefectSpec& spec)
{
    if (spec.kind != DefectKind::blur)
        throw std::invalid_argument("defect is not a blur");
    if (!(spec.sigma >= 0.0 && spec.sigma <= 5.0))
        throw std::invalid_argument("blur sigma must be in [0,5]");
    const Shape& s = image.shape();
    const Rect r = region_of(spec, s);
    if (spec.sigma == 0.0)
        return image;

    const auto k = gaussian_kernel(spec.sigma);
    const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);

    // Horizontal pass over the full slice, vertical pass only inside the region.
    std::vector<double> rows(s.slice());
    for (std::size_t y = 0; y < s.y; ++y)
        for (std::size_t x = 0; x < s.x; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i)
                acc += k[static_cast<std::size_t>(i + radius)] *
                       image.at(spec.z, y, reflect(static_cast<std::ptrdiff_t>(x) + i, s.x));
            rows[y * s.x + x] = acc;
        }

    ImageVolume out = image;
    for (std::size_t y = r.y0; y < r.y0 + r.h; ++y)
        for (std::size_t x = r.x0; x < r.x0 + r.w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i)
                acc += k[static_cast<std::size_t>(i + radius)] *
                       rows[reflect(static_cast<std::ptrdiff_t>(y) + i, s.y) * s.x + x];
            out.at(spec.z, y, x) = std::clamp(static_cast<float>(acc), 0.0f, 1.0f);
        }
    return out;
}

std::vector<DefectSpec> sample_defects(SeededRng& rng, const Shape& shape, const AugmentParams& p)
{
    validate(shape);
    if (p.margin < static_cast<std::size_t>(p.max_displacement))
        throw std::invalid_argument("augment margin must be at least the maximum displacement");

    std::vector<DefectSpec> out;

    DefectSpec mis;
    mis.kind = rng.coin() ? DefectKind::slip : DefectKind::translation;
    mis.z = static_cast<std::size_t>(rng.uniform_int(0, shape.z - 1));
    const auto dmax = static_cast<std::uint64_t>(p.max_displacement);
    mis.dx = static_cast<int>(rng.uniform_int(0, dmax));
    mis.dy = static_cast<int>(rng.uniform_int(0, dmax));
    out.push_back(mis);

    const auto n_missing = static_cast<std::size_t>(rng.uniform_int(0, p.max_missing_slices));
    for (std::size_t z : distinct_slices(rng, shape.z, n_missing)) {
        DefectSpec d;
        d.kind = DefectKind::missing;
        d.z = z;
        d.region = sample_region(rng, shape);
        d.fill = static_cast<float>(rng.uniform01());
        out.push_back(d);
    }

    const auto n_blur = static_cast<std::size_t>(rng.uniform_int(0, p.max_blur_slices));
    for (std::size_t z : distinct_slices(rng, shape.z, n_blur)) {
        DefectSpec d;
        d.kind = DefectKind::blur;
        d.z = z;
        d.region = sample_region(rng, shape);
        d.sigma = rng.uniform(0.0, p.sigma_max);
        out.push_back(d);
    }
    return out;
}

std::string defects_to_json(const std::vector<DefectSpec>& defects)
{
    json arr = json::array();
    for (const auto& d : defects) {
        json j;
        j["kind"] = to_string(d.kind);
        j["z"] = d.z;
        if (is_misalignment(d.kind)) {
            j["dx"] = d.dx;
            j["dy"] = d.dy;
        } else {
            if (d.region)
                j["region"] = {d.region->y0, d.region->x0, d.region->h, d.region->w};
            else
                j["region"] = "full";
            if (d.kind == DefectKind::missing)
                j["fill"] = d.fill;
            else
                j["sigma"] = d.sigma;
        }
        arr.push_back(j);
    }
    return arr.dump(2);
}

std::vector<DefectSpec> defects_from_json(const std::string& text)
{
    std::vector<DefectSpec> out;
    try {
        for (const auto& j : json::parse(text)) {
            DefectSpec d;
            d.kind = parse_defect_kind(j.at("kind").get<std::string>());
            d.z = j.at("z").get<std::size_t>();
            if (is_misalignment(d.kind)) {
                d.dx = j.at("dx").get<int>();
                d.dy = j.at("dy").get<int>();
            } else {
                const auto& r = j.at("region");
                if (r.is_array())
                    d.region = Rect{r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(),
                                    r.at(2).get<std::size_t>(), r.at(3).get<std::size_t>()};
                if (d.kind == DefectKind::missing)
                    d.fill = j.at("fill").get<float>();
                else
                    d.sigma = j.at("sigma").get<double>();
            }
            out.push_back(d);
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("defect manifest: ") + e.what());
    }
    return out;
}

AugmentedSample apply_defects(const ImageVolume& image, const SegVolume& label,
                              const std::vector<DefectSpec>& defects, std::size_t margin,
                              const OffsetSet& offsets)
{
    if (!(image.shape() == label.shape()))
        throw std::invalid_argument("image and label shapes differ");

    AugmentedSample out;
    out.defects = defects;

    auto mis = std::find_if(defects.begin(), defects.end(),
                            [](const DefectSpec& d) { return is_misalignment(d.kind); });
    if (mis != defects.end()) {
        std::tie(out.image, out.label) = misalign(image, label, *mis, margin);
    } else {
        // Plain centre crop.
        DefectSpec none{DefectKind::slip, 0, 0, 0, std::nullopt, 0.0f, 0.0};
        std::tie(out.image, out.label) = misalign(image, label, none, margin);
    }

    for (const auto& d : defects) {
        if (d.kind == DefectKind::missing)
            out.image = missing_section(out.image, d);
        else if (d.kind == DefectKind::blur)
            out.image = out_of_focus(out.image, d);
    }
    out.affinity = affinities_from_labels(out.label, offsets);
    return out;
}

}  // namespace affseg
