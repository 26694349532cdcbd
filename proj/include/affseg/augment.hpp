#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "affseg/rng.hpp"
#include "affseg/volume.hpp"

namespace affseg {

enum class DefectKind { slip, translation, missing, blur };

std::string to_string(DefectKind k);
DefectKind parse_defect_kind(const std::string& s);

struct Rect {
    std::size_t y0 = 0;
    std::size_t x0 = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    friend bool operator==(const Rect&, const Rect&) = default;
};

// One simulated imaging defect. dx/dy apply to the misalignment kinds,
// region/fill to missing sections, region/sigma to blur. An empty region
// means the whole slice.
struct DefectSpec {
    DefectKind kind = DefectKind::slip;
    std::size_t z = 0;
    int dx = 0;
    int dy = 0;
    std::optional<Rect> region;
    float fill = 0.0f;
    double sigma = 0.0;

    friend bool operator==(const DefectSpec&, const DefectSpec&) = default;
};

struct AugmentParams {
    int max_displacement = 17;
    std::size_t max_missing_slices = 5;
    std::size_t max_blur_slices = 5;
    double sigma_max = 5.0;
    std::size_t margin = 17;  // lateral canvas border consumed by misalignment
};

// Lateral crop of an oversized canvas. Unshifted slices are read at
// (margin, margin); shifted ones at (margin + dy, margin + dx). A slip shifts
// slice z only, a translation shifts every slice with index >= z.
template <class T>
Volume<T> misalign_volume(const Volume<T>& canvas, const DefectSpec& spec, std::size_t margin);

std::pair<ImageVolume, SegVolume> misalign(const ImageVolume& image, const SegVolume& label,
                                           const DefectSpec& spec, std::size_t margin);

// Crops every channel like misalign_volume, then zeroes entries whose partner
// leaves the cropped volume.
AffinityVolume misalign_affinity(const AffinityVolume& canvas, const DefectSpec& spec,
                                 std::size_t margin);

ImageVolume missing_section(const ImageVolume& image, const DefectSpec& spec);

// Normalised 1-D Gaussian, radius ceil(3 sigma). sigma must be > 0.
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian blur of slice z (reflect border), written back inside
// the region only.
ImageVolume out_of_focus(const ImageVolume& image, const DefectSpec& spec);

// One misalignment, up to max_missing_slices missing sections and up to
// max_blur_slices blurred sections, each kind at distinct slices. `shape` is
// the shape after cropping.
std::vector<DefectSpec> sample_defects(SeededRng& rng, const Shape& shape,
                                       const AugmentParams& p);

std::string defects_to_json(const std::vector<DefectSpec>& defects);
std::vector<DefectSpec> defects_from_json(const std::string& text);

struct AugmentedSample {
    ImageVolume image;
    SegVolume label;
    AffinityVolume affinity;
    std::vector<DefectSpec> defects;
};

// Replays a defect list on a canvas pair: misalignment first (cropping by
// `margin`), then missing sections and blur. Affinity targets are regenerated
// from the transformed label.
AugmentedSample apply_defects(const ImageVolume& image, const SegVolume& label,
                              const std::vector<DefectSpec>& defects, std::size_t margin,
                              const OffsetSet& offsets);

}  // namespace affseg
