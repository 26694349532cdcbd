#pragma once

#include <array>
#include <string>

#include "affseg/volume.hpp"

namespace affseg {

// Element of the square's dihedral group acting on the xy-plane, crossed with
// an optional z flip. Flips act first, then `k` counter-clockwise quarter
// turns (x' = -y, y' = x). Two transforms compare equal when they move
// voxels identically, so e.g. {k=2} == {flip_x, flip_y}.
struct DihedralTransform {
    int k = 0;
    bool flip_x = false;
    bool flip_y = false;
    bool flip_z = false;

    // Row-major 2x2 integer matrix acting on (x, y) displacements.
    std::array<int, 4> lateral() const;

    // Same group element with k in {0, 1}.
    DihedralTransform normalized() const;

    bool swaps_xy() const;

    friend bool operator==(const DihedralTransform& a, const DihedralTransform& b);
};

std::string to_string(const DihedralTransform& t);

// compose(a, b) applies b first, then a.
DihedralTransform compose(const DihedralTransform& a, const DihedralTransform& b);
DihedralTransform inverse(const DihedralTransform& t);

Shape transformed_shape(const Shape& s, const DihedralTransform& t);
Coord transform_coord(const Coord& c, const Shape& s, const DihedralTransform& t);
Offset transform_offset(const Offset& o, const DihedralTransform& t);

template <class T>
Volume<T> transform_image(const Volume<T>& vol, const DihedralTransform& t)
{
    const Shape& s = vol.shape();
    const Shape out_shape = transformed_shape(s, t);
    Volume<T> out(out_shape);
    for (std::size_t z = 0; z < s.z; ++z)
        for (std::size_t y = 0; y < s.y; ++y)
            for (std::size_t x = 0; x < s.x; ++x) {
                const Coord c = transform_coord(
                    {static_cast<std::ptrdiff_t>(z), static_cast<std::ptrdiff_t>(y),
                     static_cast<std::ptrdiff_t>(x)},
                    s, t);
                out.at(c.z, c.y, c.x) = vol.at(z, y, x);
            }
    return out;
}

// Moves every in-bounds edge value to the transformed edge. The output keeps
// the input's offset list; a transformed offset pointing in a negative
// direction is stored on the channel of its negation, anchored at the other
// endpoint. Throws std::invalid_argument if the offset set is not closed
// under the transform up to sign.
AffinityVolume transform_affinity(const AffinityVolume& aff, const DihedralTransform& t);

}  // namespace affseg
