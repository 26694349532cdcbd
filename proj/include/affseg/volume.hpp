#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace affseg {

// Extents in (z, y, x) order. Storage is C-order with x fastest.
struct Shape {
    std::size_t z = 1;
    std::size_t y = 1;
    std::size_t x = 1;

    constexpr std::size_t voxels() const { return z * y * x; }
    constexpr std::size_t slice() const { return y * x; }

    constexpr std::size_t index(std::size_t iz, std::size_t iy, std::size_t ix) const
    {
        return (iz * y + iy) * x + ix;
    }

    friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

// Throws std::invalid_argument if any extent is zero or the voxel count overflows.
void validate(const Shape& s);

struct Coord {
    std::ptrdiff_t z = 0;
    std::ptrdiff_t y = 0;
    std::ptrdiff_t x = 0;

    friend constexpr bool operator==(const Coord&, const Coord&) = default;
};

inline bool contains(const Shape& s, const Coord& c)
{
    return c.z >= 0 && c.y >= 0 && c.x >= 0 &&
           static_cast<std::size_t>(c.z) < s.z &&
           static_cast<std::size_t>(c.y) < s.y &&
           static_cast<std::size_t>(c.x) < s.x;
}

template <class T>
class Volume {
public:
    using value_type = T;

    Volume() = default;

    explicit Volume(Shape shape, T fill = T{})
        : shape_(shape)
    {
        validate(shape_);
        data_.assign(shape_.voxels(), fill);
    }

    Volume(Shape shape, std::vector<T> data)
        : shape_(shape), data_(std::move(data))
    {
        validate(shape_);
        if (data_.size() != shape_.voxels())
            throw std::invalid_argument("volume data size " + std::to_string(data_.size()) +
                                        " does not match shape " + to_string(shape_));
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t z, std::size_t y, std::size_t x) { return data_[shape_.index(z, y, x)]; }
    const T& at(std::size_t z, std::size_t y, std::size_t x) const
    {
        return data_[shape_.index(z, y, x)];
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    Shape shape_{};
    std::vector<T> data_;
};

using ImageVolume = Volume<float>;
using SegVolume = Volume<std::uint64_t>;

// An affinity edge type. The value stored at voxel v on this channel is the
// affinity of the undirected edge (v, v + offset).
struct Offset {
    int dz = 0;
    int dy = 0;
    int dx = 0;

    Offset operator-() const { return {-dz, -dy, -dx}; }
    friend constexpr bool operator==(const Offset&, const Offset&) = default;
};

using OffsetSet = std::vector<Offset>;

std::string to_string(const Offset& o);

// (0,0,1), (0,1,0), (1,0,0): x, y, z nearest neighbours in that channel order.
OffsetSet nn_offsets();

// Nearest neighbours plus lateral edges spanning 3, 9, 27 voxels and axial
// edges spanning 2, 3, 4 sections. Twelve channels.
OffsetSet long_range_offsets();

// Throws std::invalid_argument for an empty set, a zero offset or duplicates.
void validate(const OffsetSet& offsets);

// Channel index of `o` in `offsets`, or -1.
int find_channel(const OffsetSet& offsets, const Offset& o);

bool is_nn(const OffsetSet& offsets);

class AffinityVolume {
public:
    AffinityVolume() = default;
    AffinityVolume(Shape shape, OffsetSet offsets);
    AffinityVolume(Shape shape, OffsetSet offsets, std::vector<float> data);

    const Shape& shape() const { return shape_; }
    const OffsetSet& offsets() const { return offsets_; }
    std::size_t channels() const { return offsets_.size(); }

    float& at(std::size_t c, std::size_t voxel) { return data_[c * shape_.voxels() + voxel]; }
    float at(std::size_t c, std::size_t voxel) const { return data_[c * shape_.voxels() + voxel]; }

    float& at(std::size_t c, std::size_t z, std::size_t y, std::size_t x)
    {
        return at(c, shape_.index(z, y, x));
    }
    float at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) const
    {
        return at(c, shape_.index(z, y, x));
    }

    // True when the partner voxel of the edge anchored at (z,y,x) on channel c is inside.
    bool in_bounds(std::size_t c, std::size_t z, std::size_t y, std::size_t x) const;

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    friend bool operator==(const AffinityVolume&, const AffinityVolume&) = default;

private:
    Shape shape_{};
    OffsetSet offsets_;
    std::vector<float> data_;
};

// Zero every entry whose partner voxel falls outside the volume.
void mask_out_of_bounds(AffinityVolume& aff);

}  // namespace affseg
