#include "affseg/volume.hpp"

#include <limits>

namespace affseg {

std::string to_string(const Shape& s)
{
    return "[" + std::to_string(s.z) + "," + std::to_string(s.y) + "," + std::to_string(s.x) + "]";
}

void validate(const Shape& s)
{
    if (s.z == 0 || s.y == 0 || s.x == 0)
        throw std::invalid_argument("shape " + to_string(s) + " has a zero extent");
    constexpr auto max = std::numeric_limits<std::uint64_t>::max();
    if (s.y > max / s.x || s.z > max / (s.y * s.x))
        throw std::invalid_argument("shape " + to_string(s) + " overflows a 64-bit voxel count");
}

std::string to_string(const Offset& o)
{
    return "(" + std::to_string(o.dz) + "," + std::to_string(o.dy) + "," + std::to_string(o.dx) + ")";
}

OffsetSet nn_offsets()
{
    return {{0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
}

OffsetSet long_range_offsets()
{
    OffsetSet out = nn_offsets();
    for (int d : {3, 9, 27})
        out.push_back({0, 0, d});
    for (int d : {3, 9, 27})
        out.push_back({0, d, 0});
    for (int d : {2, 3, 4})
        out.push_back({d, 0, 0});
    return out;
}

void validate(const OffsetSet& offsets)
{
    if (offsets.empty())
        throw std::invalid_argument("offset set is empty");
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        if (offsets[i] == Offset{})
            throw std::invalid_argument("offset " + std::to_string(i) + " is (0,0,0)");
        for (std::size_t j = 0; j < i; ++j)
            if (offsets[i] == offsets[j])
                throw std::invalid_argument("duplicate offset " + to_string(offsets[i]));
    }
}

int find_channel(const OffsetSet& offsets, const Offset& o)
{
    for (std::size_t i = 0; i < offsets.size(); ++i)
        if (offsets[i] == o)
            return static_cast<int>(i);
    return -1;
}

bool is_nn(const OffsetSet& offsets)
{
    if (offsets.size() != 3)
        return false;
    for (const auto& o : nn_offsets())
        if (find_channel(offsets, o) < 0)
            return false;
    return true;
}

AffinityVolume::AffinityVolume(Shape shape, OffsetSet offsets)
    : shape_(shape), offsets_(std::move(offsets))
{
    validate(shape_);
    validate(offsets_);
    data_.assign(offsets_.size() * shape_.voxels(), 0.0f);
}

AffinityVolume::AffinityVolume(Shape shape, OffsetSet offsets, std::vector<float> data)
    : shape_(shape), offsets_(std::move(offsets)), data_(std::move(data))
{
    validate(shape_);
    validate(offsets_);
    if (data_.size() != offsets_.size() * shape_.voxels())
        throw std::invalid_argument("affinity data size does not match shape and channel count");
}

bool AffinityVolume::in_bounds(std::size_t c, std::size_t z, std::size_t y, std::size_t x) const
{
    const Offset& o = offsets_[c];
    return contains(shape_, {static_cast<std::ptrdiff_t>(z) + o.dz,
                             static_cast<std::ptrdiff_t>(y) + o.dy,
                             static_cast<std::ptrdiff_t>(x) + o.dx});
}

void mask_out_of_bounds(AffinityVolume& aff)
{
    const Shape& s = aff.shape();
    for (std::size_t c = 0; c < aff.channels(); ++c)
        for (std::size_t z = 0; z < s.z; ++z)
            for (std::size_t y = 0; y < s.y; ++y)
                for (std::size_t x = 0; x < s.x; ++x)
                    if (!aff.in_bounds(c, z, y, x))
                        aff.at(c, z, y, x) = 0.0f;
}

}  // namespace affseg
