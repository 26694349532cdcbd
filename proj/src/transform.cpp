#include "affseg/transform.hpp"

#include <stdexcept>

namespace affseg {

namespace {

using Mat = std::array<int, 4>;

constexpr Mat identity{1, 0, 0, 1};
constexpr Mat rot90{0, -1, 1, 0};
constexpr Mat flip_x_mat{-1, 0, 0, 1};
constexpr Mat flip_y_mat{1, 0, 0, -1};

Mat mul(const Mat& a, const Mat& b)
{
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

DihedralTransform from_matrix(const Mat& m, bool flip_z)
{
    for (int k = 0; k < 2; ++k)
        for (int fy = 0; fy < 2; ++fy)
            for (int fx = 0; fx < 2; ++fx) {
                DihedralTransform t{k, fx != 0, fy != 0, flip_z};
                if (t.lateral() == m)
                    return t;
            }
    throw std::logic_error("matrix is not a dihedral symmetry of the square");
}

}  // namespace

Mat DihedralTransform::lateral() const
{
    Mat m = identity;
    if (flip_x)
        m = mul(flip_x_mat, m);
    if (flip_y)
        m = mul(flip_y_mat, m);
    const int turns = ((k % 4) + 4) % 4;
    for (int i = 0; i < turns; ++i)
        m = mul(rot90, m);
    return m;
}

DihedralTransform DihedralTransform::normalized() const
{
    return from_matrix(lateral(), flip_z);
}

bool DihedralTransform::swaps_xy() const
{
    return lateral()[0] == 0;
}

bool operator==(const DihedralTransform& a, const DihedralTransform& b)
{
    return a.flip_z == b.flip_z && a.lateral() == b.lateral();
}

std::string to_string(const DihedralTransform& t)
{
    return "k=" + std::to_string(t.k) + (t.flip_x ? ",fx" : "") + (t.flip_y ? ",fy" : "") +
           (t.flip_z ? ",fz" : "");
}

DihedralTransform compose(const DihedralTransform& a, const DihedralTransform& b)
{
    return from_matrix(mul(a.lateral(), b.lateral()), a.flip_z != b.flip_z);
}

DihedralTransform inverse(const DihedralTransform& t)
{
    const Mat m = t.lateral();
    return from_matrix({m[0], m[2], m[1], m[3]}, t.flip_z);
}

Shape transformed_shape(const Shape& s, const DihedralTransform& t)
{
    return t.swaps_xy() ? Shape{s.z, s.x, s.y} : s;
}

Coord transform_coord(const Coord& c, const Shape& s, const DihedralTransform& t)
{
    // Doubled coordinates centred on the slice, so half-voxel centres stay integral.
    const auto X = static_cast<std::ptrdiff_t>(s.x);
    const auto Y = static_cast<std::ptrdiff_t>(s.y);
    const auto Z = static_cast<std::ptrdiff_t>(s.z);
    const std::ptrdiff_t u = 2 * c.x - (X - 1);
    const std::ptrdiff_t v = 2 * c.y - (Y - 1);
    const Mat m = t.lateral();
    const std::ptrdiff_t u2 = m[0] * u + m[1] * v;
    const std::ptrdiff_t v2 = m[2] * u + m[3] * v;
    const Shape o = transformed_shape(s, t);
    return {t.flip_z ? Z - 1 - c.z : c.z,
            (v2 + static_cast<std::ptrdiff_t>(o.y) - 1) / 2,
            (u2 + static_cast<std::ptrdiff_t>(o.x) - 1) / 2};
}

Offset transform_offset(const Offset& o, const DihedralTransform& t)
{
    const Mat m = t.lateral();
    return {t.flip_z ? -o.dz : o.dz, m[2] * o.dx + m[3] * o.dy, m[0] * o.dx + m[1] * o.dy};
}

AffinityVolume transform_affinity(const AffinityVolume& aff, const DihedralTransform& t)
{
    const Shape& s = aff.shape();
    const OffsetSet& offsets = aff.offsets();
    AffinityVolume out(transformed_shape(s, t), offsets);
    const Shape& os = out.shape();

    for (std::size_t c = 0; c < offsets.size(); ++c) {
        const Offset moved = transform_offset(offsets[c], t);
        int target = find_channel(offsets, moved);
        bool negated = false;
        if (target < 0) {
            target = find_channel(offsets, -moved);
            negated = true;
        }
        if (target < 0)
            throw std::invalid_argument("offset set is not closed under " + to_string(t) +
                                        ": " + to_string(offsets[c]) + " maps to " +
                                        to_string(moved));

        for (std::size_t z = 0; z < s.z; ++z)
            for (std::size_t y = 0; y < s.y; ++y)
                for (std::size_t x = 0; x < s.x; ++x) {
                    if (!aff.in_bounds(c, z, y, x))
                        continue;
                    Coord w = transform_coord({static_cast<std::ptrdiff_t>(z),
                                               static_cast<std::ptrdiff_t>(y),
                                               static_cast<std::ptrdiff_t>(x)},
                                              s, t);
                    if (negated)
                        w = {w.z + moved.dz, w.y + moved.dy, w.x + moved.dx};
                    out.at(static_cast<std::size_t>(target), os.index(w.z, w.y, w.x)) =
                        aff.at(c, z, y, x);
                }
    }
    return out;
}

}  // namespace affseg
