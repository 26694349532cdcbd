#include "affseg/watershed.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <boost/pending/disjoint_sets.hpp>

#include "affseg/affinity.hpp"
#include "affseg/parallel.hpp"

namespace affseg {

namespace {

using DisjointSets = boost::disjoint_sets_with_storage<>;

constexpr float removed = -1.0f;

struct NnChannels {
    std::size_t x, y, z;
};

NnChannels nn_channels(const AffinityVolume& aff)
{
    if (!is_nn(aff.offsets()))
        throw std::invalid_argument("watershed requires the nearest-neighbour offset set");
    return {static_cast<std::size_t>(find_channel(aff.offsets(), {0, 0, 1})),
            static_cast<std::size_t>(find_channel(aff.offsets(), {0, 1, 0})),
            static_cast<std::size_t>(find_channel(aff.offsets(), {1, 0, 0}))};
}

// Phase 1. Strong edges take precedence, so t_min == t_max keeps the edges at that value.
float clamp_weight(float w, const ResolvedThresholds& t)
{
    if (w >= t.t_max)
        return 1.0f;
    if (w <= t.t_min)
        return removed;
    return w;
}

// Clamped weights of the six incident edges in Direction order; `removed` where absent.
std::array<float, 6> incident(const AffinityVolume& aff, const NnChannels& ch,
                              const ResolvedThresholds& t, std::size_t z, std::size_t y,
                              std::size_t x)
{
    const Shape& s = aff.shape();
    const std::size_t v = s.index(z, y, x);
    std::array<float, 6> w;
    w.fill(removed);
    if (x + 1 < s.x) w[0] = clamp_weight(aff.at(ch.x, v), t);
    if (y + 1 < s.y) w[1] = clamp_weight(aff.at(ch.y, v), t);
    if (z + 1 < s.z) w[2] = clamp_weight(aff.at(ch.z, v), t);
    if (x > 0) w[3] = clamp_weight(aff.at(ch.x, v - 1), t);
    if (y > 0) w[4] = clamp_weight(aff.at(ch.y, v - s.x), t);
    if (z > 0) w[5] = clamp_weight(aff.at(ch.z, v - s.slice()), t);
    return w;
}

std::size_t neighbour(const Shape& s, std::size_t v, Direction d)
{
    switch (d) {
    case Direction::px: return v + 1;
    case Direction::py: return v + s.x;
    case Direction::pz: return v + s.slice();
    case Direction::mx: return v - 1;
    case Direction::my: return v - s.x;
    case Direction::mz: return v - s.slice();
    case Direction::self: return v;
    }
    return v;
}

void check_threshold(const Threshold& t, const char* name)
{
    const double hi = t.kind == Threshold::Kind::percentile ? 100.0 : 1.0;
    if (!(t.value >= 0.0 && t.value <= hi))
        throw std::invalid_argument(std::string(name) + " = " + to_string(t) + " out of range");
}

}  // namespace

Threshold parse_threshold(const std::string& s)
{
    std::string body = s;
    Threshold::Kind kind = Threshold::Kind::absolute;
    if (!body.empty() && body.back() == '%') {
        kind = Threshold::Kind::percentile;
        body.pop_back();
    }
    double v = 0.0;
    std::istringstream in(body);
    in >> v;
    if (body.empty() || !in || !in.eof())
        throw std::invalid_argument("cannot parse threshold \"" + s + "\"");
    return {kind, v};
}

std::string to_string(const Threshold& t)
{
    std::ostringstream out;
    out << t.value;
    if (t.kind == Threshold::Kind::percentile)
        out << '%';
    return out.str();
}

ResolvedThresholds resolve_params(const WatershedParams& p, const AffinityVolume& aff)
{
    const NnChannels ch = nn_channels(aff);
    check_threshold(p.t_min, "t_min");
    check_threshold(p.t_max, "t_max");
    check_threshold(p.t_size_thresh, "t_size threshold");

    std::vector<float> pool;
    auto resolve = [&](const Threshold& t) -> double {
        if (t.kind == Threshold::Kind::absolute)
            return t.value;
        if (pool.empty()) {
            const std::array<int, 3> channels{static_cast<int>(ch.x), static_cast<int>(ch.y),
                                              static_cast<int>(ch.z)};
            pool = in_bounds_values(aff, channels);
            if (pool.empty())
                throw std::invalid_argument("affinity volume has no in-bounds edges");
        }
        return percentile(pool, t.value);
    };

    ResolvedThresholds r;
    r.t_min = resolve(p.t_min);
    r.t_max = resolve(p.t_max);
    r.t_size_thresh = resolve(p.t_size_thresh);
    r.t_size_voxels = p.t_size_voxels;
    r.t_dust = p.t_dust;
    if (r.t_min > r.t_max)
        throw std::invalid_argument("resolved t_min exceeds resolved t_max");
    return r;
}

BasinForest compute_basins(const AffinityVolume& aff, const ResolvedThresholds& t,
                           unsigned threads)
{
    const NnChannels ch = nn_channels(aff);
    const Shape& s = aff.shape();
    const std::size_t n = s.voxels();

    BasinForest forest;
    forest.shape = s;
    forest.parent.assign(n, Direction::self);

    // Steepest ascent; each slice writes only its own parents.
    parallel_blocks(s.z, threads, [&](std::size_t z) {
        for (std::size_t y = 0; y < s.y; ++y)
            for (std::size_t x = 0; x < s.x; ++x) {
                const auto w = incident(aff, ch, t, z, y, x);
                float best = removed;
                Direction dir = Direction::self;
                for (std::size_t d = 0; d < 6; ++d)
                    if (w[d] > best) {
                        best = w[d];
                        dir = static_cast<Direction>(d);
                    }
                forest.parent[s.index(z, y, x)] = dir;
            }
    });

    DisjointSets sets(n);
    auto join = [&](std::size_t a, std::size_t b) {
        const auto ra = sets.find_set(a);
        const auto rb = sets.find_set(b);
        if (ra != rb)
            sets.link(ra, rb);
    };
    for (std::size_t v = 0; v < n; ++v) {
        const std::size_t p = neighbour(s, v, forest.parent[v]);
        if (p != v)
            join(v, p);
    }
    for (std::size_t z = 0; z < s.z; ++z)
        for (std::size_t y = 0; y < s.y; ++y)
            for (std::size_t x = 0; x < s.x; ++x) {
                const std::size_t v = s.index(z, y, x);
                if (x + 1 < s.x && aff.at(ch.x, v) >= t.t_max) join(v, v + 1);
                if (y + 1 < s.y && aff.at(ch.y, v) >= t.t_max) join(v, v + s.x);
                if (z + 1 < s.z && aff.at(ch.z, v) >= t.t_max) join(v, v + s.slice());
            }

    forest.basin.assign(n, 0);
    forest.sizes.assign(1, 0);
    std::vector<std::uint32_t> root_id(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        const auto r = sets.find_set(v);
        if (root_id[r] == 0) {
            root_id[r] = static_cast<std::uint32_t>(forest.sizes.size());
            forest.sizes.push_back(0);
        }
        forest.basin[v] = root_id[r];
        ++forest.sizes[root_id[r]];
    }
    return forest;
}

SegVolume run_watershed(const AffinityVolume& aff, const ResolvedThresholds& t, unsigned threads)
{
    const NnChannels ch = nn_channels(aff);
    const Shape& s = aff.shape();
    BasinForest forest = compute_basins(aff, t, threads);
    const std::size_t basins = forest.sizes.size();

    // Phase 4: region graph over basins keyed by (low id, high id), max clamped weight.
    struct Edge {
        float w;
        std::uint32_t a, b;
    };
    std::vector<Edge> edges;
    if (t.t_size_voxels > 0) {
        std::unordered_map<std::uint64_t, float> best;
        auto visit = [&](std::size_t v, std::size_t u, float raw) {
            const float w = clamp_weight(raw, t);
            if (w == removed)
                return;
            auto a = forest.basin[v];
            auto b = forest.basin[u];
            if (a == b)
                return;
            if (a > b)
                std::swap(a, b);
            const auto key = (static_cast<std::uint64_t>(a) << 32) | b;
            auto [it, inserted] = best.try_emplace(key, w);
            if (!inserted && w > it->second)
                it->second = w;
        };
        for (std::size_t z = 0; z < s.z; ++z)
            for (std::size_t y = 0; y < s.y; ++y)
                for (std::size_t x = 0; x < s.x; ++x) {
                    const std::size_t v = s.index(z, y, x);
                    if (x + 1 < s.x) visit(v, v + 1, aff.at(ch.x, v));
                    if (y + 1 < s.y) visit(v, v + s.x, aff.at(ch.y, v));
                    if (z + 1 < s.z) visit(v, v + s.slice(), aff.at(ch.z, v));
                }
        edges.reserve(best.size());
        for (const auto& [key, w] : best)
            edges.push_back({w, static_cast<std::uint32_t>(key >> 32),
                             static_cast<std::uint32_t>(key & 0xffffffffu)});
        std::sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) {
            if (l.w != r.w)
                return l.w > r.w;
            if (l.a != r.a)
                return l.a < r.a;
            return l.b < r.b;
        });
    }

    DisjointSets merged(basins);
    std::vector<std::size_t> size = forest.sizes;
    for (const Edge& e : edges) {
        if (e.w < t.t_size_thresh)
            break;
        const auto ra = merged.find_set(static_cast<std::size_t>(e.a));
        const auto rb = merged.find_set(static_cast<std::size_t>(e.b));
        if (ra == rb)
            continue;
        if (std::min(size[ra], size[rb]) < t.t_size_voxels) {
            merged.link(ra, rb);
            const auto r = merged.find_set(ra);
            size[r] = size[ra] + size[rb];
        }
    }

    // Phase 5: labels 1..K in first-voxel scan order.
    SegVolume seg(s);
    std::vector<std::uint64_t> label(basins, 0);
    std::uint64_t next = 1;
    for (std::size_t v = 0; v < s.voxels(); ++v) {
        const auto r = merged.find_set(static_cast<std::size_t>(forest.basin[v]));
        if (label[r] == 0)
            label[r] = next++;
        seg[v] = label[r];
    }
    return seg;
}

SegVolume run_watershed(const AffinityVolume& aff, const WatershedParams& p, unsigned threads)
{
    return run_watershed(aff, resolve_params(p, aff), threads);
}

SegVolume remove_dust(const SegVolume& seg, std::size_t t_dust)
{
    if (t_dust == 0)
        return seg;
    std::unordered_map<std::uint64_t, std::size_t> counts;
    for (auto l : seg.data())
        ++counts[l];
    SegVolume out = seg;
    for (auto& l : out.data())
        if (l != 0 && counts[l] < t_dust)
            l = 0;
    return out;
}

}  // namespace affseg
