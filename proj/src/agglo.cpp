#include "affseg/agglo.hpp"
#include "affseg/format.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <unordered_map>

#include "affseg/parallel.hpp"

namespace affseg {

namespace {

using Key = std::pair<std::uint64_t, std::uint64_t>;

Key ordered(std::uint64_t a, std::uint64_t b)
{
    return a < b ? Key{a, b} : Key{b, a};
}

struct QueueEntry {
    double mean;
    Key key;
};

// Max-heap on mean, then min-heap on the id pair.
struct Lower {
    bool operator()(const QueueEntry& l, const QueueEntry& r) const
    {
        if (l.mean != r.mean)
            return l.mean < r.mean;
        return l.key > r.key;
    }
};

// Scores may creep up by a few ulps when two equal means are recombined.
bool increases(double next, double prev)
{
    return next > prev + 4.0 * std::numeric_limits<double>::epsilon() * std::abs(prev);
}

}  // namespace

RegionGraph build_region_graph(const SegVolume& seg, const AffinityVolume& aff, unsigned threads)
{
    if (!(seg.shape() == aff.shape()))
        throw std::invalid_argument("shape mismatch: segmentation " + to_string(seg.shape()) +
                                    " vs affinity " + to_string(aff.shape()));
    if (!is_nn(aff.offsets()))
        throw std::invalid_argument("region graph requires nearest-neighbour affinities");

    const Shape& s = seg.shape();
    const auto cx = static_cast<std::size_t>(find_channel(aff.offsets(), {0, 0, 1}));
    const auto cy = static_cast<std::size_t>(find_channel(aff.offsets(), {0, 1, 0}));
    const auto cz = static_cast<std::size_t>(find_channel(aff.offsets(), {1, 0, 0}));

    // Per-slice partial sums, folded in slice order so the result does not
    // depend on the thread count.
    std::vector<std::map<Key, RegionEdge>> partial(s.z);
    parallel_blocks(s.z, threads, [&](std::size_t z) {
        auto& local = partial[z];
        auto add = [&](std::uint64_t a, std::uint64_t b, float w) {
            if (a == 0 || b == 0 || a == b)
                return;
            auto& e = local[ordered(a, b)];
            e.affinity_sum += static_cast<double>(w);
            ++e.count;
        };
        for (std::size_t y = 0; y < s.y; ++y)
            for (std::size_t x = 0; x < s.x; ++x) {
                const std::size_t v = s.index(z, y, x);
                if (x + 1 < s.x) add(seg[v], seg[v + 1], aff.at(cx, v));
                if (y + 1 < s.y) add(seg[v], seg[v + s.x], aff.at(cy, v));
                if (z + 1 < s.z) add(seg[v], seg[v + s.slice()], aff.at(cz, v));
            }
    });

    RegionGraph g;
    for (auto l : seg.data())
        if (l != 0)
            ++g.sizes[l];
    for (auto& slice : partial)
        for (const auto& [key, e] : slice) {
            auto& dst = g.edges[key];
            dst.affinity_sum += e.affinity_sum;
            dst.count += e.count;
        }
    return g;
}

MergeLog agglomerate(const RegionGraph& g, double threshold)
{
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw std::invalid_argument("agglomeration threshold must be in [0,1]");

    using Adjacency = std::unordered_map<std::uint64_t, RegionEdge>;
    std::unordered_map<std::uint64_t, Adjacency> adj;
    std::unordered_map<std::uint64_t, std::uint64_t> size;
    std::unordered_map<std::uint64_t, std::uint64_t> merged_into;

    std::uint64_t next_id = 1;
    for (const auto& [id, n] : g.sizes) {
        size[id] = n;
        adj[id];
        next_id = std::max(next_id, id + 1);
    }

    std::priority_queue<QueueEntry, std::vector<QueueEntry>, Lower> queue;
    for (const auto& [key, e] : g.edges) {
        if (key.first == key.second || e.count == 0)
            throw std::invalid_argument("region graph has a self edge or an empty edge");
        if (!size.contains(key.first) || !size.contains(key.second))
            throw std::invalid_argument("region graph edge references an unknown node");
        adj[key.first][key.second] = e;
        adj[key.second][key.first] = e;
        queue.push({e.mean(), key});
    }

    MergeLog log;
    log.threshold = threshold;
    double previous = std::numeric_limits<double>::infinity();

    while (!queue.empty()) {
        const QueueEntry top = queue.top();
        queue.pop();
        const auto [a, b] = top.key;
        // Entries naming a merged-away node are stale.
        if (!adj.contains(a) || !adj.contains(b))
            continue;
        if (top.mean < threshold)
            break;
        if (increases(top.mean, previous))
            throw std::logic_error("merge scores increased during agglomeration");
        previous = top.mean;

        const std::uint64_t n = next_id++;
        log.merges.push_back({a, b, top.mean, n});
        merged_into[a] = n;
        merged_into[b] = n;

        Adjacency big = std::move(adj[a]);
        Adjacency small = std::move(adj[b]);
        if (big.size() < small.size())
            std::swap(big, small);
        big.erase(a);
        big.erase(b);
        for (const auto& [c, e] : small) {
            if (c == a || c == b)
                continue;
            auto [it, inserted] = big.try_emplace(c, e);
            if (!inserted) {
                it->second.affinity_sum += e.affinity_sum;
                it->second.count += e.count;
            }
        }
        adj.erase(a);
        adj.erase(b);

        for (const auto& [c, e] : big) {
            auto& nc = adj[c];
            nc.erase(a);
            nc.erase(b);
            nc[n] = e;
            queue.push({e.mean(), ordered(c, n)});
        }
        adj[n] = std::move(big);
        size[n] = size[a] + size[b];
        size.erase(a);
        size.erase(b);
    }

    for (const auto& [id, unused] : g.sizes) {
        std::uint64_t cur = id;
        for (auto it = merged_into.find(cur); it != merged_into.end(); it = merged_into.find(cur))
            cur = it->second;
        log.final_ids[id] = cur;
    }
    return log;
}

SegVolume apply_merges(const SegVolume& seg, const MergeLog& log, double threshold)
{
    if (threshold < log.threshold)
        throw std::invalid_argument("threshold " + std::to_string(threshold) +
                                    " is below the merge log's stopping threshold " +
                                    std::to_string(log.threshold));

    std::unordered_map<std::uint64_t, std::uint64_t> parent;
    for (const Merge& m : log.merges) {
        if (m.score < threshold)
            break;
        parent[m.a] = m.new_id;
        parent[m.b] = m.new_id;
    }
    if (parent.empty())
        return seg;

    std::unordered_map<std::uint64_t, std::uint64_t> resolved;
    auto find = [&](std::uint64_t id) {
        auto hit = resolved.find(id);
        if (hit != resolved.end())
            return hit->second;
        std::uint64_t cur = id;
        for (auto it = parent.find(cur); it != parent.end(); it = parent.find(cur))
            cur = it->second;
        resolved.emplace(id, cur);
        return cur;
    };

    SegVolume out = seg;
    for (auto& l : out.data())
        if (l != 0)
            l = find(l);
    return out;
}

std::vector<SweepRow> sweep(const SegVolume& seg, const SegVolume& gt, const MergeLog& log,
                            const std::vector<double>& thresholds)
{
    if (!std::is_sorted(thresholds.begin(), thresholds.end(), std::greater<>{}))
        throw std::invalid_argument("sweep thresholds must be in descending order");

    std::vector<SweepRow> rows;
    rows.reserve(thresholds.size());
    for (double t : thresholds) {
        const auto score = evaluate(apply_merges(seg, log, t), gt);
        rows.push_back({t, score.vi, score.rand.error});
    }
    return rows;
}

void write_merge_log(std::ostream& out, const MergeLog& log)
{
    out << "id_a\tid_b\tscore\tnew_id\n";
    for (const Merge& m : log.merges)
        out << m.a << '\t' << m.b << '\t' << shortest(m.score) << '\t' << m.new_id << '\n';
}

void write_sweep_table(std::ostream& out, const std::vector<SweepRow>& rows)
{
    out << "threshold\tvi_split\tvi_merge\tvi\tare\n";
    for (const auto& r : rows)
        out << shortest(r.threshold) << '\t' << shortest(r.vi.split) << '\t'
            << shortest(r.vi.merge) << '\t' << shortest(r.vi.total) << '\t'
            << shortest(r.rand_error) << '\n';
}

}  // namespace affseg
