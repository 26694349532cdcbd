#include <random>
#include <set>
#include <sstream>

#include "doctest.h"

#include "affseg/affinity.hpp"
#include "affseg/agglo.hpp"
#include "affseg/metrics.hpp"
#include "affseg/synth.hpp"
#include "affseg/watershed.hpp"
#include "oracles.hpp"

using namespace affseg;

namespace {

// Up to `max_nodes` nodes with scattered ids and edges whose sums are
// multiples of 1/8, so every mean and combined sum is exact.
RegionGraph random_graph(std::mt19937_64& gen, std::size_t max_nodes, std::size_t max_edges)
{
    RegionGraph g;
    const std::size_t n = 2 + gen() % (max_nodes - 1);
    std::vector<std::uint64_t> ids;
    std::uint64_t id = 0;
    for (std::size_t i = 0; i < n; ++i) {
        id += 1 + gen() % 5;
        ids.push_back(id);
        g.sizes[id] = 1 + gen() % 50;
    }
    const std::size_t m = gen() % (max_edges + 1);
    for (std::size_t i = 0; i < m; ++i) {
        const auto a = ids[gen() % n], b = ids[gen() % n];
        if (a == b)
            continue;
        RegionEdge e;
        e.count = 1 + gen() % 4;
        e.affinity_sum = static_cast<double>(gen() % (8 * e.count + 1)) / 8.0;
        g.edges[{std::min(a, b), std::max(a, b)}] = e;
    }
    return g;
}

bool same_log(const MergeLog& a, const MergeLog& b)
{
    return a.merges == b.merges && a.final_ids == b.final_ids && a.threshold == b.threshold;
}

}  // namespace

TEST_CASE("region graph of two single-voxel segments")
{
    SegVolume seg({1, 1, 2}, std::vector<std::uint64_t>{3, 9});
    AffinityVolume aff({1, 1, 2}, nn_offsets());
    aff.at(0, 0, 0, 0) = 0.7f;
    const auto g = build_region_graph(seg, aff);
    REQUIRE(g.edges.size() == 1);
    const auto& e = g.edges.at({3, 9});
    CHECK(e.affinity_sum == doctest::Approx(0.7));
    CHECK(e.count == 1);
    CHECK(g.sizes.at(3) == 1);
    CHECK(g.sizes.at(9) == 1);
}

TEST_CASE("a single-label segmentation has no edges")
{
    std::mt19937_64 gen(1);
    const auto aff = oracle::random_affinities(gen, {3, 3, 3}, nn_offsets());
    const auto g = build_region_graph(SegVolume({3, 3, 3}, 4), aff);
    CHECK(g.edges.empty());
    CHECK(g.sizes.at(4) == 27);
}

TEST_CASE("region graph equals an exhaustive edge scan")
{
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto seg = oracle::blocky_labels(gen, {6, 6, 6}, 2, 12, true);
        const auto aff = oracle::random_affinities(gen, {6, 6, 6}, nn_offsets());
        const auto expected = oracle::region_graph_scan(seg, aff);
        const auto got = build_region_graph(seg, aff);
        CHECK(got.sizes == expected.sizes);
        REQUIRE(got.edges.size() == expected.edges.size());
        for (const auto& [k, e] : expected.edges) {
            CHECK(got.edges.at(k).count == e.count);
            CHECK(got.edges.at(k).affinity_sum == doctest::Approx(e.affinity_sum).epsilon(1e-12));
        }
        CHECK(build_region_graph(seg, aff, 4) == got);
    }
}

TEST_CASE("region graph argument checks")
{
    const SegVolume seg({2, 2, 2}, 1);
    CHECK_THROWS_AS(build_region_graph(seg, AffinityVolume({2, 2, 3}, nn_offsets())),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_region_graph(seg, AffinityVolume({2, 2, 2}, long_range_offsets())),
                    std::invalid_argument);
}

TEST_CASE("three-node hand trace")
{
    RegionGraph g;
    g.sizes = {{1, 10}, {2, 10}, {3, 10}};
    g.edges[{1, 2}] = {0.9, 1};
    g.edges[{2, 3}] = {0.4, 1};
    const auto log = agglomerate(g, 0.5);
    REQUIRE(log.merges.size() == 1);
    CHECK(log.merges[0] == Merge{1, 2, 0.9, 4});
    CHECK(log.final_ids.at(1) == 4);
    CHECK(log.final_ids.at(2) == 4);
    CHECK(log.final_ids.at(3) == 3);
}

TEST_CASE("shared neighbours combine sums and counts")
{
    RegionGraph g;
    g.sizes = {{1, 1}, {2, 1}, {3, 1}};
    g.edges[{1, 2}] = {1.0, 1};
    g.edges[{1, 3}] = {0.5, 1};
    g.edges[{2, 3}] = {0.75, 3};  // mean 0.25
    const auto log = agglomerate(g, 0.0);
    REQUIRE(log.merges.size() == 2);
    CHECK(log.merges[1].score == (0.5 + 0.75) / 4);
}

TEST_CASE("nothing merges at threshold one when every mean is below one")
{
    std::mt19937_64 gen(3);
    RegionGraph g = random_graph(gen, 20, 60);
    for (auto& [k, e] : g.edges)
        e.affinity_sum = std::min(e.affinity_sum, static_cast<double>(e.count) - 0.125);
    CHECK(agglomerate(g, 1.0).merges.empty());
}

TEST_CASE("merges fire at a mean equal to the threshold")
{
    RegionGraph g;
    g.sizes = {{1, 1}, {2, 1}};
    g.edges[{1, 2}] = {0.5, 1};
    CHECK(agglomerate(g, 0.5).merges.size() == 1);
}

TEST_CASE("ties go to the smaller id pair")
{
    RegionGraph g;
    g.sizes = {{1, 1}, {2, 1}, {5, 1}, {6, 1}};
    g.edges[{5, 6}] = {0.5, 1};
    g.edges[{1, 2}] = {0.5, 1};
    const auto log = agglomerate(g, 0.1);
    REQUIRE(log.merges.size() == 2);
    CHECK(log.merges[0].a == 1);
    CHECK(log.merges[1].a == 5);
}

TEST_CASE("lazy queue agrees with the rescanning reference")
{
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 200; ++trial) {
        const auto g = random_graph(gen, 40, 200);
        const double theta = static_cast<double>(gen() % 9) / 8.0;
        CAPTURE(trial);
        const auto fast = agglomerate(g, theta);
        const auto slow = oracle::naive_greedy(g, theta);
        CHECK(same_log(fast, slow));
    }
}

TEST_CASE("merge log invariants")
{
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = random_graph(gen, 40, 200);
        const auto log = agglomerate(g, 0.0);
        const std::uint64_t max_in = g.sizes.rbegin()->first;
        std::set<std::uint64_t> live;
        for (const auto& [id, n] : g.sizes)
            live.insert(id);
        for (std::size_t i = 0; i < log.merges.size(); ++i) {
            const Merge& m = log.merges[i];
            CHECK(m.a < m.b);
            CHECK(m.new_id > max_in);
            if (i > 0)
                CHECK(m.score <= log.merges[i - 1].score);
            CHECK(live.erase(m.a) == 1);
            CHECK(live.erase(m.b) == 1);
            live.insert(m.new_id);
        }
        CHECK(live.size() == g.sizes.size() - log.merges.size());
        std::set<std::uint64_t> finals;
        for (const auto& [id, f] : log.final_ids)
            finals.insert(f);
        CHECK(finals == live);
    }
}

TEST_CASE("agglomeration argument checks")
{
    RegionGraph g;
    g.sizes = {{1, 1}, {2, 1}};
    g.edges[{1, 2}] = {0.5, 1};
    CHECK_THROWS_AS(agglomerate(g, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(agglomerate(g, 1.1), std::invalid_argument);

    const SegVolume seg({1, 1, 2}, std::vector<std::uint64_t>{1, 2});
    const auto log = agglomerate(g, 0.3);
    CHECK_THROWS_AS(apply_merges(seg, log, 0.2), std::invalid_argument);
    CHECK_NOTHROW(apply_merges(seg, log, 0.3));
}

TEST_CASE("applying a log prefix equals a fresh run at that threshold")
{
    std::mt19937_64 gen(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto seg = oracle::blocky_labels(gen, {6, 8, 8}, 2, 30, true);
        const auto aff = oracle::random_affinities(gen, {6, 8, 8}, nn_offsets());
        const auto g = build_region_graph(seg, aff);
        const auto full = agglomerate(g, 0.0);
        for (double theta : {1.0, 0.8, 0.6, 0.5, 0.4, 0.2, 0.0}) {
            const auto fresh = agglomerate(g, theta);
            CHECK(apply_merges(seg, full, theta) == apply_merges(seg, fresh, theta));
            SegVolume via_ids = seg;
            for (auto& l : via_ids.data())
                if (l != 0)
                    l = fresh.final_ids.at(l);
            CHECK(apply_merges(seg, full, theta) == via_ids);
        }
        if (!full.merges.empty())
            CHECK(apply_merges(seg, full, std::nextafter(full.merges.front().score, 2.0)) == seg);
    }
}

TEST_CASE("merging within one ground-truth segment does not raise split error")
{
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto gt = oracle::blocky_labels(gen, {4, 6, 6}, 3, 4, true);
        const auto pred = oracle::random_labels(gen, {4, 6, 6}, 40);
        // Pick two predicted labels that only cover one gt label (or background).
        std::map<std::uint64_t, std::set<std::uint64_t>> covers;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (gt[i] != 0)
                covers[pred[i]].insert(gt[i]);
        std::vector<std::uint64_t> pure;
        for (const auto& [p, gs] : covers)
            if (gs.size() == 1)
                pure.push_back(p);
        for (std::size_t i = 0; i < pure.size(); ++i)
            for (std::size_t j = i + 1; j < pure.size(); ++j) {
                if (*covers[pure[i]].begin() != *covers[pure[j]].begin())
                    continue;
                SegVolume merged = pred;
                for (auto& l : merged.data())
                    if (l == pure[j])
                        l = pure[i];
                const auto before = evaluate(pred, gt).vi;
                const auto after = evaluate(merged, gt).vi;
                CHECK(after.split <= before.split + 1e-12);
                CHECK(after.merge == doctest::Approx(before.merge).epsilon(1e-12));
            }
    }
}

TEST_CASE("sweep rows")
{
    std::mt19937_64 gen(8);
    const auto gt = oracle::blocky_labels(gen, {4, 8, 8}, 4, 6);
    const auto seg = oracle::blocky_labels(gen, {4, 8, 8}, 2, 50);
    auto aff = oracle::random_affinities(gen, {4, 8, 8}, nn_offsets());
    for (auto& v : aff.data())
        v = std::min(v, 0.99f);
    const auto log = agglomerate(build_region_graph(seg, aff), 0.0);

    const auto rows = sweep(seg, gt, log, {1.0, 0.5, 0.0});
    REQUIRE(rows.size() == 3);
    const auto base = evaluate(seg, gt);
    CHECK(rows[0].vi.total == base.vi.total);
    CHECK(rows[0].rand_error == base.rand.error);

    const auto single = sweep(seg, gt, log, {0.5});
    const auto direct = evaluate(apply_merges(seg, log, 0.5), gt);
    CHECK(single[0].vi.split == direct.vi.split);
    CHECK(single[0].vi.merge == direct.vi.merge);
    CHECK(single[0].rand_error == direct.rand.error);
    CHECK(single[0].vi.total == rows[1].vi.total);

    CHECK_THROWS_AS(sweep(seg, gt, log, {0.2, 0.5}), std::invalid_argument);
}

TEST_CASE("merge log TSV round-trips scores exactly")
{
    MergeLog log;
    log.merges = {{1, 2, 0.1, 3}, {3, 7, 1.0 / 3.0, 8}};
    std::ostringstream os;
    write_merge_log(os, log);
    std::istringstream in(os.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "id_a\tid_b\tscore\tnew_id");
    for (const Merge& m : log.merges) {
        Merge r;
        in >> r.a >> r.b >> r.score >> r.new_id;
        CHECK(r == m);
    }
}

TEST_CASE("dense sweep on a noisy synthetic volume has an interior VI minimum")
{
    SynthSpec spec;
    spec.shape = {32, 48, 48};
    spec.n_sites = 12;
    spec.seed = 3;
    const auto gt = carve_boundaries(voronoi_labels(spec), 1);
    const auto aff =
        corrupt_affinity(affinities_from_labels(gt, nn_offsets()), {0.05, 0.1, 99});
    WatershedParams p;
    p.t_size_voxels = 0;
    p.t_dust = 0;
    const auto ws = run_watershed(aff, p);
    const auto log = agglomerate(build_region_graph(ws, aff), 0.0);
    std::vector<double> thetas;
    for (int i = 50; i >= 0; --i)
        thetas.push_back(i / 50.0);
    const auto rows = sweep(ws, gt, log, thetas);
    const auto best = std::min_element(rows.begin(), rows.end(), [](auto& a, auto& b) {
        return a.vi.total < b.vi.total;
    });
    CHECK(best != rows.begin());
    CHECK(best != rows.end() - 1);
    CHECK(best->vi.total < rows.front().vi.total);
    CHECK(best->vi.total < rows.back().vi.total);
}
