#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <utility>
#include <vector>

#include "affseg/metrics.hpp"
#include "affseg/volume.hpp"

namespace affseg {

struct RegionEdge {
    double affinity_sum = 0.0;
    std::uint64_t count = 0;

    double mean() const { return affinity_sum / static_cast<double>(count); }

    friend bool operator==(const RegionEdge&, const RegionEdge&) = default;
};

// Supervoxel adjacency. Edge keys are (smaller id, larger id); background
// (label 0) never appears.
struct RegionGraph {
    std::map<std::uint64_t, std::uint64_t> sizes;
    std::map<std::pair<std::uint64_t, std::uint64_t>, RegionEdge> edges;

    friend bool operator==(const RegionGraph&, const RegionGraph&) = default;
};

// Accumulates every nearest-neighbour edge joining two distinct nonzero labels.
RegionGraph build_region_graph(const SegVolume& seg, const AffinityVolume& aff,
                               unsigned threads = 1);

struct Merge {
    std::uint64_t a = 0;  // smaller id
    std::uint64_t b = 0;
    double score = 0.0;
    std::uint64_t new_id = 0;

    friend bool operator==(const Merge&, const Merge&) = default;
};

struct MergeLog {
    std::vector<Merge> merges;
    double threshold = 0.0;                              // stopping threshold of the run
    std::map<std::uint64_t, std::uint64_t> final_ids;  // input id -> id after all merges
};

// Greedy mean-affinity agglomeration. Repeatedly merges the pair with the
// highest mean affinity (ties: smaller (min id, max id) first) until the best
// mean drops below `threshold`. Merged nodes receive fresh ids above every
// input id. Throws std::invalid_argument if threshold is outside [0,1].
MergeLog agglomerate(const RegionGraph& g, double threshold);

// Applies the leading merges whose score is at least `threshold`; identical
// to relabelling with a fresh agglomerate run at that threshold.
SegVolume apply_merges(const SegVolume& seg, const MergeLog& log, double threshold);

struct SweepRow {
    double threshold = 0.0;
    ViScore vi;
    double rand_error = 0.0;
};

// One metrics row per threshold; thresholds must be in descending order.
std::vector<SweepRow> sweep(const SegVolume& seg, const SegVolume& gt, const MergeLog& log,
                            const std::vector<double>& thresholds);

// TSV: header "id_a id_b score new_id", scores printed round-trip exact.
void write_merge_log(std::ostream& out, const MergeLog& log);
void write_sweep_table(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace affseg
