#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "affseg/volume.hpp"

namespace affseg {

// Sparse joint counts between a predicted and a ground-truth labelling.
// Voxels with ground truth 0 are left out entirely; predicted 0 is an
// ordinary label.
struct ContingencyTable {
    struct Cell {
        std::uint64_t pred;
        std::uint64_t gt;
        std::uint64_t count;
    };
    struct Marginal {
        std::uint64_t label;
        std::uint64_t count;
    };

    std::vector<Cell> cells;          // sorted by (pred, gt)
    std::vector<Marginal> pred_sizes;  // sorted by label
    std::vector<Marginal> gt_sizes;    // sorted by label
    std::uint64_t total = 0;
};

ContingencyTable contingency(std::span<const std::uint64_t> pred,
                             std::span<const std::uint64_t> gt);
ContingencyTable contingency(const SegVolume& pred, const SegVolume& gt);

// Conditional entropies in nats. split = H(pred | gt), merge = H(gt | pred).
struct ViScore {
    double split = 0.0;
    double merge = 0.0;
    double total = 0.0;
};

ViScore variation_of_information(const ContingencyTable& t);

// Squared-count Rand precision/recall and error = 1 - F.
struct RandScore {
    double error = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

RandScore adapted_rand(const ContingencyTable& t);

struct SegmentationScore {
    ViScore vi;
    RandScore rand;
};

SegmentationScore evaluate(const SegVolume& pred, const SegVolume& gt);

}  // namespace affseg
