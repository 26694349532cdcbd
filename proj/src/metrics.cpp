#include "affseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace affseg {

namespace {

struct PairHash {
    std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& p) const noexcept
    {
        return std::hash<std::uint64_t>{}(p.first * 0x9e3779b97f4a7c15ULL ^ p.second);
    }
};

std::vector<ContingencyTable::Marginal> sorted(
    const std::unordered_map<std::uint64_t, std::uint64_t>& m)
{
    std::vector<ContingencyTable::Marginal> out;
    out.reserve(m.size());
    for (const auto& [label, count] : m)
        out.push_back({label, count});
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.label < b.label; });
    return out;
}

void require_nonempty(const ContingencyTable& t)
{
    if (t.total == 0)
        throw std::invalid_argument("contingency table is empty (ground truth has no labelled voxels)");
}

}  // namespace

ContingencyTable contingency(std::span<const std::uint64_t> pred,
                             std::span<const std::uint64_t> gt)
{
    if (pred.size() != gt.size())
        throw std::invalid_argument("prediction and ground truth differ in size");

    std::unordered_map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t, PairHash> joint;
    std::unordered_map<std::uint64_t, std::uint64_t> a, b;
    ContingencyTable t;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (gt[i] == 0)
            continue;
        ++joint[{pred[i], gt[i]}];
        ++a[pred[i]];
        ++b[gt[i]];
        ++t.total;
    }

    t.cells.reserve(joint.size());
    for (const auto& [key, count] : joint)
        t.cells.push_back({key.first, key.second, count});
    std::sort(t.cells.begin(), t.cells.end(), [](const auto& l, const auto& r) {
        return l.pred != r.pred ? l.pred < r.pred : l.gt < r.gt;
    });
    t.pred_sizes = sorted(a);
    t.gt_sizes = sorted(b);
    return t;
}

ContingencyTable contingency(const SegVolume& pred, const SegVolume& gt)
{
    if (!(pred.shape() == gt.shape()))
        throw std::invalid_argument("shape mismatch: prediction " + to_string(pred.shape()) +
                                    " vs ground truth " + to_string(gt.shape()));
    return contingency(std::span<const std::uint64_t>(pred.data()),
                       std::span<const std::uint64_t>(gt.data()));
}

ViScore variation_of_information(const ContingencyTable& t)
{
    require_nonempty(t);

    auto lookup = [](const std::vector<ContingencyTable::Marginal>& m, std::uint64_t label) {
        auto it = std::lower_bound(m.begin(), m.end(), label,
                                   [](const auto& e, std::uint64_t l) { return e.label < l; });
        return static_cast<double>(it->count);
    };

    const auto n = static_cast<double>(t.total);
    ViScore s;
    for (const auto& c : t.cells) {
        const auto nij = static_cast<double>(c.count);
        const double p = nij / n;
        s.split -= p * std::log(nij / lookup(t.gt_sizes, c.gt));
        s.merge -= p * std::log(nij / lookup(t.pred_sizes, c.pred));
    }
    // -p log(1) can leave -0.0 behind
    s.split = std::max(0.0, s.split);
    s.merge = std::max(0.0, s.merge);
    s.total = s.split + s.merge;
    return s;
}

RandScore adapted_rand(const ContingencyTable& t)
{
    require_nonempty(t);

    std::uint64_t joint = 0, pred = 0, gt = 0;
    for (const auto& c : t.cells)
        joint += c.count * c.count;
    for (const auto& m : t.pred_sizes)
        pred += m.count * m.count;
    for (const auto& m : t.gt_sizes)
        gt += m.count * m.count;
    if (pred == 0 || gt == 0)
        throw std::invalid_argument("adapted Rand: zero marginal sum");

    RandScore r;
    r.precision = static_cast<double>(joint) / static_cast<double>(pred);
    r.recall = static_cast<double>(joint) / static_cast<double>(gt);
    const double f = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    r.error = 1.0 - f;
    return r;
}

SegmentationScore evaluate(const SegVolume& pred, const SegVolume& gt)
{
    const auto t = contingency(pred, gt);
    return {variation_of_information(t), adapted_rand(t)};
}

}  // namespace affseg
