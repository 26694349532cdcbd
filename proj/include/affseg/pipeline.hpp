#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "affseg/agglo.hpp"
#include "affseg/augment.hpp"
#include "affseg/blend.hpp"
#include "affseg/metrics.hpp"
#include "affseg/synth.hpp"
#include "affseg/watershed.hpp"

namespace affseg {

// Stage names in execution order.
inline const std::vector<std::string> pipeline_stages{"synth", "corrupt", "watershed", "agglo",
                                                       "eval"};

struct PipelineConfig {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::filesystem::path out_dir = "run";
    std::vector<std::string> stages{"synth", "watershed", "agglo", "eval"};

    // Inputs used when the synth stage is off.
    std::filesystem::path gt_path;
    std::filesystem::path affinity_path;

    SynthSpec synth;  // synth.seed is ignored; the stage seed is derived
    std::size_t boundary_width = 0;
    OffsetSet offsets = nn_offsets();

    double flip_prob = 0.0;
    double gauss_sigma = 0.0;

    WatershedParams watershed;
    bool defer_dust = false;  // apply dust removal after agglomeration instead

    double agglo_threshold = 0.3;
    std::vector<double> sweep_thresholds;  // descending; empty for none

    BlendProfile blend;
    AugmentParams augment;

    bool enabled(const std::string& stage) const;
};

// INI text: [pipeline] seed threads out_dir stages, [input] gt affinity,
// [synth] shape sites aniso boundary_width offsets, [corrupt] flip_prob
// gauss_sigma, [watershed] t_min t_max t_size t_dust defer_dust,
// [agglo] threshold sweep, [blend] t overlap, [augment] max_displacement
// max_missing max_blur sigma_max margin. Missing keys keep their defaults.
// Throws std::invalid_argument on unknown sections/keys or bad values.
PipelineConfig parse_config(const std::string& ini_text);

// Reads an INI file, or the config snapshot stored in a run manifest (.json).
PipelineConfig load_config(const std::filesystem::path& path);

// Canonical INI form; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const PipelineConfig& c);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct MetricRow {
    std::string stage;
    SegmentationScore score;
};

struct RunManifest {
    std::string config_ini;
    std::map<std::string, std::uint64_t> seeds;
    std::optional<ResolvedThresholds> resolved;
    std::size_t merges = 0;
    std::vector<StageTiming> timings;
    std::map<std::string, std::string> output_hashes;  // file name -> SHA-256
    std::vector<MetricRow> metrics;
    std::vector<SweepRow> sweep;
    std::string status = "complete";
    std::string failed_stage;
    std::string error;
};

std::string manifest_to_json(const RunManifest& m);

// Thrown when a stage aborts. `invalid_input` is set when the cause was a
// validation error rather than a runtime failure.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& cause, bool invalid_input);
    const std::string& stage() const { return stage_; }
    bool invalid_input() const { return invalid_input_; }

private:
    std::string stage_;
    bool invalid_input_;
};

// Runs the enabled stages in order, writing volumes, merges.tsv, metrics.tsv,
// sweep.tsv and manifest.json into out_dir. On failure the outputs so far
// are kept, a `.partial` marker and manifest.partial.json are written and a
// StageError is thrown.
RunManifest run_pipeline(const PipelineConfig& config);

// Watershed (plus agglomeration when that stage is enabled) of a
// nearest-neighbour affinity volume with the config's parameters.
SegVolume segment(const PipelineConfig& config, const AffinityVolume& aff);

struct RobustnessRow {
    int magnitude = 0;
    SegmentationScore score;
};

// For each magnitude m, displaces slice Z/2 by (m, m) (a slip) or slices
// Z/2.. (a translation) in both the ground-truth canvas and the baseline
// affinities, segments, and scores against the displaced ground truth. The
// canvas is the config's ground truth (synthesised with an extra
// augment.margin border on each lateral side when synth is enabled).
std::vector<RobustnessRow> robustness_sweep(const PipelineConfig& config, DefectKind defect,
                                            const std::vector<int>& magnitudes);

// TSV: magnitude vi_split vi_merge vi are
void write_robustness_table(std::ostream& out, const std::vector<RobustnessRow>& rows);

// TSV: stage vi_split vi_merge vi are precision recall
void write_metric_table(std::ostream& out, const std::vector<MetricRow>& rows);

}  // namespace affseg
