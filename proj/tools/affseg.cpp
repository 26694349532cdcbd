#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "affseg/affinity.hpp"
#include "affseg/format.hpp"
#include "affseg/agglo.hpp"
#include "affseg/augment.hpp"
#include "affseg/blend.hpp"
#include "affseg/io.hpp"
#include "affseg/metrics.hpp"
#include "affseg/pipeline.hpp"
#include "affseg/rng.hpp"
#include "affseg/synth.hpp"
#include "affseg/watershed.hpp"

using namespace affseg;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int exit_invalid = 2;
constexpr int exit_runtime = 3;

void log(const std::string& msg) { std::cerr << "affseg: " << msg << "\n"; }

template <class T, std::size_t N>
std::array<T, N> tuple_of(const std::vector<T>& v, const std::string& what)
{
    if (v.size() != N)
        throw std::invalid_argument(what + " needs " + std::to_string(N) + " values");
    std::array<T, N> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

Shape shape_of(const std::vector<std::size_t>& v, const std::string& what)
{
    const auto a = tuple_of<std::size_t, 3>(v, what);
    return {a[0], a[1], a[2]};
}

OffsetSet offsets_named(const std::string& name)
{
    if (name == "nn")
        return nn_offsets();
    if (name == "long")
        return long_range_offsets();
    throw std::invalid_argument("offsets must be nn or long, got '" + name + "'");
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write " + path);
    f << text;
}

std::string read_text(const fs::path& p)
{
    std::ifstream f(p);
    if (!f)
        throw std::invalid_argument("cannot open " + p.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string digits(double v)
{
    return shortest(v);
}

std::string millis(double seconds)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f ms", seconds * 1000.0);
    return buf;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Affinity-graph segmentation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    unsigned threads = 1;
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a Voronoi label volume");
    std::vector<std::size_t> synth_shape{64, 64, 64};
    std::vector<double> synth_aniso{5, 1, 1};
    std::size_t synth_sites = 20, synth_width = 0;
    std::uint64_t synth_seed = 7;
    std::string synth_out;
    synth->add_option("--shape", synth_shape)->delimiter(',')->expected(3);
    synth->add_option("--sites", synth_sites);
    synth->add_option("--aniso", synth_aniso)->delimiter(',')->expected(3);
    synth->add_option("--seed", synth_seed);
    synth->add_option("--boundary-width", synth_width, "Carve a background membrane");
    synth->add_option("--out", synth_out)->required();

    // affin
    auto* affin = app.add_subcommand("affin", "Affinities from labels, optionally corrupted");
    std::string affin_seg, affin_out, affin_offsets = "nn";
    double affin_flip = 0.0, affin_sigma = 0.0;
    std::uint64_t affin_seed = 0;
    affin->add_option("--seg", affin_seg)->required();
    affin->add_option("--out", affin_out)->required();
    affin->add_option("--offsets", affin_offsets, "nn or long");
    affin->add_option("--flip-prob", affin_flip);
    affin->add_option("--gauss-sigma", affin_sigma);
    affin->add_option("--seed", affin_seed);

    // ws
    auto* ws = app.add_subcommand("ws", "Watershed oversegmentation");
    std::string ws_aff, ws_out, ws_tmin = "1%", ws_tmax = "80%", ws_tsize = "800,20%";
    std::size_t ws_dust = 600;
    ws->add_option("--aff", ws_aff)->required();
    ws->add_option("--out", ws_out)->required();
    ws->add_option("--t-min", ws_tmin);
    ws->add_option("--t-max", ws_tmax);
    ws->add_option("--t-size", ws_tsize, "<voxels>,<threshold> or 0");
    ws->add_option("--t-dust", ws_dust, "0 disables");

    // agglo
    auto* agglo = app.add_subcommand("agglo", "Mean-affinity agglomeration");
    std::string ag_seg, ag_aff, ag_out, ag_log;
    double ag_threshold = 0.3;
    agglo->add_option("--seg", ag_seg)->required();
    agglo->add_option("--aff", ag_aff)->required();
    agglo->add_option("--threshold", ag_threshold);
    agglo->add_option("--out", ag_out)->required();
    agglo->add_option("--log", ag_log, "Merge log TSV");

    // eval
    auto* eval = app.add_subcommand("eval", "Score a segmentation against ground truth");
    std::string ev_pred, ev_gt, ev_format = "tsv";
    eval->add_option("--pred", ev_pred)->required();
    eval->add_option("--gt", ev_gt)->required();
    eval->add_option("--format", ev_format)->check(CLI::IsMember({"tsv", "json"}));

    // augment
    auto* augment = app.add_subcommand("augment", "Simulate imaging defects on a canvas pair");
    std::string au_image, au_label, au_prefix, au_replay, au_offsets = "nn";
    std::uint64_t au_seed = 0;
    AugmentParams au_params;
    augment->add_option("--image", au_image)->required();
    augment->add_option("--label", au_label)->required();
    augment->add_option("--seed", au_seed);
    augment->add_option("--margin", au_params.margin);
    augment->add_option("--max-displacement", au_params.max_displacement);
    augment->add_option("--replay", au_replay, "Defect manifest to replay instead of sampling");
    augment->add_option("--offsets", au_offsets, "nn or long");
    augment->add_option("--out-prefix", au_prefix)->required();

    // blend
    auto* blend = app.add_subcommand("blend", "Blend overlapping patch outputs");
    std::string bl_layout, bl_dir, bl_out;
    std::vector<double> bl_t{1.5, 1.5, 1.5};
    BlendProfile bl_profile;
    blend->add_option("--layout", bl_layout)->required();
    blend->add_option("--patch-dir", bl_dir)->required();
    blend->add_option("--t", bl_t)->delimiter(',')->expected(3);
    blend->add_option("--overlap", bl_profile.overlap);
    blend->add_flag("--literal", bl_profile.literal, "Use the unnormalised border-heavy weight");
    blend->add_option("--out", bl_out)->required();

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "Run synth, corrupt, ws, agglo and eval");
    std::string pl_config, pl_out_dir;
    pipeline->add_option("--config", pl_config, "INI file or a previous manifest.json")
        ->required();
    pipeline->add_option("--out-dir", pl_out_dir);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Threshold or misalignment sweeps");
    std::string sw_mode = "threshold", sw_seg, sw_gt, sw_aff, sw_config, sw_defect = "slip",
                sw_out;
    std::vector<double> sw_thresholds;
    std::vector<int> sw_magnitudes;
    sweep_cmd->add_option("--mode", sw_mode)->check(CLI::IsMember({"threshold", "robustness"}));
    sweep_cmd->add_option("--seg", sw_seg, "Watershed segmentation (threshold mode)");
    sweep_cmd->add_option("--gt", sw_gt, "Ground truth (threshold mode)");
    sweep_cmd->add_option("--aff", sw_aff, "Affinities (threshold mode)");
    sweep_cmd->add_option("--thresholds", sw_thresholds)->delimiter(',');
    sweep_cmd->add_option("--config", sw_config, "Pipeline config (robustness mode)");
    sweep_cmd->add_option("--defect", sw_defect)->check(CLI::IsMember({"slip", "translation"}));
    sweep_cmd->add_option("--magnitudes", sw_magnitudes)->delimiter(',');
    sweep_cmd->add_option("--out", sw_out, "TSV path; stdout by default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_invalid;
    }

    try {
        if (*synth) {
            SynthSpec spec;
            spec.shape = shape_of(synth_shape, "--shape");
            spec.n_sites = synth_sites;
            spec.anisotropy = tuple_of<double, 3>(synth_aniso, "--aniso");
            spec.seed = synth_seed;
            SegVolume gt = voronoi_labels(spec, threads);
            if (synth_width > 0)
                gt = carve_boundaries(gt, synth_width);
            save_volume(synth_out, gt);
        } else if (*affin) {
            const SegVolume seg = load_seg(affin_seg);
            AffinityVolume aff = affinities_from_labels(seg, offsets_named(affin_offsets), threads);
            if (affin_flip > 0.0 || affin_sigma > 0.0)
                aff = corrupt_affinity(aff, {affin_flip, affin_sigma, affin_seed});
            save_volume(affin_out, aff);
        } else if (*ws) {
            const AffinityVolume aff = load_affinity(ws_aff);
            WatershedParams p;
            p.t_min = parse_threshold(ws_tmin);
            p.t_max = parse_threshold(ws_tmax);
            const auto comma = ws_tsize.find(',');
            if (comma == std::string::npos) {
                if (ws_tsize != "0")
                    throw std::invalid_argument("--t-size expects <voxels>,<threshold> or 0");
                p.t_size_voxels = 0;
            } else {
                p.t_size_voxels = std::stoull(ws_tsize.substr(0, comma));
                p.t_size_thresh = parse_threshold(ws_tsize.substr(comma + 1));
            }
            p.t_dust = ws_dust;
            const auto r = resolve_params(p, aff);
            log("resolved t_min=" + digits(r.t_min) + " t_max=" + digits(r.t_max) +
                " t_size=" + std::to_string(r.t_size_voxels) + "," + digits(r.t_size_thresh) +
                " t_dust=" + std::to_string(r.t_dust));
            save_volume(ws_out, remove_dust(run_watershed(aff, r, threads), r.t_dust));
        } else if (*agglo) {
            const SegVolume seg = load_seg(ag_seg);
            const AffinityVolume aff = select_channels(load_affinity(ag_aff), nn_offsets());
            const MergeLog merges = agglomerate(build_region_graph(seg, aff, threads), ag_threshold);
            save_volume(ag_out, apply_merges(seg, merges, ag_threshold));
            if (!ag_log.empty()) {
                std::ostringstream os;
                write_merge_log(os, merges);
                emit(ag_log, os.str());
            }
            log(std::to_string(merges.merges.size()) + " merges");
        } else if (*eval) {
            const auto s = evaluate(load_seg(ev_pred), load_seg(ev_gt));
            if (ev_format == "json") {
                std::cout << json{{"vi_split", s.vi.split},
                                  {"vi_merge", s.vi.merge},
                                  {"vi", s.vi.total},
                                  {"are", s.rand.error},
                                  {"precision", s.rand.precision},
                                  {"recall", s.rand.recall}}
                                 .dump(2)
                          << "\n";
            } else {
                std::cout << "vi_split\tvi_merge\tvi\tare\tprecision\trecall\n"
                          << digits(s.vi.split) << '\t' << digits(s.vi.merge) << '\t'
                          << digits(s.vi.total) << '\t' << digits(s.rand.error) << '\t'
                          << digits(s.rand.precision) << '\t' << digits(s.rand.recall) << "\n";
            }
        } else if (*augment) {
            const ImageVolume image = load_image(au_image);
            const SegVolume label = load_seg(au_label);
            std::vector<DefectSpec> defects;
            if (!au_replay.empty()) {
                defects = defects_from_json(read_text(au_replay));
            } else {
                const Shape& s = image.shape();
                if (s.y <= 2 * au_params.margin || s.x <= 2 * au_params.margin)
                    throw std::invalid_argument("canvas " + to_string(s) +
                                                " is too small for margin " +
                                                std::to_string(au_params.margin));
                SeededRng rng(au_seed);
                defects = sample_defects(
                    rng, {s.z, s.y - 2 * au_params.margin, s.x - 2 * au_params.margin},
                    au_params);
            }
            const auto out = apply_defects(image, label, defects, au_params.margin,
                                           offsets_named(au_offsets));
            save_volume(au_prefix + "_image", out.image);
            save_volume(au_prefix + "_label", out.label);
            save_volume(au_prefix + "_affinity", out.affinity);
            emit(au_prefix + "_defects.json", defects_to_json(out.defects));
        } else if (*blend) {
            bl_profile.t = tuple_of<double, 3>(bl_t, "--t");
            json layout_json;
            try {
                layout_json = json::parse(read_text(bl_layout));
            } catch (const json::exception& e) {
                throw std::invalid_argument(bl_layout + ": " + e.what());
            }
            auto shape_field = [&](const char* key) {
                if (!layout_json.contains(key))
                    throw std::invalid_argument(bl_layout + ": missing '" + key + "'");
                return shape_of(layout_json[key].get<std::vector<std::size_t>>(), key);
            };
            PatchLayout layout{shape_field("volume"), shape_field("patch"), {}};
            std::vector<fs::path> files;
            for (const auto& p : layout_json.at("patches")) {
                const auto o = p.at("origin").get<std::vector<std::ptrdiff_t>>();
                if (o.size() != 3)
                    throw std::invalid_argument(bl_layout + ": origin needs 3 values");
                layout.origins.push_back({o[0], o[1], o[2]});
                files.push_back(fs::path(bl_dir) / p.at("file").get<std::string>());
            }
            if (files.empty())
                throw std::invalid_argument(bl_layout + ": no patches");
            std::vector<AnyVolume> loaded;
            for (const auto& f : files)
                loaded.push_back(load_volume(f));
            if (std::holds_alternative<AffinityVolume>(loaded.front())) {
                std::vector<AffinityVolume> patches;
                for (auto& v : loaded)
                    patches.push_back(std::get<AffinityVolume>(std::move(v)));
                save_volume(bl_out, blend_patches(layout, patches, bl_profile));
            } else {
                std::vector<ImageVolume> patches;
                for (auto& v : loaded)
                    patches.push_back(std::get<ImageVolume>(std::move(v)));
                save_volume(bl_out, blend_patches(layout, patches, bl_profile));
            }
        } else if (*pipeline) {
            PipelineConfig cfg = load_config(pl_config);
            if (app.get_option("--threads")->count())
                cfg.threads = threads;
            if (!pl_out_dir.empty())
                cfg.out_dir = pl_out_dir;
            const RunManifest m = run_pipeline(cfg);
            for (const auto& t : m.timings)
                log(t.stage + " " + millis(t.seconds));
            if (!m.metrics.empty()) {
                std::ostringstream os;
                write_metric_table(os, m.metrics);
                std::cout << os.str();
            }
        } else if (*sweep_cmd) {
            std::ostringstream os;
            if (sw_mode == "threshold") {
                if (sw_seg.empty() || sw_gt.empty() || sw_aff.empty() || sw_thresholds.empty())
                    throw std::invalid_argument(
                        "threshold sweep needs --seg, --gt, --aff and --thresholds");
                const SegVolume seg = load_seg(sw_seg);
                const AffinityVolume aff = select_channels(load_affinity(sw_aff), nn_offsets());
                const double lowest = *std::min_element(sw_thresholds.begin(), sw_thresholds.end());
                const MergeLog merges =
                    agglomerate(build_region_graph(seg, aff, threads), lowest);
                write_sweep_table(os, sweep(seg, load_seg(sw_gt), merges, sw_thresholds));
            } else {
                if (sw_config.empty() || sw_magnitudes.empty())
                    throw std::invalid_argument("robustness sweep needs --config and --magnitudes");
                PipelineConfig cfg = load_config(sw_config);
                if (app.get_option("--threads")->count())
                    cfg.threads = threads;
                write_robustness_table(
                    os, robustness_sweep(cfg, parse_defect_kind(sw_defect), sw_magnitudes));
            }
            emit(sw_out, os.str());
        }
    } catch (const StageError& e) {
        log(e.what());
        return e.invalid_input() ? exit_invalid : exit_runtime;
    } catch (const std::invalid_argument& e) {
        log(std::string("invalid input: ") + e.what());
        return exit_invalid;
    } catch (const std::exception& e) {
        log(std::string("error: ") + e.what());
        return exit_runtime;
    }
    return 0;
}
