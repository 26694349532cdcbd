#include "affseg/pipeline.hpp"
#include "affseg/format.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "affseg/affinity.hpp"
#include "affseg/hash.hpp"
#include "affseg/io.hpp"
#include "affseg/rng.hpp"
#include "json.hpp"

namespace affseg {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using json = nlohmann::json;

namespace {

const std::map<std::string, std::set<std::string>> known_keys{
    {"pipeline", {"seed", "threads", "out_dir", "stages"}},
    {"input", {"gt", "affinity"}},
    {"synth", {"shape", "sites", "aniso", "boundary_width", "offsets"}},
    {"corrupt", {"flip_prob", "gauss_sigma"}},
    {"watershed", {"t_min", "t_max", "t_size", "t_dust", "defer_dust"}},
    {"agglo", {"threshold", "sweep"}},
    {"blend", {"t", "overlap", "literal"}},
    {"augment", {"max_displacement", "max_missing", "max_blur", "sigma_max", "margin"}},
};

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s)
{
    std::vector<std::string> out;
    if (trim(s).empty())
        return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(trim(item));
    return out;
}

std::string bad(const std::string& key, const std::string& value, const std::string& what)
{
    return key + " = '" + value + "': " + what;
}

template <class T>
T parse_number(const std::string& key, const std::string& text)
{
    const std::string s = trim(text);
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw std::invalid_argument(bad(key, text, "not a number"));
    return v;
}

bool parse_bool(const std::string& key, const std::string& text)
{
    const std::string s = trim(text);
    if (s == "true" || s == "1" || s == "yes")
        return true;
    if (s == "false" || s == "0" || s == "no")
        return false;
    throw std::invalid_argument(bad(key, text, "expected true or false"));
}

template <class T, std::size_t N>
std::array<T, N> parse_tuple(const std::string& key, const std::string& text)
{
    const auto parts = split(text);
    if (parts.size() != N)
        throw std::invalid_argument(bad(key, text, "expected " + std::to_string(N) + " values"));
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i)
        out[i] = parse_number<T>(key, parts[i]);
    return out;
}

std::string fmt(double v)
{
    return shortest(v);
}

std::string join(const std::vector<std::string>& items)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i)
        out += (i ? "," : "") + items[i];
    return out;
}

void validate_config(const PipelineConfig& c)
{
    if (c.threads == 0)
        throw std::invalid_argument("threads must be at least 1");
    for (const auto& s : c.stages)
        if (std::find(pipeline_stages.begin(), pipeline_stages.end(), s) == pipeline_stages.end())
            throw std::invalid_argument("unknown stage '" + s + "'");
    if (!(c.flip_prob >= 0.0 && c.flip_prob <= 1.0))
        throw std::invalid_argument("flip_prob must lie in [0,1]");
    if (!(c.gauss_sigma >= 0.0))
        throw std::invalid_argument("gauss_sigma must be non-negative");
    if (!(c.agglo_threshold >= 0.0 && c.agglo_threshold <= 1.0))
        throw std::invalid_argument("agglomeration threshold must lie in [0,1]");
    for (std::size_t i = 0; i < c.sweep_thresholds.size(); ++i) {
        const double t = c.sweep_thresholds[i];
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("sweep thresholds must lie in [0,1]");
        if (i > 0 && !(t < c.sweep_thresholds[i - 1]))
            throw std::invalid_argument("sweep thresholds must be strictly descending");
    }
    if (c.augment.max_displacement < 0 ||
        c.augment.margin < static_cast<std::size_t>(c.augment.max_displacement))
        throw std::invalid_argument("augment margin must be at least max_displacement");
    if (!(c.augment.sigma_max >= 0.0 && c.augment.sigma_max <= 5.0))
        throw std::invalid_argument("augment sigma_max must lie in [0,5]");
    validate(c.synth.shape);
    validate(c.offsets);
    validate(c.blend);
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SegVolume synthesise(const PipelineConfig& c, const Shape& shape)
{
    SynthSpec spec = c.synth;
    spec.shape = shape;
    spec.seed = derive_seed(c.seed, "synth");
    SegVolume gt = voronoi_labels(spec, c.threads);
    if (c.boundary_width > 0)
        gt = carve_boundaries(gt, c.boundary_width);
    return gt;
}

AffinityVolume corrupt(const PipelineConfig& c, const AffinityVolume& aff)
{
    return corrupt_affinity(aff, {c.flip_prob, c.gauss_sigma, derive_seed(c.seed, "corrupt")});
}

void require_file(const fs::path& p, const std::string& what)
{
    if (p.empty())
        throw std::invalid_argument("no " + what + ": enable synth or set it under [input]");
    if (!fs::exists(header_path(p)))
        throw std::invalid_argument(what + " file " + header_path(p).string() + " does not exist");
}

json score_json(const SegmentationScore& s)
{
    return {{"vi_split", s.vi.split},       {"vi_merge", s.vi.merge},
            {"vi", s.vi.total},             {"are", s.rand.error},
            {"precision", s.rand.precision}, {"recall", s.rand.recall}};
}

}  // namespace

bool PipelineConfig::enabled(const std::string& stage) const
{
    return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

PipelineConfig parse_config(const std::string& ini_text)
{
    pt::ptree tree;
    std::istringstream in(ini_text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument("config: " + e.message() + " (line " +
                                    std::to_string(e.line()) + ")");
    }

    PipelineConfig c;
    for (const auto& [section, body] : tree) {
        const auto known = known_keys.find(section);
        if (known == known_keys.end())
            throw std::invalid_argument("config: unknown section [" + section + "]");
        if (!body.data().empty())
            throw std::invalid_argument("config: key '" + section + "' outside any section");
        for (const auto& [key, node] : body) {
            if (!known->second.count(key))
                throw std::invalid_argument("config: unknown key '" + key + "' in [" + section +
                                            "]");
            const std::string v = node.data();
            const std::string name = section + "." + key;

            if (section == "pipeline") {
                if (key == "seed")
                    c.seed = parse_number<std::uint64_t>(name, v);
                else if (key == "threads")
                    c.threads = parse_number<unsigned>(name, v);
                else if (key == "out_dir")
                    c.out_dir = trim(v);
                else
                    c.stages = split(v);
            } else if (section == "input") {
                (key == "gt" ? c.gt_path : c.affinity_path) = trim(v);
            } else if (section == "synth") {
                if (key == "shape") {
                    const auto s = parse_tuple<std::size_t, 3>(name, v);
                    c.synth.shape = {s[0], s[1], s[2]};
                } else if (key == "sites") {
                    c.synth.n_sites = parse_number<std::size_t>(name, v);
                } else if (key == "aniso") {
                    c.synth.anisotropy = parse_tuple<double, 3>(name, v);
                } else if (key == "boundary_width") {
                    c.boundary_width = parse_number<std::size_t>(name, v);
                } else if (trim(v) == "nn") {
                    c.offsets = nn_offsets();
                } else if (trim(v) == "long") {
                    c.offsets = long_range_offsets();
                } else {
                    throw std::invalid_argument(bad(name, v, "expected nn or long"));
                }
            } else if (section == "corrupt") {
                (key == "flip_prob" ? c.flip_prob : c.gauss_sigma) = parse_number<double>(name, v);
            } else if (section == "watershed") {
                try {
                    if (key == "t_min") {
                        c.watershed.t_min = parse_threshold(trim(v));
                    } else if (key == "t_max") {
                        c.watershed.t_max = parse_threshold(trim(v));
                    } else if (key == "t_size") {
                        const auto parts = split(v);
                        if (parts.size() == 1 && parts[0] == "0") {
                            c.watershed.t_size_voxels = 0;
                        } else if (parts.size() == 2) {
                            c.watershed.t_size_voxels = parse_number<std::size_t>(name, parts[0]);
                            c.watershed.t_size_thresh = parse_threshold(parts[1]);
                        } else {
                            throw std::invalid_argument("expected <voxels>,<threshold> or 0");
                        }
                    } else if (key == "t_dust") {
                        c.watershed.t_dust = parse_number<std::size_t>(name, v);
                    } else {
                        c.defer_dust = parse_bool(name, v);
                    }
                } catch (const std::invalid_argument& e) {
                    const std::string msg = e.what();
                    throw std::invalid_argument(msg.rfind(name, 0) == 0 ? msg
                                                                        : bad(name, v, msg));
                }
            } else if (section == "agglo") {
                if (key == "threshold") {
                    c.agglo_threshold = parse_number<double>(name, v);
                } else {
                    c.sweep_thresholds.clear();
                    for (const auto& s : split(v))
                        c.sweep_thresholds.push_back(parse_number<double>(name, s));
                }
            } else if (section == "blend") {
                if (key == "t")
                    c.blend.t = parse_tuple<double, 3>(name, v);
                else if (key == "overlap")
                    c.blend.overlap = parse_number<double>(name, v);
                else
                    c.blend.literal = parse_bool(name, v);
            } else {
                if (key == "max_displacement")
                    c.augment.max_displacement = parse_number<int>(name, v);
                else if (key == "max_missing")
                    c.augment.max_missing_slices = parse_number<std::size_t>(name, v);
                else if (key == "max_blur")
                    c.augment.max_blur_slices = parse_number<std::size_t>(name, v);
                else if (key == "sigma_max")
                    c.augment.sigma_max = parse_number<double>(name, v);
                else
                    c.augment.margin = parse_number<std::size_t>(name, v);
            }
        }
    }
    validate_config(c);
    return c;
}

PipelineConfig load_config(const fs::path& path)
{
    std::ifstream f(path);
    if (!f)
        throw std::invalid_argument("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    if (path.extension() != ".json")
        return parse_config(ss.str());

    json m;
    try {
        m = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    if (!m.contains("config_ini") || !m["config_ini"].is_string())
        throw std::invalid_argument(path.string() + ": manifest has no config_ini");
    return parse_config(m["config_ini"].get<std::string>());
}

std::string to_ini(const PipelineConfig& c)
{
    std::vector<std::string> sweep;
    for (double t : c.sweep_thresholds)
        sweep.push_back(fmt(t));
    const auto& s = c.synth.shape;
    const auto& a = c.synth.anisotropy;
    const auto& w = c.watershed;

    std::ostringstream os;
    os << "[pipeline]\n"
       << "seed = " << c.seed << "\n"
       << "threads = " << c.threads << "\n"
       << "out_dir = " << c.out_dir.string() << "\n"
       << "stages = " << join(c.stages) << "\n\n"
       << "[input]\n"
       << "gt = " << c.gt_path.string() << "\n"
       << "affinity = " << c.affinity_path.string() << "\n\n"
       << "[synth]\n"
       << "shape = " << s.z << "," << s.y << "," << s.x << "\n"
       << "sites = " << c.synth.n_sites << "\n"
       << "aniso = " << fmt(a[0]) << "," << fmt(a[1]) << "," << fmt(a[2]) << "\n"
       << "boundary_width = " << c.boundary_width << "\n"
       << "offsets = " << (c.offsets == long_range_offsets() ? "long" : "nn") << "\n\n"
       << "[corrupt]\n"
       << "flip_prob = " << fmt(c.flip_prob) << "\n"
       << "gauss_sigma = " << fmt(c.gauss_sigma) << "\n\n"
       << "[watershed]\n"
       << "t_min = " << to_string(w.t_min) << "\n"
       << "t_max = " << to_string(w.t_max) << "\n"
       << "t_size = "
       << (w.t_size_voxels == 0 ? std::string("0")
                                : std::to_string(w.t_size_voxels) + "," +
                                      to_string(w.t_size_thresh))
       << "\n"
       << "t_dust = " << w.t_dust << "\n"
       << "defer_dust = " << (c.defer_dust ? "true" : "false") << "\n\n"
       << "[agglo]\n"
       << "threshold = " << fmt(c.agglo_threshold) << "\n"
       << "sweep = " << join(sweep) << "\n\n"
       << "[blend]\n"
       << "t = " << fmt(c.blend.t[0]) << "," << fmt(c.blend.t[1]) << "," << fmt(c.blend.t[2])
       << "\n"
       << "overlap = " << fmt(c.blend.overlap) << "\n"
       << "literal = " << (c.blend.literal ? "true" : "false") << "\n\n"
       << "[augment]\n"
       << "max_displacement = " << c.augment.max_displacement << "\n"
       << "max_missing = " << c.augment.max_missing_slices << "\n"
       << "max_blur = " << c.augment.max_blur_slices << "\n"
       << "sigma_max = " << fmt(c.augment.sigma_max) << "\n"
       << "margin = " << c.augment.margin << "\n";
    return os.str();
}

std::string manifest_to_json(const RunManifest& m)
{
    json j;
    j["status"] = m.status;
    if (!m.failed_stage.empty()) {
        j["failed_stage"] = m.failed_stage;
        j["error"] = m.error;
    }
    j["config_ini"] = m.config_ini;

    pt::ptree tree;
    std::istringstream in(m.config_ini);
    pt::read_ini(in, tree);
    json cfg = json::object();
    for (const auto& [section, body] : tree)
        for (const auto& [key, node] : body)
            cfg[section][key] = node.data();
    j["config"] = cfg;

    j["seeds"] = m.seeds;
    if (m.resolved) {
        const auto& r = *m.resolved;
        j["resolved"]["watershed"] = {{"t_min", r.t_min},
                                      {"t_max", r.t_max},
                                      {"t_size_voxels", r.t_size_voxels},
                                      {"t_size_thresh", r.t_size_thresh},
                                      {"t_dust", r.t_dust}};
    }
    j["resolved"]["agglo"]["merges"] = m.merges;

    j["stages"] = json::array();
    for (const auto& t : m.timings)
        j["stages"].push_back({{"name", t.stage}, {"seconds", t.seconds}});
    j["outputs"] = m.output_hashes;

    j["metrics"] = json::array();
    for (const auto& r : m.metrics) {
        json row = score_json(r.score);
        row["stage"] = r.stage;
        j["metrics"].push_back(row);
    }
    j["sweep"] = json::array();
    for (const auto& r : m.sweep)
        j["sweep"].push_back({{"threshold", r.threshold},
                              {"vi_split", r.vi.split},
                              {"vi_merge", r.vi.merge},
                              {"vi", r.vi.total},
                              {"are", r.rand_error}});
    return j.dump(2) + "\n";
}

StageError::StageError(std::string stage, const std::string& cause, bool invalid_input)
    : std::runtime_error("stage '" + stage + "' failed: " + cause),
      stage_(std::move(stage)),
      invalid_input_(invalid_input)
{
}

SegVolume segment(const PipelineConfig& c, const AffinityVolume& aff)
{
    const auto resolved = resolve_params(c.watershed, aff);
    SegVolume seg = run_watershed(aff, resolved, c.threads);
    if (!c.defer_dust)
        seg = remove_dust(seg, resolved.t_dust);
    if (c.enabled("agglo")) {
        const auto log = agglomerate(build_region_graph(seg, aff, c.threads), c.agglo_threshold);
        seg = apply_merges(seg, log, c.agglo_threshold);
    }
    if (c.defer_dust)
        seg = remove_dust(seg, resolved.t_dust);
    return seg;
}

RunManifest run_pipeline(const PipelineConfig& c)
{
    validate_config(c);
    RunManifest m;
    m.config_ini = to_ini(c);
    fs::create_directories(c.out_dir);

    std::optional<SegVolume> gt, ws, seg;
    std::optional<AffinityVolume> aff;
    std::optional<ResolvedThresholds> resolved;
    std::optional<MergeLog> log;

    auto record = [&](const std::string& name) {
        m.output_hashes[name] = sha256_file(c.out_dir / name);
    };
    auto save = [&](const std::string& stem, const auto& vol) {
        save_volume(c.out_dir / stem, vol);
        record(stem + ".json");
        record(stem + ".raw");
    };
    auto need_gt = [&]() -> const SegVolume& {
        if (!gt) {
            require_file(c.gt_path, "ground truth");
            gt = load_seg(c.gt_path);
        }
        return *gt;
    };
    auto need_affinity = [&]() -> const AffinityVolume& {
        if (!aff) {
            if (!c.affinity_path.empty()) {
                require_file(c.affinity_path, "affinity");
                aff = load_affinity(c.affinity_path);
            } else {
                aff = affinities_from_labels(need_gt(), c.offsets, c.threads);
            }
        }
        return *aff;
    };
    auto nn = [&]() { return select_channels(need_affinity(), nn_offsets()); };

    auto run = [&](const std::string& stage, auto&& body) {
        if (!c.enabled(stage))
            return;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const std::exception& e) {
            const bool invalid = dynamic_cast<const std::invalid_argument*>(&e) != nullptr;
            m.timings.push_back({stage, seconds_since(t0)});
            m.status = "partial";
            m.failed_stage = stage;
            m.error = e.what();
            m.resolved = resolved;
            std::ofstream(c.out_dir / "manifest.partial.json") << manifest_to_json(m);
            std::ofstream(c.out_dir / ".partial") << stage << "\n";
            throw StageError(stage, e.what(), invalid);
        }
        m.timings.push_back({stage, seconds_since(t0)});
    };

    run("synth", [&] {
        m.seeds["synth"] = derive_seed(c.seed, "synth");
        gt = synthesise(c, c.synth.shape);
        save("gt", *gt);
        aff = affinities_from_labels(*gt, c.offsets, c.threads);
        save("affinity", *aff);
    });

    run("corrupt", [&] {
        m.seeds["corrupt"] = derive_seed(c.seed, "corrupt");
        aff = corrupt(c, need_affinity());
        save("affinity_corrupt", *aff);
    });

    run("watershed", [&] {
        const auto a = nn();
        resolved = resolve_params(c.watershed, a);
        ws = run_watershed(a, *resolved, c.threads);
        if (!c.defer_dust)
            ws = remove_dust(*ws, resolved->t_dust);
        save("ws", *ws);
    });
    m.resolved = resolved;

    run("agglo", [&] {
        if (!ws)
            throw std::invalid_argument("agglomeration needs the watershed stage");
        double stop = c.agglo_threshold;
        for (double t : c.sweep_thresholds)
            stop = std::min(stop, t);
        log = agglomerate(build_region_graph(*ws, nn(), c.threads), stop);
        m.merges = log->merges.size();
        seg = apply_merges(*ws, *log, c.agglo_threshold);
        if (c.defer_dust)
            seg = remove_dust(*seg, resolved->t_dust);
        save("seg", *seg);
        std::ofstream(c.out_dir / "merges.tsv") << [&] {
            std::ostringstream os;
            write_merge_log(os, *log);
            return os.str();
        }();
        record("merges.tsv");
    });

    run("eval", [&] {
        if (!ws)
            throw std::invalid_argument("evaluation needs the watershed stage");
        const SegVolume& truth = need_gt();
        m.metrics.push_back({"watershed", evaluate(*ws, truth)});
        if (seg)
            m.metrics.push_back({"agglo", evaluate(*seg, truth)});
        {
            std::ofstream f(c.out_dir / "metrics.tsv");
            write_metric_table(f, m.metrics);
        }
        record("metrics.tsv");
        if (log && !c.sweep_thresholds.empty()) {
            m.sweep = sweep(*ws, truth, *log, c.sweep_thresholds);
            {
                std::ofstream f(c.out_dir / "sweep.tsv");
                write_sweep_table(f, m.sweep);
            }
            record("sweep.tsv");
        }
    });

    fs::remove(c.out_dir / ".partial");
    fs::remove(c.out_dir / "manifest.partial.json");
    std::ofstream(c.out_dir / "manifest.json") << manifest_to_json(m);
    return m;
}

std::vector<RobustnessRow> robustness_sweep(const PipelineConfig& c, DefectKind defect,
                                            const std::vector<int>& magnitudes)
{
    validate_config(c);
    if (defect != DefectKind::slip && defect != DefectKind::translation)
        throw std::invalid_argument("robustness sweep supports slip and translation only");
    const std::size_t margin = c.augment.margin;
    for (int mag : magnitudes)
        if (mag < 0 || static_cast<std::size_t>(mag) > margin)
            throw std::invalid_argument("magnitude " + std::to_string(mag) +
                                        " outside [0, margin=" + std::to_string(margin) + "]");

    SegVolume canvas;
    if (c.enabled("synth")) {
        const Shape& s = c.synth.shape;
        canvas = synthesise(c, {s.z, s.y + 2 * margin, s.x + 2 * margin});
    } else {
        require_file(c.gt_path, "ground truth");
        canvas = load_seg(c.gt_path);
    }
    const Shape& cs = canvas.shape();
    if (cs.y <= 2 * margin || cs.x <= 2 * margin)
        throw std::invalid_argument("canvas " + to_string(cs) + " too small for margin " +
                                    std::to_string(margin));

    AffinityVolume base;
    if (!c.enabled("synth") && !c.affinity_path.empty()) {
        require_file(c.affinity_path, "affinity");
        base = select_channels(load_affinity(c.affinity_path), nn_offsets());
        if (!(base.shape() == cs))
            throw std::invalid_argument("affinity shape " + to_string(base.shape()) +
                                        " differs from ground truth " + to_string(cs));
    } else {
        base = affinities_from_labels(canvas, nn_offsets(), c.threads);
    }
    if (c.enabled("corrupt"))
        base = corrupt(c, base);

    std::vector<RobustnessRow> rows;
    for (int mag : magnitudes) {
        DefectSpec spec;
        spec.kind = defect;
        spec.z = cs.z / 2;
        spec.dx = mag;
        spec.dy = mag;
        const SegVolume truth = misalign_volume(canvas, spec, margin);
        const SegVolume seg = segment(c, misalign_affinity(base, spec, margin));
        rows.push_back({mag, evaluate(seg, truth)});
    }
    return rows;
}

void write_robustness_table(std::ostream& out, const std::vector<RobustnessRow>& rows)
{
    out << "magnitude\tvi_split\tvi_merge\tvi\tare\n";
    for (const auto& r : rows)
        out << r.magnitude << '\t' << shortest(r.score.vi.split) << '\t'
            << shortest(r.score.vi.merge) << '\t' << shortest(r.score.vi.total) << '\t'
            << shortest(r.score.rand.error) << '\n';
}

void write_metric_table(std::ostream& out, const std::vector<MetricRow>& rows)
{
    out << "stage\tvi_split\tvi_merge\tvi\tare\tprecision\trecall\n";
    for (const auto& r : rows)
        out << r.stage << '\t' << shortest(r.score.vi.split) << '\t'
            << shortest(r.score.vi.merge) << '\t' << shortest(r.score.vi.total) << '\t'
            << shortest(r.score.rand.error) << '\t' << shortest(r.score.rand.precision) << '\t'
            << shortest(r.score.rand.recall) << '\n';
}

}  // namespace affseg
