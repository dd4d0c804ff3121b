#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "umc/errors.hpp"
#include "umc/simulator.hpp"
#include "umc/wire.hpp"

namespace {

using umc::ConfigError;
using umc::sim::ScenarioConfig;

double parse_fraction(const std::string& s) {
    std::string t = s;
    bool pct = false;
    if (!t.empty() && t.back() == '%') {
        pct = true;
        t.pop_back();
    }
    double v = 0.0;
    try {
        std::size_t pos = 0;
        v = std::stod(t, &pos);
        if (pos != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
        throw ConfigError("not a fraction: '" + s + "'");
    }
    if (pct) v /= 100.0;
    if (v < 0.0 || v > 1.0) {
        throw ConfigError("selection fraction out of [0, 1]: '" + s + "'");
    }
    return v;
}

std::vector<double> parse_fraction_list(const std::string& s) {
    std::vector<double> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        std::size_t b = cur.find_first_not_of(" \t");
        std::size_t e = cur.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(parse_fraction(cur.substr(b, e - b + 1)));
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw umc::Error("cannot write '" + path + "'");
    f << content;
    if (!f) throw umc::Error("short write to '" + path + "'");
}

struct RunArgs {
    std::string config_path;
    std::string manifest_path;
    std::string out_dir;
    std::string delta_s, delta_c;
    std::string params_path;
    long long seed = -1;
    bool seed_set = false;
    int timesteps = 0;
    int threads = -1;
    bool no_selection = false;
    bool dump_packets = false;
};

ScenarioConfig resolve_config(const RunArgs& a, std::uint64_t* want_fp) {
    ScenarioConfig cfg;
    if (!a.manifest_path.empty()) {
        const std::string text = read_file(a.manifest_path);
        cfg = umc::sim::config_from_manifest(text);
        if (want_fp) {
            const nlohmann::json j = nlohmann::json::parse(text);
            if (j.contains("param_fingerprint") && j["param_fingerprint"].is_string()) {
                *want_fp = std::stoull(j["param_fingerprint"].get<std::string>(),
                                       nullptr, 16);
            }
        }
    } else if (!a.config_path.empty()) {
        cfg = umc::sim::load_config(a.config_path);
    }
    if (a.seed_set) cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.delta_s.empty()) cfg.delta_s = parse_fraction(a.delta_s);
    if (!a.delta_c.empty()) cfg.delta_c = parse_fraction(a.delta_c);
    if (a.timesteps > 0) cfg.timesteps = a.timesteps;
    if (a.threads >= 0) cfg.threads = a.threads;
    if (a.no_selection) cfg.selection_enabled = false;
    if (!a.params_path.empty()) cfg.params_file = a.params_path;
    cfg.validate();
    return cfg;
}

umc::ParamSet resolve_params(const ScenarioConfig& cfg) {
    if (cfg.params_file.empty()) {
        return umc::sim::default_params(cfg);
    }
    return umc::ParamSet::load(cfg.params_file);
}

void write_report(const umc::sim::EpisodeReport& report, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/detections.jsonl", report.detections_jsonl);
    write_file(out_dir + "/gt.jsonl", report.gt_jsonl);
    write_file(out_dir + "/metrics.csv", report.metrics_csv);
    write_file(out_dir + "/ledger.csv", report.ledger_csv);
    write_file(out_dir + "/manifest.json", report.manifest);
}

int cmd_run(const RunArgs& a) {
    std::uint64_t want_fp = 0;
    const ScenarioConfig cfg = resolve_config(a, &want_fp);
    const umc::ParamSet params = resolve_params(cfg);
    if (!a.manifest_path.empty() && want_fp != 0 &&
        umc::fingerprint(params) != want_fp) {
        throw ConfigError("parameters do not match the manifest fingerprint");
    }
    const umc::sim::EpisodeReport report = umc::sim::run_episode(
        cfg, params, a.dump_packets ? a.out_dir + "/packets" : "");
    write_report(report, a.out_dir);
    std::printf("wrote %s: %zu frames, %zu transfers, comm_volume %.6f\n",
                a.out_dir.c_str(), report.frames.size(), report.transfers.size(),
                report.comm_volume);
    return 0;
}

int cmd_sweep(const RunArgs& base, const std::string& grid,
              const std::string& s_grid, const std::string& c_grid) {
    std::vector<double> svals = parse_fraction_list(s_grid.empty() ? grid : s_grid);
    std::vector<double> cvals = parse_fraction_list(c_grid.empty() ? grid : c_grid);
    if (svals.empty() || cvals.empty()) {
        throw ConfigError("sweep grid is empty");
    }
    const ScenarioConfig cfg0 = resolve_config(base, nullptr);
    const umc::ParamSet params = resolve_params(cfg0);

    std::string csv = "delta_s,delta_c,comm_volume,selected_fraction,ap,arsv,arcv,arci,artc\n";
    char buf[256];
    for (double ds : svals) {
        for (double dc : cvals) {
            ScenarioConfig cfg = cfg0;
            cfg.delta_s = ds;
            cfg.delta_c = dc;
            std::snprintf(buf, sizeof(buf), "ds%g_dc%g", ds, dc);
            const std::string sub = base.out_dir + "/" + buf;
            const umc::sim::EpisodeReport report = umc::sim::run_episode(cfg, params);
            write_report(report, sub);

            const double iou0 = cfg.iou_thresholds.front();
            const double ap = umc::metrics::average_precision(report.frames, iou0);
            const std::map<umc::metrics::ObjectType, double> rec =
                umc::metrics::recall_by_type(report.frames, cfg.tau, iou0);
            auto cell = [&](umc::metrics::ObjectType t) {
                auto it = rec.find(t);
                if (it == rec.end()) return std::string();
                char vb[32];
                std::snprintf(vb, sizeof(vb), "%.9f", it->second);
                return std::string(vb);
            };
            std::snprintf(buf, sizeof(buf), "%g,%g,%.9f,%.9f,%.9f,", ds, dc,
                          report.comm_volume, report.mean_selected_fraction, ap);
            csv += buf;
            csv += cell(umc::metrics::ObjectType::ARSV) + ",";
            csv += cell(umc::metrics::ObjectType::ARCV) + ",";
            csv += cell(umc::metrics::ObjectType::ARCI) + ",";
            csv += cell(umc::metrics::ObjectType::ARTC) + "\n";
            std::printf("ds=%g dc=%g comm_volume=%.6f fraction=%.4f\n", ds, dc,
                        report.comm_volume, report.mean_selected_fraction);
        }
    }
    std::filesystem::create_directories(base.out_dir);
    write_file(base.out_dir + "/sweep.csv", csv);
    return 0;
}

// JSONL parsing for eval; every failure names file and line.
[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
    throw ConfigError(path + ":" + std::to_string(line) + ": " + what);
}

void require(bool ok, const std::string& path, int line, const std::string& what) {
    if (!ok) parse_fail(path, line, what);
}

int cmd_eval(const std::string& det_path, const std::string& gt_path,
             const std::string& iou_list, int tau, const std::string& out_path) {
    std::vector<double> ious;
    for (double v : parse_fraction_list(iou_list)) ious.push_back(v);
    if (ious.empty()) throw ConfigError("no IoU thresholds given");

    std::map<int, umc::metrics::FrameSample> frames;

    {
        std::istringstream in(read_file(det_path));
        std::string line;
        int ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                parse_fail(det_path, ln, e.what());
            }
            require(j.contains("frame") && j["frame"].is_number_integer(), det_path,
                    ln, "missing integer 'frame'");
            require(j.contains("boxes") && j["boxes"].is_array(), det_path, ln,
                    "missing array 'boxes'");
            umc::metrics::FrameSample& fs = frames[j["frame"].get<int>()];
            for (const nlohmann::json& b : j["boxes"]) {
                require(b.is_array() && b.size() == 5, det_path, ln,
                        "box must be [cx,cy,w,h,score]");
                for (const nlohmann::json& v : b) {
                    require(v.is_number(), det_path, ln, "box entries must be numbers");
                }
                umc::mgfe::Detection det;
                det.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                           b[3].get<double>()};
                det.score = b[4].get<double>();
                fs.preds.push_back(det);
            }
        }
    }
    {
        std::istringstream in(read_file(gt_path));
        std::string line;
        int ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                parse_fail(gt_path, ln, e.what());
            }
            require(j.contains("frame") && j["frame"].is_number_integer(), gt_path,
                    ln, "missing integer 'frame'");
            require(j.contains("objects") && j["objects"].is_array(), gt_path, ln,
                    "missing array 'objects'");
            umc::metrics::FrameSample& fs = frames[j["frame"].get<int>()];
            for (const nlohmann::json& o : j["objects"]) {
                require(o.is_object(), gt_path, ln, "objects entries must be objects");
                require(o.contains("box") && o["box"].is_array() && o["box"].size() == 4,
                        gt_path, ln, "object needs a [cx,cy,w,h] box");
                require(o.contains("points_sv") && o["points_sv"].is_number_integer(),
                        gt_path, ln, "object needs integer 'points_sv'");
                require(o.contains("points_cv") && o["points_cv"].is_number_integer(),
                        gt_path, ln, "object needs integer 'points_cv'");
                umc::metrics::GtObject gt;
                const nlohmann::json& b = o["box"];
                for (const nlohmann::json& v : b) {
                    require(v.is_number(), gt_path, ln, "box entries must be numbers");
                }
                gt.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                          b[3].get<double>()};
                gt.points_single_view = o["points_sv"].get<int>();
                gt.points_collab_view = o["points_cv"].get<int>();
                if (o.contains("label")) {
                    require(o["label"].is_string(), gt_path, ln, "'label' must be a string");
                    const auto ty =
                        umc::metrics::type_from_string(o["label"].get<std::string>());
                    require(ty.has_value(), gt_path, ln,
                            "unknown label '" + o["label"].get<std::string>() + "'");
                    gt.manual_label = ty;
                }
                fs.gts.push_back(std::move(gt));
            }
        }
    }

    std::vector<umc::metrics::FrameSample> ordered;
    ordered.reserve(frames.size());
    for (auto& [id, fs] : frames) ordered.push_back(std::move(fs));
    const std::string csv = umc::metrics::metrics_csv(ordered, tau, ious);
    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        write_file(out_path, csv);
    }
    return 0;
}

int cmd_inspect(const std::string& path, int max_entries, int max_values) {
    const umc::wire::SparsePacket p = umc::wire::load_packet(path);
    std::printf("file: %s\n", path.c_str());
    std::printf("sender: %u  receiver: %u  timestep: %u  level: %u\n",
                p.meta.sender, p.meta.receiver, p.meta.timestep, p.meta.level);
    std::printf("grid: %ux%u  channels: %u  entries: %zu  bytes: %zu\n", p.height,
                p.width, p.channels, p.entries.size(), umc::wire::packet_size_bytes(p));
    const std::size_t show =
        max_entries <= 0 ? p.entries.size()
                         : std::min<std::size_t>(p.entries.size(), max_entries);
    for (std::size_t i = 0; i < show; ++i) {
        const umc::wire::PacketEntry& e = p.entries[i];
        std::printf("  [%4u,%4u]", e.row, e.col);
        const std::size_t nv =
            max_values <= 0 ? e.values.size()
                            : std::min<std::size_t>(e.values.size(), max_values);
        for (std::size_t v = 0; v < nv; ++v) std::printf(" % .5g", e.values[v]);
        if (nv < e.values.size()) std::printf(" ...");
        std::printf("\n");
    }
    if (show < p.entries.size()) {
        std::printf("  ... %zu more entries\n", p.entries.size() - show);
    }
    return 0;
}

int guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const umc::DecodeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse collaborative-perception pipeline driver"};
    app.require_subcommand(1);

    RunArgs ra;
    std::string grid = "1.0,0.5,0.2,0.1", s_grid, c_grid;
    std::string det_path, gt_path, iou_list = "0.5,0.7", eval_out;
    int tau = 4;
    std::string packet_path;
    int max_entries = 16, max_values = 6;

    auto add_run_options = [&](CLI::App* c) {
        c->add_option("--config", ra.config_path, "key=value config file")
            ->check(CLI::ExistingFile);
        c->add_option("--from-manifest", ra.manifest_path,
                      "reproduce a run from its manifest.json")
            ->check(CLI::ExistingFile)
            ->excludes("--config");
        c->add_option("--out", ra.out_dir, "output directory")->required();
        c->add_option("--delta-s", ra.delta_s, "self-selection fraction (0-1 or N%)");
        c->add_option("--delta-c", ra.delta_c, "cross-selection fraction (0-1 or N%)");
        c->add_option("--seed", ra.seed, "scenario + parameter seed");
        c->add_option("--timesteps", ra.timesteps, "override episode length");
        c->add_option("--threads", ra.threads, "worker threads (0: UMC_THREADS)");
        c->add_option("--params", ra.params_path, "parameter file (.umcp)")
            ->check(CLI::ExistingFile);
        c->add_flag("--no-selection", ra.no_selection,
                    "disable region selection (send every cell)");
    };

    CLI::App* run = app.add_subcommand("run", "run one episode, write report files");
    add_run_options(run);
    run->add_flag("--dump-packets", ra.dump_packets,
                  "save every wire packet under <out>/packets/");

    CLI::App* sweep =
        app.add_subcommand("sweep", "run a delta grid, write sweep.csv + sub-runs");
    add_run_options(sweep);
    sweep->add_option("--grid", grid, "fractions for both axes (comma list)");
    sweep->add_option("--delta-s-grid", s_grid, "override the delta_s axis");
    sweep->add_option("--delta-c-grid", c_grid, "override the delta_c axis");

    CLI::App* ev = app.add_subcommand("eval", "score detections against ground truth");
    ev->add_option("--detections", det_path, "detections JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--gt", gt_path, "ground-truth JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--iou", iou_list, "IoU thresholds (comma list)");
    ev->add_option("--tau", tau, "visibility point threshold");
    ev->add_option("--out", eval_out, "write CSV here instead of stdout");

    CLI::App* insp = app.add_subcommand("inspect-packet", "pretty-print a .umcw file");
    insp->add_option("file", packet_path, "packet file")
        ->required()
        ->check(CLI::ExistingFile);
    insp->add_option("--max-entries", max_entries, "entries to print (0: all)");
    insp->add_option("--max-values", max_values, "values per entry (0: all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (run->parsed()) return guarded([&] { return cmd_run(ra); });
    if (sweep->parsed()) return guarded([&] { return cmd_sweep(ra, grid, s_grid, c_grid); });
    if (ev->parsed()) return guarded([&] { return cmd_eval(det_path, gt_path, iou_list, tau, eval_out); });
    if (insp->parsed()) return guarded([&] { return cmd_inspect(packet_path, max_entries, max_values); });
    return 2;
}
