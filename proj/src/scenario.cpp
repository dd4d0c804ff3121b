#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sim_rng.hpp"
#include "umc/errors.hpp"
#include "umc/simulator.hpp"

namespace umc::sim {
namespace {

// Scripted object slots; free objects follow them.
constexpr int kNearPlant = 0;   // close to agent 0, always seen by it
constexpr int kOccluder = 1;    // wall between agent 0 and the relay plant
constexpr int kRelayPlant = 2;  // hidden from agent 0, seen by far agents
constexpr int kFarPlant = 3;    // out of everyone's range
constexpr int kBlinker = 4;     // visible on even ticks, gone on odd ticks
constexpr int kScripted = 5;

struct MovingBox {
    double x, y, w, h, vx, vy;
};

// Does the open segment a->b cross the box? Standard slab clipping; the box
// is treated as solid.
bool segment_hits_box(double ax, double ay, double bx, double by,
                      const geom::BevBox& box) {
    const double x0 = box.cx - 0.5 * box.w, x1 = box.cx + 0.5 * box.w;
    const double y0 = box.cy - 0.5 * box.h, y1 = box.cy + 0.5 * box.h;
    const double dx = bx - ax, dy = by - ay;
    double t0 = 0.0, t1 = 1.0;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {ax - x0, x1 - ax, ay - y0, y1 - ay};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
        } else {
            const double r = q[i] / p[i];
            if (p[i] < 0.0) {
                if (r > t1) return false;
                if (r > t0) t0 = r;
            } else {
                if (r < t0) return false;
                if (r < t1) t1 = r;
            }
        }
    }
    // Require a real interior crossing, not an endpoint graze.
    return t0 < t1 && t1 > 1e-9 && t0 < 1.0 - 1e-9;
}

int visible_points(const geom::Pose2& agent, const SceneFrame& frame,
                   std::size_t target, const ScenarioConfig& cfg) {
    const geom::BevBox& box = frame.objects[target].box;
    const double dx = box.cx - agent.x;
    const double dy = box.cy - agent.y;
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d > cfg.sensing_range) {
        return 0;
    }
    for (std::size_t o = 0; o < frame.objects.size(); ++o) {
        if (o == target) continue;
        if (segment_hits_box(agent.x, agent.y, box.cx, box.cy,
                             frame.objects[o].box)) {
            return 0;
        }
    }
    return static_cast<int>(std::floor(cfg.point_budget / (1.0 + cfg.point_decay * d)));
}

void bounce(double& pos, double& vel, double lo, double hi) {
    pos += vel;
    if (pos < lo) {
        pos = lo + (lo - pos);
        vel = -vel;
    } else if (pos > hi) {
        pos = hi - (pos - hi);
        vel = -vel;
    }
}

}  // namespace

void ScenarioConfig::validate() const {
    if (n_agents < 2) throw ConfigError("n_agents must be at least 2");
    if (n_agents > 64) throw ConfigError("n_agents is implausibly large");
    if (n_objects < 0) throw ConfigError("n_objects must be non-negative");
    if (timesteps < 1) throw ConfigError("timesteps must be positive");
    if (cell_size <= 0.0) throw ConfigError("cell_size must be positive");
    if (bev_channels < 1) throw ConfigError("bev_channels must be positive");
    if (grid_h < 4 || grid_w < 4) throw ConfigError("BEV grid is too small");
    ladder.validate();
    const mgfe::LevelSpec& fine = ladder.levels.back();
    auto pow2_ratio = [](int big, int small) {
        if (small <= 0 || big % small != 0) return false;
        int r = big / small;
        return r >= 2 && (r & (r - 1)) == 0;
    };
    if (!pow2_ratio(grid_h, fine.height) || !pow2_ratio(grid_w, fine.width)) {
        throw ConfigError("finest ladder level must divide the BEV grid by a power of two");
    }
    if (!(delta_s >= 0.0 && delta_s <= 1.0 && delta_c >= 0.0 && delta_c <= 1.0)) {
        throw ConfigError("selection fractions must lie in [0, 1]");
    }
    if (min_cells < 0) throw ConfigError("min_cells must be non-negative");
    if (rbf_radius < 1) throw ConfigError("rbf_radius must be >= 1");
    if (tau < 0) throw ConfigError("tau must be non-negative");
    if (iou_thresholds.empty()) throw ConfigError("need at least one IoU threshold");
    for (double v : iou_thresholds) {
        if (!(v > 0.0 && v < 1.0)) throw ConfigError("IoU thresholds must lie in (0, 1)");
    }
    if (!(score_threshold > 0.0 && score_threshold < 1.0)) {
        throw ConfigError("score_threshold must lie in (0, 1)");
    }
    if (!(nms_iou >= 0.0 && nms_iou < 1.0)) throw ConfigError("nms_iou must lie in [0, 1)");
    if (area_extent < 20.0) throw ConfigError("area_extent must be at least 20 m");
    if (sensing_range <= 0.0) throw ConfigError("sensing_range must be positive");
    if (point_budget <= 0.0 || point_decay < 0.0) {
        throw ConfigError("point model parameters must be positive");
    }
    if (speed_max < 0.0) throw ConfigError("speed_max must be non-negative");
    if (!(clutter_density >= 0.0 && clutter_density <= 1.0)) {
        throw ConfigError("clutter_density must lie in [0, 1]");
    }
    if (threads < 0) throw ConfigError("threads must be non-negative");
    if (sensing_range > 0.55 * area_extent) {
        throw ConfigError("sensing_range too large for the area: the far plant "
                          "could not stay invisible");
    }
}

Scenario gen_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    const double A = cfg.area_extent;
    Rng rng(mix(cfg.seed, 0x5ce7a210u));

    // Agents: parallel horizontal tracks in a quiet band; the vertical spread
    // gives the relay geometry below a clear line of sight for the far agents.
    std::vector<MovingBox> agents(cfg.n_agents);
    const double band_lo = 0.15 * A;
    const double band_hi = 0.32 * A;
    for (int i = 0; i < cfg.n_agents; ++i) {
        MovingBox& a = agents[i];
        a.y = band_lo + (band_hi - band_lo) * (cfg.n_agents == 1 ? 0.0 : static_cast<double>(i) / (cfg.n_agents - 1));
        a.x = 0.30 * A + 0.4 * A * rng.next_double();
        a.vx = (i % 2 == 0 ? 1.0 : -1.0) * rng.uniform(0.3, 1.0) * cfg.speed_max;
        a.vy = 0.0;
        a.w = a.h = 0.0;
    }

    // Free objects: a separate band so they never wander into the scripted
    // geometry around agent 0.
    std::vector<MovingBox> objects(cfg.n_objects);
    const double obj_lo = 0.45 * A;
    const double obj_hi = 0.88 * A;
    for (int i = 0; i < cfg.n_objects; ++i) {
        MovingBox& o = objects[i];
        o.w = rng.uniform(1.5, 3.5);
        o.h = rng.uniform(1.5, 3.5);
        o.x = rng.uniform(0.08 * A, 0.92 * A);
        o.y = rng.uniform(obj_lo, obj_hi);
        o.vx = rng.uniform(-cfg.speed_max, cfg.speed_max);
        o.vy = rng.uniform(-cfg.speed_max, cfg.speed_max);
    }

    Scenario scenario;
    scenario.frames.resize(cfg.timesteps);
    std::vector<int> prev_collab;
    for (int t = 0; t < cfg.timesteps; ++t) {
        SceneFrame& frame = scenario.frames[t];
        if (t > 0) {
            for (MovingBox& a : agents) {
                bounce(a.x, a.vx, 0.15 * A, 0.85 * A);
            }
            for (MovingBox& o : objects) {
                bounce(o.x, o.vx, 0.08 * A, 0.92 * A);
                bounce(o.y, o.vy, obj_lo, obj_hi);
            }
        }
        frame.agent_poses.resize(cfg.n_agents);
        for (int i = 0; i < cfg.n_agents; ++i) {
            frame.agent_poses[i] = {agents[i].x, agents[i].y, 0.0};
        }

        // Scripted boxes ride along with agent 0 so their visibility class is
        // the same every tick.
        const double ax = agents[0].x;
        const double ay = agents[0].y;
        frame.objects.resize(kScripted + objects.size());
        frame.objects[kNearPlant].box = {ax + 3.0, ay, 2.0, 2.0};
        frame.objects[kOccluder].box = {ax + 6.0, ay, 1.6, 1.6};
        frame.objects[kRelayPlant].box = {ax + 8.5, ay, 2.0, 2.0};
        frame.objects[kFarPlant].box = {0.5 * A, 0.9 * A, 2.0, 2.0};
        frame.objects[kBlinker].box = (t % 2 == 0)
                                          ? geom::BevBox{ax - 3.0, ay, 2.0, 2.0}
                                          : geom::BevBox{0.1 * A, 0.9 * A, 2.0, 2.0};
        for (std::size_t i = 0; i < objects.size(); ++i) {
            frame.objects[kScripted + i].box = {objects[i].x, objects[i].y,
                                                objects[i].w, objects[i].h};
        }

        for (std::size_t o = 0; o < frame.objects.size(); ++o) {
            SceneObject& obj = frame.objects[o];
            obj.points.resize(cfg.n_agents);
            obj.points_collab = 0;
            for (int i = 0; i < cfg.n_agents; ++i) {
                obj.points[i] = visible_points(frame.agent_poses[i], frame, o, cfg);
                obj.points_collab = std::max(obj.points_collab, obj.points[i]);
            }
        }
        // Temporal-cue labels: collaboratively visible a tick ago, invisible
        // to everyone now.
        for (std::size_t o = 0; o < frame.objects.size(); ++o) {
            SceneObject& obj = frame.objects[o];
            if (t > 0 && obj.points_collab <= cfg.tau && prev_collab[o] > cfg.tau) {
                obj.manual_label = metrics::ObjectType::ARTC;
            }
        }
        prev_collab.resize(frame.objects.size());
        for (std::size_t o = 0; o < frame.objects.size(); ++o) {
            prev_collab[o] = frame.objects[o].points_collab;
        }
    }
    return scenario;
}

FeatureGrid rasterize_bev(const SceneFrame& frame, int timestep, int agent,
                          const ScenarioConfig& cfg) {
    FeatureGrid bev(cfg.bev_channels, cfg.grid_h, cfg.grid_w);
    const geom::Pose2 world_to_ego = geom::inverse(frame.agent_poses[agent]);
    const std::size_t hw = bev.plane();

    auto mark = [&](double wx, double wy, int slab) {
        double ex, ey;
        geom::apply(world_to_ego, wx, wy, ex, ey);
        const int gx = static_cast<int>(std::floor(ex / cfg.cell_size + 0.5 * cfg.grid_w));
        const int gy = static_cast<int>(std::floor(ey / cfg.cell_size + 0.5 * cfg.grid_h));
        if (gx < 0 || gx >= cfg.grid_w || gy < 0 || gy >= cfg.grid_h) return;
        bev.data[static_cast<std::size_t>(slab) * hw +
                 static_cast<std::size_t>(gy) * cfg.grid_w + gx] = 1.0;
    };

    for (std::size_t o = 0; o < frame.objects.size(); ++o) {
        const SceneObject& obj = frame.objects[o];
        const int pts = obj.points[agent];
        if (pts <= 0) continue;
        Rng rng(mix(mix(cfg.seed, 0x0b7ec7u), mix(static_cast<std::uint64_t>(timestep),
                                                  mix(agent, o))));
        for (int k = 0; k < pts; ++k) {
            const double px = obj.box.cx + (rng.next_double() - 0.5) * obj.box.w;
            const double py = obj.box.cy + (rng.next_double() - 0.5) * obj.box.h;
            const int slab = static_cast<int>(rng.next_double() * cfg.bev_channels);
            mark(px, py, std::min(slab, cfg.bev_channels - 1));
        }
    }

    // Ground clutter, drawn per cell so the texture is dense and stable.
    if (cfg.clutter_density > 0.0) {
        const std::uint64_t base =
            mix(mix(cfg.seed, 0xc1a77e5u), mix(static_cast<std::uint64_t>(timestep), agent));
        for (int y = 0; y < cfg.grid_h; ++y) {
            for (int x = 0; x < cfg.grid_w; ++x) {
                const std::uint64_t h = splitmix64(base + static_cast<std::uint64_t>(y) * cfg.grid_w + x);
                const double u = static_cast<double>(h & 0xffffffu) / static_cast<double>(0x1000000u);
                if (u < cfg.clutter_density) {
                    const int slab = static_cast<int>((h >> 24) % static_cast<std::uint64_t>(cfg.bev_channels));
                    bev.data[static_cast<std::size_t>(slab) * hw +
                             static_cast<std::size_t>(y) * cfg.grid_w + x] = 1.0;
                }
            }
        }
    }
    return bev;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad number '" + v + "'");
    }
}

long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': bad bool '" + v + "'");
}

mgfe::ResolutionLadder parse_ladder(const std::string& key, const std::string& v) {
    mgfe::ResolutionLadder ladder;
    ladder.levels.clear();
    for (const std::string& part : split(v, ',')) {
        const std::vector<std::string> dims = split(trim(part), 'x');
        if (dims.size() != 3) {
            throw ConfigError("config key '" + key + "': ladder level '" + part +
                              "' must look like CxHxW");
        }
        ladder.levels.push_back({static_cast<int>(parse_int(key, trim(dims[0]))),
                                 static_cast<int>(parse_int(key, trim(dims[1]))),
                                 static_cast<int>(parse_int(key, trim(dims[2])))});
    }
    return ladder;
}

void apply_key(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "n_agents") cfg.n_agents = static_cast<int>(parse_int(key, value));
    else if (key == "n_objects") cfg.n_objects = static_cast<int>(parse_int(key, value));
    else if (key == "timesteps") cfg.timesteps = static_cast<int>(parse_int(key, value));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "cell_size") cfg.cell_size = parse_double(key, value);
    else if (key == "bev_channels") cfg.bev_channels = static_cast<int>(parse_int(key, value));
    else if (key == "grid_h") cfg.grid_h = static_cast<int>(parse_int(key, value));
    else if (key == "grid_w") cfg.grid_w = static_cast<int>(parse_int(key, value));
    else if (key == "ladder") cfg.ladder = parse_ladder(key, value);
    else if (key == "delta_s") cfg.delta_s = parse_double(key, value);
    else if (key == "delta_c") cfg.delta_c = parse_double(key, value);
    else if (key == "selection_mode") {
        if (value == "topk") cfg.selection_mode = entropy::ThresholdMode::TopK;
        else if (value == "mean") cfg.selection_mode = entropy::ThresholdMode::Mean;
        else throw ConfigError("config key 'selection_mode': want topk|mean, got '" + value + "'");
    }
    else if (key == "selection_enabled") cfg.selection_enabled = parse_bool(key, value);
    else if (key == "min_cells") cfg.min_cells = static_cast<int>(parse_int(key, value));
    else if (key == "rbf_radius") cfg.rbf_radius = static_cast<int>(parse_int(key, value));
    else if (key == "rbf_include_unobserved") cfg.rbf_include_unobserved = parse_bool(key, value);
    else if (key == "tau") cfg.tau = static_cast<int>(parse_int(key, value));
    else if (key == "iou_thresholds") {
        cfg.iou_thresholds.clear();
        for (const std::string& part : split(value, ',')) {
            cfg.iou_thresholds.push_back(parse_double(key, trim(part)));
        }
    }
    else if (key == "score_threshold") cfg.score_threshold = parse_double(key, value);
    else if (key == "nms_iou") cfg.nms_iou = parse_double(key, value);
    else if (key == "area_extent") cfg.area_extent = parse_double(key, value);
    else if (key == "sensing_range") cfg.sensing_range = parse_double(key, value);
    else if (key == "point_budget") cfg.point_budget = parse_double(key, value);
    else if (key == "point_decay") cfg.point_decay = parse_double(key, value);
    else if (key == "speed_max") cfg.speed_max = parse_double(key, value);
    else if (key == "clutter_density") cfg.clutter_density = parse_double(key, value);
    else if (key == "threads") cfg.threads = static_cast<int>(parse_int(key, value));
    else if (key == "params_file") cfg.params_file = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

ScenarioConfig parse_config_text(const std::string& text) {
    ScenarioConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key=value");
        }
        apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string manifest_json(const ScenarioConfig& cfg, std::uint64_t param_fp) {
    nlohmann::ordered_json j;
    j["format"] = "umc-run-manifest";
    j["version"] = 1;
    nlohmann::ordered_json c;
    c["n_agents"] = cfg.n_agents;
    c["n_objects"] = cfg.n_objects;
    c["timesteps"] = cfg.timesteps;
    c["seed"] = cfg.seed;
    c["cell_size"] = cfg.cell_size;
    c["bev_channels"] = cfg.bev_channels;
    c["grid_h"] = cfg.grid_h;
    c["grid_w"] = cfg.grid_w;
    std::string ladder;
    for (std::size_t i = 0; i < cfg.ladder.levels.size(); ++i) {
        const mgfe::LevelSpec& l = cfg.ladder.levels[i];
        if (i) ladder += ",";
        ladder += std::to_string(l.channels) + "x" + std::to_string(l.height) + "x" +
                  std::to_string(l.width);
    }
    c["ladder"] = ladder;
    c["delta_s"] = cfg.delta_s;
    c["delta_c"] = cfg.delta_c;
    c["selection_mode"] =
        cfg.selection_mode == entropy::ThresholdMode::TopK ? "topk" : "mean";
    c["selection_enabled"] = cfg.selection_enabled;
    c["min_cells"] = cfg.min_cells;
    c["rbf_radius"] = cfg.rbf_radius;
    c["rbf_include_unobserved"] = cfg.rbf_include_unobserved;
    c["tau"] = cfg.tau;
    c["iou_thresholds"] = cfg.iou_thresholds;
    c["score_threshold"] = cfg.score_threshold;
    c["nms_iou"] = cfg.nms_iou;
    c["area_extent"] = cfg.area_extent;
    c["sensing_range"] = cfg.sensing_range;
    c["point_budget"] = cfg.point_budget;
    c["point_decay"] = cfg.point_decay;
    c["speed_max"] = cfg.speed_max;
    c["clutter_density"] = cfg.clutter_density;
    c["threads"] = cfg.threads;
    c["params_file"] = cfg.params_file;
    j["config"] = c;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(param_fp));
    j["param_fingerprint"] = buf;
    return j.dump(2) + "\n";
}

ScenarioConfig config_from_manifest(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object()) {
        throw ConfigError("manifest has no config object");
    }
    ScenarioConfig cfg;
    for (const auto& [key, value] : j["config"].items()) {
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_boolean()) {
            text = value.get<bool>() ? "true" : "false";
        } else if (value.is_array()) {
            for (std::size_t i = 0; i < value.size(); ++i) {
                if (i) text += ",";
                text += nlohmann::json(value[i]).dump();
            }
        } else {
            text = value.dump();
        }
        apply_key(cfg, key, text);
    }
    cfg.validate();
    return cfg;
}

}  // namespace umc::sim
