#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "umc/entropy_cs.hpp"
#include "umc/geometry.hpp"
#include "umc/metrics.hpp"
#include "umc/mgfe.hpp"
#include "umc/params.hpp"
#include "umc/tensor.hpp"

namespace umc::sim {

// Everything a run depends on. Defaults are desk-scale: small grids, a few
// agents, a couple of seconds to simulate end to end.
struct ScenarioConfig {
    int n_agents = 4;
    int n_objects = 10;  // free-roaming objects, on top of the scripted ones
    int timesteps = 20;
    std::uint64_t seed = 7;

    double cell_size = 0.25;  // meters per BEV cell
    int bev_channels = 8;     // height slabs
    int grid_h = 64;
    int grid_w = 64;
    mgfe::ResolutionLadder ladder{{{64, 8, 8}, {32, 16, 16}}};

    double delta_s = 1.0;
    double delta_c = 1.0;
    entropy::ThresholdMode selection_mode = entropy::ThresholdMode::TopK;
    bool selection_enabled = true;
    int min_cells = 1;

    int rbf_radius = 7;
    bool rbf_include_unobserved = true;

    int tau = 4;
    std::vector<double> iou_thresholds = {0.5, 0.7};
    double score_threshold = 0.55;
    double nms_iou = 0.5;

    double area_extent = 40.0;    // scene square side, meters
    double sensing_range = 12.0;  // beyond this an object returns no points
    double point_budget = 40.0;   // points at zero distance
    double point_decay = 0.6;     // hyperbolic falloff with distance
    double speed_max = 2.0;       // object speed cap, meters per tick
    double clutter_density = 0.3; // ground-return probability per cell

    int threads = 0;  // 0: UMC_THREADS env var, else 1
    std::string params_file;

    void validate() const;
};

// Flat key=value text (''#'' comments). Unknown keys are errors.
ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig load_config(const std::string& path);

// Manifest round-trip: the manifest JSON embeds the full config, so a run
// directory can reproduce itself byte for byte.
std::string manifest_json(const ScenarioConfig& cfg, std::uint64_t param_fp);
ScenarioConfig config_from_manifest(const std::string& json_text);

// One object as seen at one tick: world box, per-agent visible point counts,
// the combined count, and the generator's temporal-cue label when the object
// just dropped off everyone's view.
struct SceneObject {
    geom::BevBox box;
    std::vector<int> points;
    int points_collab = 0;
    std::optional<metrics::ObjectType> manual_label;
};

struct SceneFrame {
    std::vector<geom::Pose2> agent_poses;
    std::vector<SceneObject> objects;
};

struct Scenario {
    std::vector<SceneFrame> frames;
};

// Deterministic synthetic scene: agents on parallel tracks, free objects
// bouncing in a separate band, plus scripted objects that guarantee each
// visibility class is populated (a near object, an occluded-but-relayed
// object, an out-of-range object, and a blinker that vanishes on odd ticks).
Scenario gen_scenario(const ScenarioConfig& cfg);

// Binary occupancy rasterization of one frame from one agent's viewpoint,
// with deterministic pseudo-points per visible object plus ground clutter.
FeatureGrid rasterize_bev(const SceneFrame& frame, int timestep, int agent,
                          const ScenarioConfig& cfg);

// Shared conv encoder (stem + stride-2 stack derived from the ladder); the
// returned grids follow the ladder order, coarsest first.
std::vector<FeatureGrid> encoder_forward(const FeatureGrid& bev,
                                         const ParamSet& params,
                                         const ScenarioConfig& cfg);

// Seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization of every
// named weight the pipeline looks up; norm scales start at 10, the
// interpolation bandwidth at 1.
ParamSet default_params(const ScenarioConfig& cfg);

struct TransferStat {
    int sender = 0;
    int receiver = 0;
    int timestep = 0;
    int level = 0;
    int cells = 0;       // transmitted cells
    int grid_cells = 0;  // cells in a full grid at that level
};

struct EpisodeReport {
    std::string detections_jsonl;
    std::string gt_jsonl;
    std::string metrics_csv;
    std::string ledger_csv;
    std::string manifest;
    double comm_volume = 0.0;
    double mean_selected_fraction = 0.0;  // over feature transfers
    std::vector<TransferStat> transfers;
    std::uint64_t encoded_scalars = 0;
    std::uint64_t decoded_scalars = 0;
    std::vector<metrics::FrameSample> frames;  // one per (tick, ego)
};

// Full message path per tick and ego: encode, summarize, select, transmit,
// interpolate, align, fuse, reconstruct, detect; ledger updated on every
// transfer. dump_dir, when non-empty, receives every wire packet as
// t<k>_s<sender>_r<receiver>_l<level>.umcw.
EpisodeReport run_episode(const ScenarioConfig& cfg, const ParamSet& params,
                          const std::string& dump_dir = "");

}  // namespace umc::sim
