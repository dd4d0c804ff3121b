#include <algorithm>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "umc/errors.hpp"
#include "umc/gcgru.hpp"
#include "umc/interpolation.hpp"
#include "umc/simulator.hpp"
#include "umc/wire.hpp"

namespace umc::sim {
namespace {

constexpr std::uint16_t kBroadcastReceiver = 0xffff;

int resolve_threads(const ScenarioConfig& cfg) {
    if (cfg.threads > 0) return cfg.threads;
    const char* env = std::getenv("UMC_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 256) {
        throw ConfigError(std::string("UMC_THREADS must be a small positive "
                                      "integer, got '") + env + "'");
    }
    return static_cast<int>(v);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += workers) fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

entropy::QueryMatrix warp_query(const entropy::QueryMatrix& q,
                                const geom::Pose2& t, double cell_size) {
    FeatureGrid g(1, q.height, q.width);
    g.data = q.data;
    FeatureGrid warped = geom::warp_grid(g, t, cell_size);
    entropy::QueryMatrix out(q.height, q.width);
    out.data = std::move(warped.data);
    return out;
}

// Everything one ego produces at one tick, kept local to the worker and
// merged in ego order afterwards so threading cannot reorder output.
struct EgoWork {
    wire::CommLedger ledger;
    std::vector<TransferStat> transfers;
    std::uint64_t encoded = 0;
    std::uint64_t decoded = 0;
    metrics::FrameSample sample;
    std::string det_line;
    std::string gt_line;
};

}  // namespace

EpisodeReport run_episode(const ScenarioConfig& cfg, const ParamSet& params,
                          const std::string& dump_dir) {
    cfg.validate();
    const Scenario scenario = gen_scenario(cfg);
    const int n = cfg.n_agents;
    const std::size_t n_levels = cfg.ladder.levels.size();
    const int threads = resolve_threads(cfg);
    const double lambda = params.get("rbf.lambda").scalar();
    if (!dump_dir.empty()) {
        std::filesystem::create_directories(dump_dir);
    }

    // Meters per cell at each ladder level; all levels cover the same extent.
    std::vector<double> level_cell(n_levels);
    for (std::size_t j = 0; j < n_levels; ++j) {
        level_cell[j] = cfg.cell_size * cfg.grid_h / cfg.ladder.levels[j].height;
    }
    const double cell_fine = level_cell.back();

    std::vector<gcgru::AgentState> states(n);
    {
        std::vector<FeatureGrid> like;
        for (const mgfe::LevelSpec& l : cfg.ladder.levels) {
            like.emplace_back(l.channels, l.height, l.width);
        }
        for (int i = 0; i < n; ++i) {
            states[i] = gcgru::AgentState::zeros(like);
        }
    }

    EpisodeReport report;
    report.frames.resize(static_cast<std::size_t>(cfg.timesteps) * n);
    std::string det_out, gt_out;
    wire::CommLedger ledger;

    for (int t = 0; t < cfg.timesteps; ++t) {
        const SceneFrame& frame = scenario.frames[t];

        // Stage A: every agent encodes its own view and summarizes it.
        std::vector<std::vector<FeatureGrid>> feats(n);
        std::vector<std::vector<entropy::QueryMatrix>> queries(n);
        std::vector<std::vector<entropy::SelectionMask>> self_masks(n);
        parallel_for(n, threads, [&](int a) {
            const FeatureGrid bev = rasterize_bev(frame, t, a, cfg);
            feats[a] = encoder_forward(bev, params, cfg);
            queries[a].resize(n_levels);
            self_masks[a].resize(n_levels);
            for (std::size_t j = 0; j < n_levels; ++j) {
                if (cfg.selection_enabled) {
                    queries[a][j] = entropy::make_query(
                        feats[a][j], params, "query.l" + std::to_string(j));
                    self_masks[a][j] = entropy::self_select(
                        queries[a][j], cfg.delta_s, cfg.selection_mode);
                } else {
                    self_masks[a][j] = entropy::SelectionMask::full(
                        feats[a][j].height, feats[a][j].width);
                }
            }
        });

        // Stage B: every ego requests, receives, fuses, and detects.
        std::vector<EgoWork> work(n);
        parallel_for(n, threads, [&](int i) {
            EgoWork& w = work[i];
            const geom::Pose2& pose_i = frame.agent_poses[i];

            if (cfg.selection_enabled) {
                // The query itself is broadcast to every collaborator; it is
                // bandwidth, not payload, so it is logged without a packet.
                for (std::size_t j = 0; j < n_levels; ++j) {
                    const mgfe::LevelSpec& l = cfg.ladder.levels[j];
                    wire::SparsePacket qp;
                    qp.meta = {static_cast<std::uint16_t>(i), kBroadcastReceiver,
                               static_cast<std::uint32_t>(t),
                               static_cast<std::uint16_t>(j)};
                    qp.height = static_cast<std::uint16_t>(l.height);
                    qp.width = static_cast<std::uint16_t>(l.width);
                    qp.channels = static_cast<std::uint16_t>(l.channels);
                    wire::record_transfer(
                        w.ledger, i, kBroadcastReceiver, t, qp,
                        static_cast<std::uint64_t>(l.height) * l.width);
                }
            }

            std::vector<std::vector<gcgru::NeighborFeature>> neighbors(n_levels);
            for (int k = 0; k < n; ++k) {
                if (k == i) continue;
                const geom::Pose2& pose_k = frame.agent_poses[k];
                for (std::size_t j = 0; j < n_levels; ++j) {
                    entropy::SelectionMask mask;
                    if (!cfg.selection_enabled) {
                        mask = entropy::SelectionMask::full(
                            feats[k][j].height, feats[k][j].width);
                    } else {
                        if (entropy::should_skip(self_masks[k][j], cfg.min_cells)) {
                            continue;
                        }
                        const entropy::QueryMatrix q_i_in_k = warp_query(
                            queries[i][j], geom::relative_pose(pose_i, pose_k),
                            level_cell[j]);
                        mask = entropy::cross_select(q_i_in_k, queries[k][j],
                                                     self_masks[k][j], cfg.delta_c,
                                                     cfg.selection_mode);
                        if (entropy::should_skip(mask, cfg.min_cells)) {
                            continue;
                        }
                    }

                    wire::PacketMeta meta{static_cast<std::uint16_t>(k),
                                          static_cast<std::uint16_t>(i),
                                          static_cast<std::uint32_t>(t),
                                          static_cast<std::uint16_t>(j)};
                    const wire::SparsePacket packet =
                        wire::gather(feats[k][j], mask, meta);
                    const std::vector<std::uint8_t> bytes = wire::encode(packet);
                    w.encoded += packet.scalar_count();
                    if (!dump_dir.empty()) {
                        wire::save_packet(
                            packet, dump_dir + "/t" + std::to_string(t) + "_s" +
                                        std::to_string(k) + "_r" + std::to_string(i) +
                                        "_l" + std::to_string(j) + ".umcw");
                    }
                    const wire::SparsePacket rx = wire::decode(bytes);
                    w.decoded += rx.scalar_count();
                    wire::record_transfer(w.ledger, k, i, t, rx, 0);
                    w.transfers.push_back(
                        {k, i, t, static_cast<int>(j),
                         static_cast<int>(rx.entries.size()),
                         static_cast<int>(rx.height) * rx.width});

                    const interp::MaskedGrid mg = interp::scatter_to_grid(rx);
                    const FeatureGrid filled = interp::rbf_interpolate(
                        mg, cfg.rbf_radius, lambda, cfg.rbf_include_unobserved);
                    FeatureGrid aligned = geom::warp_grid(
                        filled, geom::relative_pose(pose_k, pose_i), level_cell[j]);
                    neighbors[j].push_back({k, std::move(aligned)});
                }
            }

            const geom::Pose2 pose_delta =
                states[i].last_timestep < 0
                    ? geom::Pose2{}
                    : geom::relative_pose(states[i].pose, pose_i);
            std::vector<FeatureGrid> fused(n_levels);
            std::vector<FeatureGrid> new_hidden(n_levels);
            for (std::size_t j = 0; j < n_levels; ++j) {
                gcgru::CollabResult res = gcgru::collab_step(
                    states[i], feats[i][j], neighbors[j], pose_delta, params,
                    static_cast<int>(j), level_cell[j]);
                fused[j] = std::move(res.fused);
                new_hidden[j] = std::move(res.new_hidden);
            }
            const FeatureGrid d =
                mgfe::mgfe_forward(feats[i], fused, params, cfg.ladder);

            mgfe::HeadConfig head{cfg.score_threshold, cfg.nms_iou, cell_fine};
            mgfe::DetectionOutput dets = mgfe::detect_head(d, params, head);
            for (mgfe::Detection& det : dets.boxes) {
                double wx, wy;
                geom::apply(pose_i, det.box.cx, det.box.cy, wx, wy);
                det.box.cx = wx;
                det.box.cy = wy;
            }

            const int frame_id = t * n + i;
            nlohmann::ordered_json dj;
            dj["frame"] = frame_id;
            dj["agent"] = i;
            nlohmann::ordered_json boxes = nlohmann::ordered_json::array();
            for (const mgfe::Detection& det : dets.boxes) {
                boxes.push_back({det.box.cx, det.box.cy, det.box.w, det.box.h,
                                 det.score});
            }
            dj["boxes"] = boxes;
            w.det_line = dj.dump() + "\n";

            nlohmann::ordered_json gj;
            gj["frame"] = frame_id;
            gj["agent"] = i;
            nlohmann::ordered_json objs = nlohmann::ordered_json::array();
            w.sample.preds = dets.boxes;
            for (const SceneObject& obj : frame.objects) {
                metrics::GtObject gt;
                gt.box = obj.box;
                gt.points_single_view = obj.points[i];
                gt.points_collab_view = obj.points_collab;
                gt.manual_label = obj.manual_label;
                w.sample.gts.push_back(gt);
                nlohmann::ordered_json o;
                o["box"] = {obj.box.cx, obj.box.cy, obj.box.w, obj.box.h};
                o["points_sv"] = obj.points[i];
                o["points_cv"] = obj.points_collab;
                if (obj.manual_label) {
                    o["label"] = metrics::to_string(*obj.manual_label);
                }
                objs.push_back(o);
            }
            gj["objects"] = objs;
            w.gt_line = gj.dump() + "\n";

            states[i].commit(t, pose_i, std::move(new_hidden));
        });

        for (int i = 0; i < n; ++i) {
            EgoWork& w = work[i];
            for (const auto& [key, cell] : w.ledger.cells) {
                wire::CommLedger::Cell& dst = ledger.cells[key];
                dst.f_scalars += cell.f_scalars;
                dst.q_scalars += cell.q_scalars;
            }
            report.transfers.insert(report.transfers.end(), w.transfers.begin(),
                                    w.transfers.end());
            report.encoded_scalars += w.encoded;
            report.decoded_scalars += w.decoded;
            report.frames[static_cast<std::size_t>(t) * n + i] = std::move(w.sample);
            det_out += w.det_line;
            gt_out += w.gt_line;
        }
    }

    report.detections_jsonl = std::move(det_out);
    report.gt_jsonl = std::move(gt_out);
    report.metrics_csv =
        metrics::metrics_csv(report.frames, cfg.tau, cfg.iou_thresholds);
    report.ledger_csv = wire::ledger_csv(ledger);
    report.manifest = manifest_json(cfg, fingerprint(params));
    report.comm_volume = wire::communication_volume(ledger);
    if (!report.transfers.empty()) {
        double acc = 0.0;
        for (const TransferStat& ts : report.transfers) {
            acc += static_cast<double>(ts.cells) / ts.grid_cells;
        }
        report.mean_selected_fraction = acc / report.transfers.size();
    }
    return report;
}

}  // namespace umc::sim
