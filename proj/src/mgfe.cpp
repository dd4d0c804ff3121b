#include "umc/mgfe.hpp"

#include <algorithm>

#include "umc/errors.hpp"

namespace umc::mgfe {

void ResolutionLadder::validate() const {
    if (levels.size() < 2) {
        throw ConfigError("resolution ladder needs at least two levels");
    }
    for (const LevelSpec& l : levels) {
        if (l.channels < 1 || l.height < 1 || l.width < 1) {
            throw ConfigError("resolution ladder has a degenerate level");
        }
    }
    for (std::size_t j = 1; j < levels.size(); ++j) {
        const LevelSpec& coarse = levels[j - 1];
        const LevelSpec& fine = levels[j];
        if (fine.channels * 2 != coarse.channels || fine.height != 2 * coarse.height ||
            fine.width != 2 * coarse.width) {
            throw ConfigError("ladder level " + std::to_string(j) +
                              " must halve channels and double both sides");
        }
    }
}

FeatureGrid stage_one(const FeatureGrid& fused, const FeatureGrid& ego,
                      const ParamSet& params, const std::string& prefix) {
    if (!fused.same_shape(ego)) {
        throw ShapeError("stage_one: fused and ego shapes differ");
    }
    const FeatureGrid guidance = tensor::channel_max(
        tensor::sigmoid(tensor::conv2d(fused, params.conv(prefix + ".guide"), 1, 0)));
    return tensor::scale_by_map(guidance, ego);
}

FeatureGrid stage_two(const FeatureGrid& coarse, const FeatureGrid& guided,
                      const FeatureGrid& fused, const ParamSet& params,
                      const std::string& prefix) {
    if (!guided.same_shape(fused)) {
        throw ShapeError("stage_two: guided and fused shapes differ");
    }
    const FeatureGrid up = tensor::upsample2x(coarse);
    if (up.height != guided.height || up.width != guided.width) {
        throw ShapeError("stage_two: upsampled coarse grid does not match fine dims");
    }
    const FeatureGrid n_coarse =
        tensor::l2norm_channels(up, params.get(prefix + ".n_coarse").data);
    const FeatureGrid n_guided =
        tensor::l2norm_channels(guided, params.get(prefix + ".n_guided").data);
    const FeatureGrid n_fused =
        tensor::l2norm_channels(fused, params.get(prefix + ".n_fused").data);
    const FeatureGrid cat = tensor::concat_channels({&n_coarse, &n_guided, &n_fused});
    const tensor::ConvWeights cw = params.conv(prefix + ".fuse");
    return tensor::sigmoid(tensor::conv2d(cat, cw, 1, cw.kh / 2));
}

FeatureGrid mgfe_forward(const std::vector<FeatureGrid>& ego_feats,
                         const std::vector<FeatureGrid>& fused_maps,
                         const ParamSet& params, const ResolutionLadder& ladder) {
    ladder.validate();
    if (ego_feats.size() != ladder.size() || fused_maps.size() != ladder.size()) {
        throw ShapeError("mgfe_forward: need one ego and one fused grid per level");
    }
    for (std::size_t j = 0; j < ladder.size(); ++j) {
        const LevelSpec& l = ladder.levels[j];
        if (ego_feats[j].channels != l.channels || ego_feats[j].height != l.height ||
            ego_feats[j].width != l.width || !ego_feats[j].same_shape(fused_maps[j])) {
            throw ShapeError("mgfe_forward: level " + std::to_string(j) +
                             " grids do not match the ladder");
        }
    }
    FeatureGrid out;
    for (std::size_t j = 1; j < ladder.size(); ++j) {
        const std::string prefix = "mgfe.l" + std::to_string(j);
        const FeatureGrid guided = stage_one(fused_maps[j], ego_feats[j], params, prefix);
        out = stage_two(ego_feats[j - 1], guided, fused_maps[j], params, prefix);
    }
    return out;
}

DetectionOutput detect_head(const FeatureGrid& d, const ParamSet& params,
                            const HeadConfig& cfg) {
    if (cfg.cell_size <= 0.0) {
        throw ConfigError("detect_head: cell_size must be positive");
    }
    const FeatureGrid scores =
        tensor::sigmoid(tensor::conv2d(d, params.conv("head.score"), 1, 0));
    const FeatureGrid deltas = tensor::conv2d(d, params.conv("head.box"), 1, 0);
    if (scores.channels != 1 || deltas.channels != 4) {
        throw ParamError("detect_head: head branches must emit 1 and 4 channels");
    }

    std::vector<Detection> cand;
    const std::size_t hw = scores.plane();
    const double half_w = 0.5 * d.width * cfg.cell_size;
    const double half_h = 0.5 * d.height * cfg.cell_size;
    for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * d.width + x;
            const double score = scores.data[p];
            if (score < cfg.score_threshold) continue;
            const double w = deltas.data[2 * hw + p];
            const double h = deltas.data[3 * hw + p];
            if (w <= 0.0 || h <= 0.0) continue;
            Detection det;
            det.box.cx = (x + 0.5) * cfg.cell_size - half_w + deltas.data[0 * hw + p];
            det.box.cy = (y + 0.5) * cfg.cell_size - half_h + deltas.data[1 * hw + p];
            det.box.w = w;
            det.box.h = h;
            det.score = score;
            cand.push_back(det);
        }
    }
    // Stable sort keeps row-major order among equal scores, so NMS (and the
    // final output order) is deterministic.
    std::stable_sort(cand.begin(), cand.end(),
                     [](const Detection& a, const Detection& b) {
                         return a.score > b.score;
                     });
    DetectionOutput out;
    for (const Detection& det : cand) {
        bool keep = true;
        for (const Detection& kept : out.boxes) {
            if (geom::iou(det.box, kept.box) > cfg.nms_iou) {
                keep = false;
                break;
            }
        }
        if (keep) out.boxes.push_back(det);
    }
    return out;
}

}  // namespace umc::mgfe
