#pragma once

#include <string>
#include <vector>

#include "umc/geometry.hpp"
#include "umc/params.hpp"
#include "umc/tensor.hpp"

namespace umc::mgfe {

// Feature pyramid description, coarsest level first. Each finer level halves
// the channels and doubles both spatial sides.
struct LevelSpec {
    int channels = 0;
    int height = 0;
    int width = 0;
};

struct ResolutionLadder {
    std::vector<LevelSpec> levels;

    void validate() const;
    std::size_t size() const { return levels.size(); }
};

// Guidance gating: a 1x1 conv on the fused map, squashed and collapsed to a
// single-channel attention map by a per-pixel channel max, then broadcast-
// multiplied into the ego feature.
FeatureGrid stage_one(const FeatureGrid& fused, const FeatureGrid& ego,
                      const ParamSet& params, const std::string& prefix);

// Cross-resolution mix: upsample the coarser operand 2x, L2-normalize all
// three operands per pixel, concatenate, and squash a 3x3 conv of the stack.
FeatureGrid stage_two(const FeatureGrid& coarse, const FeatureGrid& guided,
                      const FeatureGrid& fused, const ParamSet& params,
                      const std::string& prefix);

// Walks the ladder coarse to fine. The coarsest level passes its ego feature
// through as the coarse operand; every finer level applies stage_one to its
// fused map and stage_two against the previous level's ego feature. Returns
// the finest-level reconstruction.
FeatureGrid mgfe_forward(const std::vector<FeatureGrid>& ego_feats,
                         const std::vector<FeatureGrid>& fused_maps,
                         const ParamSet& params, const ResolutionLadder& ladder);

struct Detection {
    geom::BevBox box;
    double score = 0.0;
};

struct DetectionOutput {
    std::vector<Detection> boxes;  // sorted by descending score
};

struct HeadConfig {
    double score_threshold = 0.5;
    double nms_iou = 0.5;
    double cell_size = 0.25;  // metric size of one cell at the head's level
};

// Two 1x1 conv branches: sigmoid scores and (dx, dy, w, h) regression decoded
// against each cell's metric center (ego-centered grid). Cells under the
// score threshold or with non-positive extent are dropped; survivors pass
// greedy NMS in score order (IoU strictly above nms_iou suppresses).
DetectionOutput detect_head(const FeatureGrid& d, const ParamSet& params,
                            const HeadConfig& cfg);

}  // namespace umc::mgfe
