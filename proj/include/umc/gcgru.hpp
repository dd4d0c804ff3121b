#pragma once

#include <string>
#include <vector>

#include "umc/geometry.hpp"
#include "umc/params.hpp"
#include "umc/tensor.hpp"

namespace umc::gcgru {

// Recurrent per-agent memory: one hidden grid per resolution level, plus the
// pose and timestep the memory was written at. States only ever advance one
// tick; larger gaps raise StaleStateError instead of extrapolating.
struct AgentState {
    std::vector<FeatureGrid> hidden;
    geom::Pose2 pose;
    int last_timestep = -1;

    static AgentState zeros(const std::vector<FeatureGrid>& like);
    void commit(int timestep, const geom::Pose2& new_pose,
                std::vector<FeatureGrid> new_hidden);
};

// A collaborator's interpolated feature grid, already aligned to the ego
// frame. agent_id fixes the canonical aggregation order.
struct NeighborFeature {
    int agent_id = 0;
    FeatureGrid feature;
};

// Optional window into collab_step internals for property checks.
struct CollabDiagnostics {
    std::vector<FeatureGrid> normalized_weights;  // softmax stack, ego first
    FeatureGrid aligned_hidden;                   // pose-compensated h
    FeatureGrid aggregated;                       // weighted neighbor sum
    FeatureGrid update_gate;
};

struct CollabResult {
    FeatureGrid fused;       // gated mix of aggregate and aligned hidden
    FeatureGrid new_hidden;  // conv of fused, to commit for the next tick
};

// Convolutional gate shared by reset and update: the mixing coefficient is
// sigmoid(conv3x3([h; f])), and the gate value is
// sigmoid(coeff*h + (1-coeff)*f). Conv weights live at "<prefix>.w"/".b".
FeatureGrid gate_forward(const FeatureGrid& h, const FeatureGrid& f,
                         const ParamSet& params, const std::string& prefix);

// Scores one collaborator against the ego: four 1x1 convs with ReLU collapse
// [h_reset; neighbor; ego] (3C channels) down to a single-channel map.
// Layers are "<prefix>.1" .. "<prefix>.4".
FeatureGrid edge_weight(const FeatureGrid& h_reset, const FeatureGrid& neighbor,
                        const FeatureGrid& ego, const ParamSet& params,
                        const std::string& prefix);

// One fusion step at one resolution level. Aligns the hidden state by
// pose_delta, computes reset/update gates, scores every stack member (the ego
// plus each neighbor, neighbors processed in ascending agent id regardless of
// input order), normalizes the scores per cell, aggregates, and mixes with
// the aligned hidden. With no neighbors the aggregate is the zero grid.
CollabResult collab_step(const AgentState& state, const FeatureGrid& f_ego,
                         const std::vector<NeighborFeature>& neighbors,
                         const geom::Pose2& pose_delta, const ParamSet& params,
                         int level, double cell_size,
                         CollabDiagnostics* diag = nullptr);

}  // namespace umc::gcgru
