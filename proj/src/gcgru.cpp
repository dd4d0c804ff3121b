#include "umc/gcgru.hpp"

#include <algorithm>

#include "umc/errors.hpp"
#include "umc/kernels.hpp"

namespace umc::gcgru {

AgentState AgentState::zeros(const std::vector<FeatureGrid>& like) {
    AgentState s;
    s.hidden.reserve(like.size());
    for (const FeatureGrid& g : like) {
        s.hidden.emplace_back(g.channels, g.height, g.width);
    }
    return s;
}

void AgentState::commit(int timestep, const geom::Pose2& new_pose,
                        std::vector<FeatureGrid> new_hidden) {
    if (last_timestep >= 0 && timestep != last_timestep + 1) {
        throw StaleStateError("state written at t=" + std::to_string(last_timestep) +
                              " cannot advance to t=" + std::to_string(timestep));
    }
    if (new_hidden.size() != hidden.size()) {
        throw ShapeError("commit: level count changed");
    }
    hidden = std::move(new_hidden);
    pose = new_pose;
    last_timestep = timestep;
}

FeatureGrid gate_forward(const FeatureGrid& h, const FeatureGrid& f,
                         const ParamSet& params, const std::string& prefix) {
    if (!h.same_shape(f)) {
        throw ShapeError("gate_forward: hidden and feature shapes differ");
    }
    const tensor::ConvWeights cw = params.conv(prefix);
    if (cw.in_channels != 2 * h.channels || cw.out_channels != h.channels) {
        throw ParamError("gate '" + prefix + "' must map 2C -> C channels");
    }
    const FeatureGrid cat = tensor::concat_channels({&h, &f});
    const FeatureGrid coeff =
        tensor::sigmoid(tensor::conv2d(cat, cw, 1, cw.kh / 2));
    return tensor::sigmoid(tensor::blend(coeff, h, f));
}

FeatureGrid edge_weight(const FeatureGrid& h_reset, const FeatureGrid& neighbor,
                        const FeatureGrid& ego, const ParamSet& params,
                        const std::string& prefix) {
    if (!h_reset.same_shape(neighbor) || !h_reset.same_shape(ego)) {
        throw ShapeError("edge_weight: operand shapes differ");
    }
    FeatureGrid x = tensor::concat_channels({&h_reset, &neighbor, &ego});
    for (int layer = 1; layer <= 4; ++layer) {
        x = tensor::relu(tensor::conv2d(
            x, params.conv(prefix + "." + std::to_string(layer)), 1, 0));
    }
    if (x.channels != 1) {
        throw ParamError("edge encoder '" + prefix + "' must end at one channel");
    }
    return x;
}

CollabResult collab_step(const AgentState& state, const FeatureGrid& f_ego,
                         const std::vector<NeighborFeature>& neighbors,
                         const geom::Pose2& pose_delta, const ParamSet& params,
                         int level, double cell_size, CollabDiagnostics* diag) {
    if (level < 0 || static_cast<std::size_t>(level) >= state.hidden.size()) {
        throw ShapeError("collab_step: no hidden state for level " +
                         std::to_string(level));
    }
    const FeatureGrid& h = state.hidden[level];
    if (!h.same_shape(f_ego)) {
        throw ShapeError("collab_step: hidden/feature shape mismatch");
    }
    for (const NeighborFeature& n : neighbors) {
        if (!n.feature.same_shape(f_ego)) {
            throw ShapeError("collab_step: neighbor grid shape mismatch");
        }
    }

    const std::string base = "gru.l" + std::to_string(level);
    const FeatureGrid h_aligned = geom::warp_grid(h, pose_delta, cell_size);
    const FeatureGrid reset = gate_forward(h_aligned, f_ego, params, base + ".reset");
    const FeatureGrid update = gate_forward(h_aligned, f_ego, params, base + ".update");
    const FeatureGrid h_reset = tensor::hadamard(h_aligned, reset);

    FeatureGrid aggregated(f_ego.channels, f_ego.height, f_ego.width);
    std::vector<FeatureGrid> normalized;
    if (!neighbors.empty()) {
        // Canonical stack order: ego first, then neighbors by ascending id, so
        // the floating-point reductions do not depend on caller order.
        std::vector<const NeighborFeature*> sorted;
        sorted.reserve(neighbors.size());
        for (const NeighborFeature& n : neighbors) sorted.push_back(&n);
        std::sort(sorted.begin(), sorted.end(),
                  [](const NeighborFeature* a, const NeighborFeature* b) {
                      return a->agent_id < b->agent_id;
                  });
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (sorted[i]->agent_id == sorted[i - 1]->agent_id) {
                throw ConfigError("collab_step: duplicate neighbor agent id " +
                                  std::to_string(sorted[i]->agent_id));
            }
        }

        const std::string edge = "edge.l" + std::to_string(level);
        std::vector<FeatureGrid> scores;
        scores.reserve(sorted.size() + 1);
        scores.push_back(edge_weight(h_reset, f_ego, f_ego, params, edge));
        for (const NeighborFeature* n : sorted) {
            scores.push_back(edge_weight(h_reset, n->feature, f_ego, params, edge));
        }
        normalized = tensor::softmax_over_stack(scores);

        const auto& kt = kernels::active_table();
        kt.weighted_add(aggregated.data.data(), normalized[0].data.data(),
                        f_ego.data.data(), f_ego.channels, f_ego.plane());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            kt.weighted_add(aggregated.data.data(), normalized[i + 1].data.data(),
                            sorted[i]->feature.data.data(), f_ego.channels,
                            f_ego.plane());
        }
    }

    CollabResult out;
    out.fused = tensor::blend(update, aggregated, h_aligned);
    out.new_hidden = [&] {
        const tensor::ConvWeights cw = params.conv(base + ".hidden");
        return tensor::conv2d(out.fused, cw, 1, cw.kh / 2);
    }();

    if (diag) {
        diag->normalized_weights = std::move(normalized);
        diag->aligned_hidden = h_aligned;
        diag->aggregated = aggregated;
        diag->update_gate = update;
    }
    return out;
}

}  // namespace umc::gcgru
