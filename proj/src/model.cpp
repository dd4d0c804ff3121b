#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sim_rng.hpp"
#include "umc/errors.hpp"
#include "umc/simulator.hpp"

namespace umc::sim {
namespace {

struct EncStage {
    int in_c = 0;
    int out_c = 0;
    int stride = 1;
    int tap_level = -1;  // ladder index emitted after this stage, or -1
};

// The encoder is derived from the ladder: a stride-1 stem, then one stride-2
// conv per halving until the coarsest level. A stage whose output matches a
// ladder level's spatial size adopts that level's channel count and taps its
// output; other stages carry their width through.
std::vector<EncStage> encoder_stages(const ScenarioConfig& cfg) {
    const std::vector<mgfe::LevelSpec>& levels = cfg.ladder.levels;
    std::vector<EncStage> stages;
    int cur_c = cfg.bev_channels;
    int cur_h = cfg.grid_h;
    int cur_w = cfg.grid_w;

    EncStage stem;
    stem.in_c = cur_c;
    stem.out_c = std::max(4, levels.back().channels / 2);
    stages.push_back(stem);
    cur_c = stem.out_c;

    std::vector<bool> tapped(levels.size(), false);
    while (cur_h > levels.front().height) {
        cur_h /= 2;
        cur_w /= 2;
        EncStage s;
        s.in_c = cur_c;
        s.stride = 2;
        s.out_c = cur_c;
        for (std::size_t j = 0; j < levels.size(); ++j) {
            if (levels[j].height == cur_h && levels[j].width == cur_w) {
                s.out_c = levels[j].channels;
                s.tap_level = static_cast<int>(j);
                tapped[j] = true;
                break;
            }
        }
        stages.push_back(s);
        cur_c = s.out_c;
    }
    for (std::size_t j = 0; j < levels.size(); ++j) {
        if (!tapped[j]) {
            throw ConfigError("encoder cannot reach ladder level " + std::to_string(j) +
                              " by halving the BEV grid");
        }
    }
    return stages;
}

}  // namespace

std::vector<FeatureGrid> encoder_forward(const FeatureGrid& bev,
                                         const ParamSet& params,
                                         const ScenarioConfig& cfg) {
    if (bev.channels != cfg.bev_channels || bev.height != cfg.grid_h ||
        bev.width != cfg.grid_w) {
        throw ShapeError("encoder_forward: BEV grid does not match the config");
    }
    const std::vector<EncStage> stages = encoder_stages(cfg);
    std::vector<FeatureGrid> taps(cfg.ladder.levels.size());
    FeatureGrid x = bev;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const tensor::ConvWeights cw = params.conv("enc." + std::to_string(i));
        x = tensor::relu(tensor::conv2d(x, cw, stages[i].stride, 1));
        if (stages[i].tap_level >= 0) {
            taps[stages[i].tap_level] = x;
        }
    }
    return taps;
}

ParamSet default_params(const ScenarioConfig& cfg) {
    cfg.validate();
    ParamSet p;
    Rng rng(mix(cfg.seed, 0x9a12b3c4u));

    auto add_conv = [&](const std::string& prefix, int out_c, int in_c, int kh,
                        int kw, const std::vector<double>& bias_override = {}) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_c) * kh * kw);
        Tensor w;
        w.dims = {static_cast<std::uint32_t>(out_c), static_cast<std::uint32_t>(in_c),
                  static_cast<std::uint32_t>(kh), static_cast<std::uint32_t>(kw)};
        w.data.resize(w.count());
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        p.add(prefix + ".w", std::move(w));
        Tensor b;
        b.dims = {static_cast<std::uint32_t>(out_c)};
        if (bias_override.empty()) {
            b.data.resize(static_cast<std::size_t>(out_c));
            for (double& v : b.data) v = rng.uniform(-bound, bound);
        } else {
            b.data = bias_override;
        }
        p.add(prefix + ".b", std::move(b));
    };
    auto add_scales = [&](const std::string& name, int n, double value) {
        Tensor t;
        t.dims = {static_cast<std::uint32_t>(n)};
        t.data.assign(static_cast<std::size_t>(n), value);
        p.add(name, std::move(t));
    };

    const std::vector<EncStage> stages = encoder_stages(cfg);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        add_conv("enc." + std::to_string(i), stages[i].out_c, stages[i].in_c, 3, 3);
    }

    const std::vector<mgfe::LevelSpec>& levels = cfg.ladder.levels;
    for (std::size_t j = 0; j < levels.size(); ++j) {
        const int c = levels[j].channels;
        const std::string lj = "l" + std::to_string(j);
        add_conv("query." + lj + ".l1", 64, c, 1, 1);
        // The final projection keeps its ReLU, but at random init a negative
        // bias would clamp the whole map to a constant zero and selection
        // would degenerate to ties. Starting the bias open preserves the
        // query's spatial ordering.
        add_conv("query." + lj + ".l2", 1, 64, 1, 1, {1.0});
        add_conv("gru." + lj + ".reset", c, 2 * c, 3, 3);
        add_conv("gru." + lj + ".update", c, 2 * c, 3, 3);
        add_conv("gru." + lj + ".hidden", c, c, 3, 3);
        add_conv("edge." + lj + ".1", 128, 3 * c, 1, 1);
        add_conv("edge." + lj + ".2", 32, 128, 1, 1);
        add_conv("edge." + lj + ".3", 8, 32, 1, 1);
        add_conv("edge." + lj + ".4", 1, 8, 1, 1);
    }
    for (std::size_t j = 1; j < levels.size(); ++j) {
        const int cc = levels[j - 1].channels;
        const int cf = levels[j].channels;
        const std::string prefix = "mgfe.l" + std::to_string(j);
        add_conv(prefix + ".guide", cf, cf, 1, 1);
        add_conv(prefix + ".fuse", cf, cc + 2 * cf, 3, 3);
        add_scales(prefix + ".n_coarse", cc, 10.0);
        add_scales(prefix + ".n_guided", cf, 10.0);
        add_scales(prefix + ".n_fused", cf, 10.0);
    }

    const int c_fine = levels.back().channels;
    add_conv("head.score", 1, c_fine, 1, 1);
    // Box regression starts from a sane prior: extents default to 2 m so an
    // untrained head still emits positive boxes.
    add_conv("head.box", 4, c_fine, 1, 1, {0.0, 0.0, 2.0, 2.0});

    Tensor lam;
    lam.data = {1.0};
    p.add("rbf.lambda", std::move(lam));
    return p;
}

}  // namespace umc::sim
