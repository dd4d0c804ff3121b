#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "umc/errors.hpp"
#include "umc/mgfe.hpp"

using namespace umc;
using namespace umc::mgfe;
using oracle::TestRng;

namespace {

void add_named(ParamSet& ps, const std::string& name, std::vector<std::uint32_t> dims,
               std::vector<double> data) {
    Tensor t;
    t.dims = std::move(dims);
    t.data = std::move(data);
    ps.add(name, std::move(t));
}

void add_random_conv(ParamSet& ps, const std::string& prefix, int oc, int ic, int k,
                     TestRng& rng) {
    Tensor w;
    w.dims = {static_cast<std::uint32_t>(oc), static_cast<std::uint32_t>(ic),
              static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k)};
    w.data.resize(w.count());
    for (double& v : w.data) v = rng.uniform(-0.4, 0.4);
    Tensor b;
    b.dims = {static_cast<std::uint32_t>(oc)};
    b.data.resize(oc);
    for (double& v : b.data) v = rng.uniform(-0.2, 0.2);
    ps.add(prefix + ".w", std::move(w));
    ps.add(prefix + ".b", std::move(b));
}

// Reconstruction parameters for a 2-level ladder with fine channels cf.
ParamSet mgfe_params(TestRng& rng, int cf) {
    ParamSet ps;
    const int cc = 2 * cf;
    add_random_conv(ps, "mgfe.l1.guide", cf, cf, 1, rng);
    add_random_conv(ps, "mgfe.l1.fuse", cf, cc + 2 * cf, 3, rng);
    add_named(ps, "mgfe.l1.n_coarse", {static_cast<std::uint32_t>(cc)},
              std::vector<double>(cc, 10.0));
    add_named(ps, "mgfe.l1.n_guided", {static_cast<std::uint32_t>(cf)},
              std::vector<double>(cf, 10.0));
    add_named(ps, "mgfe.l1.n_fused", {static_cast<std::uint32_t>(cf)},
              std::vector<double>(cf, 10.0));
    return ps;
}

}  // namespace

TEST_CASE("ladder validation enforces halving channels and doubling sides") {
    ResolutionLadder good{{{8, 4, 4}, {4, 8, 8}, {2, 16, 16}}};
    good.validate();
    ResolutionLadder single{{{8, 4, 4}}};
    CHECK_THROWS_AS(single.validate(), ConfigError);
    ResolutionLadder bad_ch{{{8, 4, 4}, {3, 8, 8}}};
    CHECK_THROWS_AS(bad_ch.validate(), ConfigError);
    ResolutionLadder bad_side{{{8, 4, 4}, {4, 8, 9}}};
    CHECK_THROWS_AS(bad_side.validate(), ConfigError);
    ResolutionLadder degenerate{{{8, 0, 4}, {4, 0, 8}}};
    CHECK_THROWS_AS(degenerate.validate(), ConfigError);
}

TEST_CASE("stage_one with a zero guide conv halves the ego feature") {
    TestRng rng(111);
    const int c = 3;
    ParamSet ps;
    add_named(ps, "s.guide.w",
              {static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c), 1, 1},
              std::vector<double>(static_cast<std::size_t>(c) * c, 0.0));
    const FeatureGrid fused = oracle::random_grid(rng, c, 4, 4);
    const FeatureGrid ego = oracle::random_grid(rng, c, 4, 4);
    const FeatureGrid out = stage_one(fused, ego, ps, "s");
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        CHECK(out.data[i] == doctest::Approx(0.5 * ego.data[i]).epsilon(1e-15));
    }
}

TEST_CASE("stage_one gates, so it can only shrink the ego feature") {
    TestRng rng(112);
    const int c = 3;
    ParamSet ps;
    add_random_conv(ps, "s.guide", c, c, 1, rng);
    const FeatureGrid fused = oracle::random_grid(rng, c, 5, 5);
    const FeatureGrid ego = oracle::random_grid(rng, c, 5, 5);
    const FeatureGrid out = stage_one(fused, ego, ps, "s");
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        CHECK(std::abs(out.data[i]) <= std::abs(ego.data[i]) + 1e-15);
    }
    const FeatureGrid zeros(c, 5, 5);
    const FeatureGrid gated = stage_one(fused, zeros, ps, "s");
    for (double v : gated.data) CHECK(v == 0.0);
}

TEST_CASE("stage_two of all-zero operands is the sigmoid of the fuse bias") {
    const int cf = 2, cc = 4;
    ParamSet ps;
    add_named(ps, "s.fuse.w",
              {static_cast<std::uint32_t>(cf), static_cast<std::uint32_t>(cc + 2 * cf), 3, 3},
              std::vector<double>(static_cast<std::size_t>(cf) * (cc + 2 * cf) * 9, 0.0));
    add_named(ps, "s.fuse.b", {static_cast<std::uint32_t>(cf)}, {0.75, -0.5});
    add_named(ps, "s.n_coarse", {static_cast<std::uint32_t>(cc)}, std::vector<double>(cc, 10.0));
    add_named(ps, "s.n_guided", {static_cast<std::uint32_t>(cf)}, std::vector<double>(cf, 10.0));
    add_named(ps, "s.n_fused", {static_cast<std::uint32_t>(cf)}, std::vector<double>(cf, 10.0));
    const FeatureGrid coarse(cc, 3, 3);
    const FeatureGrid fine(cf, 6, 6);
    const FeatureGrid out = stage_two(coarse, fine, fine, ps, "s");
    REQUIRE(out.channels == cf);
    REQUIRE(out.height == 6);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
            CHECK(out.at(0, y, x) == tensor::sigmoid_scalar(0.75));
            CHECK(out.at(1, y, x) == tensor::sigmoid_scalar(-0.5));
        }
    }
}

TEST_CASE("stage_two rejects mismatched pyramid dims") {
    TestRng rng(113);
    ParamSet ps = mgfe_params(rng, 2);
    const FeatureGrid coarse(4, 3, 3);
    const FeatureGrid fine(2, 6, 6);
    const FeatureGrid wrong(2, 8, 8);
    CHECK_THROWS_AS(stage_two(coarse, fine, wrong, ps, "mgfe.l1"), ShapeError);
    CHECK_THROWS_AS(stage_two(coarse, wrong, wrong, ps, "mgfe.l1"), ShapeError);
}

TEST_CASE("mgfe_forward walks the ladder and lands on the finest level") {
    TestRng rng(114);
    const int cf = 2;
    ParamSet ps = mgfe_params(rng, cf);
    ResolutionLadder ladder{{{4, 4, 4}, {2, 8, 8}}};
    std::vector<FeatureGrid> ego = {oracle::random_grid(rng, 4, 4, 4),
                                    oracle::random_grid(rng, 2, 8, 8)};
    std::vector<FeatureGrid> fused = {oracle::random_grid(rng, 4, 4, 4),
                                      oracle::random_grid(rng, 2, 8, 8)};
    const FeatureGrid out = mgfe_forward(ego, fused, ps, ladder);
    CHECK(out.channels == cf);
    CHECK(out.height == 8);
    CHECK(out.width == 8);
    // Values come from a sigmoid; large pre-activations round to exactly 1.0
    // in double precision, so the bound is closed.
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // Per-level composition reproduces the walk.
    const FeatureGrid guided = stage_one(fused[1], ego[1], ps, "mgfe.l1");
    const FeatureGrid want = stage_two(ego[0], guided, fused[1], ps, "mgfe.l1");
    CHECK(oracle::bit_equal(out, want));

    std::vector<FeatureGrid> short_list = {ego[0]};
    CHECK_THROWS_AS(mgfe_forward(short_list, fused, ps, ladder), ShapeError);
    std::vector<FeatureGrid> wrong = {oracle::random_grid(rng, 4, 4, 4),
                                      oracle::random_grid(rng, 2, 8, 9)};
    CHECK_THROWS_AS(mgfe_forward(ego, wrong, ps, ladder), ShapeError);
}

TEST_CASE("detect_head under zero weights emits nothing at a 0.55 threshold") {
    const int c = 2;
    ParamSet ps;
    add_named(ps, "head.score.w", {1, static_cast<std::uint32_t>(c), 1, 1},
              std::vector<double>(c, 0.0));
    add_named(ps, "head.box.w", {4, static_cast<std::uint32_t>(c), 1, 1},
              std::vector<double>(4 * c, 0.0));
    add_named(ps, "head.box.b", {4}, {0.0, 0.0, 2.0, 2.0});
    FeatureGrid d(c, 4, 4);
    for (double& v : d.data) v = 3.0;
    const DetectionOutput out = detect_head(d, ps, HeadConfig{0.55, 0.5, 0.25});
    CHECK(out.boxes.empty());
}

TEST_CASE("detect_head decodes a forced cell against its metric center") {
    ParamSet ps;
    add_named(ps, "head.score.w", {1, 2, 1, 1}, {2.0, 0.0});
    add_named(ps, "head.score.b", {1}, {-4.0});
    add_named(ps, "head.box.w", {4, 2, 1, 1}, std::vector<double>(8, 0.0));
    add_named(ps, "head.box.b", {4}, {0.5, -0.25, 2.0, 1.5});
    FeatureGrid d(2, 6, 8);
    d.at(0, 1, 3) = 5.0;
    const DetectionOutput out = detect_head(d, ps, HeadConfig{0.55, 0.5, 0.5});
    REQUIRE(out.boxes.size() == 1);
    const Detection& det = out.boxes[0];
    CHECK(det.score == doctest::Approx(tensor::sigmoid_scalar(6.0)).epsilon(1e-15));
    // Cell (1,3) of a 6x8 grid at 0.5 m per cell, ego-centered, plus offsets.
    CHECK(det.box.cx == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(det.box.cy == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(det.box.w == 2.0);
    CHECK(det.box.h == 1.5);
}

TEST_CASE("detect_head drops non-positive extents even at high scores") {
    ParamSet ps;
    add_named(ps, "head.score.w", {1, 1, 1, 1}, {0.0});
    add_named(ps, "head.score.b", {1}, {9.0});
    add_named(ps, "head.box.w", {4, 1, 1, 1}, std::vector<double>(4, 0.0));
    add_named(ps, "head.box.b", {4}, {0.0, 0.0, 0.0, 2.0});
    FeatureGrid d(1, 3, 3);
    CHECK(detect_head(d, ps, HeadConfig{0.5, 0.5, 0.25}).boxes.empty());
}

TEST_CASE("detect_head suppresses overlapping duplicates and sorts survivors") {
    ParamSet ps;
    add_named(ps, "head.score.w", {1, 2, 1, 1}, {2.0, 0.0});
    add_named(ps, "head.score.b", {1}, {-4.0});
    add_named(ps, "head.box.w", {4, 2, 1, 1}, std::vector<double>(8, 0.0));
    add_named(ps, "head.box.b", {4}, {0.0, 0.0, 2.0, 1.5});
    FeatureGrid d(2, 6, 8);
    d.at(0, 1, 3) = 5.0;  // score sigmoid(6)
    d.at(0, 1, 4) = 4.0;  // score sigmoid(4), box overlaps at IoU 0.6

    SUBCASE("tight threshold keeps only the stronger box") {
        const DetectionOutput out = detect_head(d, ps, HeadConfig{0.55, 0.5, 0.5});
        REQUIRE(out.boxes.size() == 1);
        CHECK(out.boxes[0].score == doctest::Approx(tensor::sigmoid_scalar(6.0)));
    }
    SUBCASE("looser threshold keeps both, strongest first") {
        const DetectionOutput out = detect_head(d, ps, HeadConfig{0.55, 0.7, 0.5});
        REQUIRE(out.boxes.size() == 2);
        CHECK(out.boxes[0].score > out.boxes[1].score);
    }
}

TEST_CASE("detect_head validates configuration and parameter shapes") {
    ParamSet ps;
    add_named(ps, "head.score.w", {2, 1, 1, 1}, {0.0, 0.0});
    add_named(ps, "head.box.w", {4, 1, 1, 1}, std::vector<double>(4, 0.0));
    FeatureGrid d(1, 3, 3);
    CHECK_THROWS_AS(detect_head(d, ps, HeadConfig{0.5, 0.5, 0.0}), ConfigError);
    CHECK_THROWS_AS(detect_head(d, ps, HeadConfig{0.5, 0.5, 0.25}), ParamError);
}
