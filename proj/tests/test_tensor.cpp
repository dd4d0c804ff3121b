#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "umc/errors.hpp"
#include "umc/tensor.hpp"

using namespace umc;
using oracle::TestRng;

namespace {

tensor::ConvWeights random_conv(TestRng& rng, int oc, int ic, int kh, int kw,
                                bool with_bias) {
    tensor::ConvWeights cw;
    cw.out_channels = oc;
    cw.in_channels = ic;
    cw.kh = kh;
    cw.kw = kw;
    cw.w.resize(static_cast<std::size_t>(oc) * ic * kh * kw);
    for (double& v : cw.w) v = rng.uniform(-1.0, 1.0);
    if (with_bias) {
        cw.bias.resize(oc);
        for (double& v : cw.bias) v = rng.uniform(-1.0, 1.0);
    }
    return cw;
}

}  // namespace

TEST_CASE("conv2d matches the quadruple-loop reference") {
    TestRng rng(11);
    for (int it = 0; it < 24; ++it) {
        const int ic = 1 + rng.below(4);
        const int oc = 1 + rng.below(4);
        const int k = 1 + 2 * rng.below(2);  // 1 or 3
        const int stride = 1 + rng.below(2);
        const int pad = rng.below(2);
        const int h = k + rng.below(6);
        const int w = k + rng.below(6);
        if ((h + 2 * pad - k) / stride + 1 < 1) continue;
        const FeatureGrid in = oracle::random_grid(rng, ic, h, w);
        const tensor::ConvWeights cw = random_conv(rng, oc, ic, k, k, it % 2 == 0);
        const FeatureGrid got = tensor::conv2d(in, cw, stride, pad);
        const FeatureGrid want = oracle::conv2d_ref(in, cw, stride, pad);
        REQUIRE(got.same_shape(want));
        CHECK(oracle::max_abs_diff(got, want) <= 1e-12);
    }
}

TEST_CASE("conv2d output shape follows (in + 2p - k) / s + 1") {
    TestRng rng(12);
    const FeatureGrid in = oracle::random_grid(rng, 2, 9, 7);
    const tensor::ConvWeights cw = random_conv(rng, 3, 2, 3, 3, true);
    const FeatureGrid s1 = tensor::conv2d(in, cw, 1, 1);
    CHECK(s1.height == 9);
    CHECK(s1.width == 7);
    const FeatureGrid s2 = tensor::conv2d(in, cw, 2, 1);
    CHECK(s2.height == 5);  // (9 + 2 - 3) / 2 + 1
    CHECK(s2.width == 4);   // (7 + 2 - 3) / 2 + 1
}

TEST_CASE("conv2d 1x1 identity kernel reproduces the input") {
    TestRng rng(13);
    const FeatureGrid in = oracle::random_grid(rng, 3, 5, 6);
    tensor::ConvWeights cw;
    cw.out_channels = 3;
    cw.in_channels = 3;
    cw.kh = 1;
    cw.kw = 1;
    cw.w.assign(9, 0.0);
    for (int c = 0; c < 3; ++c) cw.w[static_cast<std::size_t>(c) * 3 + c] = 1.0;
    const FeatureGrid out = tensor::conv2d(in, cw, 1, 0);
    CHECK(oracle::bit_equal(out, in));
}

TEST_CASE("conv2d rejects malformed weights") {
    TestRng rng(14);
    const FeatureGrid in = oracle::random_grid(rng, 2, 5, 5);
    tensor::ConvWeights even = random_conv(rng, 1, 2, 2, 2, false);
    CHECK_THROWS_AS(tensor::conv2d(in, even, 1, 0), ShapeError);
    tensor::ConvWeights wrong_ic = random_conv(rng, 1, 3, 3, 3, false);
    CHECK_THROWS_AS(tensor::conv2d(in, wrong_ic, 1, 1), ShapeError);
}

TEST_CASE("sigmoid is stable, symmetric, and monotone") {
    CHECK(tensor::sigmoid_scalar(0.0) == 0.5);
    CHECK(tensor::sigmoid_scalar(1000.0) == 1.0);
    CHECK(tensor::sigmoid_scalar(-1000.0) == 0.0);
    TestRng rng(15);
    double prev = tensor::sigmoid_scalar(-20.0);
    for (double x = -19.5; x <= 20.0; x += 0.5) {
        const double v = tensor::sigmoid_scalar(x);
        CHECK(v > prev);
        prev = v;
    }
    for (int it = 0; it < 100; ++it) {
        const double x = rng.uniform(-30.0, 30.0);
        CHECK(tensor::sigmoid_scalar(-x) == doctest::Approx(1.0 - tensor::sigmoid_scalar(x)).epsilon(1e-15));
        CHECK(std::abs(tensor::sigmoid_scalar(x) - oracle::sigmoid_ref(x)) <= 1e-12);
    }
}

TEST_CASE("relu clamps negatives only") {
    TestRng rng(16);
    const FeatureGrid in = oracle::random_grid(rng, 2, 4, 4, -2.0, 2.0);
    const FeatureGrid out = tensor::relu(in);
    for (std::size_t i = 0; i < in.data.size(); ++i) {
        if (in.data[i] > 0.0) {
            CHECK(out.data[i] == in.data[i]);
        } else {
            CHECK(out.data[i] == 0.0);
        }
    }
}

TEST_CASE("channel_max takes the per-pixel maximum") {
    TestRng rng(17);
    const FeatureGrid in = oracle::random_grid(rng, 5, 4, 6);
    const FeatureGrid out = tensor::channel_max(in);
    REQUIRE(out.channels == 1);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            double mx = in.at(0, y, x);
            for (int c = 1; c < in.channels; ++c) mx = std::max(mx, in.at(c, y, x));
            CHECK(out.at(0, y, x) == mx);
        }
    }
}

TEST_CASE("l2norm_channels matches the reference and survives zero pixels") {
    TestRng rng(18);
    FeatureGrid in = oracle::random_grid(rng, 4, 5, 5);
    for (int c = 0; c < 4; ++c) in.at(c, 2, 2) = 0.0;
    std::vector<double> scale = {10.0, 2.0, 1.0, 0.5};
    const FeatureGrid got = tensor::l2norm_channels(in, scale);
    const FeatureGrid want = oracle::l2norm_ref(in, scale, 1e-10);
    CHECK(oracle::max_abs_diff(got, want) <= 1e-12);
    for (int c = 0; c < 4; ++c) CHECK(got.at(c, 2, 2) == 0.0);
    CHECK_THROWS_AS(tensor::l2norm_channels(in, {1.0, 2.0}), ShapeError);
}

TEST_CASE("upsample2x matches the bilinear reference") {
    TestRng rng(19);
    const FeatureGrid in = oracle::random_grid(rng, 3, 4, 5);
    const FeatureGrid got = tensor::upsample2x(in);
    REQUIRE(got.height == 8);
    REQUIRE(got.width == 10);
    CHECK(oracle::max_abs_diff(got, oracle::upsample2x_ref(in)) <= 1e-12);
}

TEST_CASE("upsample2x preserves constant grids exactly") {
    FeatureGrid in(2, 3, 3);
    for (double& v : in.data) v = 0.7;
    const FeatureGrid out = tensor::upsample2x(in);
    for (double v : out.data) CHECK(v == 0.7);
}

TEST_CASE("softmax_over_stack normalizes per cell and ignores shifts") {
    TestRng rng(20);
    std::vector<FeatureGrid> stack;
    for (int i = 0; i < 4; ++i) stack.push_back(oracle::random_grid(rng, 1, 5, 4, -3.0, 3.0));
    const std::vector<FeatureGrid> got = tensor::softmax_over_stack(stack);
    const std::vector<FeatureGrid> want = oracle::softmax_stack_ref(stack);
    REQUIRE(got.size() == stack.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(oracle::max_abs_diff(got[i], want[i]) <= 1e-12);
    }
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 4; ++x) {
            double sum = 0.0;
            for (const FeatureGrid& g : got) sum += g.at(0, y, x);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    // A common additive shift cancels in the softmax.
    std::vector<FeatureGrid> shifted = stack;
    for (FeatureGrid& g : shifted) {
        for (double& v : g.data) v += 123.25;
    }
    const std::vector<FeatureGrid> got2 = tensor::softmax_over_stack(shifted);
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(oracle::max_abs_diff(got[i], got2[i]) <= 1e-12);
    }
}

TEST_CASE("softmax_over_stack of one grid is all ones") {
    TestRng rng(21);
    const std::vector<FeatureGrid> got =
        tensor::softmax_over_stack({oracle::random_grid(rng, 1, 3, 3)});
    REQUIRE(got.size() == 1);
    for (double v : got[0].data) CHECK(v == 1.0);
}

TEST_CASE("blend interpolates between its operands") {
    TestRng rng(22);
    const FeatureGrid a = oracle::random_grid(rng, 2, 4, 4);
    const FeatureGrid b = oracle::random_grid(rng, 2, 4, 4);
    FeatureGrid ones(2, 4, 4);
    for (double& v : ones.data) v = 1.0;
    FeatureGrid zeros(2, 4, 4);
    CHECK(oracle::bit_equal(tensor::blend(ones, a, b), a));
    CHECK(oracle::bit_equal(tensor::blend(zeros, a, b), b));
    const FeatureGrid g = oracle::random_grid(rng, 2, 4, 4, 0.0, 1.0);
    const FeatureGrid out = tensor::blend(g, a, b);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        CHECK(out.data[i] ==
              doctest::Approx(g.data[i] * a.data[i] + (1.0 - g.data[i]) * b.data[i])
                  .epsilon(1e-15));
    }
    const FeatureGrid small = oracle::random_grid(rng, 2, 3, 4);
    CHECK_THROWS_AS(tensor::blend(g, a, small), ShapeError);
}

TEST_CASE("hadamard multiplies elementwise") {
    TestRng rng(23);
    const FeatureGrid a = oracle::random_grid(rng, 3, 2, 5);
    const FeatureGrid b = oracle::random_grid(rng, 3, 2, 5);
    const FeatureGrid out = tensor::hadamard(a, b);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        CHECK(out.data[i] == a.data[i] * b.data[i]);
    }
}

TEST_CASE("concat_channels stacks parts in order") {
    TestRng rng(24);
    const FeatureGrid a = oracle::random_grid(rng, 2, 3, 4);
    const FeatureGrid b = oracle::random_grid(rng, 1, 3, 4);
    const FeatureGrid out = tensor::concat_channels({&a, &b});
    REQUIRE(out.channels == 3);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 4; ++x) {
            CHECK(out.at(0, y, x) == a.at(0, y, x));
            CHECK(out.at(1, y, x) == a.at(1, y, x));
            CHECK(out.at(2, y, x) == b.at(0, y, x));
        }
    }
    const FeatureGrid off = oracle::random_grid(rng, 1, 2, 4);
    CHECK_THROWS_AS(tensor::concat_channels({&a, &off}), ShapeError);
}

TEST_CASE("scale_by_map broadcasts one channel over all") {
    TestRng rng(25);
    const FeatureGrid map = oracle::random_grid(rng, 1, 3, 3);
    const FeatureGrid f = oracle::random_grid(rng, 4, 3, 3);
    const FeatureGrid out = tensor::scale_by_map(map, f);
    for (int c = 0; c < 4; ++c) {
        for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 3; ++x) {
                CHECK(out.at(c, y, x) == map.at(0, y, x) * f.at(c, y, x));
            }
        }
    }
}
