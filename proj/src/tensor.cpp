#include "umc/tensor.hpp"

#include <cmath>
#include <string>

#include "umc/errors.hpp"
#include "umc/kernels.hpp"

namespace umc::tensor {

FeatureGrid conv2d(const FeatureGrid& f, const ConvWeights& weights,
                   int stride, int padding) {
    if (weights.kh % 2 == 0 || weights.kw % 2 == 0 || weights.kh < 1 || weights.kw < 1) {
        throw ShapeError("conv2d: kernel sides must be odd and positive, got " +
                         std::to_string(weights.kh) + "x" + std::to_string(weights.kw));
    }
    if (weights.in_channels != f.channels) {
        throw ShapeError("conv2d: weight expects " + std::to_string(weights.in_channels) +
                         " input channels, grid has " + std::to_string(f.channels));
    }
    if (weights.w.size() != static_cast<std::size_t>(weights.out_channels) *
                                weights.in_channels * weights.kh * weights.kw) {
        throw ShapeError("conv2d: weight buffer size does not match its dims");
    }
    if (!weights.bias.empty() &&
        weights.bias.size() != static_cast<std::size_t>(weights.out_channels)) {
        throw ShapeError("conv2d: bias length does not match out_channels");
    }
    if (stride < 1 || padding < 0) {
        throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
    }
    const int oh = (f.height + 2 * padding - weights.kh) / stride + 1;
    const int ow = (f.width + 2 * padding - weights.kw) / stride + 1;
    if (oh < 1 || ow < 1) {
        throw ShapeError("conv2d: output would be empty");
    }
    FeatureGrid out(weights.out_channels, oh, ow);
    kernels::active_table().conv2d(
        f.data.data(), f.channels, f.height, f.width,
        weights.w.data(), weights.out_channels, weights.kh, weights.kw,
        weights.bias.empty() ? nullptr : weights.bias.data(),
        stride, padding, out.data.data(), oh, ow);
    return out;
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

FeatureGrid sigmoid(const FeatureGrid& f) {
    FeatureGrid out = f;
    for (double& v : out.data) {
        v = sigmoid_scalar(v);
    }
    return out;
}

FeatureGrid relu(const FeatureGrid& f) {
    FeatureGrid out = f;
    for (double& v : out.data) {
        if (v < 0.0) v = 0.0;
    }
    return out;
}

FeatureGrid channel_max(const FeatureGrid& f) {
    if (f.channels < 1) {
        throw ShapeError("channel_max: empty grid");
    }
    FeatureGrid out(1, f.height, f.width);
    kernels::active_table().channel_max(f.data.data(), f.channels, f.plane(),
                                        out.data.data());
    return out;
}

FeatureGrid l2norm_channels(const FeatureGrid& f, const std::vector<double>& scale,
                            double eps) {
    if (scale.size() != static_cast<std::size_t>(f.channels)) {
        throw ShapeError("l2norm_channels: scale length " + std::to_string(scale.size()) +
                         " != channels " + std::to_string(f.channels));
    }
    FeatureGrid out(f.channels, f.height, f.width);
    kernels::active_table().l2norm(f.data.data(), f.channels, f.plane(),
                                   scale.data(), eps, out.data.data());
    return out;
}

FeatureGrid upsample2x(const FeatureGrid& f) {
    const int oh = f.height * 2;
    const int ow = f.width * 2;
    FeatureGrid out(f.channels, oh, ow);
    for (int c = 0; c < f.channels; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            const double sy = (oy + 0.5) / 2.0 - 0.5;
            int y0 = static_cast<int>(std::floor(sy));
            const double fy = sy - y0;
            int y1 = y0 + 1;
            if (y0 < 0) y0 = 0;
            if (y1 > f.height - 1) y1 = f.height - 1;
            for (int ox = 0; ox < ow; ++ox) {
                const double sx = (ox + 0.5) / 2.0 - 0.5;
                int x0 = static_cast<int>(std::floor(sx));
                const double fx = sx - x0;
                int x1 = x0 + 1;
                if (x0 < 0) x0 = 0;
                if (x1 > f.width - 1) x1 = f.width - 1;
                const double top = f.at(c, y0, x0) * (1.0 - fx) + f.at(c, y0, x1) * fx;
                const double bot = f.at(c, y1, x0) * (1.0 - fx) + f.at(c, y1, x1) * fx;
                out.at(c, oy, ox) = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    return out;
}

std::vector<FeatureGrid> softmax_over_stack(const std::vector<FeatureGrid>& stack) {
    if (stack.empty()) {
        throw ShapeError("softmax_over_stack: empty stack");
    }
    for (const FeatureGrid& g : stack) {
        if (g.channels != 1) {
            throw ShapeError("softmax_over_stack: grids must have one channel");
        }
        if (!g.same_shape(stack.front())) {
            throw ShapeError("softmax_over_stack: mismatched grid shapes");
        }
    }
    const std::size_t n = stack.front().plane();
    std::vector<FeatureGrid> out(stack.size(),
                                 FeatureGrid(1, stack.front().height, stack.front().width));
    for (std::size_t p = 0; p < n; ++p) {
        double m = stack[0].data[p];
        for (std::size_t s = 1; s < stack.size(); ++s) {
            m = std::max(m, stack[s].data[p]);
        }
        double denom = 0.0;
        for (std::size_t s = 0; s < stack.size(); ++s) {
            const double e = std::exp(stack[s].data[p] - m);
            out[s].data[p] = e;
            denom += e;
        }
        for (std::size_t s = 0; s < stack.size(); ++s) {
            out[s].data[p] /= denom;
        }
    }
    return out;
}

FeatureGrid blend(const FeatureGrid& g, const FeatureGrid& a, const FeatureGrid& b) {
    if (!g.same_shape(a) || !g.same_shape(b)) {
        throw ShapeError("blend: shape mismatch");
    }
    FeatureGrid out(g.channels, g.height, g.width);
    kernels::active_table().blend(g.data.data(), a.data.data(), b.data.data(),
                                  out.data.data(), g.size());
    return out;
}

FeatureGrid hadamard(const FeatureGrid& a, const FeatureGrid& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("hadamard: shape mismatch");
    }
    FeatureGrid out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] *= b.data[i];
    }
    return out;
}

FeatureGrid concat_channels(const std::vector<const FeatureGrid*>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_channels: nothing to concatenate");
    }
    int c = 0;
    for (const FeatureGrid* g : parts) {
        if (g->height != parts.front()->height || g->width != parts.front()->width) {
            throw ShapeError("concat_channels: spatial dims differ");
        }
        c += g->channels;
    }
    FeatureGrid out(c, parts.front()->height, parts.front()->width);
    std::size_t off = 0;
    for (const FeatureGrid* g : parts) {
        std::copy(g->data.begin(), g->data.end(), out.data.begin() + off);
        off += g->data.size();
    }
    return out;
}

FeatureGrid scale_by_map(const FeatureGrid& map, const FeatureGrid& f) {
    if (map.channels != 1 || map.height != f.height || map.width != f.width) {
        throw ShapeError("scale_by_map: map must be single-channel with matching dims");
    }
    FeatureGrid out(f.channels, f.height, f.width);
    const std::size_t hw = f.plane();
    for (int c = 0; c < f.channels; ++c) {
        for (std::size_t p = 0; p < hw; ++p) {
            out.data[c * hw + p] = map.data[p] * f.data[c * hw + p];
        }
    }
    return out;
}

}  // namespace umc::tensor
