#pragma once

#include <cstddef>
#include <vector>

namespace umc {

// Dense rank-3 grid of doubles, laid out row-major with the channel as the
// outermost axis: data[(c * height + y) * width + x].
struct FeatureGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureGrid() = default;
    FeatureGrid(int c, int h, int w)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const FeatureGrid& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

namespace tensor {

// Conv weights are rank 4: [out_channels, in_channels, kh, kw], bias rank 1
// [out_channels] or empty. Zero padding, odd kernel sides required.
struct ConvWeights {
    int out_channels = 0;
    int in_channels = 0;
    int kh = 0;
    int kw = 0;
    std::vector<double> w;
    std::vector<double> bias;  // empty means no bias
};

FeatureGrid conv2d(const FeatureGrid& f, const ConvWeights& weights,
                   int stride = 1, int padding = 0);

// Numerically stable logistic; sigma(-x) == 1 - sigma(x) and large inputs
// saturate cleanly instead of overflowing exp.
double sigmoid_scalar(double x);
FeatureGrid sigmoid(const FeatureGrid& f);

FeatureGrid relu(const FeatureGrid& f);

// Per-pixel maximum across channels; output has one channel.
FeatureGrid channel_max(const FeatureGrid& f);

// x / (||x||_2 + eps) per pixel across channels, then a per-channel scale.
FeatureGrid l2norm_channels(const FeatureGrid& f, const std::vector<double>& scale,
                            double eps = 1e-10);

// Bilinear x2 upsampling; samples at (dst + 0.5) / 2 - 0.5 with border
// replication, so corners are not pinned to corners.
FeatureGrid upsample2x(const FeatureGrid& f);

// Per-cell softmax across a stack of single-channel grids of equal shape.
// Shift-invariant (max-subtracted) and returns one grid per input.
std::vector<FeatureGrid> softmax_over_stack(const std::vector<FeatureGrid>& stack);

// out = g*a + (1-g)*b elementwise; all three shapes must match.
FeatureGrid blend(const FeatureGrid& g, const FeatureGrid& a, const FeatureGrid& b);

FeatureGrid hadamard(const FeatureGrid& a, const FeatureGrid& b);

// Concatenate along the channel axis; spatial dims must match.
FeatureGrid concat_channels(const std::vector<const FeatureGrid*>& parts);

// Broadcast-multiply a single-channel map over every channel of f.
FeatureGrid scale_by_map(const FeatureGrid& map, const FeatureGrid& f);

}  // namespace tensor
}  // namespace umc
