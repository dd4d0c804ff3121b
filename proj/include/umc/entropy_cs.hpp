#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "umc/params.hpp"
#include "umc/tensor.hpp"

namespace umc::entropy {

// Single-channel spatial summary of a feature grid, used to decide which
// cells are worth transmitting.
struct QueryMatrix {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    QueryMatrix() = default;
    QueryMatrix(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0.0) {}
    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Per-cell p*ln(p) values; every entry lies in [-1/e, 0).
struct EntropyMap {
    int height = 0;
    int width = 0;
    std::vector<double> data;
};

// Boolean cell mask with a cached population count.
struct SelectionMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits;
    int count = 0;

    SelectionMask() = default;
    SelectionMask(int h, int w)
        : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

    bool test(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int y, int x) {
        std::uint8_t& b = bits[static_cast<std::size_t>(y) * width + x];
        if (!b) {
            b = 1;
            ++count;
        }
    }
    static SelectionMask full(int h, int w);
};

enum class ThresholdMode {
    TopK,  // keep the top delta fraction by value
    Mean,  // keep cells at or above the map mean; delta is ignored
};

// Two stacked 1x1 projections with ReLU after each, collapsing the feature
// grid to one channel. Layer names are "<prefix>.l1" / "<prefix>.l2".
QueryMatrix make_query(const FeatureGrid& f, const ParamSet& params,
                       const std::string& prefix);

// p(m,n) = mean over the (window_m x window_n) neighborhood (zero padded) of
// sigmoid(k(m+j, n+i) - q(m,n)); entry = p * ln(p).
EntropyMap local_entropy(const QueryMatrix& k, const QueryMatrix& q,
                         int window_m = 3, int window_n = 3);

// TopK: descending sort, threshold value at index min(floor(H*W*delta),
// H*W-1), keep cells >= threshold (ties select more, never fewer).
SelectionMask threshold_topk(const EntropyMap& map, double delta,
                             ThresholdMode mode = ThresholdMode::TopK);

// First selection stage: entropy of the collaborator's query against itself.
SelectionMask self_select(const QueryMatrix& m_k, double delta_s,
                          ThresholdMode mode = ThresholdMode::TopK);

// Second stage: entropy of the requesting agent's query against the
// collaborator's, evaluated only on cells that survived the first stage. The
// threshold indexes the surviving candidates, so the two stages compose to a
// delta_s * delta_c fraction on tie-free maps.
SelectionMask cross_select(const QueryMatrix& m_i, const QueryMatrix& m_k,
                           const SelectionMask& self_mask, double delta_c,
                           ThresholdMode mode = ThresholdMode::TopK);

// True when the mask is too small to justify a transmission.
bool should_skip(const SelectionMask& mask, int min_cells = 1);

}  // namespace umc::entropy
