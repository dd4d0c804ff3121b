#include "umc/entropy_cs.hpp"

#include <algorithm>
#include <cmath>

#include "umc/errors.hpp"

namespace umc::entropy {
namespace {

void check_delta(double delta) {
    if (!(delta >= 0.0 && delta <= 1.0)) {
        throw ConfigError("selection fraction must lie in [0, 1], got " +
                          std::to_string(delta));
    }
}

}  // namespace

SelectionMask SelectionMask::full(int h, int w) {
    SelectionMask m(h, w);
    std::fill(m.bits.begin(), m.bits.end(), std::uint8_t(1));
    m.count = h * w;
    return m;
}

QueryMatrix make_query(const FeatureGrid& f, const ParamSet& params,
                       const std::string& prefix) {
    const FeatureGrid hidden =
        tensor::relu(tensor::conv2d(f, params.conv(prefix + ".l1"), 1, 0));
    const FeatureGrid out =
        tensor::relu(tensor::conv2d(hidden, params.conv(prefix + ".l2"), 1, 0));
    if (out.channels != 1) {
        throw ParamError("query projection '" + prefix + ".l2' must emit one channel");
    }
    QueryMatrix q(out.height, out.width);
    q.data = out.data;
    return q;
}

EntropyMap local_entropy(const QueryMatrix& k, const QueryMatrix& q,
                         int window_m, int window_n) {
    if (k.height != q.height || k.width != q.width) {
        throw ShapeError("local_entropy: query shapes differ");
    }
    if (window_m < 1 || window_n < 1 || window_m % 2 == 0 || window_n % 2 == 0) {
        throw ShapeError("local_entropy: window sides must be odd and positive");
    }
    const int rm = window_m / 2;
    const int rn = window_n / 2;
    const double inv_count = 1.0 / (static_cast<double>(window_m) * window_n);
    EntropyMap out;
    out.height = k.height;
    out.width = k.width;
    out.data.resize(static_cast<std::size_t>(k.height) * k.width);
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            const double center = q.at(y, x);
            double acc = 0.0;
            for (int j = -rm; j <= rm; ++j) {
                for (int i = -rn; i <= rn; ++i) {
                    const int yy = y + j;
                    const int xx = x + i;
                    const double neighbor =
                        (yy < 0 || yy >= k.height || xx < 0 || xx >= k.width)
                            ? 0.0
                            : k.at(yy, xx);
                    acc += tensor::sigmoid_scalar(neighbor - center);
                }
            }
            const double p = acc * inv_count;
            out.data[static_cast<std::size_t>(y) * k.width + x] = p * std::log(p);
        }
    }
    return out;
}

SelectionMask threshold_topk(const EntropyMap& map, double delta, ThresholdMode mode) {
    check_delta(delta);
    const std::size_t n = map.data.size();
    if (n == 0) {
        throw ShapeError("threshold_topk: empty map");
    }
    double threshold;
    if (mode == ThresholdMode::Mean) {
        double sum = 0.0;
        for (double v : map.data) sum += v;
        threshold = sum / static_cast<double>(n);
    } else {
        std::vector<double> sorted(map.data);
        std::sort(sorted.begin(), sorted.end(), std::greater<double>());
        const std::size_t idx =
            std::min(static_cast<std::size_t>(static_cast<double>(n) * delta), n - 1);
        threshold = sorted[idx];
    }
    SelectionMask mask(map.height, map.width);
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            if (map.data[static_cast<std::size_t>(y) * map.width + x] >= threshold) {
                mask.set(y, x);
            }
        }
    }
    return mask;
}

SelectionMask self_select(const QueryMatrix& m_k, double delta_s, ThresholdMode mode) {
    return threshold_topk(local_entropy(m_k, m_k), delta_s, mode);
}

SelectionMask cross_select(const QueryMatrix& m_i, const QueryMatrix& m_k,
                           const SelectionMask& self_mask, double delta_c,
                           ThresholdMode mode) {
    check_delta(delta_c);
    if (m_i.height != m_k.height || m_i.width != m_k.width ||
        self_mask.height != m_i.height || self_mask.width != m_i.width) {
        throw ShapeError("cross_select: shape mismatch");
    }
    if (self_mask.count == 0) {
        throw SkipSignal("cross_select: empty first-stage mask");
    }
    const EntropyMap ent = local_entropy(m_i, m_k);
    std::vector<double> candidates;
    candidates.reserve(self_mask.count);
    for (int y = 0; y < ent.height; ++y) {
        for (int x = 0; x < ent.width; ++x) {
            if (self_mask.test(y, x)) {
                candidates.push_back(ent.data[static_cast<std::size_t>(y) * ent.width + x]);
            }
        }
    }
    double threshold;
    if (mode == ThresholdMode::Mean) {
        double sum = 0.0;
        for (double v : candidates) sum += v;
        threshold = sum / static_cast<double>(candidates.size());
    } else {
        std::sort(candidates.begin(), candidates.end(), std::greater<double>());
        const std::size_t idx = std::min(
            static_cast<std::size_t>(static_cast<double>(candidates.size()) * delta_c),
            candidates.size() - 1);
        threshold = candidates[idx];
    }
    SelectionMask mask(ent.height, ent.width);
    for (int y = 0; y < ent.height; ++y) {
        for (int x = 0; x < ent.width; ++x) {
            if (self_mask.test(y, x) &&
                ent.data[static_cast<std::size_t>(y) * ent.width + x] >= threshold) {
                mask.set(y, x);
            }
        }
    }
    return mask;
}

bool should_skip(const SelectionMask& mask, int min_cells) {
    if (min_cells < 0) {
        throw ConfigError("min_cells must be non-negative");
    }
    return mask.count < min_cells;
}

}  // namespace umc::entropy
