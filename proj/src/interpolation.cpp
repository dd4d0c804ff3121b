#include "umc/interpolation.hpp"

#include <cmath>
#include <vector>

#include "umc/errors.hpp"
#include "umc/kernels.hpp"

namespace umc::interp {

MaskedGrid scatter_to_grid(const wire::SparsePacket& p) {
    MaskedGrid mg;
    mg.grid = FeatureGrid(p.channels, p.height, p.width);
    mg.mask = entropy::SelectionMask(p.height, p.width);
    const std::size_t hw = mg.grid.plane();
    for (const wire::PacketEntry& e : p.entries) {
        if (e.row >= p.height || e.col >= p.width) {
            throw ShapeError("scatter_to_grid: entry outside grid");
        }
        const std::size_t at = static_cast<std::size_t>(e.row) * p.width + e.col;
        for (int c = 0; c < p.channels; ++c) {
            mg.grid.data[c * hw + at] = static_cast<double>(e.values[c]);
        }
        mg.mask.set(e.row, e.col);
    }
    return mg;
}

FeatureGrid rbf_interpolate(const MaskedGrid& mg, int radius, double lambda,
                            bool include_unobserved) {
    if (radius < 1) {
        throw ConfigError("rbf_interpolate: radius must be >= 1");
    }
    const FeatureGrid& g = mg.grid;
    if (mg.mask.height != g.height || mg.mask.width != g.width) {
        throw ShapeError("rbf_interpolate: mask and grid dims differ");
    }
    FeatureGrid out = g;
    if (mg.mask.count == g.height * g.width) {
        return out;  // fully observed grids pass through bit-exact
    }

    // Neighborhood offsets in scan order, and exp(-lambda^2 * k) for every
    // integer squared distance k the ball can produce, relative to the
    // nearest participant (index 0 is always weight 1).
    struct Offset {
        int dy, dx, d2;
    };
    std::vector<Offset> offsets;
    offsets.reserve(static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1) - 1);
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dy == 0 && dx == 0) continue;
            offsets.push_back({dy, dx, dy * dy + dx * dx});
        }
    }
    const int max_d2 = 2 * radius * radius;
    std::vector<double> exp_table(max_d2 + 1);
    for (int k = 0; k <= max_d2; ++k) {
        exp_table[k] = std::exp(-lambda * lambda * static_cast<double>(k));
    }

    const std::size_t hw = g.plane();
    std::vector<std::size_t> src;
    std::vector<int> d2s;
    std::vector<double> wgt;
    std::vector<double> num(g.channels);
    const auto& kt = kernels::active_table();

    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            if (mg.mask.test(y, x)) continue;
            src.clear();
            d2s.clear();
            int min_d2 = max_d2 + 1;
            for (const Offset& o : offsets) {
                const int yy = y + o.dy;
                const int xx = x + o.dx;
                if (yy < 0 || yy >= g.height || xx < 0 || xx >= g.width) continue;
                if (!include_unobserved && !mg.mask.test(yy, xx)) continue;
                src.push_back(static_cast<std::size_t>(yy) * g.width + xx);
                d2s.push_back(o.d2);
                if (o.d2 < min_d2) min_d2 = o.d2;
            }
            if (src.empty()) continue;  // nothing to interpolate from; keep 0
            wgt.resize(src.size());
            for (std::size_t k = 0; k < src.size(); ++k) {
                wgt[k] = exp_table[d2s[k] - min_d2];
            }
            double den = 0.0;
            kt.rbf_accumulate(g.data.data(), g.channels, hw, src.data(), wgt.data(),
                              src.size(), num.data(), &den);
            const std::size_t at = static_cast<std::size_t>(y) * g.width + x;
            for (int c = 0; c < g.channels; ++c) {
                out.data[c * hw + at] = num[c] / den;
            }
        }
    }
    return out;
}

}  // namespace umc::interp
