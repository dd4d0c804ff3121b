#include "umc/geometry.hpp"

#include <cmath>

#include "umc/errors.hpp"

namespace umc::geom {

double normalize_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

Pose2 compose(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.yaw);
    const double s = std::sin(a.yaw);
    Pose2 out;
    out.x = a.x + c * b.x - s * b.y;
    out.y = a.y + s * b.x + c * b.y;
    out.yaw = normalize_angle(a.yaw + b.yaw);
    return out;
}

Pose2 inverse(const Pose2& p) {
    const double c = std::cos(p.yaw);
    const double s = std::sin(p.yaw);
    Pose2 out;
    out.x = -(c * p.x + s * p.y);
    out.y = -(-s * p.x + c * p.y);
    out.yaw = normalize_angle(-p.yaw);
    return out;
}

void apply(const Pose2& p, double px, double py, double& ox, double& oy) {
    const double c = std::cos(p.yaw);
    const double s = std::sin(p.yaw);
    ox = p.x + c * px - s * py;
    oy = p.y + s * px + c * py;
}

Pose2 relative_pose(const Pose2& src, const Pose2& dst) {
    return compose(inverse(dst), src);
}

FeatureGrid warp_grid(const FeatureGrid& f, const Pose2& t, double cell_size) {
    if (cell_size <= 0.0) {
        throw ShapeError("warp_grid: cell_size must be positive");
    }
    if (t.x == 0.0 && t.y == 0.0 && t.yaw == 0.0) {
        return f;  // identity stays bit-exact
    }
    const Pose2 inv = inverse(t);
    const double c = std::cos(inv.yaw);
    const double s = std::sin(inv.yaw);
    // Affine map from output grid coordinates to source grid coordinates,
    // folded into grid units so pure translations keep exact integer offsets:
    // gx_src = c*(x - ox) - s*(y - oy) + cx, gy_src = s*(x - ox) + c*(y - oy) + cy
    // with (x - ox) the metric offset of the cell center from grid center in
    // cell units.
    const double half_w = 0.5 * f.width - 0.5;
    const double half_h = 0.5 * f.height - 0.5;
    const double tx_cells = inv.x / cell_size;
    const double ty_cells = inv.y / cell_size;

    FeatureGrid out(f.channels, f.height, f.width);
    const std::size_t hw = f.plane();
    for (int y = 0; y < f.height; ++y) {
        const double dy = y - half_h;
        for (int x = 0; x < f.width; ++x) {
            const double dx = x - half_w;
            const double gx = c * dx - s * dy + tx_cells + half_w;
            const double gy = s * dx + c * dy + ty_cells + half_h;
            const double fx0 = std::floor(gx);
            const double fy0 = std::floor(gy);
            const int x0 = static_cast<int>(fx0);
            const int y0 = static_cast<int>(fy0);
            const double ax = gx - fx0;
            const double ay = gy - fy0;
            const std::size_t p = static_cast<std::size_t>(y) * f.width + x;
            for (int ch = 0; ch < f.channels; ++ch) {
                const double* src = f.data.data() + static_cast<std::size_t>(ch) * hw;
                auto sample = [&](int yy, int xx) -> double {
                    if (yy < 0 || yy >= f.height || xx < 0 || xx >= f.width) return 0.0;
                    return src[static_cast<std::size_t>(yy) * f.width + xx];
                };
                const double top = sample(y0, x0) * (1.0 - ax) + sample(y0, x0 + 1) * ax;
                const double bot = sample(y0 + 1, x0) * (1.0 - ax) + sample(y0 + 1, x0 + 1) * ax;
                out.data[static_cast<std::size_t>(ch) * hw + p] = top * (1.0 - ay) + bot * ay;
            }
        }
    }
    return out;
}

double iou(const BevBox& a, const BevBox& b) {
    if (a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0) {
        throw ShapeError("iou: boxes must have positive extent");
    }
    const double ax0 = a.cx - 0.5 * a.w, ax1 = a.cx + 0.5 * a.w;
    const double ay0 = a.cy - 0.5 * a.h, ay1 = a.cy + 0.5 * a.h;
    const double bx0 = b.cx - 0.5 * b.w, bx1 = b.cx + 0.5 * b.w;
    const double by0 = b.cy - 0.5 * b.h, by1 = b.cy + 0.5 * b.h;
    const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = ix * iy;
    if (inter <= 0.0) {
        return 0.0;
    }
    const double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

}  // namespace umc::geom
