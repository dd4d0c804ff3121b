#pragma once

#include "umc/tensor.hpp"

namespace umc::geom {

// Planar rigid pose / transform: rotate by yaw, then translate. Yaw is kept
// normalized to (-pi, pi].
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
};

// Axis-aligned box in the ground plane, center + extent in meters.
struct BevBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

double normalize_angle(double a);

// Apply a as a transform: first b := a after b (b then a). compose(a, b)
// maps p through b, then through a.
Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& p);

// Transform a point expressed in the frame of `p` into the parent frame.
void apply(const Pose2& p, double px, double py, double& ox, double& oy);

// Rigid transform taking coordinates in src's frame to dst's frame:
// inverse(dst) after src.
Pose2 relative_pose(const Pose2& src, const Pose2& dst);

// Resample a grid expressed in one frame into another. `t` maps source-frame
// coordinates into the output frame; every output cell center is mapped back
// through inverse(t) and sampled bilinearly, out-of-bounds reads are 0.
// Grids are ego-centered: cell (y, x) covers metric center
// ((x + 0.5) * cell - W*cell/2, (y + 0.5) * cell - H*cell/2).
FeatureGrid warp_grid(const FeatureGrid& f, const Pose2& t, double cell_size);

// Intersection-over-union of axis-aligned boxes; disjoint boxes give 0.
double iou(const BevBox& a, const BevBox& b);

}  // namespace umc::geom
