#pragma once

#include "umc/entropy_cs.hpp"
#include "umc/tensor.hpp"
#include "umc/wire.hpp"

namespace umc::interp {

// Dense grid plus the mask of cells that actually carry received data.
// Unobserved cells are exact zeros until interpolation fills them.
struct MaskedGrid {
    FeatureGrid grid;
    entropy::SelectionMask mask;
};

// Expand a sparse packet back onto a dense zero grid.
MaskedGrid scatter_to_grid(const wire::SparsePacket& p);

// Radial-basis fill of the unobserved cells. For each unobserved cell the
// neighborhood is the Chebyshev ball of the given radius (the cell itself
// excluded); weights are exp(-lambda^2 * d^2) with Euclidean d, and the
// weighted mean normalizes by the weight sum. Exponents are shifted by the
// smallest squared distance in the neighborhood, which cancels in the ratio
// and keeps large lambda finite. Observed cells pass through unchanged.
//
// include_unobserved keeps masked-out neighbors in the sum as zero-valued
// inputs (they dilute the estimate); switching it off restricts the sum to
// observed cells.
FeatureGrid rbf_interpolate(const MaskedGrid& mg, int radius = 7,
                            double lambda = 1.0, bool include_unobserved = true);

}  // namespace umc::interp
