#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "umc/geometry.hpp"
#include "umc/mgfe.hpp"

namespace umc::metrics {

// Visibility class of a ground-truth object, from the evaluating agent's
// point of view.
enum class ObjectType {
    ARSV,  // enough points in the agent's own view
    ARCV,  // only enough points when collaborators pitch in
    ARCI,  // invisible to everyone
    ARTC,  // invisible now but collaboratively seen one tick ago
};

const char* to_string(ObjectType t);
std::optional<ObjectType> type_from_string(const std::string& s);

struct GtObject {
    geom::BevBox box;
    int points_single_view = 0;
    int points_collab_view = 0;
    std::optional<ObjectType> manual_label;
};

// points > tau (strict) in the agent's own view makes ARSV; otherwise the
// combined view is tested; otherwise any manual label wins; otherwise ARCI.
ObjectType classify_object(const GtObject& obj, int tau);

// One evaluation unit: the predictions and ground truth for one frame seen
// from one agent.
struct FrameSample {
    std::vector<mgfe::Detection> preds;
    std::vector<GtObject> gts;
};

// Greedy one-to-one matching in descending score order; each prediction takes
// the highest-IoU unmatched ground truth at or above the threshold. Returns
// one ground-truth index (or -1) per prediction, in the original pred order.
std::vector<int> match_detections(const std::vector<mgfe::Detection>& preds,
                                  const std::vector<GtObject>& gts,
                                  double iou_thr);

// Fraction of matched ground-truth objects per visibility type. Types with no
// ground truth are absent from the result, never reported as zero.
std::map<ObjectType, double> recall_by_type(const std::vector<FrameSample>& frames,
                                            int tau, double iou_thr);

// Area under the monotone precision envelope over recall. Type-agnostic.
double average_precision(const std::vector<FrameSample>& frames, double iou_thr);

// "metric,iou,value" rows: ap plus one recall row per populated type, for
// each IoU threshold.
std::string metrics_csv(const std::vector<FrameSample>& frames, int tau,
                        const std::vector<double>& iou_thresholds);

}  // namespace umc::metrics
