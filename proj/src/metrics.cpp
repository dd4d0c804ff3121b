#include "umc/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "umc/errors.hpp"

namespace umc::metrics {

const char* to_string(ObjectType t) {
    switch (t) {
        case ObjectType::ARSV: return "ARSV";
        case ObjectType::ARCV: return "ARCV";
        case ObjectType::ARCI: return "ARCI";
        case ObjectType::ARTC: return "ARTC";
    }
    return "?";
}

std::optional<ObjectType> type_from_string(const std::string& s) {
    if (s == "ARSV") return ObjectType::ARSV;
    if (s == "ARCV") return ObjectType::ARCV;
    if (s == "ARCI") return ObjectType::ARCI;
    if (s == "ARTC") return ObjectType::ARTC;
    return std::nullopt;
}

ObjectType classify_object(const GtObject& obj, int tau) {
    if (obj.points_single_view > obj.points_collab_view) {
        throw ConfigError("object has more single-view than collab-view points");
    }
    if (obj.points_single_view > tau) return ObjectType::ARSV;
    if (obj.points_collab_view > tau) return ObjectType::ARCV;
    if (obj.manual_label) return *obj.manual_label;
    return ObjectType::ARCI;
}

std::vector<int> match_detections(const std::vector<mgfe::Detection>& preds,
                                  const std::vector<GtObject>& gts,
                                  double iou_thr) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return preds[a].score > preds[b].score;
    });
    std::vector<int> assignment(preds.size(), -1);
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t idx : order) {
        double best = 0.0;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double v = geom::iou(preds[idx].box, gts[g].box);
            if (v >= iou_thr && v > best) {
                best = v;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            taken[best_gt] = true;
            assignment[idx] = best_gt;
        }
    }
    return assignment;
}

std::map<ObjectType, double> recall_by_type(const std::vector<FrameSample>& frames,
                                            int tau, double iou_thr) {
    std::map<ObjectType, int> total, hit;
    for (const FrameSample& fr : frames) {
        const std::vector<int> match = match_detections(fr.preds, fr.gts, iou_thr);
        std::vector<bool> matched(fr.gts.size(), false);
        for (int g : match) {
            if (g >= 0) matched[g] = true;
        }
        for (std::size_t g = 0; g < fr.gts.size(); ++g) {
            const ObjectType t = classify_object(fr.gts[g], tau);
            ++total[t];
            if (matched[g]) ++hit[t];
        }
    }
    std::map<ObjectType, double> out;
    for (const auto& [t, n] : total) {
        out[t] = static_cast<double>(hit[t]) / static_cast<double>(n);
    }
    return out;
}

double average_precision(const std::vector<FrameSample>& frames, double iou_thr) {
    // Matching runs per frame; the PR curve pools every prediction by score.
    struct Scored {
        double score;
        bool tp;
    };
    std::vector<Scored> pool;
    std::size_t total_gt = 0;
    for (const FrameSample& fr : frames) {
        total_gt += fr.gts.size();
        const std::vector<int> match = match_detections(fr.preds, fr.gts, iou_thr);
        for (std::size_t i = 0; i < fr.preds.size(); ++i) {
            pool.push_back({fr.preds[i].score, match[i] >= 0});
        }
    }
    if (total_gt == 0) {
        return 0.0;
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Scored& a, const Scored& b) {
        return a.score > b.score;
    });
    std::vector<double> precision(pool.size()), recall(pool.size());
    std::size_t tp = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].tp) ++tp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
    }
    // Monotone envelope from the right, then sum rectangle areas where the
    // recall actually advances.
    for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

std::string metrics_csv(const std::vector<FrameSample>& frames, int tau,
                        const std::vector<double>& iou_thresholds) {
    std::ostringstream out;
    out << "metric,iou,value\n";
    char buf[64];
    auto put = [&](const char* name, double iou, double value) {
        std::snprintf(buf, sizeof(buf), "%s,%.2f,%.9f\n", name, iou, value);
        out << buf;
    };
    for (double iou : iou_thresholds) {
        put("ap", iou, average_precision(frames, iou));
        const std::map<ObjectType, double> rec = recall_by_type(frames, tau, iou);
        for (const auto& [t, v] : rec) {
            std::string name = to_string(t);
            std::transform(name.begin(), name.end(), name.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            put(name.c_str(), iou, v);
        }
    }
    return out.str();
}

}  // namespace umc::metrics
