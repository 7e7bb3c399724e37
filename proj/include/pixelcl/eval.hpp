#pragma once

#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pixelcl/heads.hpp"
#include "pixelcl/synth.hpp"

namespace pixelcl {

inline constexpr std::array<double, 10> kIouThresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                                          0.75, 0.80, 0.85, 0.90, 0.95};

/// IoU of the binarized prediction (sigmoid >= threshold) against the mask.
/// Empty-union-empty counts as a perfect match.
template <class S>
double mask_iou(const Grid<S>& logits, const Mask& gt, double threshold = 0.5) {
    if (logits.h != gt.h || logits.w != gt.w) throw ConfigError("mask_iou shape mismatch");
    const double logit_thr = std::log(threshold / (1.0 - threshold));
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        const bool p = static_cast<double>(logits.data[i]) >= logit_thr;
        const bool g = gt.data[i] != 0;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct CategoryMetrics {
    int category_id = 0;
    bool is_base = false;
    int count = 0;
    double mean_iou = 0.0;               // percent
    std::array<double, 10> ap{};         // percent, one per IoU threshold
    double map() const {
        double s = 0.0;
        for (double v : ap) s += v;
        return s / ap.size();
    }
};

/// Segmentation metrics over ground-truth-box RoIs, split into base and
/// novel blocks. All values are on the 0..100 percent scale.
struct EvalReport {
    std::vector<CategoryMetrics> per_category;
    double base_miou = 0.0, novel_miou = 0.0;
    double base_map = 0.0, novel_map = 0.0;
    double base_ap50 = 0.0, novel_ap50 = 0.0;
    double base_ap75 = 0.0, novel_ap75 = 0.0;
    int base_count = 0, novel_count = 0;
    std::uint64_t seed = 0;
    std::string config_echo;
};

namespace detail {

struct CatAccum {
    std::vector<double> ious;
};

} // namespace detail

/// Evaluates a trained network on a scene split. Detection is out of scope:
/// every ground-truth box becomes one RoI (jitter 0), a prediction counts as
/// a true positive at threshold t iff its mask IoU reaches t, and AP is
/// aggregated per category before averaging. The CAM class is the argmax
/// prediction, as at inference.
template <class S>
EvalReport evaluate(const Network<S>& net, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                    const CategorySplit& split) {
    std::map<int, detail::CatAccum> by_cat;
    RandomStream rng(0); // jitter 0: no draws consumed
    for (const auto& scene : scenes) {
        for (int j = 0; j < static_cast<int>(scene.instances.size()); ++j) {
            RoiSample roi = extract_roi(scene, j, 0.0, cfg.roi_resolution, rng, split);
            if (!roi.has_gt_mask()) throw ConfigError("evaluation requires ground-truth masks");
            const auto trace = net.forward(roi.crop, -1);
            by_cat[roi.category_id].ious.push_back(mask_iou(trace.mask_logits, roi.gt_mask()));
        }
    }

    EvalReport rep;
    rep.seed = cfg.seed;
    double base_iou_sum = 0.0, novel_iou_sum = 0.0;
    std::array<double, 10> base_ap_sum{}, novel_ap_sum{};
    int n_base_cats = 0, n_novel_cats = 0;
    for (const auto& [cat, acc] : by_cat) {
        CategoryMetrics m;
        m.category_id = cat;
        m.is_base = split.is_base(cat);
        m.count = static_cast<int>(acc.ious.size());
        double iou_sum = 0.0;
        for (double v : acc.ious) iou_sum += v;
        m.mean_iou = 100.0 * iou_sum / m.count;
        for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
            int tp = 0;
            for (double v : acc.ious) tp += v >= kIouThresholds[t] ? 1 : 0;
            m.ap[t] = 100.0 * tp / m.count;
        }
        if (m.is_base) {
            base_iou_sum += m.mean_iou;
            for (std::size_t t = 0; t < m.ap.size(); ++t) base_ap_sum[t] += m.ap[t];
            ++n_base_cats;
            rep.base_count += m.count;
        } else {
            novel_iou_sum += m.mean_iou;
            for (std::size_t t = 0; t < m.ap.size(); ++t) novel_ap_sum[t] += m.ap[t];
            ++n_novel_cats;
            rep.novel_count += m.count;
        }
        rep.per_category.push_back(m);
    }
    auto finish = [](std::array<double, 10>& ap_sum, int n, double& map_out, double& ap50, double& ap75) {
        if (n == 0) return;
        double total = 0.0;
        for (auto& v : ap_sum) {
            v /= n;
            total += v;
        }
        map_out = total / ap_sum.size();
        ap50 = ap_sum[0];
        ap75 = ap_sum[5];
    };
    if (n_base_cats > 0) rep.base_miou = base_iou_sum / n_base_cats;
    if (n_novel_cats > 0) rep.novel_miou = novel_iou_sum / n_novel_cats;
    finish(base_ap_sum, n_base_cats, rep.base_map, rep.base_ap50, rep.base_ap75);
    finish(novel_ap_sum, n_novel_cats, rep.novel_map, rep.novel_ap50, rep.novel_ap75);
    return rep;
}

inline std::string format_report(const EvalReport& rep) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << "metrics over ground-truth-box RoIs (detection out of scope)\n";
    os << "category    split  count   mIoU    mAP   AP50   AP75\n";
    for (const auto& m : rep.per_category) {
        os << std::left << std::setw(12) << category_name(static_cast<ShapeCategory>(m.category_id))
           << std::setw(7) << (m.is_base ? "base" : "novel") << std::right << std::setw(5) << m.count
           << std::setw(7) << m.mean_iou << std::setw(7) << m.map() << std::setw(7) << m.ap[0] << std::setw(7)
           << m.ap[5] << "\n";
    }
    os << "base  (" << rep.base_count << " rois): mIoU " << rep.base_miou << "  mAP " << rep.base_map
       << "  AP50 " << rep.base_ap50 << "  AP75 " << rep.base_ap75 << "\n";
    os << "novel (" << rep.novel_count << " rois): mIoU " << rep.novel_miou << "  mAP " << rep.novel_map
       << "  AP50 " << rep.novel_ap50 << "  AP75 " << rep.novel_ap75 << "\n";
    return os.str();
}

} // namespace pixelcl
