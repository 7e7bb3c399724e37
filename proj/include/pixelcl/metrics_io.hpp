#pragma once

#include <json.hpp>

#include "pixelcl/eval.hpp"
#include "pixelcl/training.hpp"

namespace pixelcl {

/// One metrics line per optimization step, field names as in StepRecord.
inline nlohmann::ordered_json step_to_json(const StepRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["loss_total"] = r.loss_total;
    j["loss_box"] = r.loss_box;
    j["loss_mask"] = r.loss_mask;
    j["loss_con"] = r.loss_con;
    j["lambda"] = r.lambda;
    j["n_base"] = r.n_base;
    j["n_novel"] = r.n_novel;
    j["n_skipped"] = r.n_skipped;
    return j;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& rep) {
    nlohmann::ordered_json j;
    j["base_miou"] = rep.base_miou;
    j["novel_miou"] = rep.novel_miou;
    j["base_map"] = rep.base_map;
    j["novel_map"] = rep.novel_map;
    j["base_ap50"] = rep.base_ap50;
    j["novel_ap50"] = rep.novel_ap50;
    j["base_ap75"] = rep.base_ap75;
    j["novel_ap75"] = rep.novel_ap75;
    j["base_count"] = rep.base_count;
    j["novel_count"] = rep.novel_count;
    j["seed"] = rep.seed;
    auto cats = nlohmann::ordered_json::array();
    for (const auto& m : rep.per_category) {
        nlohmann::ordered_json c;
        c["category"] = category_name(static_cast<ShapeCategory>(m.category_id));
        c["split"] = m.is_base ? "base" : "novel";
        c["count"] = m.count;
        c["mean_iou"] = m.mean_iou;
        c["map"] = m.map();
        c["ap50"] = m.ap[0];
        c["ap75"] = m.ap[5];
        cats.push_back(c);
    }
    j["per_category"] = cats;
    return j;
}

} // namespace pixelcl
