#pragma once

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pixelcl/metrics_io.hpp"
#include "pixelcl/training.hpp"

namespace pixelcl {

struct AblationEntry {
    std::string value;
    std::uint64_t seed = 0;
    EvalReport report;
};

/// One ablation axis swept over values x seeds. Every run shares the
/// dataset seed of the base config; only the named flag and the training
/// seed differ.
struct AblationMatrix {
    std::string axis;
    std::vector<std::string> values;
    std::vector<AblationEntry> entries;
};

inline TrainConfig apply_axis(TrainConfig cfg, const std::string& axis, const std::string& value) {
    if (axis == "use_cl") cfg.use_cl = detail::parse_bool(value, axis);
    else if (axis == "use_cam") cfg.use_cam = detail::parse_bool(value, axis);
    else if (axis == "supervision") cfg.supervision = supervision_from_string(value);
    else if (axis == "query_sharing") cfg.query_sharing = detail::parse_bool(value, axis);
    else if (axis == "sigma") cfg.sigma = std::stod(value);
    else if (axis == "tau_easy") {
        // the hard temperature follows the paper's coupling tau' = 1 - tau
        cfg.tau_easy = std::stod(value);
        cfg.tau_hard = 1.0 - cfg.tau_easy;
    } else if (axis == "encoder_blocks") {
        // CnFm pairs: 4->2, 8->3, 12->4
        cfg.encoder_blocks = std::stoi(value);
        cfg.projector_layers = cfg.encoder_blocks / 4 + 1;
    } else if (axis == "oracle_novel_masks") cfg.oracle_novel_masks = detail::parse_bool(value, axis);
    else throw ConfigError("unknown ablation axis: " + axis);
    return cfg;
}

template <class S = float>
AblationMatrix run_ablation(const TrainConfig& base, const std::string& axis,
                            const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const std::string&)>& progress = {}) {
    AblationMatrix mat;
    mat.axis = axis;
    mat.values = values;
    auto [train_scenes, val_scenes] = generate_dataset(base, base.data_seed);
    for (const auto& value : values) {
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = apply_axis(base, axis, value);
            cfg.seed = seed;
            cfg.validate();
            if (progress) progress(axis + "=" + value + " seed=" + std::to_string(seed));
            Trainer<S> trainer(cfg);
            AblationEntry e;
            e.value = value;
            e.seed = seed;
            e.report = trainer.train(train_scenes, val_scenes, {});
            mat.entries.push_back(std::move(e));
        }
    }
    return mat;
}

inline double mean_novel_miou(const AblationMatrix& mat, const std::string& value) {
    double sum = 0.0;
    int n = 0;
    for (const auto& e : mat.entries)
        if (e.value == value) {
            sum += e.report.novel_miou;
            ++n;
        }
    return n > 0 ? sum / n : 0.0;
}

inline std::string format_ablation(const AblationMatrix& mat) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << "ablation axis: " << mat.axis << "\n";
    os << std::left << std::setw(16) << "value" << std::setw(8) << "seed" << std::right << std::setw(12)
       << "novel mIoU" << std::setw(12) << "novel mAP" << std::setw(12) << "base mIoU" << "\n";
    for (const auto& e : mat.entries)
        os << std::left << std::setw(16) << e.value << std::setw(8) << e.seed << std::right << std::setw(12)
           << e.report.novel_miou << std::setw(12) << e.report.novel_map << std::setw(12) << e.report.base_miou
           << "\n";
    os << "---\n";
    for (const auto& v : mat.values)
        os << std::left << std::setw(16) << v << "mean novel mIoU " << mean_novel_miou(mat, v) << "\n";
    return os.str();
}

inline nlohmann::ordered_json ablation_to_json(const AblationMatrix& mat) {
    nlohmann::ordered_json j;
    j["axis"] = mat.axis;
    auto entries = nlohmann::ordered_json::array();
    for (const auto& e : mat.entries) {
        nlohmann::ordered_json je;
        je["value"] = e.value;
        je["seed"] = e.seed;
        je["report"] = report_to_json(e.report);
        entries.push_back(je);
    }
    j["entries"] = entries;
    auto means = nlohmann::ordered_json::array();
    for (const auto& v : mat.values) {
        nlohmann::ordered_json jm;
        jm["value"] = v;
        jm["mean_novel_miou"] = mean_novel_miou(mat, v);
        means.push_back(jm);
    }
    j["means"] = means;
    return j;
}

/// Reloads the fields needed to re-render tables and charts.
inline AblationMatrix ablation_from_json(const nlohmann::json& j) {
    AblationMatrix mat;
    mat.axis = j.at("axis").get<std::string>();
    for (const auto& je : j.at("entries")) {
        AblationEntry e;
        e.value = je.at("value").get<std::string>();
        e.seed = je.at("seed").get<std::uint64_t>();
        const auto& r = je.at("report");
        e.report.novel_miou = r.at("novel_miou").get<double>();
        e.report.novel_map = r.at("novel_map").get<double>();
        e.report.base_miou = r.at("base_miou").get<double>();
        if (std::find(mat.values.begin(), mat.values.end(), e.value) == mat.values.end())
            mat.values.push_back(e.value);
        mat.entries.push_back(std::move(e));
    }
    return mat;
}

} // namespace pixelcl
