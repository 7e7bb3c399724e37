#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pixelcl/cl_objective.hpp"
#include "pixelcl/errors.hpp"

namespace pixelcl {

enum class Supervision { base, novel, all };

inline std::string to_string(Supervision s) {
    switch (s) {
        case Supervision::base: return "base";
        case Supervision::novel: return "novel";
        default: return "all";
    }
}

inline Supervision supervision_from_string(const std::string& s) {
    if (s == "base") return Supervision::base;
    if (s == "novel") return Supervision::novel;
    if (s == "all") return Supervision::all;
    throw ConfigError("unknown supervision mode: " + s);
}

inline std::string to_string(QueryGradient q) { return q == QueryGradient::stop ? "stop" : "flow"; }

inline QueryGradient query_gradient_from_string(const std::string& s) {
    if (s == "stop") return QueryGradient::stop;
    if (s == "flow") return QueryGradient::flow;
    throw ConfigError("unknown query_gradient mode: " + s);
}

/// Every knob of the pipeline. Serialized as a flat key = value file whose
/// keys mirror the field names.
struct TrainConfig {
    // contrastive objective
    double delta = 0.1;
    double sigma = 0.3;
    double tau_easy = 0.7;
    double tau_hard = 0.3;
    double lambda_start = 0.25;
    double lambda_end = 1.0;
    double warmup_fraction = 0.5;

    // model
    int roi_resolution = 28;
    int channels = 64;
    int encoder_blocks = 8;
    int projector_layers = 3;

    // optimization
    int epochs = 8;
    int batch_size = 8;
    double learning_rate = 0.005;
    double momentum = 0.9;
    std::uint64_t seed = 1;

    // ablation flags
    bool use_cl = true;
    bool use_cam = true;
    Supervision supervision = Supervision::all;
    bool query_sharing = true;
    QueryGradient query_gradient = QueryGradient::stop;
    bool oracle_novel_masks = false;

    // dataset
    int image_size = 64;
    int train_scenes = 96;
    int val_scenes = 32;
    int min_instances = 1;
    int max_instances = 5;
    double jitter = 0.1;
    bool hflip = true;
    std::uint64_t data_seed = 7;
    std::string base_categories = "disk,square,triangle,ring";
    std::string novel_categories = "cross,star,crescent,ellipse";

    // run control
    int eval_every = 0;      // epochs between mid-run evals; 0 = final only
    int checkpoint_every = 0; // epochs between checkpoints; 0 = final only
    int threads = 2;         // worker threads; --deterministic forces 1

    void validate() const;
    std::string serialize() const;
};

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        // trim
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

inline void TrainConfig::validate() const {
    if (!(delta > 0.0 && delta < 0.5)) throw ConfigError("delta must lie in (0, 0.5)");
    if (!(sigma > 0.0 && sigma <= 1.0)) throw ConfigError("sigma must lie in (0, 1]");
    if (!(tau_easy > 0.0 && tau_hard > 0.0)) throw ConfigError("temperatures must be positive");
    if (!(warmup_fraction > 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in (0, 1]");
    if (lambda_start > lambda_end) throw ConfigError("lambda_start must not exceed lambda_end");
    if (roi_resolution < 4 || roi_resolution % 2 != 0) throw ConfigError("roi_resolution must be even and >= 4");
    if (channels < 1 || encoder_blocks < 1 || projector_layers < 1) throw ConfigError("model sizes must be positive");
    if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be positive");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (image_size < 16) throw ConfigError("image_size too small");
    if (train_scenes < 1 || val_scenes < 1) throw ConfigError("scene counts must be positive");
    if (min_instances < 1 || max_instances < min_instances) throw ConfigError("bad instance count range");
    if (!(jitter >= 0.0 && jitter <= 0.2)) throw ConfigError("jitter must lie in [0, 0.2]");
    const auto base = split_csv(base_categories);
    const auto novel = split_csv(novel_categories);
    if (base.empty() || novel.empty()) throw ConfigError("base and novel category sets must be nonempty");
    for (const auto& b : base)
        if (std::find(novel.begin(), novel.end(), b) != novel.end())
            throw ConfigError("base and novel category sets overlap: " + b);
}

namespace detail {

inline std::string bool_str(bool b) { return b ? "true" : "false"; }

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

} // namespace detail

inline std::string TrainConfig::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "delta = " << delta << "\n";
    os << "sigma = " << sigma << "\n";
    os << "tau_easy = " << tau_easy << "\n";
    os << "tau_hard = " << tau_hard << "\n";
    os << "lambda_start = " << lambda_start << "\n";
    os << "lambda_end = " << lambda_end << "\n";
    os << "warmup_fraction = " << warmup_fraction << "\n";
    os << "roi_resolution = " << roi_resolution << "\n";
    os << "channels = " << channels << "\n";
    os << "encoder_blocks = " << encoder_blocks << "\n";
    os << "projector_layers = " << projector_layers << "\n";
    os << "epochs = " << epochs << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "learning_rate = " << learning_rate << "\n";
    os << "momentum = " << momentum << "\n";
    os << "seed = " << seed << "\n";
    os << "use_cl = " << detail::bool_str(use_cl) << "\n";
    os << "use_cam = " << detail::bool_str(use_cam) << "\n";
    os << "supervision = " << to_string(supervision) << "\n";
    os << "query_sharing = " << detail::bool_str(query_sharing) << "\n";
    os << "query_gradient = " << to_string(query_gradient) << "\n";
    os << "oracle_novel_masks = " << detail::bool_str(oracle_novel_masks) << "\n";
    os << "image_size = " << image_size << "\n";
    os << "train_scenes = " << train_scenes << "\n";
    os << "val_scenes = " << val_scenes << "\n";
    os << "min_instances = " << min_instances << "\n";
    os << "max_instances = " << max_instances << "\n";
    os << "jitter = " << jitter << "\n";
    os << "hflip = " << detail::bool_str(hflip) << "\n";
    os << "data_seed = " << data_seed << "\n";
    os << "base_categories = " << base_categories << "\n";
    os << "novel_categories = " << novel_categories << "\n";
    os << "eval_every = " << eval_every << "\n";
    os << "checkpoint_every = " << checkpoint_every << "\n";
    os << "threads = " << threads << "\n";
    return os.str();
}

inline TrainConfig parse_train_config(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key on config line " + std::to_string(lineno));
        if (key == "delta") cfg.delta = std::stod(val);
        else if (key == "sigma") cfg.sigma = std::stod(val);
        else if (key == "tau_easy") cfg.tau_easy = std::stod(val);
        else if (key == "tau_hard") cfg.tau_hard = std::stod(val);
        else if (key == "lambda_start") cfg.lambda_start = std::stod(val);
        else if (key == "lambda_end") cfg.lambda_end = std::stod(val);
        else if (key == "warmup_fraction") cfg.warmup_fraction = std::stod(val);
        else if (key == "roi_resolution") cfg.roi_resolution = std::stoi(val);
        else if (key == "channels") cfg.channels = std::stoi(val);
        else if (key == "encoder_blocks") cfg.encoder_blocks = std::stoi(val);
        else if (key == "projector_layers") cfg.projector_layers = std::stoi(val);
        else if (key == "epochs") cfg.epochs = std::stoi(val);
        else if (key == "batch_size") cfg.batch_size = std::stoi(val);
        else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
        else if (key == "momentum") cfg.momentum = std::stod(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "use_cl") cfg.use_cl = detail::parse_bool(val, key);
        else if (key == "use_cam") cfg.use_cam = detail::parse_bool(val, key);
        else if (key == "supervision") cfg.supervision = supervision_from_string(val);
        else if (key == "query_sharing") cfg.query_sharing = detail::parse_bool(val, key);
        else if (key == "query_gradient") cfg.query_gradient = query_gradient_from_string(val);
        else if (key == "oracle_novel_masks") cfg.oracle_novel_masks = detail::parse_bool(val, key);
        else if (key == "image_size") cfg.image_size = std::stoi(val);
        else if (key == "train_scenes") cfg.train_scenes = std::stoi(val);
        else if (key == "val_scenes") cfg.val_scenes = std::stoi(val);
        else if (key == "min_instances") cfg.min_instances = std::stoi(val);
        else if (key == "max_instances") cfg.max_instances = std::stoi(val);
        else if (key == "jitter") cfg.jitter = std::stod(val);
        else if (key == "hflip") cfg.hflip = detail::parse_bool(val, key);
        else if (key == "data_seed") cfg.data_seed = std::stoull(val);
        else if (key == "base_categories") cfg.base_categories = val;
        else if (key == "novel_categories") cfg.novel_categories = val;
        else if (key == "eval_every") cfg.eval_every = std::stoi(val);
        else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
        else if (key == "threads") cfg.threads = std::stoi(val);
        else throw ConfigError("unknown config key: " + key);
    }
    return cfg;
}

inline TrainConfig parse_train_config(const std::string& text) {
    std::istringstream is(text);
    return parse_train_config(is);
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_train_config(in);
}

} // namespace pixelcl
