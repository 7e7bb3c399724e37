#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "pixelcl/config.hpp"
#include "pixelcl/errors.hpp"
#include "pixelcl/grid.hpp"
#include "pixelcl/image_io.hpp"
#include "pixelcl/rng.hpp"

namespace pixelcl {

// ---------------------------------------------------------------------------
// Categories

enum class ShapeCategory : int {
    disk = 0,
    square,
    triangle,
    ring,
    cross,
    star,
    crescent,
    ellipse,
};

inline constexpr int kNumCategories = 8;

inline const char* category_name(ShapeCategory c) {
    static constexpr std::array<const char*, kNumCategories> names = {
        "disk", "square", "triangle", "ring", "cross", "star", "crescent", "ellipse"};
    return names[static_cast<int>(c)];
}

inline ShapeCategory category_from_name(const std::string& name) {
    for (int i = 0; i < kNumCategories; ++i)
        if (name == category_name(static_cast<ShapeCategory>(i))) return static_cast<ShapeCategory>(i);
    throw ConfigError("unknown shape category: " + name);
}

/// Disjoint base/novel split over the fixed category universe.
struct CategorySplit {
    std::array<bool, kNumCategories> in_base{};
    std::array<bool, kNumCategories> in_novel{};
    std::vector<int> members; // categories the generator samples from

    bool is_base(int cat) const { return in_base[static_cast<std::size_t>(cat)]; }
};

inline CategorySplit resolve_split(const TrainConfig& cfg) {
    CategorySplit s;
    for (const auto& n : split_csv(cfg.base_categories)) s.in_base[static_cast<int>(category_from_name(n))] = true;
    for (const auto& n : split_csv(cfg.novel_categories)) {
        const int id = static_cast<int>(category_from_name(n));
        if (s.in_base[id]) throw ConfigError("category in both splits: " + n);
        s.in_novel[id] = true;
    }
    bool any_base = false, any_novel = false;
    for (int i = 0; i < kNumCategories; ++i) {
        if (s.in_base[i] || s.in_novel[i]) s.members.push_back(i);
        any_base |= s.in_base[i];
        any_novel |= s.in_novel[i];
    }
    if (!any_base || !any_novel) throw ConfigError("base and novel splits must both be nonempty");
    return s;
}

// ---------------------------------------------------------------------------
// Scene model

struct Box {
    int r0 = 0, c0 = 0, r1 = 0, c1 = 0; // half-open

    int height() const { return r1 - r0; }
    int width() const { return c1 - c0; }
};

struct ShapeSpec {
    ShapeCategory category = ShapeCategory::disk;
    double center_r = 0.0, center_c = 0.0;
    double scale = 1.0;    // circumscribed radius, pixels
    double rotation = 0.0; // radians
    std::uint64_t fill_texture_seed = 0;
};

struct Instance {
    ShapeSpec spec;
    Box box;
    Mask mask; // visible-region mask, full image frame
};

struct Scene {
    Grid<float> image; // H x W x 3, values in [0,1]
    std::vector<Instance> instances;
};

// ---------------------------------------------------------------------------
// Rasterization

namespace detail {

inline bool point_in_unit_shape(ShapeCategory cat, double x, double y) {
    const double r2 = x * x + y * y;
    switch (cat) {
        case ShapeCategory::disk:
            return r2 <= 1.0;
        case ShapeCategory::square:
            return std::abs(x) <= 0.72 && std::abs(y) <= 0.72;
        case ShapeCategory::triangle: {
            // equilateral, one vertex up, inscribed in the unit circle
            if (y < -0.5 || y > 1.0) return false;
            return std::abs(x) <= (1.0 - y) * 0.8660254037844386;
        }
        case ShapeCategory::ring:
            return r2 <= 1.0 && r2 >= 0.55 * 0.55;
        case ShapeCategory::cross:
            return (std::abs(x) <= 0.35 && std::abs(y) <= 1.0) || (std::abs(y) <= 0.35 && std::abs(x) <= 1.0);
        case ShapeCategory::star: {
            const double theta = std::atan2(y, x);
            double phase = theta * 5.0 / (2.0 * 3.14159265358979323846);
            phase -= std::floor(phase);
            const double valley = 2.0 * std::min(phase, 1.0 - phase); // 0 at tips, 1 between
            const double limit = 1.0 + (0.45 - 1.0) * valley;
            return r2 <= limit * limit;
        }
        case ShapeCategory::crescent: {
            const double dx = x - 0.5;
            return r2 <= 1.0 && (dx * dx + y * y) > 0.72 * 0.72;
        }
        case ShapeCategory::ellipse: {
            const double ny = y / 0.55;
            return x * x + ny * ny <= 1.0;
        }
    }
    return false;
}

// Cheap deterministic value noise in [0,1).
inline double hash_noise(std::uint64_t seed, int r, int c) {
    std::uint64_t h = seed ^ (static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ULL) ^
                      (static_cast<std::uint64_t>(c) * 0xc2b2ae3d27d4eb4fULL);
    h = pixelcl::detail::mix64(h);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline void hsv_to_rgb(double h, double s, double v, float rgb[3]) {
    h -= std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    rgb[0] = static_cast<float>(r + m);
    rgb[1] = static_cast<float>(g + m);
    rgb[2] = static_cast<float>(b + m);
}

} // namespace detail

/// Rasterizes the shape over the full image frame by testing pixel centers
/// in shape-local coordinates.
inline Mask rasterize_shape(const ShapeSpec& spec, int img_h, int img_w) {
    Mask m(img_h, img_w, 1);
    const double cosr = std::cos(spec.rotation), sinr = std::sin(spec.rotation);
    const int r_lo = std::max(0, static_cast<int>(spec.center_r - spec.scale - 1));
    const int r_hi = std::min(img_h - 1, static_cast<int>(spec.center_r + spec.scale + 1));
    const int c_lo = std::max(0, static_cast<int>(spec.center_c - spec.scale - 1));
    const int c_hi = std::min(img_w - 1, static_cast<int>(spec.center_c + spec.scale + 1));
    for (int r = r_lo; r <= r_hi; ++r)
        for (int c = c_lo; c <= c_hi; ++c) {
            const double py = (r + 0.5 - spec.center_r) / spec.scale;
            const double px = (c + 0.5 - spec.center_c) / spec.scale;
            // rotate into shape-local frame
            const double lx = cosr * px + sinr * py;
            const double ly = -sinr * px + cosr * py;
            if (detail::point_in_unit_shape(spec.category, lx, ly)) m.at(r, c) = 1;
        }
    return m;
}

/// Hue is bound to the category; this is what makes the classification head
/// learnable and gives the CAM a transferable foreground cue.
inline double category_hue(int cat) { return static_cast<double>(cat) / kNumCategories; }

namespace detail {

struct PaintStyle {
    double hue, sat, val;
    std::uint64_t texture_seed;
};

inline void paint_mask(Grid<float>& img, const Mask& m, const PaintStyle& st) {
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) {
            if (!m.at(r, c)) continue;
            const double noise = (hash_noise(st.texture_seed, r, c) - 0.5) * 0.25;
            float rgb[3];
            hsv_to_rgb(st.hue, st.sat, std::clamp(st.val + noise, 0.05, 1.0), rgb);
            img.at(r, c, 0) = rgb[0];
            img.at(r, c, 1) = rgb[1];
            img.at(r, c, 2) = rgb[2];
        }
}

} // namespace detail

/// Generates one scene: textured background, small colored clutter blobs,
/// then 1..max_instances shapes drawn back-to-front. Instance masks are the
/// visible regions after occlusion; bounding boxes are tight around them.
inline Scene generate_scene(const TrainConfig& cfg, const CategorySplit& split, RandomStream rng) {
    const int n_img = cfg.image_size;
    for (int attempt = 0; attempt < 40; ++attempt) {
        RandomStream r = rng.derive(1000 + attempt);
        Scene scene;
        scene.image = Grid<float>(n_img, n_img, 3);

        // background
        const double bg_hue = r.uniform01();
        const double bg_sat = r.uniform(0.05, 0.2);
        const double bg_val = r.uniform(0.35, 0.65);
        const std::uint64_t bg_seed = r.raw();
        for (int rr = 0; rr < n_img; ++rr)
            for (int cc = 0; cc < n_img; ++cc) {
                const double noise = (detail::hash_noise(bg_seed, rr, cc) - 0.5) * 0.2;
                float rgb[3];
                detail::hsv_to_rgb(bg_hue, bg_sat, std::clamp(bg_val + noise, 0.05, 1.0), rgb);
                scene.image.at(rr, cc, 0) = rgb[0];
                scene.image.at(rr, cc, 1) = rgb[1];
                scene.image.at(rr, cc, 2) = rgb[2];
            }

        // clutter: colored distractor blobs that belong to the background
        const int n_blobs = static_cast<int>(r.uniform_int(4, 9));
        for (int b = 0; b < n_blobs; ++b) {
            ShapeSpec blob;
            blob.category = r.bernoulli(0.5) ? ShapeCategory::disk : ShapeCategory::square;
            blob.scale = r.uniform(2.0, 4.5);
            blob.center_r = r.uniform(2.0, n_img - 2.0);
            blob.center_c = r.uniform(2.0, n_img - 2.0);
            blob.rotation = r.uniform(0.0, 6.283185307179586);
            const Mask bm = rasterize_shape(blob, n_img, n_img);
            detail::paint_mask(scene.image, bm,
                               {r.uniform01(), r.uniform(0.5, 0.9), r.uniform(0.4, 0.9), r.raw()});
        }

        // instances
        const int n_inst = static_cast<int>(r.uniform_int(cfg.min_instances, cfg.max_instances));
        std::vector<Mask> raw_masks;
        for (int i = 0; i < n_inst; ++i) {
            ShapeSpec spec;
            spec.category = static_cast<ShapeCategory>(split.members[r.below(split.members.size())]);
            spec.scale = r.uniform(9.0, 15.0);
            const double margin = spec.scale + 1.5;
            spec.center_r = r.uniform(margin, n_img - margin);
            spec.center_c = r.uniform(margin, n_img - margin);
            spec.rotation = r.uniform(0.0, 6.283185307179586);
            spec.fill_texture_seed = r.raw();
            Mask m = rasterize_shape(spec, n_img, n_img);
            const double hue = category_hue(static_cast<int>(spec.category)) + r.uniform(-0.02, 0.02);
            detail::paint_mask(scene.image, m, {hue, r.uniform(0.65, 0.9), r.uniform(0.6, 0.9), spec.fill_texture_seed});
            raw_masks.push_back(std::move(m));
            scene.instances.push_back({spec, {}, Mask{}});
        }

        // visibility: later instances occlude earlier ones
        bool ok = true;
        for (int i = 0; i < n_inst && ok; ++i) {
            Mask vis = raw_masks[i];
            for (int j = i + 1; j < n_inst; ++j)
                for (std::size_t p = 0; p < vis.data.size(); ++p)
                    if (raw_masks[j].data[p]) vis.data[p] = 0;
            int r0 = n_img, c0 = n_img, r1 = -1, c1 = -1, count = 0;
            for (int rr = 0; rr < n_img; ++rr)
                for (int cc = 0; cc < n_img; ++cc)
                    if (vis.at(rr, cc)) {
                        ++count;
                        r0 = std::min(r0, rr);
                        c0 = std::min(c0, cc);
                        r1 = std::max(r1, rr);
                        c1 = std::max(c1, cc);
                    }
            if (count < 16) {
                ok = false;
                break;
            }
            scene.instances[i].mask = std::move(vis);
            scene.instances[i].box = {r0, c0, r1 + 1, c1 + 1};
        }
        if (ok) return scene;
    }
    throw ConfigError("could not generate a valid scene after 40 attempts");
}

/// Deterministic dataset generation: every scene derives its own stream from
/// (seed, split tag, index). Validation scenes are guaranteed to contain at
/// least one base and one novel instance overall.
inline std::pair<std::vector<Scene>, std::vector<Scene>> generate_dataset(const TrainConfig& cfg,
                                                                          std::uint64_t seed) {
    const CategorySplit split = resolve_split(cfg);
    RandomStream root(seed);
    std::vector<Scene> train, val;
    train.reserve(cfg.train_scenes);
    for (int i = 0; i < cfg.train_scenes; ++i)
        train.push_back(generate_scene(cfg, split, root.derive(0x7437 + static_cast<std::uint64_t>(i))));
    val.reserve(cfg.val_scenes);
    for (int i = 0; i < cfg.val_scenes; ++i)
        val.push_back(generate_scene(cfg, split, root.derive(0x7641000000ULL + static_cast<std::uint64_t>(i))));

    auto has_both = [&](const std::vector<Scene>& scenes) {
        bool base = false, novel = false;
        for (const auto& s : scenes)
            for (const auto& inst : s.instances)
                (split.is_base(static_cast<int>(inst.spec.category)) ? base : novel) = true;
        return base && novel;
    };
    for (std::uint64_t bump = 1; !has_both(val); ++bump)
        val.back() = generate_scene(cfg, split, root.derive(0x7641ff0000ULL + bump));
    return {std::move(train), std::move(val)};
}

// ---------------------------------------------------------------------------
// RoI extraction

/// Counts reads of ground-truth masks that were flagged unavailable. Any
/// nonzero value after a non-oracle training run is a supervision leak.
inline std::atomic<long>& unsanctioned_mask_reads() {
    static std::atomic<long> counter{0};
    return counter;
}

/// One object proposal: the resized crop, its category, and (when sanctioned)
/// the resized ground-truth mask. Access to a restricted mask is counted so
/// tests can prove the training path never touches novel masks.
class RoiSample {
public:
    Grid<float> crop;
    int category_id = 0;
    bool is_base = false;
    int roi_resolution = 0;

    RoiSample() = default;
    RoiSample(Grid<float> crop_, int cat, bool base, int roi, Mask mask)
        : crop(std::move(crop_)), category_id(cat), is_base(base), roi_resolution(roi), gt_mask_(std::move(mask)) {}

    bool has_gt_mask() const { return mask_available_; }

    const Mask& gt_mask() const {
        if (!mask_available_) unsanctioned_mask_reads()++;
        return gt_mask_;
    }

    /// Flags the mask as unavailable (novel training samples). The pixels
    /// stay in memory; reading them afterwards trips the audit counter.
    void restrict_mask_access() { mask_available_ = false; }

    void flip_horizontal() {
        crop = hflip(crop);
        gt_mask_ = hflip(gt_mask_);
    }

private:
    Mask gt_mask_;
    bool mask_available_ = true;
};

/// Crops one instance with optional box jitter and resizes to R x R
/// (bilinear image, nearest mask). A box that collapses to zero area after
/// clamping raises DegenerateBox.
inline RoiSample extract_roi(const Scene& scene, int index, double jitter, int roi, RandomStream& rng,
                             const CategorySplit& split) {
    if (!(jitter >= 0.0 && jitter <= 0.2)) throw ConfigError("jitter must lie in [0, 0.2]");
    if (index < 0 || index >= static_cast<int>(scene.instances.size())) throw ConfigError("instance index out of range");
    const Instance& inst = scene.instances[static_cast<std::size_t>(index)];

    double r0 = inst.box.r0, c0 = inst.box.c0, r1 = inst.box.r1, c1 = inst.box.c1;
    if (jitter > 0.0) {
        const double h = r1 - r0, w = c1 - c0;
        r0 += rng.uniform(-1.0, 1.0) * jitter * h;
        r1 += rng.uniform(-1.0, 1.0) * jitter * h;
        c0 += rng.uniform(-1.0, 1.0) * jitter * w;
        c1 += rng.uniform(-1.0, 1.0) * jitter * w;
    }
    int ir0 = std::clamp(static_cast<int>(std::lround(r0)), 0, scene.image.h);
    int ir1 = std::clamp(static_cast<int>(std::lround(r1)), 0, scene.image.h);
    int ic0 = std::clamp(static_cast<int>(std::lround(c0)), 0, scene.image.w);
    int ic1 = std::clamp(static_cast<int>(std::lround(c1)), 0, scene.image.w);
    if (ir1 - ir0 <= 0 || ic1 - ic0 <= 0) throw DegenerateBox("bbox collapsed after jitter and clamping");

    Grid<float> sub(ir1 - ir0, ic1 - ic0, 3);
    Mask msub(ir1 - ir0, ic1 - ic0, 1);
    for (int r = ir0; r < ir1; ++r)
        for (int c = ic0; c < ic1; ++c) {
            for (int ch = 0; ch < 3; ++ch) sub.at(r - ir0, c - ic0, ch) = scene.image.at(r, c, ch);
            msub.at(r - ir0, c - ic0) = inst.mask.at(r, c);
        }
    Grid<float> crop = resize_bilinear(sub, roi, roi);
    Mask mask = resize_nearest(msub, roi, roi);
    const int cat = static_cast<int>(inst.spec.category);
    return RoiSample(std::move(crop), cat, split.is_base(cat), roi, std::move(mask));
}

// ---------------------------------------------------------------------------
// On-disk dataset layout

namespace detail {

inline std::string scene_stem(int idx) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%05d", idx);
    return buf;
}

} // namespace detail

inline void write_split(const std::filesystem::path& dir, const std::vector<Scene>& scenes,
                        const CategorySplit& split) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "scenes");
    fs::create_directories(dir / "masks");
    std::ofstream index(dir / "index.txt");
    if (!index) throw ConfigError("cannot write index in " + dir.string());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const std::string stem = detail::scene_stem(static_cast<int>(i));
        const std::string img_rel = "scenes/" + stem + ".ppm";
        write_ppm((dir / img_rel).string(), scenes[i].image);
        for (std::size_t j = 0; j < scenes[i].instances.size(); ++j) {
            const Instance& inst = scenes[i].instances[j];
            char mbuf[64];
            std::snprintf(mbuf, sizeof(mbuf), "masks/%s_inst_%02d.pgm", stem.c_str(), static_cast<int>(j));
            Mask store = inst.mask;
            for (auto& v : store.data) v = v ? 255 : 0;
            write_pgm((dir / mbuf).string(), store);
            index << stem << " " << img_rel << " " << inst.box.r0 << " " << inst.box.c0 << " " << inst.box.r1
                  << " " << inst.box.c1 << " " << category_name(inst.spec.category) << " "
                  << (split.is_base(static_cast<int>(inst.spec.category)) ? 1 : 0) << " " << mbuf << "\n";
        }
    }
}

inline std::vector<Scene> read_split(const std::filesystem::path& dir) {
    std::ifstream index(dir / "index.txt");
    if (!index) throw ConfigError("cannot read index in " + dir.string());
    std::vector<Scene> scenes;
    std::string last_stem;
    std::string stem, img_rel, cat, mask_rel;
    int is_base = 0;
    Box box;
    while (index >> stem >> img_rel >> box.r0 >> box.c0 >> box.r1 >> box.c1 >> cat >> is_base >> mask_rel) {
        if (stem != last_stem) {
            scenes.emplace_back();
            scenes.back().image = read_ppm((dir / img_rel).string());
            last_stem = stem;
        }
        Instance inst;
        inst.spec.category = category_from_name(cat);
        inst.box = box;
        inst.mask = read_pgm((dir / mask_rel).string());
        for (auto& v : inst.mask.data) v = v >= 128 ? 1 : 0;
        scenes.back().instances.push_back(std::move(inst));
    }
    return scenes;
}

inline void write_dataset(const std::filesystem::path& out_dir, const std::vector<Scene>& train,
                          const std::vector<Scene>& val, const CategorySplit& split) {
    write_split(out_dir / "train", train, split);
    write_split(out_dir / "val", val, split);
}

} // namespace pixelcl
