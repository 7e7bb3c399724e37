#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "pixelcl/ablation.hpp"
#include "pixelcl/eval.hpp"
#include "pixelcl/heads.hpp"
#include "pixelcl/image_io.hpp"
#include "pixelcl/partition.hpp"
#include "pixelcl/synth.hpp"

namespace pixelcl {

namespace detail {

inline void blit(Grid<float>& canvas, const Grid<float>& tile, int r0, int c0) {
    for (int r = 0; r < tile.h; ++r)
        for (int c = 0; c < tile.w; ++c)
            for (int ch = 0; ch < 3; ++ch) canvas.at(r0 + r, c0 + c, ch) = tile.at(r, c, ch);
}

inline Grid<float> gray_to_rgb(const Grid<float>& g) {
    Grid<float> out(g.h, g.w, 3);
    for (int r = 0; r < g.h; ++r)
        for (int c = 0; c < g.w; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = g.at(r, c);
    return out;
}

inline Grid<float> mask_to_rgb(const Mask& m, float scale = 1.0f / 255.0f) {
    Grid<float> out(m.h, m.w, 3);
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = m.at(r, c) * scale;
    return out;
}

// 3x5 bitmap digits for chart labels
inline const char* digit_rows(char d) {
    static constexpr const char* font[12] = {
        "111101101101111", "010110010010111", "111001111100111", "111001111001111", "101101111001001",
        "111100111001111", "111100111101111", "111001010010010", "111101111101111", "111101111001111",
        "000000000000010", "000000111000000"}; // 0-9, '.', '-'
    if (d >= '0' && d <= '9') return font[d - '0'];
    if (d == '.') return font[10];
    return font[11];
}

inline void draw_text(Grid<float>& canvas, const std::string& text, int r0, int c0, float v = 1.0f) {
    int cx = c0;
    for (char ch : text) {
        const char* rows = digit_rows(ch);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 3; ++c)
                if (rows[r * 3 + c] == '1' && r0 + r < canvas.h && cx + c < canvas.w)
                    for (int k = 0; k < 3; ++k) canvas.at(r0 + r, cx + c, k) = v;
        cx += 4;
    }
}

} // namespace detail

/// One row per sample: input crop, CAM, pseudo-mask partition (3-level),
/// predicted mask probability, ground-truth mask.
template <class S>
Grid<float> render_sample_grid(const Network<S>& net, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                               const CategorySplit& split, bool base_rows, int max_rows = 8) {
    const int R = cfg.roi_resolution;
    const int pad = 2;
    std::vector<std::array<Grid<float>, 5>> rows;
    RandomStream rng(0);
    for (const auto& scene : scenes) {
        if (static_cast<int>(rows.size()) >= max_rows) break;
        for (int j = 0; j < static_cast<int>(scene.instances.size()); ++j) {
            if (static_cast<int>(rows.size()) >= max_rows) break;
            RoiSample roi = extract_roi(scene, j, 0.0, R, rng, split);
            if (roi.is_base != base_rows) continue;
            const auto trace = net.forward(roi.crop, roi.category_id);
            Grid<float> cam_f(trace.cam.h, trace.cam.w, 1);
            for (std::size_t i = 0; i < cam_f.data.size(); ++i)
                cam_f.data[i] = static_cast<float>(trace.cam.data[i]);
            Grid<float> partition_img(R, R, 1, 128.0f / 255.0f);
            try {
                const Partition p = base_rows ? partition_from_mask(roi.gt_mask())
                                              : partition_from_cam(trace.cam, cfg.delta);
                const Mask levels = render_partition(p);
                for (std::size_t i = 0; i < levels.data.size(); ++i)
                    partition_img.data[i] = levels.data[i] / 255.0f;
            } catch (const EmptyPartitionSide&) {
                // left as flat gray: nothing confident to show
            }
            Grid<float> prob(R, R, 1);
            for (std::size_t i = 0; i < prob.data.size(); ++i)
                prob.data[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(trace.mask_logits.data[i]))));
            rows.push_back({roi.crop, detail::gray_to_rgb(cam_f), detail::gray_to_rgb(partition_img),
                            detail::gray_to_rgb(prob), detail::mask_to_rgb(roi.gt_mask(), 1.0f)});
        }
    }
    const int n = static_cast<int>(rows.size());
    Grid<float> canvas(std::max(1, n * (R + pad) + pad), 5 * (R + pad) + pad, 3, 0.05f);
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < 5; ++p)
            detail::blit(canvas, rows[i][p], pad + i * (R + pad), pad + p * (R + pad));
    return canvas;
}

/// Bar chart of mean novel mIoU per ablation value, ordered best-first.
inline Grid<float> render_ablation_chart(const AblationMatrix& mat) {
    struct Bar {
        std::string label;
        double value;
    };
    std::vector<Bar> bars;
    for (const auto& v : mat.values) bars.push_back({v, mean_novel_miou(mat, v)});
    std::sort(bars.begin(), bars.end(), [](const Bar& a, const Bar& b) { return a.value > b.value; });

    const int bar_w = 26, gap = 10, chart_h = 160, top = 16, bottom = 8;
    Grid<float> canvas(top + chart_h + bottom, gap + static_cast<int>(bars.size()) * (bar_w + gap), 3, 0.08f);
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const int h = static_cast<int>(std::clamp(bars[i].value, 0.0, 100.0) / 100.0 * chart_h);
        const int c0 = gap + static_cast<int>(i) * (bar_w + gap);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < bar_w; ++c) {
                canvas.at(top + chart_h - 1 - r, c0 + c, 0) = 0.2f;
                canvas.at(top + chart_h - 1 - r, c0 + c, 1) = 0.55f;
                canvas.at(top + chart_h - 1 - r, c0 + c, 2) = 0.85f;
            }
        char label[16];
        std::snprintf(label, sizeof(label), "%.1f", bars[i].value);
        detail::draw_text(canvas, label, top - 10, c0 + 2);
    }
    return canvas;
}

/// Writes the figure set: per-split sample grids and, when an ablation
/// matrix is given, a bar chart plus a text legend.
template <class S>
void emit_plots(const Network<S>& net, const std::vector<Scene>& val_scenes, const TrainConfig& cfg,
                const CategorySplit& split, const std::filesystem::path& out_dir,
                const AblationMatrix* mat = nullptr) {
    std::filesystem::create_directories(out_dir);
    write_ppm((out_dir / "grid_base.ppm").string(), render_sample_grid(net, val_scenes, cfg, split, true));
    write_ppm((out_dir / "grid_novel.ppm").string(), render_sample_grid(net, val_scenes, cfg, split, false));
    if (mat) {
        write_ppm((out_dir / "ablation_chart.ppm").string(), render_ablation_chart(*mat));
        std::ofstream legend(out_dir / "ablation_chart.txt");
        legend << format_ablation(*mat);
    }
}

} // namespace pixelcl
