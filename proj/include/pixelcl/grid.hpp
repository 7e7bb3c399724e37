#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

namespace pixelcl {

/// Dense H x W x C array in row-major HWC layout. The per-location channel
/// vector is contiguous, which is what the projector and key extraction want.
template <class S>
struct Grid {
    int h = 0, w = 0, c = 0;
    std::vector<S> data;

    Grid() = default;
    Grid(int h_, int w_, int c_, S fill = S(0))
        : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

    S& at(int r, int col, int ch = 0) { return data[(static_cast<std::size_t>(r) * w + col) * c + ch]; }
    S at(int r, int col, int ch = 0) const { return data[(static_cast<std::size_t>(r) * w + col) * c + ch]; }

    std::span<S> pixel(int r, int col) { return {data.data() + (static_cast<std::size_t>(r) * w + col) * c, static_cast<std::size_t>(c)}; }
    std::span<const S> pixel(int r, int col) const { return {data.data() + (static_cast<std::size_t>(r) * w + col) * c, static_cast<std::size_t>(c)}; }

    std::size_t size() const { return data.size(); }
    int locations() const { return h * w; }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Grid& o) const { return h == o.h && w == o.w && c == o.c; }
};

using Mask = Grid<std::uint8_t>;

template <class S>
Grid<S> to_float_mask(const Mask& m) {
    Grid<S> out(m.h, m.w, 1);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i] ? S(1) : S(0);
    return out;
}

inline int count_foreground(const Mask& m) {
    int n = 0;
    for (auto v : m.data) n += v ? 1 : 0;
    return n;
}

/// Bilinear resize with half-pixel centers. Channels resized independently.
template <class S>
Grid<S> resize_bilinear(const Grid<S>& src, int oh, int ow) {
    Grid<S> dst(oh, ow, src.c);
    const double sr = static_cast<double>(src.h) / oh;
    const double sc = static_cast<double>(src.w) / ow;
    for (int r = 0; r < oh; ++r) {
        double fr = (r + 0.5) * sr - 0.5;
        fr = std::clamp(fr, 0.0, static_cast<double>(src.h - 1));
        const int r0 = static_cast<int>(fr);
        const int r1 = std::min(r0 + 1, src.h - 1);
        const double ar = fr - r0;
        for (int col = 0; col < ow; ++col) {
            double fc = (col + 0.5) * sc - 0.5;
            fc = std::clamp(fc, 0.0, static_cast<double>(src.w - 1));
            const int c0 = static_cast<int>(fc);
            const int c1 = std::min(c0 + 1, src.w - 1);
            const double ac = fc - c0;
            for (int ch = 0; ch < src.c; ++ch) {
                const double v00 = src.at(r0, c0, ch), v01 = src.at(r0, c1, ch);
                const double v10 = src.at(r1, c0, ch), v11 = src.at(r1, c1, ch);
                const double top = v00 + (v01 - v00) * ac;
                const double bot = v10 + (v11 - v10) * ac;
                dst.at(r, col, ch) = static_cast<S>(top + (bot - top) * ar);
            }
        }
    }
    return dst;
}

/// Nearest-neighbor resize (used for masks).
template <class S>
Grid<S> resize_nearest(const Grid<S>& src, int oh, int ow) {
    Grid<S> dst(oh, ow, src.c);
    const double sr = static_cast<double>(src.h) / oh;
    const double sc = static_cast<double>(src.w) / ow;
    for (int r = 0; r < oh; ++r) {
        int sr_i = std::min(static_cast<int>((r + 0.5) * sr), src.h - 1);
        for (int col = 0; col < ow; ++col) {
            int sc_i = std::min(static_cast<int>((col + 0.5) * sc), src.w - 1);
            for (int ch = 0; ch < src.c; ++ch) dst.at(r, col, ch) = src.at(sr_i, sc_i, ch);
        }
    }
    return dst;
}

template <class S>
Grid<S> hflip(const Grid<S>& src) {
    Grid<S> dst(src.h, src.w, src.c);
    for (int r = 0; r < src.h; ++r)
        for (int col = 0; col < src.w; ++col)
            for (int ch = 0; ch < src.c; ++ch) dst.at(r, col, ch) = src.at(r, src.w - 1 - col, ch);
    return dst;
}

} // namespace pixelcl
