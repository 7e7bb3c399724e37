#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>

#include "pixelcl/errors.hpp"
#include "pixelcl/grid.hpp"

namespace pixelcl {

namespace detail {

inline std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
}

inline void read_pnm_header(std::ifstream& in, const std::string& magic, int& w, int& h, const std::string& path) {
    std::string m;
    in >> m;
    if (m != magic) throw ConfigError("bad magic in " + path);
    int maxval = 0;
    in >> w >> h >> maxval;
    if (maxval != 255) throw ConfigError("unsupported maxval in " + path);
    in.get(); // single whitespace before raster
}

} // namespace detail

/// Binary PPM (P6) for RGB float grids in [0,1].
inline void write_ppm(const std::string& path, const Grid<float>& img) {
    if (img.c != 3) throw ConfigError("write_ppm expects 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            for (int ch = 0; ch < 3; ++ch) out.put(static_cast<char>(detail::to_byte(img.at(r, c, ch))));
}

inline Grid<float> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    int w = 0, h = 0;
    detail::read_pnm_header(in, "P6", w, h, path);
    Grid<float> img(h, w, 3);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = static_cast<float>(in.get()) / 255.0f;
    if (!in) throw ConfigError("truncated image: " + path);
    return img;
}

/// Binary PGM (P5). Masks use 0/255; other grayscale data is scaled from [0,1].
inline void write_pgm(const std::string& path, const Mask& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << "P5\n" << m.w << " " << m.h << "\n255\n";
    for (auto v : m.data) out.put(static_cast<char>(v));
}

inline void write_pgm(const std::string& path, const Grid<float>& g) {
    if (g.c != 1) throw ConfigError("write_pgm expects 1 channel");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << "P5\n" << g.w << " " << g.h << "\n255\n";
    for (auto v : g.data) out.put(static_cast<char>(detail::to_byte(v)));
}

inline Mask read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    int w = 0, h = 0;
    detail::read_pnm_header(in, "P5", w, h, path);
    Mask m(h, w, 1);
    for (auto& v : m.data) v = static_cast<std::uint8_t>(in.get());
    if (!in) throw ConfigError("truncated image: " + path);
    return m;
}

} // namespace pixelcl
