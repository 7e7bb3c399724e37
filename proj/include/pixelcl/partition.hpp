#pragma once

#include <limits>
#include <vector>

#include "pixelcl/errors.hpp"
#include "pixelcl/grid.hpp"

namespace pixelcl {

/// A location on the RoI lattice.
struct Loc {
    int r = 0;
    int c = 0;
    friend bool operator==(const Loc&, const Loc&) = default;
};

/// Row-major order: the canonical ordering for all location sets.
inline bool row_major_less(const Loc& a, const Loc& b) {
    return a.r != b.r ? a.r < b.r : a.c < b.c;
}

struct Lattice {
    int height = 0;
    int width = 0;
};

enum class PartitionSource { gt_mask, cam };

/// Disjoint foreground/background location sets over an RoI lattice.
/// With a gt_mask source the two sides cover the lattice; with a cam source
/// an unassigned band may remain between the thresholds.
struct Partition {
    std::vector<Loc> fg;
    std::vector<Loc> bg;
    PartitionSource source = PartitionSource::gt_mask;
    Lattice lattice;
};

/// Inner boundary of a binary mask: foreground locations with at least one
/// 4-neighbor outside the mask.
struct BoundarySet {
    std::vector<Loc> locations;
    Lattice lattice;

    bool empty() const { return locations.empty(); }
};

inline Partition partition_from_mask(const Mask& m) {
    Partition p;
    p.source = PartitionSource::gt_mask;
    p.lattice = {m.h, m.w};
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c)
            (m.at(r, c) ? p.fg : p.bg).push_back({r, c});
    if (p.fg.empty() || p.bg.empty())
        throw EmptyPartitionSide(p.fg.empty() ? "mask has no foreground" : "mask has no background");
    return p;
}

/// CAM partition: a_i >= 1-delta is foreground, a_i <= delta background, the
/// rest stays unassigned.
template <class S>
Partition partition_from_cam(const Grid<S>& a, double delta) {
    if (!(delta > 0.0 && delta < 0.5)) throw ConfigError("delta must lie in (0, 0.5)");
    Partition p;
    p.source = PartitionSource::cam;
    p.lattice = {a.h, a.w};
    for (int r = 0; r < a.h; ++r)
        for (int c = 0; c < a.w; ++c) {
            const double v = a.at(r, c);
            if (v >= 1.0 - delta)
                p.fg.push_back({r, c});
            else if (v <= delta)
                p.bg.push_back({r, c});
        }
    if (p.fg.empty() || p.bg.empty())
        throw EmptyPartitionSide(p.fg.empty() ? "cam has no confident foreground" : "cam has no confident background");
    return p;
}

inline BoundarySet extract_boundary(const Mask& m) {
    const int n_fg = count_foreground(m);
    if (n_fg == 0 || n_fg == m.h * m.w) throw ConfigError("boundary undefined for single-valued mask");
    BoundarySet b;
    b.lattice = {m.h, m.w};
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c) {
            if (!m.at(r, c)) continue;
            // Only in-lattice mask transitions count; the image border alone
            // does not make a pixel a boundary pixel.
            const bool edge = (r > 0 && !m.at(r - 1, c)) || (r < m.h - 1 && !m.at(r + 1, c)) ||
                              (c > 0 && !m.at(r, c - 1)) || (c < m.w - 1 && !m.at(r, c + 1));
            if (edge) b.locations.push_back({r, c});
        }
    return b;
}

/// Min squared Euclidean distance from `i` to the boundary set, in lattice
/// units. Ties are irrelevant for the value; argmin order is row-major by
/// construction.
inline int boundary_distance_squared(const Loc& i, const BoundarySet& b) {
    if (b.empty()) throw ConfigError("boundary set is empty");
    int best = std::numeric_limits<int>::max();
    for (const Loc& l : b.locations) {
        const int dr = i.r - l.r;
        const int dc = i.c - l.c;
        const int d2 = dr * dr + dc * dc;
        if (d2 < best) {
            best = d2;
            if (best == 0) break;
        }
    }
    return best;
}

/// 3-level rendering of a partition: bg=0, unassigned=128, fg=255.
inline Mask render_partition(const Partition& p) {
    Mask img(p.lattice.height, p.lattice.width, 1, 128);
    for (const Loc& l : p.fg) img.at(l.r, l.c) = 255;
    for (const Loc& l : p.bg) img.at(l.r, l.c) = 0;
    return img;
}

} // namespace pixelcl
