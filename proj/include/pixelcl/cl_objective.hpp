#pragma once

#include <span>
#include <vector>

#include "pixelcl/contrast_loss.hpp"
#include "pixelcl/sampling.hpp"

namespace pixelcl {

enum class QueryGradient { stop, flow };

/// One proposal admitted to the contrastive objective: its projected map,
/// its partition and the already-mined key locations.
template <class S>
struct ClObjectiveItem {
    const Grid<S>* z = nullptr;
    const Partition* partition = nullptr;
    const KeyLocations* locs = nullptr;
};

namespace detail {

template <class S>
KeySets<S> keys_from_locs(const Grid<S>& z, const KeyLocations& locs) {
    KeySets<S> ks;
    auto fill = [&](const std::vector<Loc>& in, std::vector<std::vector<S>>& out) {
        out.reserve(in.size());
        for (const Loc& l : in) {
            auto px = z.pixel(l.r, l.c);
            out.emplace_back(px.begin(), px.end());
        }
    };
    fill(locs.fg_easy, ks.fg_easy);
    fill(locs.fg_hard, ks.fg_hard);
    fill(locs.bg_easy, ks.bg_easy);
    fill(locs.bg_hard, ks.bg_hard);
    return ks;
}

template <class S>
SharedQueries<S> queries_of(std::span<const ClObjectiveItem<S>> items) {
    std::vector<ClProposal<S>> props;
    props.reserve(items.size());
    for (const auto& it : items) props.push_back({it.z, it.partition});
    return compute_shared_queries(std::span<const ClProposal<S>>(props));
}

} // namespace detail

/// Loss of the mined batch as a function of the Z maps. Queries are
/// recomputed from Z unless `frozen` is provided.
template <class S>
LossBreakdown<S> cl_objective(std::span<const ClObjectiveItem<S>> items, S tau_easy, S tau_hard,
                              const SharedQueries<S>* frozen = nullptr) {
    if (items.empty()) return LossBreakdown<S>{};
    const SharedQueries<S> q = frozen ? *frozen : detail::queries_of(items);
    std::vector<KeySets<S>> keysets;
    keysets.reserve(items.size());
    for (const auto& it : items) keysets.push_back(detail::keys_from_locs(*it.z, *it.locs));
    return query_sharing_loss(q, std::span<const KeySets<S>>(keysets), tau_easy, tau_hard);
}

/// Gradient of cl_objective's total with respect to every Z map, scaled by
/// `scale`. In stop mode queries are constants; in flow mode the query-mean
/// paths contribute 1/(N*|side_n|) per contributing location.
template <class S>
LossBreakdown<S> cl_objective_grad(std::span<const ClObjectiveItem<S>> items, S tau_easy, S tau_hard,
                                   QueryGradient mode, double scale, std::vector<Grid<S>>& dz) {
    dz.clear();
    if (items.empty()) return LossBreakdown<S>{};
    for (const auto& it : items) dz.emplace_back(it.z->h, it.z->w, it.z->c);

    const SharedQueries<S> q = detail::queries_of(items);
    std::vector<KeySets<S>> keysets;
    keysets.reserve(items.size());
    for (const auto& it : items) keysets.push_back(detail::keys_from_locs(*it.z, *it.locs));

    QuerySharingGrads<S> g;
    LossBreakdown<S> out =
        query_sharing_loss_grad(q, std::span<const KeySets<S>>(keysets), tau_easy, tau_hard, g);

    for (std::size_t n = 0; n < items.size(); ++n) {
        const KeyLocations& locs = *items[n].locs;
        Grid<S>& d = dz[n];
        auto scatter = [&](const std::vector<Loc>& ls, const std::vector<std::vector<S>>& gs) {
            for (std::size_t i = 0; i < ls.size(); ++i) {
                auto px = d.pixel(ls[i].r, ls[i].c);
                for (std::size_t ch = 0; ch < px.size(); ++ch)
                    px[ch] += static_cast<S>(scale * static_cast<double>(gs[i][ch]));
            }
        };
        scatter(locs.fg_easy, g.keys[n].fg_easy);
        scatter(locs.fg_hard, g.keys[n].fg_hard);
        scatter(locs.bg_easy, g.keys[n].bg_easy);
        scatter(locs.bg_hard, g.keys[n].bg_hard);
    }

    if (mode == QueryGradient::flow) {
        const double inv_n = 1.0 / static_cast<double>(items.size());
        for (std::size_t n = 0; n < items.size(); ++n) {
            const Partition& p = *items[n].partition;
            Grid<S>& d = dz[n];
            const double wf = inv_n / static_cast<double>(p.fg.size());
            const double wb = inv_n / static_cast<double>(p.bg.size());
            for (const Loc& l : p.fg) {
                auto px = d.pixel(l.r, l.c);
                for (std::size_t ch = 0; ch < px.size(); ++ch)
                    px[ch] += static_cast<S>(scale * wf * static_cast<double>(g.dq_fg[ch]));
            }
            for (const Loc& l : p.bg) {
                auto px = d.pixel(l.r, l.c);
                for (std::size_t ch = 0; ch < px.size(); ++ch)
                    px[ch] += static_cast<S>(scale * wb * static_cast<double>(g.dq_bg[ch]));
            }
        }
    }
    return out;
}

} // namespace pixelcl
