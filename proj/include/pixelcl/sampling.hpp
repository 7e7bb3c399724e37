#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pixelcl/errors.hpp"
#include "pixelcl/grid.hpp"
#include "pixelcl/partition.hpp"
#include "pixelcl/rng.hpp"

namespace pixelcl {

/// The four key collections of a proposal. Keys are copies of the projected
/// feature vectors at their source locations; `locs` records those source
/// locations in matching order (used for gradient scatter and inspection).
template <class S>
struct KeySets {
    std::vector<std::vector<S>> fg_easy, fg_hard, bg_easy, bg_hard;
};

struct KeyLocations {
    std::vector<Loc> fg_easy, fg_hard, bg_easy, bg_hard;
};

template <class S>
struct MinedKeys {
    KeySets<S> sets;
    KeyLocations locs;
};

/// Batch-level shared queries: the foreground/background anchors of the
/// query-sharing contrastive loss.
template <class S>
struct SharedQueries {
    std::vector<S> q_fg;
    std::vector<S> q_bg;
    int n_contributing = 0;
};

template <class S>
struct ClProposal {
    const Grid<S>* z = nullptr;
    const Partition* partition = nullptr;
};

namespace detail {

template <class S>
std::vector<S> mean_at(const Grid<S>& z, const std::vector<Loc>& locs) {
    std::vector<S> m(static_cast<std::size_t>(z.c), S(0));
    for (const Loc& l : locs) {
        auto px = z.pixel(l.r, l.c);
        for (int ch = 0; ch < z.c; ++ch) m[ch] += px[ch];
    }
    const S inv = S(1) / static_cast<S>(locs.size());
    for (auto& v : m) v *= inv;
    return m;
}

} // namespace detail

/// q+ / q- are averages of per-proposal partition means, over all proposals
/// in the batch (base and novel alike).
template <class S>
SharedQueries<S> compute_shared_queries(std::span<const ClProposal<S>> batch) {
    if (batch.empty()) throw ConfigError("cannot compute shared queries from an empty batch");
    const int c = batch.front().z->c;
    SharedQueries<S> q;
    q.q_fg.assign(static_cast<std::size_t>(c), S(0));
    q.q_bg.assign(static_cast<std::size_t>(c), S(0));
    for (const auto& p : batch) {
        if (p.partition->fg.empty() || p.partition->bg.empty())
            throw EmptyPartitionSide("shared queries require nonempty partitions on both sides");
        const auto mf = detail::mean_at(*p.z, p.partition->fg);
        const auto mb = detail::mean_at(*p.z, p.partition->bg);
        for (int ch = 0; ch < c; ++ch) {
            q.q_fg[ch] += mf[ch];
            q.q_bg[ch] += mb[ch];
        }
    }
    const S inv = S(1) / static_cast<S>(batch.size());
    for (auto& v : q.q_fg) v *= inv;
    for (auto& v : q.q_bg) v *= inv;
    q.n_contributing = static_cast<int>(batch.size());
    return q;
}

/// Samples max(1, round(sigma*n)) locations uniformly without replacement.
/// Result is sorted row-major. Empty input gives an empty result.
inline std::vector<Loc> sample_subset(const std::vector<Loc>& locations, double sigma, RandomStream& rng) {
    if (!(sigma > 0.0 && sigma <= 1.0)) throw ConfigError("sigma must lie in (0, 1]");
    if (locations.empty()) return {};
    const auto n = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(sigma * static_cast<double>(locations.size()))));
    std::vector<Loc> pool = locations;
    // Partial Fisher-Yates: the first n slots end up as the sample.
    for (std::size_t i = 0; i < n && i + 1 < pool.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(n);
    std::sort(pool.begin(), pool.end(), row_major_less);
    return pool;
}

namespace detail {

template <class S>
void emit_key(const Grid<S>& z, const Loc& l, std::vector<std::vector<S>>& sets, std::vector<Loc>& locs) {
    auto px = z.pixel(l.r, l.c);
    sets.emplace_back(px.begin(), px.end());
    locs.push_back(l);
}

} // namespace detail

/// Base-category mining: sample both partition sides, then split each sample
/// by squared distance to the inner mask boundary (<= 2 is hard).
template <class S>
MinedKeys<S> mine_keys_base(const Grid<S>& z, const Partition& p, const BoundarySet& b, double sigma,
                            RandomStream& rng) {
    if (p.source != PartitionSource::gt_mask) throw ConfigError("mine_keys_base needs a gt_mask partition");
    if (b.empty()) throw ConfigError("mine_keys_base needs a nonempty boundary");
    MinedKeys<S> out;
    for (const Loc& l : sample_subset(p.fg, sigma, rng)) {
        const bool hard = boundary_distance_squared(l, b) <= 2;
        detail::emit_key(z, l, hard ? out.sets.fg_hard : out.sets.fg_easy, hard ? out.locs.fg_hard : out.locs.fg_easy);
    }
    for (const Loc& l : sample_subset(p.bg, sigma, rng)) {
        const bool hard = boundary_distance_squared(l, b) <= 2;
        detail::emit_key(z, l, hard ? out.sets.bg_hard : out.sets.bg_easy, hard ? out.locs.bg_hard : out.locs.bg_easy);
    }
    return out;
}

/// Novel-category mining: no boundary is available, so the sampled set is
/// split into disjoint random halves; with an odd count the easy set gets
/// the extra key.
template <class S>
MinedKeys<S> mine_keys_novel(const Grid<S>& z, const Partition& p, double sigma, RandomStream& rng) {
    if (p.source != PartitionSource::cam) throw ConfigError("mine_keys_novel needs a cam partition");
    MinedKeys<S> out;
    auto split_side = [&](const std::vector<Loc>& side, std::vector<std::vector<S>>& easy_s, std::vector<Loc>& easy_l,
                          std::vector<std::vector<S>>& hard_s, std::vector<Loc>& hard_l) {
        std::vector<Loc> sampled = sample_subset(side, sigma, rng);
        // Random disjoint 50/50 split.
        for (std::size_t i = 0; i + 1 < sampled.size(); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(sampled.size() - i));
            std::swap(sampled[i], sampled[j]);
        }
        const std::size_t n_hard = sampled.size() / 2;
        std::vector<Loc> hard(sampled.begin(), sampled.begin() + n_hard);
        std::vector<Loc> easy(sampled.begin() + n_hard, sampled.end());
        std::sort(hard.begin(), hard.end(), row_major_less);
        std::sort(easy.begin(), easy.end(), row_major_less);
        for (const Loc& l : easy) detail::emit_key(z, l, easy_s, easy_l);
        for (const Loc& l : hard) detail::emit_key(z, l, hard_s, hard_l);
    };
    split_side(p.fg, out.sets.fg_easy, out.locs.fg_easy, out.sets.fg_hard, out.locs.fg_hard);
    split_side(p.bg, out.sets.bg_easy, out.locs.bg_easy, out.sets.bg_hard, out.locs.bg_hard);
    return out;
}

} // namespace pixelcl
