#pragma once

// Independent reference implementations and randomized checking suites.
// Everything here is deliberately naive: plain double loops evaluating the
// formulas directly, with none of the shared-max batching of the production
// path. Used by the test binaries and the check-loss subcommand only.

#include <cmath>
#include <cstdint>
#include <vector>

#include "pixelcl/cl_objective.hpp"
#include "pixelcl/contrast_loss.hpp"
#include "pixelcl/rng.hpp"

namespace pixelcl::testing {

inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Direct transcription of the loss term: for every positive key,
/// -(phi_p/tau - log(exp(phi_p/tau) + sum_n exp(phi_n/tau))), averaged.
inline double oracle_contrastive_term(const std::vector<double>& q, const std::vector<std::vector<double>>& k_pos,
                                      const std::vector<std::vector<double>>& k_neg, double tau) {
    if (k_pos.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& kp : k_pos) {
        const double sp = oracle_cosine(q, kp) / tau;
        double denom = std::exp(sp);
        for (const auto& kn : k_neg) denom += std::exp(oracle_cosine(q, kn) / tau);
        acc += -(sp - std::log(denom));
    }
    return acc / static_cast<double>(k_pos.size());
}

struct OracleKeySets {
    std::vector<std::vector<double>> fg_easy, fg_hard, bg_easy, bg_hard;
};

inline double oracle_query_sharing(const std::vector<double>& q_fg, const std::vector<double>& q_bg,
                                   const std::vector<OracleKeySets>& keysets, double tau_easy, double tau_hard) {
    if (keysets.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& ks : keysets) {
        acc += oracle_contrastive_term(q_fg, ks.fg_easy, ks.bg_easy, tau_easy);
        acc += oracle_contrastive_term(q_fg, ks.fg_hard, ks.bg_hard, tau_hard);
        acc += oracle_contrastive_term(q_bg, ks.bg_easy, ks.fg_easy, tau_easy);
        acc += oracle_contrastive_term(q_bg, ks.bg_hard, ks.fg_hard, tau_hard);
    }
    return acc / static_cast<double>(keysets.size());
}

// ---------------------------------------------------------------------------
// Random instances

template <class S>
struct LossInstance {
    SharedQueries<S> queries;
    std::vector<KeySets<S>> keysets;
};

template <class S>
std::vector<S> random_vector(int c, RandomStream& rng) {
    std::vector<S> v(static_cast<std::size_t>(c));
    for (auto& x : v) x = static_cast<S>(rng.normal());
    return v;
}

template <class S>
LossInstance<S> random_instance(RandomStream& rng, int max_c = 8, int max_keys = 20) {
    LossInstance<S> inst;
    const int c = static_cast<int>(rng.uniform_int(2, max_c));
    inst.queries.q_fg = random_vector<S>(c, rng);
    inst.queries.q_bg = random_vector<S>(c, rng);
    const int n_props = static_cast<int>(rng.uniform_int(1, 3));
    inst.queries.n_contributing = n_props;
    for (int p = 0; p < n_props; ++p) {
        KeySets<S> ks;
        auto fill = [&](std::vector<std::vector<S>>& side, int lo) {
            const int n = static_cast<int>(rng.uniform_int(lo, max_keys / 4));
            for (int i = 0; i < n; ++i) side.push_back(random_vector<S>(c, rng));
        };
        fill(ks.fg_easy, 1);
        fill(ks.fg_hard, 0);
        fill(ks.bg_easy, 1);
        fill(ks.bg_hard, 0);
        inst.keysets.push_back(std::move(ks));
    }
    return inst;
}

template <class S>
OracleKeySets to_oracle(const KeySets<S>& ks) {
    OracleKeySets o;
    auto conv = [](const std::vector<std::vector<S>>& in, std::vector<std::vector<double>>& out) {
        for (const auto& k : in) out.emplace_back(k.begin(), k.end());
    };
    conv(ks.fg_easy, o.fg_easy);
    conv(ks.fg_hard, o.fg_hard);
    conv(ks.bg_easy, o.bg_easy);
    conv(ks.bg_hard, o.bg_hard);
    return o;
}

/// Max |production - oracle| over random instances, all (tau_easy, tau_hard)
/// combinations from `taus`, plus individual term checks.
inline double oracle_equivalence_max_error(int n_instances, const std::vector<double>& taus, std::uint64_t seed) {
    RandomStream rng(seed);
    double max_err = 0.0;
    for (int i = 0; i < n_instances; ++i) {
        const auto inst = random_instance<double>(rng);
        std::vector<OracleKeySets> oks;
        for (const auto& ks : inst.keysets) oks.push_back(to_oracle(ks));
        std::vector<double> qf = inst.queries.q_fg, qb = inst.queries.q_bg;
        for (double te : taus)
            for (double th : taus) {
                const auto got = query_sharing_loss<double>(inst.queries, inst.keysets, te, th);
                const double want = oracle_query_sharing(qf, qb, oks, te, th);
                max_err = std::max(max_err, std::abs(static_cast<double>(got.total) - want));
                for (const auto& ks : inst.keysets) {
                    const double t_got = contrastive_term<double>(std::span<const double>(inst.queries.q_fg),
                                                                  ks.fg_easy, ks.bg_easy, te);
                    const double t_want = oracle_contrastive_term(qf, to_oracle(ks).fg_easy, to_oracle(ks).bg_easy, te);
                    max_err = std::max(max_err, std::abs(t_got - t_want));
                }
            }
    }
    return max_err;
}

// ---------------------------------------------------------------------------
// Finite-difference checks

/// Central differences on the (query, key sets) -> loss function in double,
/// compared against the analytic gradients computed in scalar type S.
/// Returns the max relative error with a floor tied to the gradient scale.
template <class S>
double fd_gradient_max_rel_error(int n_instances, std::uint64_t seed, double h_rel, bool check_queries) {
    RandomStream rng(seed);
    double max_rel = 0.0;
    for (int i = 0; i < n_instances; ++i) {
        const auto inst_s = random_instance<S>(rng);
        const double te = 0.3 + 0.5 * rng.uniform01();
        const double th = 0.2 + 0.3 * rng.uniform01();

        QuerySharingGrads<S> grads;
        query_sharing_loss_grad<S>(inst_s.queries, inst_s.keysets, static_cast<S>(te), static_cast<S>(th), grads);

        // double mirror for FD
        LossInstance<double> inst_d;
        inst_d.queries.q_fg.assign(inst_s.queries.q_fg.begin(), inst_s.queries.q_fg.end());
        inst_d.queries.q_bg.assign(inst_s.queries.q_bg.begin(), inst_s.queries.q_bg.end());
        for (const auto& ks : inst_s.keysets) {
            KeySets<double> kd;
            auto conv = [](const std::vector<std::vector<S>>& in, std::vector<std::vector<double>>& out) {
                for (const auto& k : in) out.emplace_back(k.begin(), k.end());
            };
            conv(ks.fg_easy, kd.fg_easy);
            conv(ks.fg_hard, kd.fg_hard);
            conv(ks.bg_easy, kd.bg_easy);
            conv(ks.bg_hard, kd.bg_hard);
            inst_d.keysets.push_back(std::move(kd));
        }
        auto eval_d = [&]() {
            return static_cast<double>(
                query_sharing_loss<double>(inst_d.queries, inst_d.keysets, te, th).total);
        };

        double grad_scale = 0.0;
        auto scan_scale = [&](const std::vector<std::vector<S>>& g) {
            for (const auto& v : g)
                for (S x : v) grad_scale = std::max(grad_scale, std::abs(static_cast<double>(x)));
        };
        for (const auto& g : grads.keys) {
            scan_scale(g.fg_easy);
            scan_scale(g.fg_hard);
            scan_scale(g.bg_easy);
            scan_scale(g.bg_hard);
        }
        for (S x : grads.dq_fg) grad_scale = std::max(grad_scale, std::abs(static_cast<double>(x)));
        for (S x : grads.dq_bg) grad_scale = std::max(grad_scale, std::abs(static_cast<double>(x)));
        const double floor = std::max(1e-4 * grad_scale, 1e-12);

        auto check = [&](double* slot, double analytic) {
            const double x0 = *slot;
            const double h = h_rel * std::max(std::abs(x0), 1.0);
            *slot = x0 + h;
            const double lp = eval_d();
            *slot = x0 - h;
            const double lm = eval_d();
            *slot = x0;
            const double fd = (lp - lm) / (2.0 * h);
            max_rel = std::max(max_rel, std::abs(analytic - fd) / std::max(std::abs(fd), floor));
        };

        for (std::size_t p = 0; p < inst_d.keysets.size(); ++p) {
            auto side = [&](std::vector<std::vector<double>>& kd, const std::vector<std::vector<S>>& gs) {
                for (std::size_t k = 0; k < kd.size(); ++k)
                    for (std::size_t ch = 0; ch < kd[k].size(); ++ch)
                        check(&kd[k][ch], static_cast<double>(gs[k][ch]));
            };
            side(inst_d.keysets[p].fg_easy, grads.keys[p].fg_easy);
            side(inst_d.keysets[p].fg_hard, grads.keys[p].fg_hard);
            side(inst_d.keysets[p].bg_easy, grads.keys[p].bg_easy);
            side(inst_d.keysets[p].bg_hard, grads.keys[p].bg_hard);
        }
        if (check_queries) {
            for (std::size_t ch = 0; ch < inst_d.queries.q_fg.size(); ++ch)
                check(&inst_d.queries.q_fg[ch], static_cast<double>(grads.dq_fg[ch]));
            for (std::size_t ch = 0; ch < inst_d.queries.q_bg.size(); ++ch)
                check(&inst_d.queries.q_bg[ch], static_cast<double>(grads.dq_bg[ch]));
        }
    }
    return max_rel;
}

/// FD check of the Z-level objective in the chosen query-gradient mode.
/// In stop mode queries are frozen at their unperturbed values before
/// differencing; in flow mode they are recomputed per evaluation.
inline double fd_objective_max_rel_error(QueryGradient mode, int n_instances, std::uint64_t seed) {
    RandomStream rng(seed);
    double max_rel = 0.0;
    for (int i = 0; i < n_instances; ++i) {
        const int h = 5, w = 4, c = 3;
        const int n_props = static_cast<int>(rng.uniform_int(1, 2));
        std::vector<Grid<double>> zs;
        std::vector<Partition> parts;
        std::vector<KeyLocations> locs;
        for (int p = 0; p < n_props; ++p) {
            Grid<double> z(h, w, c);
            for (auto& v : z.data) v = rng.normal();
            Partition part;
            part.source = PartitionSource::gt_mask;
            part.lattice = {h, w};
            KeyLocations kl;
            for (int r = 0; r < h; ++r)
                for (int col = 0; col < w; ++col) {
                    const Loc l{r, col};
                    if ((r + col) % 2 == 0)
                        part.fg.push_back(l);
                    else
                        part.bg.push_back(l);
                }
            // every other partition member becomes a key
            for (std::size_t k = 0; k < part.fg.size(); ++k)
                (k % 2 == 0 ? kl.fg_easy : kl.fg_hard).push_back(part.fg[k]);
            for (std::size_t k = 0; k < part.bg.size(); ++k)
                (k % 2 == 0 ? kl.bg_easy : kl.bg_hard).push_back(part.bg[k]);
            zs.push_back(std::move(z));
            parts.push_back(std::move(part));
            locs.push_back(std::move(kl));
        }
        auto items_of = [&]() {
            std::vector<ClObjectiveItem<double>> items;
            for (int p = 0; p < n_props; ++p) items.push_back({&zs[p], &parts[p], &locs[p]});
            return items;
        };
        const double te = 0.7, th = 0.3;
        const auto items = items_of();
        std::vector<Grid<double>> dz;
        cl_objective_grad(std::span<const ClObjectiveItem<double>>(items), te, th, mode, 1.0, dz);

        SharedQueries<double> frozen = detail::queries_of(std::span<const ClObjectiveItem<double>>(items));
        auto eval = [&]() {
            const auto it = items_of();
            return static_cast<double>(cl_objective<double>(std::span<const ClObjectiveItem<double>>(it), te, th,
                                                            mode == QueryGradient::stop ? &frozen : nullptr)
                                           .total);
        };
        double scale = 0.0;
        for (const auto& g : dz)
            for (double v : g.data) scale = std::max(scale, std::abs(v));
        const double floor = std::max(1e-4 * scale, 1e-12);
        for (int p = 0; p < n_props; ++p)
            for (std::size_t idx = 0; idx < zs[p].data.size(); ++idx) {
                const double x0 = zs[p].data[idx];
                const double hh = 1e-5 * std::max(std::abs(x0), 1.0);
                zs[p].data[idx] = x0 + hh;
                const double lp = eval();
                zs[p].data[idx] = x0 - hh;
                const double lm = eval();
                zs[p].data[idx] = x0;
                const double fd = (lp - lm) / (2.0 * hh);
                max_rel = std::max(max_rel,
                                   std::abs(dz[p].data[idx] - fd) / std::max(std::abs(fd), floor));
            }
    }
    return max_rel;
}

} // namespace pixelcl::testing
