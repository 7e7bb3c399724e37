#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pixelcl/errors.hpp"
#include "pixelcl/sampling.hpp"

namespace pixelcl {

/// Diagnostics for the degenerate branches of the loss. check-loss prints
/// them; tests reset them.
struct WarningCounters {
    std::atomic<long> cosine_eps_hits{0};
    std::atomic<long> empty_positive_terms{0};

    void reset() {
        cosine_eps_hits = 0;
        empty_positive_terms = 0;
    }
};

inline WarningCounters& warning_counters() {
    static WarningCounters counters;
    return counters;
}

inline constexpr double kCosineEps = 1e-8;

/// Cosine similarity with an epsilon-guarded denominator. Two near-zero
/// vectors give 0 and bump a warning counter.
template <class S>
S cosine_similarity(std::span<const S> a, std::span<const S> b) {
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na2 += static_cast<double>(a[i]) * a[i];
        nb2 += static_cast<double>(b[i]) * b[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (na < kCosineEps && nb < kCosineEps) {
        warning_counters().cosine_eps_hits++;
        return S(0);
    }
    const double v = dot / (std::max(na, kCosineEps) * std::max(nb, kCosineEps));
    return static_cast<S>(std::clamp(v, -1.0, 1.0));
}

/// Per-term loss and totals of the four-term query-sharing loss.
template <class S>
struct LossBreakdown {
    S term_fg_easy = S(0);
    S term_fg_hard = S(0);
    S term_bg_easy = S(0);
    S term_bg_hard = S(0);
    S total = S(0);
    int n_proposals = 0;
};

namespace detail {

template <class S>
std::vector<S> sims_against(std::span<const S> q, const std::vector<std::vector<S>>& keys) {
    std::vector<S> out;
    out.reserve(keys.size());
    for (const auto& k : keys) out.push_back(cosine_similarity<S>(q, std::span<const S>(k)));
    return out;
}

/// One instantiation of the loss term given precomputed similarities.
/// Each positive summand is log(exp(s_p) + sum_m exp(t_m)) - s_p, evaluated
/// with shared max-subtraction so small temperatures stay stable.
template <class S>
S term_from_sims(const std::vector<S>& pos, const std::vector<S>& neg, S tau) {
    if (tau <= S(0)) throw ConfigError("temperature must be positive");
    if (pos.empty()) {
        warning_counters().empty_positive_terms++;
        return S(0);
    }
    double m = -1.0e300;
    for (S v : pos) m = std::max(m, static_cast<double>(v) / static_cast<double>(tau));
    for (S v : neg) m = std::max(m, static_cast<double>(v) / static_cast<double>(tau));
    double neg_sum = 0.0;
    for (S v : neg) neg_sum += std::exp(static_cast<double>(v) / static_cast<double>(tau) - m);
    double acc = 0.0;
    for (S v : pos) {
        const double s = static_cast<double>(v) / static_cast<double>(tau);
        acc += std::log(std::exp(s - m) + neg_sum) + m - s;
    }
    return static_cast<S>(acc / static_cast<double>(pos.size()));
}

template <class S>
struct VecNorm {
    double value;
};

template <class S>
double norm_of(std::span<const S> v) {
    double n2 = 0.0;
    for (S x : v) n2 += static_cast<double>(x) * x;
    return std::sqrt(n2);
}

/// d cos(q,k) / dk with the same epsilon clamping as the forward pass.
/// `out += scale * grad`.
template <class S>
void add_cosine_grad_wrt(std::span<const S> self, double n_self, std::span<const S> other, double n_other,
                         double phi, double scale, std::span<S> out) {
    if (n_self < kCosineEps && n_other < kCosineEps) return;
    const double ns = std::max(n_self, kCosineEps);
    const double no = std::max(n_other, kCosineEps);
    if (n_self < kCosineEps) {
        // Denominator is pinned at eps for this side: only the dot term varies.
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += static_cast<S>(scale * static_cast<double>(other[i]) / (ns * no));
        return;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double g = static_cast<double>(other[i]) / (ns * no) - phi * static_cast<double>(self[i]) / (ns * ns);
        out[i] += static_cast<S>(scale * g);
    }
}

/// Gradient of one term with respect to the query, positive keys and
/// negative keys, accumulated with a premultiplied `scale`.
template <class S>
void term_grad_from_sims(std::span<const S> q, const std::vector<std::vector<S>>& kp, const std::vector<S>& sp,
                         const std::vector<std::vector<S>>& kn, const std::vector<S>& sn, S tau, double scale,
                         std::span<S> dq, std::vector<std::vector<S>>& dkp, std::vector<std::vector<S>>& dkn) {
    if (kp.empty()) return;
    const double t = static_cast<double>(tau);
    double m = -1.0e300;
    for (S v : sp) m = std::max(m, static_cast<double>(v) / t);
    for (S v : sn) m = std::max(m, static_cast<double>(v) / t);
    std::vector<double> en(kn.size());
    double neg_sum = 0.0;
    for (std::size_t j = 0; j < kn.size(); ++j) {
        en[j] = std::exp(static_cast<double>(sn[j]) / t - m);
        neg_sum += en[j];
    }
    const double inv_p = 1.0 / static_cast<double>(kp.size());
    const double nq = norm_of<S>(q);

    // dL/d(phi_p) and the shared sum over positives of 1/denom_p.
    double inv_denom_sum = 0.0;
    for (std::size_t p = 0; p < kp.size(); ++p) {
        const double ep = std::exp(static_cast<double>(sp[p]) / t - m);
        const double denom = ep + neg_sum;
        inv_denom_sum += 1.0 / denom;
        const double dl_ds = scale * inv_p * (ep / denom - 1.0);
        const double nk = norm_of<S>(std::span<const S>(kp[p]));
        const double phi = static_cast<double>(sp[p]);
        add_cosine_grad_wrt<S>(kp[p], nk, q, nq, phi, dl_ds / t, std::span<S>(dkp[p]));
        add_cosine_grad_wrt<S>(q, nq, kp[p], nk, phi, dl_ds / t, dq);
    }
    for (std::size_t j = 0; j < kn.size(); ++j) {
        const double dl_dt = scale * inv_p * en[j] * inv_denom_sum;
        const double nk = norm_of<S>(std::span<const S>(kn[j]));
        const double phi = static_cast<double>(sn[j]);
        add_cosine_grad_wrt<S>(kn[j], nk, q, nq, phi, dl_dt / t, std::span<S>(dkn[j]));
        add_cosine_grad_wrt<S>(q, nq, kn[j], nk, phi, dl_dt / t, dq);
    }
}

template <class S>
std::vector<std::vector<S>> zeros_like(const std::vector<std::vector<S>>& keys) {
    std::vector<std::vector<S>> out(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) out[i].assign(keys[i].size(), S(0));
    return out;
}

} // namespace detail

/// The contrastive term of the loss: query q against positives K_pos with
/// negatives K_neg at temperature tau. Nonnegative; 0 when K_pos is empty.
template <class S>
S contrastive_term(std::span<const S> q, const std::vector<std::vector<S>>& k_pos,
                   const std::vector<std::vector<S>>& k_neg, S tau) {
    if (tau <= S(0)) throw ConfigError("temperature must be positive");
    return detail::term_from_sims(detail::sims_against(q, k_pos), detail::sims_against(q, k_neg), tau);
}

/// Four-term query-sharing loss over a batch of proposals' key sets.
/// The per-proposal sum pairs easy keys with tau_easy and hard keys with
/// tau_hard, once anchored at q+ and once at q-; the breakdown holds means
/// over proposals.
template <class S>
LossBreakdown<S> query_sharing_loss(const SharedQueries<S>& queries, std::span<const KeySets<S>> keysets,
                                    S tau_easy, S tau_hard) {
    if (tau_easy <= S(0) || tau_hard <= S(0)) throw ConfigError("temperature must be positive");
    LossBreakdown<S> out;
    out.n_proposals = static_cast<int>(keysets.size());
    if (keysets.empty()) return out;
    double t1 = 0.0, t2 = 0.0, t3 = 0.0, t4 = 0.0;
    for (const KeySets<S>& ks : keysets) {
        const std::span<const S> qf(queries.q_fg), qb(queries.q_bg);
        t1 += contrastive_term(qf, ks.fg_easy, ks.bg_easy, tau_easy);
        t2 += contrastive_term(qf, ks.fg_hard, ks.bg_hard, tau_hard);
        t3 += contrastive_term(qb, ks.bg_easy, ks.fg_easy, tau_easy);
        t4 += contrastive_term(qb, ks.bg_hard, ks.fg_hard, tau_hard);
    }
    const double inv = 1.0 / static_cast<double>(keysets.size());
    out.term_fg_easy = static_cast<S>(t1 * inv);
    out.term_fg_hard = static_cast<S>(t2 * inv);
    out.term_bg_easy = static_cast<S>(t3 * inv);
    out.term_bg_hard = static_cast<S>(t4 * inv);
    out.total = static_cast<S>(out.term_fg_easy + out.term_fg_hard + out.term_bg_easy + out.term_bg_hard);
    return out;
}

/// Gradients of query_sharing_loss' total with respect to every key vector
/// and both queries.
template <class S>
struct QuerySharingGrads {
    std::vector<KeySets<S>> keys; // same shapes as the input key sets
    std::vector<S> dq_fg, dq_bg;
};

template <class S>
LossBreakdown<S> query_sharing_loss_grad(const SharedQueries<S>& queries, std::span<const KeySets<S>> keysets,
                                         S tau_easy, S tau_hard, QuerySharingGrads<S>& grads) {
    LossBreakdown<S> out = query_sharing_loss(queries, keysets, tau_easy, tau_hard);
    grads.keys.clear();
    grads.dq_fg.assign(queries.q_fg.size(), S(0));
    grads.dq_bg.assign(queries.q_bg.size(), S(0));
    if (keysets.empty()) return out;
    const double scale = 1.0 / static_cast<double>(keysets.size());
    const std::span<const S> qf(queries.q_fg), qb(queries.q_bg);
    for (const KeySets<S>& ks : keysets) {
        KeySets<S> g;
        g.fg_easy = detail::zeros_like(ks.fg_easy);
        g.fg_hard = detail::zeros_like(ks.fg_hard);
        g.bg_easy = detail::zeros_like(ks.bg_easy);
        g.bg_hard = detail::zeros_like(ks.bg_hard);
        const auto s_qf_fe = detail::sims_against(qf, ks.fg_easy);
        const auto s_qf_fh = detail::sims_against(qf, ks.fg_hard);
        const auto s_qf_be = detail::sims_against(qf, ks.bg_easy);
        const auto s_qf_bh = detail::sims_against(qf, ks.bg_hard);
        const auto s_qb_fe = detail::sims_against(qb, ks.fg_easy);
        const auto s_qb_fh = detail::sims_against(qb, ks.fg_hard);
        const auto s_qb_be = detail::sims_against(qb, ks.bg_easy);
        const auto s_qb_bh = detail::sims_against(qb, ks.bg_hard);
        detail::term_grad_from_sims<S>(qf, ks.fg_easy, s_qf_fe, ks.bg_easy, s_qf_be, tau_easy, scale,
                                       std::span<S>(grads.dq_fg), g.fg_easy, g.bg_easy);
        detail::term_grad_from_sims<S>(qf, ks.fg_hard, s_qf_fh, ks.bg_hard, s_qf_bh, tau_hard, scale,
                                       std::span<S>(grads.dq_fg), g.fg_hard, g.bg_hard);
        detail::term_grad_from_sims<S>(qb, ks.bg_easy, s_qb_be, ks.fg_easy, s_qb_fe, tau_easy, scale,
                                       std::span<S>(grads.dq_bg), g.bg_easy, g.fg_easy);
        detail::term_grad_from_sims<S>(qb, ks.bg_hard, s_qb_bh, ks.fg_hard, s_qb_fh, tau_hard, scale,
                                       std::span<S>(grads.dq_bg), g.bg_hard, g.fg_hard);
        grads.keys.push_back(std::move(g));
    }
    return out;
}

} // namespace pixelcl
