#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pixelcl/errors.hpp"
#include "pixelcl/grid.hpp"
#include "pixelcl/rng.hpp"

namespace pixelcl::nn {

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// All trainable parameters of a network live in one flat vector so that
/// gradient buffers, SGD and checkpoints stay trivial. Layers register
/// tensors during construction and address them by offset afterwards.
template <class S>
class ParamStore {
public:
    struct Entry {
        std::string name;
        std::size_t offset = 0;
        std::size_t size = 0;
        std::vector<int> shape;
    };

    std::size_t add(std::string name, std::vector<int> shape) {
        std::size_t sz = 1;
        for (int d : shape) sz *= static_cast<std::size_t>(d);
        entries_.push_back({std::move(name), total_, sz, std::move(shape)});
        total_ += sz;
        return entries_.size() - 1;
    }

    void finalize() { values_.assign(total_, S(0)); }

    std::span<S> view(std::size_t entry_idx) {
        const Entry& e = entries_[entry_idx];
        return {values_.data() + e.offset, e.size};
    }
    std::span<const S> view(std::size_t entry_idx) const {
        const Entry& e = entries_[entry_idx];
        return {values_.data() + e.offset, e.size};
    }
    std::span<const S> view_in(std::span<const S> buf, std::size_t entry_idx) const {
        const Entry& e = entries_[entry_idx];
        return buf.subspan(e.offset, e.size);
    }
    std::span<S> view_in(std::span<S> buf, std::size_t entry_idx) const {
        const Entry& e = entries_[entry_idx];
        return buf.subspan(e.offset, e.size);
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t total() const { return total_; }
    std::vector<S>& values() { return values_; }
    const std::vector<S>& values() const { return values_; }

private:
    std::vector<Entry> entries_;
    std::vector<S> values_;
    std::size_t total_ = 0;
};

template <class S>
void kaiming_uniform(std::span<S> w, int fan_in, RandomStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<S>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Convolutions

namespace detail {

template <class S>
void im2col3x3(const Grid<S>& x, std::vector<S>& cols) {
    const int hw = x.h * x.w, cin = x.c;
    cols.assign(static_cast<std::size_t>(hw) * 9 * cin, S(0));
    for (int r = 0; r < x.h; ++r)
        for (int c = 0; c < x.w; ++c) {
            S* row = cols.data() + (static_cast<std::size_t>(r) * x.w + c) * 9 * cin;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int k = (dr + 1) * 3 + (dc + 1);
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= x.h || cc < 0 || cc >= x.w) continue;
                    const S* src = x.data.data() + (static_cast<std::size_t>(rr) * x.w + cc) * cin;
                    std::copy(src, src + cin, row + static_cast<std::size_t>(k) * cin);
                }
        }
}

template <class S>
void col2im3x3(const std::vector<S>& dcols, Grid<S>& dx) {
    const int cin = dx.c;
    for (int r = 0; r < dx.h; ++r)
        for (int c = 0; c < dx.w; ++c) {
            const S* row = dcols.data() + (static_cast<std::size_t>(r) * dx.w + c) * 9 * cin;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int k = (dr + 1) * 3 + (dc + 1);
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= dx.h || cc < 0 || cc >= dx.w) continue;
                    S* dst = dx.data.data() + (static_cast<std::size_t>(rr) * dx.w + cc) * cin;
                    const S* src = row + static_cast<std::size_t>(k) * cin;
                    for (int ch = 0; ch < cin; ++ch) dst[ch] += src[ch];
                }
        }
}

} // namespace detail

/// 3x3 convolution, stride 1, zero padding, spatial size preserved.
template <class S>
class Conv3x3 {
public:
    Conv3x3(ParamStore<S>& ps, const std::string& prefix, int cin, int cout)
        : cin_(cin), cout_(cout),
          w_(ps.add(prefix + ".w", {9, cin, cout})),
          b_(ps.add(prefix + ".b", {cout})) {}

    void init(ParamStore<S>& ps, RandomStream& rng) const { kaiming_uniform(ps.view(w_), 9 * cin_, rng); }

    Grid<S> forward(const ParamStore<S>& ps, const Grid<S>& x) const {
        const int hw = x.h * x.w;
        std::vector<S> cols;
        detail::im2col3x3(x, cols);
        Grid<S> y(x.h, x.w, cout_);
        Eigen::Map<const RowMat<S>> cm(cols.data(), hw, 9 * cin_);
        Eigen::Map<const RowMat<S>> wm(ps.view(w_).data(), 9 * cin_, cout_);
        Eigen::Map<RowMat<S>> ym(y.data.data(), hw, cout_);
        ym.noalias() = cm * wm;
        Eigen::Map<const Eigen::RowVector<S, Eigen::Dynamic>> bv(ps.view(b_).data(), cout_);
        ym.rowwise() += bv;
        return y;
    }

    Grid<S> backward(const ParamStore<S>& ps, const Grid<S>& x, const Grid<S>& dy, std::span<S> grad) const {
        const int hw = x.h * x.w;
        std::vector<S> cols;
        detail::im2col3x3(x, cols);
        Eigen::Map<const RowMat<S>> cm(cols.data(), hw, 9 * cin_);
        Eigen::Map<const RowMat<S>> dym(dy.data.data(), hw, cout_);

        auto gw = ps.view_in(grad, w_);
        Eigen::Map<RowMat<S>> gwm(gw.data(), 9 * cin_, cout_);
        gwm.noalias() += cm.transpose() * dym;
        auto gb = ps.view_in(grad, b_);
        Eigen::Map<Eigen::RowVector<S, Eigen::Dynamic>> gbv(gb.data(), cout_);
        gbv.noalias() += dym.colwise().sum();

        std::vector<S> dcols(static_cast<std::size_t>(hw) * 9 * cin_);
        Eigen::Map<RowMat<S>> dcm(dcols.data(), hw, 9 * cin_);
        Eigen::Map<const RowMat<S>> wm(ps.view(w_).data(), 9 * cin_, cout_);
        dcm.noalias() = dym * wm.transpose();
        Grid<S> dx(x.h, x.w, cin_);
        detail::col2im3x3(dcols, dx);
        return dx;
    }

    int cin() const { return cin_; }
    int cout() const { return cout_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(9) * cin_ * cout_ + cout_; }

private:
    int cin_, cout_;
    std::size_t w_, b_;
};

/// 1x1 convolution: a per-location linear map (the projector's MLP layers).
template <class S>
class Conv1x1 {
public:
    Conv1x1(ParamStore<S>& ps, const std::string& prefix, int cin, int cout)
        : cin_(cin), cout_(cout),
          w_(ps.add(prefix + ".w", {cin, cout})),
          b_(ps.add(prefix + ".b", {cout})) {}

    void init(ParamStore<S>& ps, RandomStream& rng) const { kaiming_uniform(ps.view(w_), cin_, rng); }

    Grid<S> forward(const ParamStore<S>& ps, const Grid<S>& x) const {
        const int hw = x.h * x.w;
        Grid<S> y(x.h, x.w, cout_);
        Eigen::Map<const RowMat<S>> xm(x.data.data(), hw, cin_);
        Eigen::Map<const RowMat<S>> wm(ps.view(w_).data(), cin_, cout_);
        Eigen::Map<RowMat<S>> ym(y.data.data(), hw, cout_);
        ym.noalias() = xm * wm;
        Eigen::Map<const Eigen::RowVector<S, Eigen::Dynamic>> bv(ps.view(b_).data(), cout_);
        ym.rowwise() += bv;
        return y;
    }

    Grid<S> backward(const ParamStore<S>& ps, const Grid<S>& x, const Grid<S>& dy, std::span<S> grad) const {
        const int hw = x.h * x.w;
        Eigen::Map<const RowMat<S>> xm(x.data.data(), hw, cin_);
        Eigen::Map<const RowMat<S>> dym(dy.data.data(), hw, cout_);
        auto gw = ps.view_in(grad, w_);
        Eigen::Map<RowMat<S>> gwm(gw.data(), cin_, cout_);
        gwm.noalias() += xm.transpose() * dym;
        auto gb = ps.view_in(grad, b_);
        Eigen::Map<Eigen::RowVector<S, Eigen::Dynamic>> gbv(gb.data(), cout_);
        gbv.noalias() += dym.colwise().sum();

        Grid<S> dx(x.h, x.w, cin_);
        Eigen::Map<RowMat<S>> dxm(dx.data.data(), hw, cin_);
        Eigen::Map<const RowMat<S>> wm(ps.view(w_).data(), cin_, cout_);
        dxm.noalias() = dym * wm.transpose();
        return dx;
    }

    std::size_t parameter_count() const { return static_cast<std::size_t>(cin_) * cout_ + cout_; }

private:
    int cin_, cout_;
    std::size_t w_, b_;
};

/// Fully-connected layer on a plain vector (the classifier).
template <class S>
class Linear {
public:
    Linear(ParamStore<S>& ps, const std::string& prefix, int in, int out)
        : in_(in), out_(out),
          w_(ps.add(prefix + ".w", {out, in})),
          b_(ps.add(prefix + ".b", {out})) {}

    void init(ParamStore<S>& ps, RandomStream& rng) const { kaiming_uniform(ps.view(w_), in_, rng); }

    std::vector<S> forward(const ParamStore<S>& ps, std::span<const S> x) const {
        auto w = ps.view(w_);
        auto b = ps.view(b_);
        std::vector<S> y(out_);
        for (int o = 0; o < out_; ++o) {
            double acc = b[o];
            const S* row = w.data() + static_cast<std::size_t>(o) * in_;
            for (int i = 0; i < in_; ++i) acc += static_cast<double>(row[i]) * x[i];
            y[o] = static_cast<S>(acc);
        }
        return y;
    }

    std::vector<S> backward(const ParamStore<S>& ps, std::span<const S> x, std::span<const S> dy,
                            std::span<S> grad) const {
        auto w = ps.view(w_);
        auto gw = ps.view_in(grad, w_);
        auto gb = ps.view_in(grad, b_);
        std::vector<S> dx(in_, S(0));
        for (int o = 0; o < out_; ++o) {
            gb[o] += dy[o];
            const S* wrow = w.data() + static_cast<std::size_t>(o) * in_;
            S* grow = gw.data() + static_cast<std::size_t>(o) * in_;
            for (int i = 0; i < in_; ++i) {
                grow[i] += dy[o] * x[i];
                dx[i] += dy[o] * wrow[i];
            }
        }
        return dx;
    }

    /// Row of the weight matrix for one output class (used to build CAMs).
    std::span<const S> class_weights(const ParamStore<S>& ps, int cls) const {
        return ps.view(w_).subspan(static_cast<std::size_t>(cls) * in_, in_);
    }

private:
    int in_, out_;
    std::size_t w_, b_;
};

// ---------------------------------------------------------------------------
// Parameter-free pieces

template <class S>
Grid<S> relu(const Grid<S>& x) {
    Grid<S> y = x;
    for (auto& v : y.data) v = v > S(0) ? v : S(0);
    return y;
}

/// dx from dy given the forward *output* (y > 0 marks the pass-through set).
template <class S>
Grid<S> relu_backward(const Grid<S>& y, const Grid<S>& dy) {
    Grid<S> dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (!(y.data[i] > S(0))) dx.data[i] = S(0);
    return dx;
}

template <class S>
Grid<S> avgpool2x2(const Grid<S>& x) {
    Grid<S> y(x.h / 2, x.w / 2, x.c);
    for (int r = 0; r < y.h; ++r)
        for (int c = 0; c < y.w; ++c)
            for (int ch = 0; ch < x.c; ++ch)
                y.at(r, c, ch) = static_cast<S>(0.25 * (x.at(2 * r, 2 * c, ch) + x.at(2 * r, 2 * c + 1, ch) +
                                                        x.at(2 * r + 1, 2 * c, ch) + x.at(2 * r + 1, 2 * c + 1, ch)));
    return y;
}

template <class S>
Grid<S> avgpool2x2_backward(const Grid<S>& dy, int in_h, int in_w) {
    Grid<S> dx(in_h, in_w, dy.c);
    for (int r = 0; r < dy.h; ++r)
        for (int c = 0; c < dy.w; ++c)
            for (int ch = 0; ch < dy.c; ++ch) {
                const S v = static_cast<S>(0.25 * dy.at(r, c, ch));
                dx.at(2 * r, 2 * c, ch) = v;
                dx.at(2 * r, 2 * c + 1, ch) = v;
                dx.at(2 * r + 1, 2 * c, ch) = v;
                dx.at(2 * r + 1, 2 * c + 1, ch) = v;
            }
    return dx;
}

template <class S>
std::vector<S> global_avg_pool(const Grid<S>& x) {
    std::vector<S> y(x.c, S(0));
    std::vector<double> acc(x.c, 0.0);
    for (int l = 0; l < x.locations(); ++l) {
        const S* px = x.data.data() + static_cast<std::size_t>(l) * x.c;
        for (int ch = 0; ch < x.c; ++ch) acc[ch] += px[ch];
    }
    for (int ch = 0; ch < x.c; ++ch) y[ch] = static_cast<S>(acc[ch] / x.locations());
    return y;
}

template <class S>
Grid<S> global_avg_pool_backward(std::span<const S> dy, int h, int w) {
    Grid<S> dx(h, w, static_cast<int>(dy.size()));
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int l = 0; l < h * w; ++l) {
        S* px = dx.data.data() + static_cast<std::size_t>(l) * dx.c;
        for (std::size_t ch = 0; ch < dy.size(); ++ch) px[ch] = static_cast<S>(dy[ch] * inv);
    }
    return dx;
}

/// Min-max normalization to [0,1]; a constant map becomes 0.5 everywhere.
template <class S>
Grid<S> minmax_normalize(const Grid<S>& x) {
    S lo = x.data[0], hi = x.data[0];
    for (S v : x.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Grid<S> y(x.h, x.w, x.c);
    if (static_cast<double>(hi - lo) < 1e-12) {
        y.fill(S(0.5));
        return y;
    }
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        y.data[i] = static_cast<S>((x.data[i] - lo) * inv);
    return y;
}

// ---------------------------------------------------------------------------
// Losses

/// Mean per-pixel binary cross-entropy with logits; numerically stable.
template <class S>
double bce_with_logits(const Grid<S>& logits, const Grid<S>& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double s = logits.data[i];
        const double y = target.data[i];
        acc += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
    }
    return acc / static_cast<double>(logits.data.size());
}

/// d(mean BCE)/d(logits), scaled by `scale`.
template <class S>
Grid<S> bce_with_logits_grad(const Grid<S>& logits, const Grid<S>& target, double scale) {
    Grid<S> d(logits.h, logits.w, logits.c);
    const double inv = scale / static_cast<double>(logits.data.size());
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double s = logits.data[i];
        const double sig = 1.0 / (1.0 + std::exp(-s));
        d.data[i] = static_cast<S>((sig - static_cast<double>(target.data[i])) * inv);
    }
    return d;
}

template <class S>
double softmax_cross_entropy(std::span<const S> logits, int target) {
    double m = logits[0];
    for (S v : logits) m = std::max(m, static_cast<double>(v));
    double lse = 0.0;
    for (S v : logits) lse += std::exp(static_cast<double>(v) - m);
    return std::log(lse) + m - static_cast<double>(logits[target]);
}

template <class S>
std::vector<S> softmax_cross_entropy_grad(std::span<const S> logits, int target, double scale) {
    double m = logits[0];
    for (S v : logits) m = std::max(m, static_cast<double>(v));
    double lse = 0.0;
    for (S v : logits) lse += std::exp(static_cast<double>(v) - m);
    std::vector<S> d(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = std::exp(static_cast<double>(logits[i]) - m) / lse;
        d[i] = static_cast<S>((p - (static_cast<int>(i) == target ? 1.0 : 0.0)) * scale);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Optimizer

template <class S>
class SgdMomentum {
public:
    SgdMomentum(std::size_t n, double lr, double momentum) : lr_(lr), momentum_(momentum), v_(n, S(0)) {}

    void step(std::span<S> params, std::span<const S> grads) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            v_[i] = static_cast<S>(momentum_ * v_[i] + grads[i]);
            params[i] -= static_cast<S>(lr_ * v_[i]);
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    double lr_, momentum_;
    std::vector<S> v_;
};

} // namespace pixelcl::nn
