#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pixelcl/config.hpp"
#include "pixelcl/grid.hpp"
#include "pixelcl/nn.hpp"

namespace pixelcl {

/// Architecture knobs the network needs from a TrainConfig.
struct NetSpec {
    int roi = 28;
    int channels = 16;
    int categories = 8;
    int encoder_blocks = 8;
    int projector_layers = 3;
    bool use_cl = true;
    bool use_cam = true;
};

inline NetSpec net_spec_from(const TrainConfig& cfg, int categories) {
    return {cfg.roi_resolution, cfg.channels,      categories, cfg.encoder_blocks,
            cfg.projector_layers, cfg.use_cl, cfg.use_cam};
}

/// The trainable model: an RoI feature encoder (backbone stand-in), the
/// contrastive learning head (encoder f + projector g), a classification
/// head that yields CAMs, and the class-agnostic mask head fed by channel
/// concatenation of Y with X plus broadcast addition of the CAM.
template <class S>
class Network {
public:
    explicit Network(const NetSpec& spec) : spec_(spec) {
        const int c = spec.channels;
        backbone_.emplace_back(params_, "backbone.conv0", 3, c);
        backbone_.emplace_back(params_, "backbone.conv1", c, c);
        backbone_.emplace_back(params_, "backbone.conv2", c, c);
        for (int i = 0; i < spec.encoder_blocks; ++i)
            encoder_.emplace_back(params_, "cl.encoder.conv" + std::to_string(i), c, c);
        for (int i = 0; i < spec.projector_layers; ++i)
            projector_.emplace_back(params_, "cl.projector.fc" + std::to_string(i), c, c);
        cam_convs_.emplace_back(params_, "cam.conv0", c, c);
        cam_convs_.emplace_back(params_, "cam.conv1", c, c);
        classifier_.emplace(params_, "cam.classifier", c, spec.categories);
        const int fused = spec.use_cl ? 2 * c : c;
        mask_convs_.emplace_back(params_, "mask.conv0", fused, c);
        mask_convs_.emplace_back(params_, "mask.conv1", c, c);
        mask_convs_.emplace_back(params_, "mask.conv2", c, c);
        mask_convs_.emplace_back(params_, "mask.conv3", c, c);
        mask_out_.emplace(params_, "mask.out", c, 1);
        params_.finalize();
    }

    void init_params(RandomStream& rng) {
        for (auto& l : backbone_) l.init(params_, rng);
        for (auto& l : encoder_) l.init(params_, rng);
        for (auto& l : projector_) l.init(params_, rng);
        for (auto& l : cam_convs_) l.init(params_, rng);
        classifier_->init(params_, rng);
        for (auto& l : mask_convs_) l.init(params_, rng);
        mask_out_->init(params_, rng);
    }

    struct Trace {
        // backbone
        Grid<S> crop;
        std::vector<Grid<S>> bb_acts; // post-ReLU activations, last one is X
        // cam head
        Grid<S> cam_pooled;
        std::vector<Grid<S>> cam_acts;
        std::vector<S> cam_gap;
        std::vector<S> class_logits;
        Grid<S> cam; // A, R x R x 1, detached
        int target_class = -1;
        // cl head
        std::vector<Grid<S>> enc_acts; // post-ReLU, last one is Y
        std::vector<Grid<S>> proj_acts; // pre-output activations, last one is Z
        // mask head
        Grid<S> fused;
        std::vector<Grid<S>> mask_acts;
        Grid<S> mask_logits;

        const Grid<S>& x() const { return bb_acts.back(); }
        const Grid<S>& y() const { return enc_acts.back(); }
        const Grid<S>& z() const { return proj_acts.back(); }
    };

    /// Full forward pass for one RoI crop. `target_class` selects the CAM
    /// channel (the annotated category during training, argmax at inference
    /// when a negative value is passed).
    Trace forward(const Grid<S>& crop, int target_class) const {
        Trace t;
        t.crop = crop;
        // backbone stand-in: three stride-1 conv+ReLU blocks, 3 -> C.
        {
            Grid<S> a = crop;
            for (const auto& l : backbone_) {
                a = nn::relu(l.forward(params_, a));
                t.bb_acts.push_back(a);
            }
        }
        const Grid<S>& x = t.bb_acts.back();

        // classification head; CAM computed at half resolution.
        t.cam_pooled = nn::avgpool2x2(x);
        {
            Grid<S> a = t.cam_pooled;
            for (const auto& l : cam_convs_) {
                a = nn::relu(l.forward(params_, a));
                t.cam_acts.push_back(a);
            }
        }
        t.cam_gap = nn::global_avg_pool(t.cam_acts.back());
        t.class_logits = classifier_->forward(params_, t.cam_gap);
        if (target_class < 0) {
            target_class = 0;
            for (std::size_t i = 1; i < t.class_logits.size(); ++i)
                if (t.class_logits[i] > t.class_logits[target_class]) target_class = static_cast<int>(i);
        }
        if (target_class >= spec_.categories) throw ConfigError("invalid class id for CAM");
        t.target_class = target_class;
        t.cam = compute_cam(t.cam_acts.back(), target_class);

        // CL head.
        if (spec_.use_cl) {
            Grid<S> a = x;
            for (const auto& l : encoder_) {
                a = nn::relu(l.forward(params_, a));
                t.enc_acts.push_back(a);
            }
            a = t.enc_acts.back();
            for (std::size_t i = 0; i < projector_.size(); ++i) {
                a = projector_[i].forward(params_, a);
                if (i + 1 < projector_.size()) a = nn::relu(a);
                t.proj_acts.push_back(a);
            }
        }

        // mask head fusion: concat(Y, X) when the CL head is on, plus the
        // CAM broadcast-added over every channel when the CAM path is on.
        t.fused = fuse(t);
        {
            Grid<S> a = t.fused;
            for (const auto& l : mask_convs_) {
                a = nn::relu(l.forward(params_, a));
                t.mask_acts.push_back(a);
            }
            t.mask_logits = mask_out_->forward(params_, t.mask_acts.back());
        }
        return t;
    }

    struct BackSignals {
        std::vector<S> dlogits;          // d/d class_logits (empty = none)
        std::optional<Grid<S>> dmask;    // d/d mask_logits
        std::optional<Grid<S>> dz;       // d/d Z
    };

    /// Accumulates parameter gradients into `grad` (flat, same layout as the
    /// ParamStore). The CAM map itself is treated as a constant input to the
    /// fusion, so no gradient flows from the mask or CL paths into the
    /// classifier through A.
    void backward(const Trace& t, const BackSignals& sig, std::span<S> grad) const {
        const int c = spec_.channels;
        Grid<S> dx(t.x().h, t.x().w, c);

        // mask head path
        Grid<S> dy_from_mask;
        if (sig.dmask) {
            Grid<S> d = mask_out_->backward(params_, t.mask_acts.back(), *sig.dmask, grad);
            for (int i = static_cast<int>(mask_convs_.size()) - 1; i >= 0; --i) {
                d = nn::relu_backward(t.mask_acts[i], d);
                const Grid<S>& input = i == 0 ? t.fused : t.mask_acts[i - 1];
                d = mask_convs_[i].backward(params_, input, d, grad);
            }
            // split the fused gradient; the broadcast CAM add is dropped.
            if (spec_.use_cl) {
                dy_from_mask = Grid<S>(d.h, d.w, c);
                for (int l = 0; l < d.locations(); ++l) {
                    const S* src = d.data.data() + static_cast<std::size_t>(l) * d.c;
                    S* dyp = dy_from_mask.data.data() + static_cast<std::size_t>(l) * c;
                    S* dxp = dx.data.data() + static_cast<std::size_t>(l) * c;
                    for (int ch = 0; ch < c; ++ch) {
                        dyp[ch] += src[ch];
                        dxp[ch] += src[c + ch];
                    }
                }
            } else {
                for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += d.data[i];
            }
        }

        // CL head path
        if (spec_.use_cl && (sig.dz || dy_from_mask.size() > 0)) {
            Grid<S> dy(t.y().h, t.y().w, c);
            if (sig.dz) {
                Grid<S> d = *sig.dz;
                for (int i = static_cast<int>(projector_.size()) - 1; i >= 0; --i) {
                    if (i + 1 < static_cast<int>(projector_.size())) d = nn::relu_backward(t.proj_acts[i], d);
                    const Grid<S>& input = i == 0 ? t.enc_acts.back() : t.proj_acts[i - 1];
                    d = projector_[i].backward(params_, input, d, grad);
                }
                dy = d;
            }
            if (dy_from_mask.size() > 0)
                for (std::size_t i = 0; i < dy.data.size(); ++i) dy.data[i] += dy_from_mask.data[i];
            Grid<S> d = dy;
            for (int i = static_cast<int>(encoder_.size()) - 1; i >= 0; --i) {
                d = nn::relu_backward(t.enc_acts[i], d);
                const Grid<S>& input = i == 0 ? t.x() : t.enc_acts[i - 1];
                d = encoder_[i].backward(params_, input, d, grad);
            }
            for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += d.data[i];
        }

        // classification path
        if (!sig.dlogits.empty()) {
            std::vector<S> dgap = classifier_->backward(params_, t.cam_gap, sig.dlogits, grad);
            Grid<S> d = nn::global_avg_pool_backward(std::span<const S>(dgap), t.cam_acts.back().h,
                                                     t.cam_acts.back().w);
            for (int i = static_cast<int>(cam_convs_.size()) - 1; i >= 0; --i) {
                d = nn::relu_backward(t.cam_acts[i], d);
                const Grid<S>& input = i == 0 ? t.cam_pooled : t.cam_acts[i - 1];
                d = cam_convs_[i].backward(params_, input, d, grad);
            }
            Grid<S> dxp = nn::avgpool2x2_backward(d, t.x().h, t.x().w);
            for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dxp.data[i];
        }

        // backbone
        Grid<S> d = dx;
        for (int i = static_cast<int>(backbone_.size()) - 1; i >= 0; --i) {
            d = nn::relu_backward(t.bb_acts[i], d);
            const Grid<S>& input = i == 0 ? t.crop : t.bb_acts[i - 1];
            d = backbone_[i].backward(params_, input, d, grad);
        }
    }

    nn::ParamStore<S>& params() { return params_; }
    const nn::ParamStore<S>& params() const { return params_; }
    const NetSpec& spec() const { return spec_; }

    /// Parameters of encoder f plus projector g ("CnFm" closed form).
    std::size_t cl_parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : encoder_) n += l.parameter_count();
        for (const auto& l : projector_) n += l.parameter_count();
        return n;
    }

    /// Flat [offset, offset+size) ranges of the CL head parameters.
    std::vector<std::pair<std::size_t, std::size_t>> cl_parameter_ranges() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const auto& e : params_.entries())
            if (e.name.rfind("cl.", 0) == 0) out.emplace_back(e.offset, e.offset + e.size);
        return out;
    }

private:
    Grid<S> compute_cam(const Grid<S>& feat, int target_class) const {
        Grid<S> raw(feat.h, feat.w, 1);
        auto w = classifier_->class_weights(params_, target_class);
        for (int l = 0; l < feat.locations(); ++l) {
            const S* px = feat.data.data() + static_cast<std::size_t>(l) * feat.c;
            double acc = 0.0;
            for (int ch = 0; ch < feat.c; ++ch) acc += static_cast<double>(w[ch]) * px[ch];
            raw.data[static_cast<std::size_t>(l)] = static_cast<S>(acc);
        }
        Grid<S> norm = nn::minmax_normalize(raw);
        if (norm.h != spec_.roi || norm.w != spec_.roi) norm = resize_bilinear(norm, spec_.roi, spec_.roi);
        return norm;
    }

    Grid<S> fuse(const Trace& t) const {
        const int c = spec_.channels;
        const Grid<S>& x = t.x();
        Grid<S> f(x.h, x.w, spec_.use_cl ? 2 * c : c);
        if (spec_.use_cl) {
            const Grid<S>& y = t.y();
            for (int l = 0; l < x.locations(); ++l) {
                S* dst = f.data.data() + static_cast<std::size_t>(l) * f.c;
                const S* ys = y.data.data() + static_cast<std::size_t>(l) * c;
                const S* xs = x.data.data() + static_cast<std::size_t>(l) * c;
                std::copy(ys, ys + c, dst);
                std::copy(xs, xs + c, dst + c);
            }
        } else {
            f.data = x.data;
        }
        if (spec_.use_cam) {
            for (int l = 0; l < f.locations(); ++l) {
                const S a = t.cam.data[static_cast<std::size_t>(l)];
                S* dst = f.data.data() + static_cast<std::size_t>(l) * f.c;
                for (int ch = 0; ch < f.c; ++ch) dst[ch] += a;
            }
        }
        return f;
    }

    NetSpec spec_;
    nn::ParamStore<S> params_;
    std::vector<nn::Conv3x3<S>> backbone_;
    std::vector<nn::Conv3x3<S>> encoder_;
    std::vector<nn::Conv1x1<S>> projector_;
    std::vector<nn::Conv3x3<S>> cam_convs_;
    std::optional<nn::Linear<S>> classifier_;
    std::vector<nn::Conv3x3<S>> mask_convs_;
    std::optional<nn::Conv1x1<S>> mask_out_;
};

} // namespace pixelcl
