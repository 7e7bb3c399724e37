#pragma once

#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "pixelcl/checkpoint.hpp"
#include "pixelcl/cl_objective.hpp"
#include "pixelcl/eval.hpp"
#include "pixelcl/heads.hpp"
#include "pixelcl/synth.hpp"

namespace pixelcl {

/// One optimization step's bookkeeping. loss_total satisfies
/// L = L_box + L_mask + lambda * L_con by construction.
struct StepRecord {
    long step = 0;
    int epoch = 0;
    double loss_total = 0.0;
    double loss_box = 0.0;
    double loss_mask = 0.0;
    double loss_con = 0.0;
    double lambda = 0.0;
    int n_base = 0;
    int n_novel = 0;
    int n_skipped = 0;
};

/// Linear warmup from lambda_start at step 0 to lambda_end at
/// warmup_fraction * total_steps, constant afterwards.
inline double lambda_schedule(long step, long total_steps, const TrainConfig& cfg) {
    if (step < 0 || step > total_steps) throw ConfigError("step outside [0, total_steps]");
    const double warmup = cfg.warmup_fraction * static_cast<double>(total_steps);
    if (warmup <= 0.0 || static_cast<double>(step) >= warmup) return cfg.lambda_end;
    return cfg.lambda_start + (cfg.lambda_end - cfg.lambda_start) * (static_cast<double>(step) / warmup);
}

struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(const std::string& what, std::string diag)
        : std::runtime_error(what), diagnostic(std::move(diag)) {}
    std::string diagnostic;
};

inline bool admitted_by_supervision(Supervision s, bool is_base) {
    return s == Supervision::all || (s == Supervision::base) == is_base;
}

namespace detail {

/// Static-partition parallel map: item i runs on thread i % n_threads, so
/// the work split (and every reduction that follows it) is deterministic.
inline void run_parallel(int n_items, int n_threads, const std::function<void(int)>& fn) {
    if (n_threads <= 1 || n_items <= 1) {
        for (int i = 0; i < n_items; ++i) fn(i);
        return;
    }
    std::exception_ptr err;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < n_items; i += n_threads) fn(i);
            } catch (...) {
                std::scoped_lock lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

} // namespace detail

template <class S = float>
class Trainer {
public:
    struct Hooks {
        std::function<void(const StepRecord&)> on_step;
        std::function<void(int epoch, const EvalReport&)> on_epoch_eval;
        std::function<void(long step, const Network<S>&)> on_checkpoint;
    };

    explicit Trainer(const TrainConfig& cfg)
        : cfg_(cfg),
          split_(resolve_split(cfg)),
          net_(net_spec_from(cfg, kNumCategories)),
          sample_rng_(RandomStream(cfg.seed).derive(0x5a11)),
          mine_rng_(RandomStream(cfg.seed).derive(0x313e)),
          shuffle_rng_(RandomStream(cfg.seed).derive(0x5803)) {
        cfg_.validate();
        RandomStream init_rng = RandomStream(cfg.seed).derive(0x1217);
        net_.init_params(init_rng);
    }

    Network<S>& network() { return net_; }
    const Network<S>& network() const { return net_; }
    const TrainConfig& config() const { return cfg_; }
    const CategorySplit& split() const { return split_; }
    long degenerate_boxes() const { return degenerate_boxes_; }

    /// Jittered/flipped training view of one instance. Novel samples lose
    /// mask access unless the oracle switch is on.
    RoiSample make_train_sample(const Scene& scene, int index) {
        RoiSample roi = extract_roi(scene, index, cfg_.jitter, cfg_.roi_resolution, sample_rng_, split_);
        if (cfg_.hflip && sample_rng_.bernoulli(0.5)) roi.flip_horizontal();
        if (!roi.is_base && !cfg_.oracle_novel_masks) roi.restrict_mask_access();
        return roi;
    }

    /// Forward, losses, gradients. `grad` must be zeroed and sized to the
    /// parameter count; the optimizer update is left to the caller.
    StepRecord compute_grads(const std::vector<RoiSample>& batch, long step, int epoch, long total_steps,
                             std::vector<std::vector<S>>& grad_bufs) {
        if (batch.empty()) throw ConfigError("training batch must contain at least one proposal");
        const int n = static_cast<int>(batch.size());
        const int n_threads = std::max(1, threads());
        const double lambda = lambda_schedule(step, total_steps, cfg_);

        std::vector<typename Network<S>::Trace> traces(n);
        detail::run_parallel(n, n_threads,
                             [&](int i) { traces[i] = net_.forward(batch[i].crop, batch[i].category_id); });

        StepRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.lambda = lambda;

        double box_sum = 0.0;
        for (int i = 0; i < n; ++i)
            box_sum += nn::softmax_cross_entropy(std::span<const S>(traces[i].class_logits), batch[i].category_id);
        rec.loss_box = box_sum / n;

        int n_base = 0;
        std::vector<Grid<S>> mask_targets(n);
        for (int i = 0; i < n; ++i) {
            if (!batch[i].is_base) continue;
            ++n_base;
            mask_targets[i] = to_float_mask<S>(batch[i].gt_mask());
        }
        double mask_sum = 0.0;
        for (int i = 0; i < n; ++i)
            if (batch[i].is_base) mask_sum += nn::bce_with_logits(traces[i].mask_logits, mask_targets[i]);
        rec.loss_mask = n_base > 0 ? mask_sum / n_base : 0.0;
        for (int i = 0; i < n; ++i)
            (batch[i].is_base ? rec.n_base : rec.n_novel)++;

        // contrastive objective over admitted proposals
        struct Admitted {
            int idx;
            Partition part;
            MinedKeys<S> mined;
        };
        std::vector<Admitted> adm;
        if (cfg_.use_cl) {
            for (int i = 0; i < n; ++i) {
                if (!admitted_by_supervision(cfg_.supervision, batch[i].is_base)) continue;
                try {
                    if (batch[i].is_base || cfg_.oracle_novel_masks) {
                        const Mask& gm = batch[i].gt_mask();
                        Partition p = partition_from_mask(gm);
                        const BoundarySet b = extract_boundary(gm);
                        MinedKeys<S> mk = mine_keys_base(traces[i].z(), p, b, cfg_.sigma, mine_rng_);
                        adm.push_back({i, std::move(p), std::move(mk)});
                    } else {
                        Partition p = partition_from_cam(traces[i].cam, cfg_.delta);
                        MinedKeys<S> mk = mine_keys_novel(traces[i].z(), p, cfg_.sigma, mine_rng_);
                        adm.push_back({i, std::move(p), std::move(mk)});
                    }
                } catch (const EmptyPartitionSide&) {
                    ++rec.n_skipped;
                }
            }
        }

        std::vector<Grid<S>> dz_grids;
        std::vector<const Grid<S>*> dz_of(n, nullptr);
        if (!adm.empty()) {
            std::vector<ClObjectiveItem<S>> items;
            items.reserve(adm.size());
            for (const auto& a : adm) items.push_back({&traces[a.idx].z(), &a.part, &a.mined.locs});
            LossBreakdown<S> bd;
            if (cfg_.query_sharing) {
                bd = cl_objective_grad(std::span<const ClObjectiveItem<S>>(items), static_cast<S>(cfg_.tau_easy),
                                       static_cast<S>(cfg_.tau_hard), cfg_.query_gradient, lambda, dz_grids);
            } else {
                // per-proposal queries: each proposal anchors its own means
                const double inv = 1.0 / static_cast<double>(items.size());
                double total = 0.0;
                for (std::size_t k = 0; k < items.size(); ++k) {
                    std::vector<Grid<S>> dzk;
                    const auto bk = cl_objective_grad(std::span<const ClObjectiveItem<S>>(&items[k], 1),
                                                      static_cast<S>(cfg_.tau_easy), static_cast<S>(cfg_.tau_hard),
                                                      cfg_.query_gradient, lambda * inv, dzk);
                    total += static_cast<double>(bk.total) * inv;
                    dz_grids.push_back(std::move(dzk[0]));
                }
                bd.total = static_cast<S>(total);
                bd.n_proposals = static_cast<int>(items.size());
            }
            rec.loss_con = static_cast<double>(bd.total);
            for (std::size_t k = 0; k < adm.size(); ++k) dz_of[adm[k].idx] = &dz_grids[k];
        }

        rec.loss_total = rec.loss_box + rec.loss_mask + lambda * rec.loss_con;
        if (!std::isfinite(rec.loss_total)) {
            std::ostringstream diag;
            diag << "non-finite loss at step " << step << ": box=" << rec.loss_box << " mask=" << rec.loss_mask
                 << " con=" << rec.loss_con << " lambda=" << lambda << "\n";
            for (int i = 0; i < n; ++i)
                diag << "  proposal " << i << ": category=" << batch[i].category_id
                     << " is_base=" << batch[i].is_base << "\n";
            throw TrainingDiverged("training diverged (non-finite loss)", diag.str());
        }

        grad_bufs.assign(static_cast<std::size_t>(n_threads), std::vector<S>(net_.params().total(), S(0)));
        detail::run_parallel(n, n_threads, [&](int i) {
            typename Network<S>::BackSignals sig;
            sig.dlogits = nn::softmax_cross_entropy_grad(std::span<const S>(traces[i].class_logits),
                                                         batch[i].category_id, 1.0 / n);
            if (batch[i].is_base)
                sig.dmask = nn::bce_with_logits_grad(traces[i].mask_logits, mask_targets[i], 1.0 / n_base);
            if (dz_of[i]) sig.dz = *dz_of[i];
            net_.backward(traces[i], sig, std::span<S>(grad_bufs[static_cast<std::size_t>(i % n_threads)]));
        });
        return rec;
    }

    StepRecord run_step(const std::vector<RoiSample>& batch, long step, int epoch, long total_steps) {
        std::vector<std::vector<S>> grad_bufs;
        StepRecord rec = compute_grads(batch, step, epoch, total_steps, grad_bufs);
        for (std::size_t t = 1; t < grad_bufs.size(); ++t)
            for (std::size_t i = 0; i < grad_bufs[0].size(); ++i) grad_bufs[0][i] += grad_bufs[t][i];
        if (!opt_) opt_.emplace(net_.params().total(), cfg_.learning_rate, cfg_.momentum);
        opt_->step(std::span<S>(net_.params().values()), std::span<const S>(grad_bufs[0]));
        return rec;
    }

    /// Full optimization over the generated dataset. Returns the final
    /// validation report.
    EvalReport train(const std::vector<Scene>& train_scenes, const std::vector<Scene>& val_scenes,
                     const Hooks& hooks = {}) {
        std::vector<std::pair<int, int>> roster;
        for (int s = 0; s < static_cast<int>(train_scenes.size()); ++s)
            for (int j = 0; j < static_cast<int>(train_scenes[s].instances.size()); ++j) roster.emplace_back(s, j);
        if (roster.empty()) throw ConfigError("training set has no instances");
        const long steps_per_epoch =
            (static_cast<long>(roster.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
        const long total_steps = steps_per_epoch * cfg_.epochs;

        long step = 0;
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            // Fisher-Yates epoch shuffle
            for (std::size_t i = roster.size(); i > 1; --i)
                std::swap(roster[i - 1], roster[static_cast<std::size_t>(shuffle_rng_.below(i))]);
            for (std::size_t start = 0; start < roster.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
                const std::size_t end = std::min(roster.size(), start + static_cast<std::size_t>(cfg_.batch_size));
                std::vector<RoiSample> batch;
                batch.reserve(end - start);
                for (std::size_t k = start; k < end; ++k) {
                    try {
                        batch.push_back(make_train_sample(train_scenes[roster[k].first], roster[k].second));
                    } catch (const DegenerateBox&) {
                        ++degenerate_boxes_;
                    }
                }
                if (batch.empty()) {
                    ++step;
                    continue;
                }
                const StepRecord rec = run_step(batch, step, epoch, total_steps);
                if (hooks.on_step) hooks.on_step(rec);
                ++step;
            }
            const bool last = epoch + 1 == cfg_.epochs;
            if (!last && cfg_.eval_every > 0 && (epoch + 1) % cfg_.eval_every == 0 && hooks.on_epoch_eval)
                hooks.on_epoch_eval(epoch, evaluate(net_, val_scenes, cfg_, split_));
            if (!last && cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0 &&
                hooks.on_checkpoint)
                hooks.on_checkpoint(step, net_);
        }
        EvalReport final_report = evaluate(net_, val_scenes, cfg_, split_);
        if (hooks.on_epoch_eval) hooks.on_epoch_eval(cfg_.epochs - 1, final_report);
        return final_report;
    }

private:
    int threads() const {
        if (cfg_.threads > 0) return cfg_.threads;
        return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }

    TrainConfig cfg_;
    CategorySplit split_;
    Network<S> net_;
    std::optional<nn::SgdMomentum<S>> opt_;
    RandomStream sample_rng_, mine_rng_, shuffle_rng_;
    long degenerate_boxes_ = 0;
};

/// Dataset generation + training in one call (the CLI path). The trainer is
/// kept alive so callers can checkpoint or inspect the final network.
template <class S = float>
struct TrainRun {
    Trainer<S> trainer;
    std::vector<Scene> train_scenes, val_scenes;
    EvalReport report;
};

template <class S = float>
TrainRun<S> train_from_config(const TrainConfig& cfg, const typename Trainer<S>::Hooks& hooks = {}) {
    auto [tr, va] = generate_dataset(cfg, cfg.data_seed);
    TrainRun<S> run{Trainer<S>(cfg), std::move(tr), std::move(va), EvalReport{}};
    run.report = run.trainer.train(run.train_scenes, run.val_scenes, hooks);
    return run;
}

} // namespace pixelcl
