#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pixelcl/ablation.hpp"
#include "pixelcl/checkpoint.hpp"
#include "pixelcl/metrics_io.hpp"
#include "pixelcl/plots.hpp"
#include "pixelcl/testing/oracles.hpp"
#include "pixelcl/training.hpp"

namespace fs = std::filesystem;
using namespace pixelcl;

namespace {

TrainConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return TrainConfig{};
    return load_train_config(path);
}

int cmd_generate_data(const std::string& config_path, std::uint64_t seed, bool seed_given,
                      const std::string& out_dir) {
    TrainConfig cfg = load_config_or_default(config_path);
    cfg.validate();
    const std::uint64_t use_seed = seed_given ? seed : cfg.data_seed;
    auto [train, val] = generate_dataset(cfg, use_seed);
    const CategorySplit split = resolve_split(cfg);
    write_dataset(out_dir, train, val, split);
    std::ofstream meta(fs::path(out_dir) / "dataset.txt");
    meta << "generator_seed = " << use_seed << "\n" << cfg.serialize();
    long n_train = 0, n_val = 0;
    for (const auto& s : train) n_train += static_cast<long>(s.instances.size());
    for (const auto& s : val) n_val += static_cast<long>(s.instances.size());
    std::cout << "wrote " << train.size() << " train scenes (" << n_train << " instances), " << val.size()
              << " val scenes (" << n_val << " instances) to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, bool deterministic) {
    TrainConfig cfg = load_config_or_default(config_path);
    if (deterministic) cfg.threads = 1;
    cfg.validate();
    fs::create_directories(out_dir);
    std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl");
    std::ofstream evals(fs::path(out_dir) / "eval.jsonl");
    {
        std::ofstream echo(fs::path(out_dir) / "config.txt");
        echo << cfg.serialize();
    }
    Trainer<float>::Hooks hooks;
    hooks.on_step = [&](const StepRecord& r) { metrics << step_to_json(r).dump() << "\n"; };
    hooks.on_epoch_eval = [&](int epoch, const EvalReport& rep) {
        nlohmann::ordered_json j;
        j["epoch"] = epoch;
        j["report"] = report_to_json(rep);
        evals << j.dump() << "\n";
        std::cout << "epoch " << epoch << ": base mIoU " << rep.base_miou << ", novel mIoU " << rep.novel_miou
                  << "\n";
    };
    long ckpt_counter = 0;
    hooks.on_checkpoint = [&](long step, const Network<float>& net) {
        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_%06ld.bin", step);
        save_checkpoint((fs::path(out_dir) / name).string(), net, cfg, step);
        ++ckpt_counter;
    };
    try {
        auto run = train_from_config<float>(cfg, hooks);
        save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), run.trainer.network(), cfg,
                        static_cast<long>(cfg.epochs));
        std::ofstream rep_json(fs::path(out_dir) / "report.json");
        rep_json << report_to_json(run.report).dump(2) << "\n";
        std::ofstream rep_txt(fs::path(out_dir) / "report.txt");
        rep_txt << format_report(run.report);
        std::cout << format_report(run.report);
        return 0;
    } catch (const TrainingDiverged& e) {
        std::ofstream dump(fs::path(out_dir) / "diverged_dump.txt");
        dump << e.diagnostic;
        std::cerr << "error: " << e.what() << " (diagnostic written to diverged_dump.txt)\n";
        return 2;
    }
}

/// Rebuilds the network stored in a checkpoint.
std::pair<TrainConfig, Network<float>> load_network(const std::string& checkpoint_path) {
    const CheckpointHeader head = read_checkpoint_header(checkpoint_path);
    Network<float> net(net_spec_from(head.cfg, kNumCategories));
    load_checkpoint_params(checkpoint_path, net);
    return {head.cfg, std::move(net)};
}

std::vector<Scene> load_eval_scenes(const std::string& data_dir) {
    const fs::path p(data_dir);
    if (fs::exists(p / "val" / "index.txt")) return read_split(p / "val");
    if (fs::exists(p / "index.txt")) return read_split(p);
    throw ConfigError("no index.txt under " + data_dir);
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir, const std::string& out_dir) {
    auto [cfg, net] = load_network(checkpoint_path);
    const CategorySplit split = resolve_split(cfg);
    const auto scenes = load_eval_scenes(data_dir);
    const EvalReport rep = evaluate(net, scenes, cfg, split);
    std::cout << format_report(rep);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream rep_json(fs::path(out_dir) / "report.json");
        rep_json << report_to_json(rep).dump(2) << "\n";
        std::ofstream rep_txt(fs::path(out_dir) / "report.txt");
        rep_txt << format_report(rep);
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& axis, const std::string& values_csv,
               const std::string& seeds_csv, const std::string& out_dir) {
    TrainConfig cfg = load_config_or_default(config_path);
    cfg.validate();
    const auto values = split_csv(values_csv);
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_csv(seeds_csv)) seeds.push_back(std::stoull(s));
    if (values.empty() || seeds.empty()) throw ConfigError("ablate needs nonempty --values and --seeds");
    const AblationMatrix mat = run_ablation<float>(cfg, axis, values, seeds, [](const std::string& what) {
        std::cout << "running " << what << "\n";
    });
    fs::create_directories(out_dir);
    std::ofstream js(fs::path(out_dir) / "ablation.json");
    js << ablation_to_json(mat).dump(2) << "\n";
    std::ofstream txt(fs::path(out_dir) / "ablation.txt");
    txt << format_ablation(mat);
    write_ppm((fs::path(out_dir) / "ablation_chart.ppm").string(), render_ablation_chart(mat));
    std::cout << format_ablation(mat);
    return 0;
}

int cmd_plot(const std::string& in_dir, const std::string& out_dir) {
    fs::create_directories(out_dir);
    bool wrote_any = false;
    const fs::path in(in_dir);
    if (fs::exists(in / "checkpoint.bin")) {
        auto [cfg, net] = load_network((in / "checkpoint.bin").string());
        const CategorySplit split = resolve_split(cfg);
        auto [train, val] = generate_dataset(cfg, cfg.data_seed);
        (void)train;
        emit_plots(net, val, cfg, split, out_dir);
        wrote_any = true;
    } else {
        std::cout << "warning: no checkpoint.bin in " << in_dir << ", skipping sample grids\n";
    }
    if (fs::exists(in / "ablation.json")) {
        std::ifstream js(in / "ablation.json");
        nlohmann::json j;
        js >> j;
        const AblationMatrix mat = ablation_from_json(j);
        write_ppm((fs::path(out_dir) / "ablation_chart.ppm").string(), render_ablation_chart(mat));
        std::ofstream legend(fs::path(out_dir) / "ablation_chart.txt");
        legend << format_ablation(mat);
        wrote_any = true;
    }
    if (!wrote_any) std::cout << "warning: nothing to plot in " << in_dir << "\n";
    return 0;
}

int cmd_check_loss(const std::string& dump_keys_path) {
    warning_counters().reset();
    const double oracle_err = testing::oracle_equivalence_max_error(100, {0.05, 0.3, 0.7, 5.0}, 20240913);
    std::cout << "oracle equivalence (100 instances, tau in {0.05,0.3,0.7,5}): max |err| = " << oracle_err
              << "\n";
    const double fd32 = testing::fd_gradient_max_rel_error<float>(20, 77, 1e-4, true);
    std::cout << "finite-difference check, 32-bit analytic grads: max rel err = " << fd32 << "\n";
    const double fd64 = testing::fd_gradient_max_rel_error<double>(20, 78, 1e-5, true);
    std::cout << "finite-difference check, 64-bit analytic grads: max rel err = " << fd64 << "\n";
    const double fd_stop = testing::fd_objective_max_rel_error(QueryGradient::stop, 6, 101);
    const double fd_flow = testing::fd_objective_max_rel_error(QueryGradient::flow, 6, 102);
    std::cout << "objective-level FD, query_gradient=stop: max rel err = " << fd_stop << "\n";
    std::cout << "objective-level FD, query_gradient=flow: max rel err = " << fd_flow << "\n";

    if (!dump_keys_path.empty()) {
        // demo proposal: a centered disk mask on a 28x28 lattice
        const int R = 28;
        Mask m(R, R, 1);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < R; ++c)
                if ((r - 13.5) * (r - 13.5) + (c - 13.5) * (c - 13.5) <= 81.0) m.at(r, c) = 1;
        Grid<float> z(R, R, 8);
        RandomStream rng(5);
        for (auto& v : z.data) v = static_cast<float>(rng.normal());
        const Partition p = partition_from_mask(m);
        const BoundarySet b = extract_boundary(m);
        const auto mined = mine_keys_base(z, p, b, 0.3, rng);
        std::ofstream out(dump_keys_path);
        auto dump = [&](const char* name, const std::vector<Loc>& locs) {
            out << name << " (" << locs.size() << ")\n";
            for (const Loc& l : locs) out << "  " << l.r << " " << l.c << "\n";
        };
        dump("fg_easy", mined.locs.fg_easy);
        dump("fg_hard", mined.locs.fg_hard);
        dump("bg_easy", mined.locs.bg_easy);
        dump("bg_hard", mined.locs.bg_hard);
        std::cout << "sampled key coordinates written to " << dump_keys_path << "\n";
    }

    const bool ok = oracle_err <= 1e-6 && fd32 <= 1e-3 && fd64 <= 1e-6 && fd_stop <= 1e-6 && fd_flow <= 1e-6;
    std::cout << (ok ? "check-loss: all suites passed\n" : "check-loss: FAILURE\n");
    return ok ? 0 : 1;
}

int cmd_dump_pseudo_masks(const std::string& checkpoint_path, const std::string& data_dir,
                          const std::string& out_dir) {
    auto [cfg, net] = load_network(checkpoint_path);
    const CategorySplit split = resolve_split(cfg);
    const auto scenes = load_eval_scenes(data_dir);
    fs::create_directories(out_dir);
    RandomStream rng(0);
    int written = 0, skipped = 0;
    for (std::size_t s = 0; s < scenes.size(); ++s)
        for (int j = 0; j < static_cast<int>(scenes[s].instances.size()); ++j) {
            RoiSample roi = extract_roi(scenes[s], j, 0.0, cfg.roi_resolution, rng, split);
            if (roi.is_base) continue;
            const auto trace = net.forward(roi.crop, roi.category_id);
            char name[96];
            std::snprintf(name, sizeof(name), "pseudo_%04zu_%02d_%s", s, j,
                          category_name(static_cast<ShapeCategory>(roi.category_id)));
            try {
                const Partition p = partition_from_cam(trace.cam, cfg.delta);
                write_pgm((fs::path(out_dir) / (std::string(name) + ".pgm")).string(), render_partition(p));
                ++written;
            } catch (const EmptyPartitionSide&) {
                ++skipped;
            }
            Grid<float> cam_f(trace.cam.h, trace.cam.w, 1);
            for (std::size_t i = 0; i < cam_f.data.size(); ++i) cam_f.data[i] = trace.cam.data[i];
            write_pgm((fs::path(out_dir) / (std::string(name) + "_cam.pgm")).string(), cam_f);
        }
    std::cout << "wrote " << written << " pseudo-mask renderings (" << skipped
              << " proposals had no confident partition)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"foreground/background pixel-contrast segmentation on synthetic shapes"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, checkpoint_path, in_dir;
    std::string axis, values_csv, seeds_csv, dump_keys_path;
    std::uint64_t seed = 0;
    bool deterministic = false;

    auto* gen = app.add_subcommand("generate-data", "generate a synthetic-shapes dataset");
    gen->add_option("--config", config_path, "config file (flat key = value)");
    auto* seed_opt = gen->add_option("--seed", seed, "generator seed (default: data_seed from config)");
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* train = app.add_subcommand("train", "train on a generated dataset");
    train->add_option("--config", config_path, "config file");
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_flag("--deterministic", deterministic, "single-threaded bit-stable execution");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset directory (split dir or parent)")->required();
    eval->add_option("--out", out_dir, "optional report output directory");

    auto* ablate = app.add_subcommand("ablate", "train/evaluate a sweep over one flag");
    ablate->add_option("--config", config_path, "base config file");
    ablate->add_option("--axis", axis, "flag to sweep")->required();
    ablate->add_option("--values", values_csv, "comma-separated values")->required();
    ablate->add_option("--seeds", seeds_csv, "comma-separated training seeds")->required();
    ablate->add_option("--out", out_dir, "output directory")->required();

    auto* plot = app.add_subcommand("plot", "render sample grids and ablation charts");
    plot->add_option("--in", in_dir, "train or ablate output directory")->required();
    plot->add_option("--out", out_dir, "figure output directory")->required();

    auto* check = app.add_subcommand("check-loss", "run loss oracle and gradient suites");
    check->add_option("--dump-keys", dump_keys_path, "write sampled key coordinates to this file");

    auto* dump = app.add_subcommand("dump-pseudo-masks", "render CAM partitions for novel proposals");
    dump->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    dump->add_option("--data", data_dir, "dataset directory")->required();
    dump->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate_data(config_path, seed, seed_opt->count() > 0, out_dir);
        if (train->parsed()) return cmd_train(config_path, out_dir, deterministic);
        if (eval->parsed()) return cmd_eval(checkpoint_path, data_dir, out_dir);
        if (ablate->parsed()) return cmd_ablate(config_path, axis, values_csv, seeds_csv, out_dir);
        if (plot->parsed()) return cmd_plot(in_dir, out_dir);
        if (check->parsed()) return cmd_check_loss(dump_keys_path);
        if (dump->parsed()) return cmd_dump_pseudo_masks(checkpoint_path, data_dir, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
