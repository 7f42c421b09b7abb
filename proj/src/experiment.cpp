#include "llab/experiment.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "llab/checkpoint.hpp"
#include "llab/cka.hpp"
#include "llab/corruption.hpp"
#include "llab/errors.hpp"
#include "llab/hessian.hpp"
#include "llab/landscape.hpp"
#include "llab/mode_connectivity.hpp"
#include "llab/model_zoo.hpp"
#include "llab/svg.hpp"

namespace llab {

std::string run_tag(const std::string& model, const std::string& variant, int bits,
                    std::uint64_t seed) {
    return model + "_" + variant + "_b" + std::to_string(bits) + "_s" + std::to_string(seed);
}

std::string train_echo(const ExperimentConfig& cfg, const std::string& variant, int bits,
                       std::uint64_t seed) {
    KvMap kv;
    kv["model"] = cfg.model;
    kv["task"] = cfg.model == "econ-s" ? "autoencode" : "regress";
    kv["train_size"] = std::to_string(cfg.train_size);
    kv["test_size"] = std::to_string(cfg.test_size);
    kv["data_seed"] = std::to_string(cfg.data_seed);
    kv["bits"] = std::to_string(bits);
    kv["variant"] = variant;
    {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.9g", cfg.delta_for(variant));
        kv["delta"] = buf;
    }
    kv["epochs"] = std::to_string(cfg.epochs);
    kv["batch_size"] = std::to_string(cfg.batch_size);
    {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.9g", cfg.lr);
        kv["lr"] = buf;
    }
    kv["optimizer"] = cfg.optimizer;
    kv["seed"] = std::to_string(seed);
    return config_serialize(kv);
}

namespace {

TrainConfig to_train_config(const ExperimentConfig& cfg, const std::string& variant, int bits,
                            std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.optimizer = cfg.optimizer == "sgd" ? Optimizer::kSgd : Optimizer::kAdam;
    tc.reg = regularizer_from_name(variant);
    tc.delta = cfg.delta_for(variant);
    tc.bits = bits;
    tc.seed = seed;
    return tc;
}

Tensor eval_batch(const Dataset& data, std::int64_t want) {
    const std::int64_t n = std::min<std::int64_t>(want, data.test_inputs.shape[0]);
    return slice_rows(data.test_inputs, 0, n);
}

std::string group_tag(const std::string& model, const std::string& variant, int bits) {
    return model + "_" + variant + "_b" + std::to_string(bits);
}

}  // namespace

std::vector<GridRun> run_experiment(const ExperimentConfig& cfg, Manifest& manifest,
                                    std::ostream& log) {
    const ModelGraph model(zoo_spec(cfg.model));
    const std::string task = cfg.model == "econ-s" ? "autoencode" : "regress";
    const Dataset data = generate_dataset(task, cfg.train_size, cfg.test_size, cfg.data_seed);
    const std::string out = cfg.out_dir;

    // --- training grid, parallel across independent runs ---
    std::vector<GridRun> runs;
    for (const auto& variant : cfg.variants)
        for (int bits : cfg.bits)
            for (std::uint64_t seed : cfg.seeds) {
                GridRun run;
                run.bits = bits;
                run.variant = variant;
                run.seed = seed;
                runs.push_back(std::move(run));
            }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= runs.size()) break;
            GridRun& run = runs[i];
            const TrainConfig tc = to_train_config(cfg, run.variant, run.bits, run.seed);
            TrainedModel tm = train(model, data, tc);
            run.quant = tm.quant;
            run.params = tm.quant.active() ? snap_to_grid(tm.params, tm.quant) : tm.params;
            run.history = std::move(tm.history);
        }
    };
    const int n_threads = std::min<int>(cfg.jobs, static_cast<int>(runs.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (const GridRun& run : runs) {
        const std::string tag = run_tag(cfg.model, run.variant, run.bits, run.seed);
        manifest.write_artifact(out + "/checkpoints/" + tag + ".llab",
                                encode_checkpoint(model, run.params, run.quant, run.seed,
                                                  train_echo(cfg, run.variant, run.bits,
                                                             run.seed)));
        manifest.write_artifact(out + "/history/" + tag + ".csv", history_csv(run.history));
        log << "trained " << tag << " final test loss "
            << format_double(run.history.empty() ? 0.0 : run.history.back().test_loss) << "\n";
    }

    const Tensor hbatch = eval_batch(data, cfg.hessian_batch);
    const Tensor htarget = [&] {
        const std::int64_t n = hbatch.shape[0];
        Tensor t = slice_rows(data.test_targets, 0, n);
        return t;
    }();

    // --- per-run spectral and landscape analyses ---
    std::vector<HessianReport> hessians(runs.size());
    if (cfg.run_hessian || cfg.run_corruption || cfg.run_landscape) {
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const GridRun& run = runs[i];
            const ModelQuant* quant = run.quant.active() ? &run.quant : nullptr;
            HessianReport rep =
                top_eigenpairs(model, run.params, hbatch, htarget, cfg.hessian_k,
                               cfg.hessian_tol, cfg.hessian_iters, cfg.hessian_seed, quant);
            const auto [trace, se] = hutchinson_trace(model, run.params, hbatch, htarget,
                                                      cfg.hessian_probes, cfg.hessian_seed, quant);
            rep.trace = trace;
            rep.trace_stderr = se;
            rep.probes = cfg.hessian_probes;
            rep.batch_size = hbatch.shape[0];
            hessians[i] = std::move(rep);
            if (cfg.run_hessian) {
                const std::string tag = run_tag(cfg.model, run.variant, run.bits, run.seed);
                manifest.write_artifact(out + "/hessian/" + tag + ".json",
                                        hessian_json(hessians[i]));
            }
        }
    }

    if (cfg.run_landscape) {
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const GridRun& run = runs[i];
            const ModelQuant* quant = run.quant.active() ? &run.quant : nullptr;
            const std::string tag = run_tag(cfg.model, run.variant, run.bits, run.seed);
            const Direction eigen1 = make_eigen_direction(hessians[i], 1);
            LandscapeGrid eg = scan(model, run.params, data.test_inputs, data.test_targets,
                                    eigen1, nullptr, cfg.nu_min, cfg.nu_max,
                                    cfg.landscape_steps, quant);
            manifest.write_artifact(out + "/landscape/" + tag + "_eigen1d.csv",
                                    landscape_csv(eg));
            const Direction rnd = make_random_direction(run.params, run.seed);
            LandscapeGrid rg = scan(model, run.params, data.test_inputs, data.test_targets, rnd,
                                    nullptr, cfg.nu_min, cfg.nu_max, cfg.landscape_steps, quant);
            manifest.write_artifact(out + "/landscape/" + tag + "_random1d.csv",
                                    landscape_csv(rg));
        }
    }

    // --- per-(variant, bits) group analyses over seeds ---
    std::string cka_csv = "bit_width,variant,mean_cka\n";
    std::string maxmc_csv = "bit_width,variant,max_mc\n";
    std::string trace_csv = "bit_width,variant,mean_trace,std_trace,n_seeds\n";
    std::string clean_csv = "bit_width,variant,mean_loss,std_loss,n_seeds\n";

    for (const auto& variant : cfg.variants)
        for (int bits : cfg.bits) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < runs.size(); ++i)
                if (runs[i].variant == variant && runs[i].bits == bits) members.push_back(i);
            if (members.empty()) continue;
            const std::string gtag = group_tag(cfg.model, variant, bits);

            {  // clean loss across seeds
                double mean = 0.0, var = 0.0;
                std::vector<double> losses;
                for (std::size_t i : members) {
                    const GridRun& run = runs[i];
                    losses.push_back(evaluate(model, run.params, data.test_inputs,
                                              data.test_targets,
                                              run.quant.active() ? &run.quant : nullptr));
                }
                for (double l : losses) mean += l;
                mean /= static_cast<double>(losses.size());
                if (losses.size() > 1) {
                    for (double l : losses) var += (l - mean) * (l - mean);
                    var /= static_cast<double>(losses.size() - 1);
                }
                clean_csv += std::to_string(bits) + "," + variant + "," + format_double(mean) +
                             "," + format_double(std::sqrt(var)) + "," +
                             std::to_string(losses.size()) + "\n";
            }

            if (cfg.run_hessian) {
                double mean = 0.0, var = 0.0;
                for (std::size_t i : members) mean += hessians[i].trace;
                mean /= static_cast<double>(members.size());
                if (members.size() > 1) {
                    for (std::size_t i : members)
                        var += (hessians[i].trace - mean) * (hessians[i].trace - mean);
                    var /= static_cast<double>(members.size() - 1);
                }
                trace_csv += std::to_string(bits) + "," + variant + "," + format_double(mean) +
                             "," + format_double(std::sqrt(var)) + "," +
                             std::to_string(members.size()) + "\n";
            }

            if (cfg.run_cka && members.size() >= 2) {
                std::vector<ModelInstance> insts;
                for (std::size_t i : members)
                    insts.push_back({&runs[i].params,
                                     runs[i].quant.active() ? &runs[i].quant : nullptr});
                const CkaMatrix grid =
                    cka_grid(model, insts, data, cfg.cka_m, cfg.cka_noise, cfg.data_seed);
                manifest.write_artifact(out + "/cka/" + gtag + ".json", cka_json(grid));
                cka_csv += std::to_string(bits) + "," + variant + "," +
                           (grid.mean_offdiag ? format_double(*grid.mean_offdiag)
                                              : std::string("nan")) +
                           "\n";
            }

            if (cfg.run_modeconn && members.size() >= 2) {
                std::vector<const ParamVector*> params;
                for (std::size_t i : members) params.push_back(&runs[i].params);
                BendTrainConfig bc;
                bc.epochs = cfg.mc_epochs;
                bc.batch_size = cfg.batch_size;
                bc.lr = cfg.lr;
                bc.seed = cfg.data_seed;
                const MaxMcReport rep = max_mc(model, params, data, cfg.mc_m, cfg.mc_k, bc);
                manifest.write_artifact(out + "/modeconn/" + gtag + ".json", maxmc_json(rep));
                if (!rep.pairs.empty())
                    manifest.write_artifact(out + "/modeconn/" + gtag + "_pair0.csv",
                                            curve_csv(rep.pairs.front().whole_curve));
                maxmc_csv += std::to_string(bits) + "," + variant + "," +
                             format_double(rep.max_mc) + "\n";
            }
        }

    manifest.write_artifact(out + "/summary/clean_loss.csv", clean_csv);
    if (cfg.run_hessian) {
        manifest.write_artifact(out + "/summary/trace.csv", trace_csv);
        manifest.write_artifact(out + "/summary/trace.svg", emit_plot(trace_csv, "multi-line"));
    }
    if (cfg.run_cka) {
        manifest.write_artifact(out + "/summary/cka.csv", cka_csv);
        manifest.write_artifact(out + "/summary/cka.svg", emit_plot(cka_csv, "multi-line"));
    }
    if (cfg.run_modeconn) {
        manifest.write_artifact(out + "/summary/maxmc.csv", maxmc_csv);
        manifest.write_artifact(out + "/summary/maxmc.svg", emit_plot(maxmc_csv, "multi-line"));
    }

    // --- corruption sweeps across the whole grid ---
    if (cfg.run_corruption) {
        std::vector<SweepModelEntry> entries;
        for (const GridRun& run : runs)
            entries.push_back({run.bits, run.variant, run.seed, &run.params,
                               run.quant.active() ? &run.quant : nullptr});
        SweepOptions opts;
        opts.hessian_k = cfg.hessian_k;
        opts.hessian_iters = std::min(cfg.hessian_iters, 50);
        opts.hessian_tol = std::max(cfg.hessian_tol, 1e-3);
        opts.noise_seed = cfg.data_seed;
        opts.ranking_seed = cfg.hessian_seed;

        const auto emit_sweep = [&](StressorKind kind, const std::vector<double>& grid,
                                    const std::string& name) {
            const auto rows = robustness_sweep(model, entries, data, kind, grid, opts);
            const std::string csv = robustness_csv(rows);
            manifest.write_artifact(out + "/corruption/" + name + ".csv", csv);
            manifest.write_artifact(out + "/corruption/" + name + ".json",
                                    robustness_json(rows, kind));
            manifest.write_artifact(out + "/corruption/" + name + ".svg",
                                    emit_plot(csv, "multi-line"));
        };
        emit_sweep(StressorKind::kGaussianGrid, cfg.noise_grid, "gaussian");
        emit_sweep(StressorKind::kSaltPepperGrid, cfg.noise_grid, "salt_pepper");
        bool all_quantized = true;
        for (const GridRun& run : runs) all_quantized &= run.quant.active();
        if (all_quantized) {
            emit_sweep(StressorKind::kBitflipFkeras, cfg.flip_grid, "bitflip_fkeras");
            emit_sweep(StressorKind::kBitflipRandom, cfg.flip_grid, "bitflip_random");
        }
    }
    return runs;
}

}  // namespace llab
