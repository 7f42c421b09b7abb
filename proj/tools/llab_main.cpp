#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "llab/checkpoint.hpp"
#include "llab/cka.hpp"
#include "llab/config.hpp"
#include "llab/corruption.hpp"
#include "llab/errors.hpp"
#include "llab/experiment.hpp"
#include "llab/hessian.hpp"
#include "llab/io.hpp"
#include "llab/landscape.hpp"
#include "llab/mode_connectivity.hpp"
#include "llab/model_zoo.hpp"
#include "llab/svg.hpp"
#include "llab/trainer.hpp"

namespace {

using namespace llab;

std::string join_args(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += " ";
        out += argv[i];
    }
    return out;
}

struct LoadedModel {
    Checkpoint ck;
    ModelGraph graph;
    Dataset data;

    explicit LoadedModel(const std::string& path)
        : ck(load_checkpoint(path)), graph(zoo_spec(ck.model_name)), data([&] {
              const KvMap kv = config_parse(ck.config_echo);
              const std::string task = kv.count("task") ? kv.at("task")
                                                        : (ck.model_name == "econ-s"
                                                               ? "autoencode"
                                                               : "regress");
              const std::int64_t train_size =
                  kv.count("train_size") ? std::stoll(kv.at("train_size")) : 256;
              const std::int64_t test_size =
                  kv.count("test_size") ? std::stoll(kv.at("test_size")) : 128;
              const std::uint64_t data_seed =
                  kv.count("data_seed") ? std::stoull(kv.at("data_seed")) : 1;
              return generate_dataset(task, train_size, test_size, data_seed);
          }()) {}

    const ModelQuant* quant() const { return ck.quant.active() ? &ck.quant : nullptr; }
};

ExperimentConfig load_experiment_config(const std::string& config_path) {
    KvMap kv;
    if (!config_path.empty()) kv = config_parse(read_file(config_path));
    return experiment_from_kv(kv);
}

int run(int argc, char** argv) {
    CLI::App app{"loss-landscape analysis workbench for quantized models"};
    app.require_subcommand(1);
    app.fallthrough();
    const std::string cmdline = join_args(argc, argv);

    std::string out_dir = default_out_dir();
    app.add_option("--out", out_dir, "output directory (default $LLAB_OUT or llab-out)");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train one model configuration");
    std::string config_path, model_name = "econ-s", variant = "baseline", optimizer = "adam";
    int bits = 8, epochs = 100;
    std::int64_t batch_size = 32, train_size = 256, test_size = 128;
    double lr = 1e-3, delta = -1.0;
    std::uint64_t seed = 1, data_seed = 1;
    bool export_data = false;
    train_cmd->add_option("--config", config_path, "config file with defaults");
    train_cmd->add_option("--model", model_name, "econ-s | fusion-s");
    train_cmd->add_option("--bits", bits, "0 (float) or 3..12");
    train_cmd->add_option("--variant", variant, "baseline | jacobian | orthogonal");
    train_cmd->add_option("--seed", seed, "training seed");
    train_cmd->add_option("--epochs", epochs, "training epochs");
    train_cmd->add_option("--batch-size", batch_size, "batch size");
    train_cmd->add_option("--lr", lr, "learning rate");
    train_cmd->add_option("--optimizer", optimizer, "adam | sgd");
    train_cmd->add_option("--delta", delta, "regularization weight (default per model)");
    train_cmd->add_option("--train-size", train_size, "train split size");
    train_cmd->add_option("--test-size", test_size, "test split size");
    train_cmd->add_option("--data-seed", data_seed, "dataset seed");
    train_cmd->add_flag("--export-data", export_data, "also save the dataset container");

    // ---- hessian ----
    auto* hessian_cmd = app.add_subcommand("hessian", "top eigenpairs and Hutchinson trace");
    std::string ckpt_path;
    int hk = 4, hiters = 100, hprobes = 100;
    double htol = 1e-4;
    std::int64_t hbatch = 256;
    std::uint64_t hseed = 1;
    hessian_cmd->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    hessian_cmd->add_option("--k", hk, "number of eigenpairs (1..10)");
    hessian_cmd->add_option("--tol", htol, "power-iteration relative tolerance");
    hessian_cmd->add_option("--iters", hiters, "power-iteration cap");
    hessian_cmd->add_option("--probes", hprobes, "Hutchinson probes");
    hessian_cmd->add_option("--batch", hbatch, "evaluation batch size");
    hessian_cmd->add_option("--seed", hseed, "probe/batch seed");

    // ---- landscape ----
    auto* land_cmd = app.add_subcommand("landscape", "1-D/2-D loss slices");
    std::string l_ckpt, direction = "eigen", mode = "1d";
    int eigen_index = 1, steps = 41;
    double nu_min = -1.0, nu_max = 1.0;
    std::uint64_t dir_seed = 1;
    bool with_svg = false;
    land_cmd->add_option("--checkpoint", l_ckpt, "checkpoint path")->required();
    land_cmd->add_option("--direction", direction, "eigen | random");
    land_cmd->add_option("--eigen-index", eigen_index, "1-based eigenvector index");
    land_cmd->add_option("--dir-seed", dir_seed, "seed for random directions");
    land_cmd->add_option("--numin", nu_min, "minimum perturbation");
    land_cmd->add_option("--numax", nu_max, "maximum perturbation");
    land_cmd->add_option("--steps", steps, "steps per axis (default 41 for 1d, 21 for 2d)");
    land_cmd->add_option("--mode", mode, "1d | 2d");
    land_cmd->add_flag("--svg", with_svg, "also render an SVG for 1-D slices");

    // ---- cka ----
    auto* cka_cmd = app.add_subcommand("cka", "pairwise CKA over checkpoints");
    std::vector<std::string> cka_ckpts;
    std::int64_t cka_m = 10;
    double cka_noise = 0.0;
    std::uint64_t cka_seed = 1;
    std::string sweep_m, sweep_noise;
    cka_cmd->add_option("--checkpoints", cka_ckpts, "2+ checkpoint paths")->required();
    cka_cmd->add_option("--m", cka_m, "samples per output matrix (default 10)");
    cka_cmd->add_option("--noise", cka_noise, "gaussian input-noise sigma");
    cka_cmd->add_option("--seed", cka_seed, "sample/noise seed");
    cka_cmd->add_option("--sweep-m", sweep_m, "comma list of m values for the ablation sweep");
    cka_cmd->add_option("--sweep-noise", sweep_noise,
                        "comma list of noise sigmas for the ablation sweep");

    // ---- modeconn ----
    auto* mc_cmd = app.add_subcommand("modeconn", "Bezier mode connectivity");
    std::vector<std::string> mc_ckpts;
    int mc_m = 60, mc_k = 2, mc_epochs = 30;
    double mc_lr = 1e-3;
    std::uint64_t mc_seed = 1;
    mc_cmd->add_option("--checkpoints", mc_ckpts, "2+ checkpoint paths")->required();
    mc_cmd->add_option("--m", mc_m, "curve samples (default 60)");
    mc_cmd->add_option("--bends", mc_k, "Bezier k (k+1 anchors, default 2)");
    mc_cmd->add_option("--epochs", mc_epochs, "bend-training epochs (default 30)");
    mc_cmd->add_option("--lr", mc_lr, "bend-training learning rate");
    mc_cmd->add_option("--seed", mc_seed, "bend-training seed");

    // ---- corrupt ----
    auto* corrupt_cmd = app.add_subcommand("corrupt", "noise / bit-flip robustness sweeps");
    std::vector<std::string> c_ckpts;
    std::string stressor = "gaussian", grid_str = "0,0.05,0.1,0.2";
    std::uint64_t c_seed = 1;
    corrupt_cmd->add_option("--checkpoints", c_ckpts, "checkpoint paths")->required();
    corrupt_cmd
        ->add_option("--stressor", stressor,
                     "gaussian | salt-pepper | bitflip-fkeras | bitflip-random")
        ->required();
    corrupt_cmd->add_option("--grid", grid_str, "comma list of intensities / flip counts");
    corrupt_cmd->add_option("--seed", c_seed, "noise/plan seed");

    // ---- sweep ----
    auto* sweep_cmd = app.add_subcommand("sweep", "full variants x bits x seeds experiment grid");
    std::string sweep_config;
    int jobs = 0;
    sweep_cmd->add_option("--config", sweep_config, "experiment config file");
    sweep_cmd->add_option("--jobs", jobs, "parallel training workers");

    // ---- report ----
    auto* report_cmd = app.add_subcommand("report", "render a report CSV as SVG");
    std::string csv_path, kind = "line", out_file;
    report_cmd->add_option("--csv", csv_path, "input CSV")->required();
    report_cmd->add_option("--kind", kind, "line | multi-line");
    report_cmd->add_option("--out-file", out_file, "output SVG path");

    app.parse(argc, argv);

    if (*train_cmd) {
        ExperimentConfig cfg = load_experiment_config(config_path);
        if (train_cmd->count("--model")) cfg.model = model_name;
        if (train_cmd->count("--epochs")) cfg.epochs = epochs;
        if (train_cmd->count("--batch-size")) cfg.batch_size = batch_size;
        if (train_cmd->count("--lr")) cfg.lr = lr;
        if (train_cmd->count("--optimizer")) cfg.optimizer = optimizer;
        if (train_cmd->count("--train-size")) cfg.train_size = train_size;
        if (train_cmd->count("--test-size")) cfg.test_size = test_size;
        if (train_cmd->count("--data-seed")) cfg.data_seed = data_seed;
        if (train_cmd->count("--delta") && delta >= 0.0) cfg.delta[variant] = delta;
        if (!zoo_has(cfg.model)) throw ConfigError("unknown model '" + cfg.model + "'");

        const ModelGraph model(zoo_spec(cfg.model));
        const std::string task = cfg.model == "econ-s" ? "autoencode" : "regress";
        const Dataset data =
            generate_dataset(task, cfg.train_size, cfg.test_size, cfg.data_seed);

        TrainConfig tc;
        tc.epochs = cfg.epochs;
        tc.batch_size = cfg.batch_size;
        tc.lr = cfg.lr;
        tc.optimizer = cfg.optimizer == "sgd" ? Optimizer::kSgd : Optimizer::kAdam;
        tc.reg = regularizer_from_name(variant);
        tc.delta = cfg.delta_for(variant);
        tc.bits = bits;
        tc.seed = seed;

        TrainedModel tm = train(model, data, tc);
        const ParamVector final_params =
            tm.quant.active() ? snap_to_grid(tm.params, tm.quant) : tm.params;

        const std::string echo = train_echo(cfg, variant, bits, seed);
        Manifest manifest(cmdline, sha256_hex(echo));
        const std::string tag = run_tag(cfg.model, variant, bits, seed);
        manifest.write_artifact(out_dir + "/" + tag + ".llab",
                                encode_checkpoint(model, final_params, tm.quant, seed, echo));
        manifest.write_artifact(out_dir + "/" + tag + "_history.csv", history_csv(tm.history));
        if (export_data)
            manifest.write_artifact(out_dir + "/" + tag + "_data.llab", encode_dataset(data));
        manifest.write_manifest(out_dir + "/manifest.json");
        std::cout << "final test loss " << format_double(tm.history.back().test_loss) << "\n";
        return 0;
    }

    if (*hessian_cmd) {
        LoadedModel lm(ckpt_path);
        const std::int64_t n = std::min<std::int64_t>(hbatch, lm.data.test_inputs.shape[0]);
        const Tensor bx = slice_rows(lm.data.test_inputs, 0, n);
        const Tensor by = slice_rows(lm.data.test_targets, 0, n);
        HessianReport rep = top_eigenpairs(lm.graph, lm.ck.params, bx, by, hk, htol, hiters,
                                           hseed, lm.quant());
        const auto [trace, se] =
            hutchinson_trace(lm.graph, lm.ck.params, bx, by, hprobes, hseed, lm.quant());
        rep.trace = trace;
        rep.trace_stderr = se;
        rep.probes = hprobes;
        rep.batch_size = n;
        Manifest manifest(cmdline, sha256_hex(lm.ck.config_echo));
        manifest.write_artifact(out_dir + "/hessian.json", hessian_json(rep));
        manifest.write_manifest(out_dir + "/manifest.json");
        std::cout << "lambda_1 " << format_double(rep.eigenvalues.empty() ? 0.0 : rep.eigenvalues[0])
                  << " trace " << format_double(trace) << "\n";
        return 0;
    }

    if (*land_cmd) {
        LoadedModel lm(l_ckpt);
        Direction sigma, eta;
        bool is_2d = mode == "2d";
        if (mode != "1d" && mode != "2d") throw ConfigError("landscape mode must be 1d or 2d");
        if (is_2d && !land_cmd->count("--steps")) steps = 21;  // per-axis default for grids
        if (direction == "eigen") {
            const std::int64_t n = std::min<std::int64_t>(256, lm.data.test_inputs.shape[0]);
            const Tensor bx = slice_rows(lm.data.test_inputs, 0, n);
            const Tensor by = slice_rows(lm.data.test_targets, 0, n);
            const int need = is_2d ? eigen_index + 1 : eigen_index;
            HessianReport rep = top_eigenpairs(lm.graph, lm.ck.params, bx, by, need, 1e-4, 100,
                                               dir_seed, lm.quant());
            sigma = make_eigen_direction(rep, eigen_index);
            if (is_2d) eta = make_eigen_direction(rep, eigen_index + 1);
        } else if (direction == "random") {
            sigma = make_random_direction(lm.ck.params, dir_seed);
            if (is_2d) {
                eta = make_random_direction(lm.ck.params, dir_seed + 1);
                orthogonalize_pair(lm.ck.params, sigma, eta);
            }
        } else {
            throw ConfigError("direction must be eigen or random");
        }
        LandscapeGrid grid = scan(lm.graph, lm.ck.params, lm.data.test_inputs,
                                  lm.data.test_targets, sigma, is_2d ? &eta : nullptr, nu_min,
                                  nu_max, steps, lm.quant());
        Manifest manifest(cmdline, sha256_hex(lm.ck.config_echo));
        const std::string csv = landscape_csv(grid);
        manifest.write_artifact(out_dir + "/landscape.csv", csv);
        if (with_svg && !is_2d)
            manifest.write_artifact(out_dir + "/landscape.svg", emit_plot(csv, "line"));
        manifest.write_manifest(out_dir + "/manifest.json");
        std::cout << "center loss "
                  << format_double(grid.losses[grid.losses.size() / 2][grid.betas.size() / 2])
                  << "\n";
        return 0;
    }

    if (*cka_cmd) {
        if (cka_ckpts.size() < 2) throw ConfigError("cka needs at least 2 checkpoints");
        std::vector<LoadedModel> models;
        models.reserve(cka_ckpts.size());
        for (const auto& p : cka_ckpts) models.emplace_back(p);
        for (const auto& m : models)
            if (m.ck.model_name != models.front().ck.model_name)
                throw ConfigError("cka checkpoints must share one model spec");
        std::vector<ModelInstance> insts;
        for (const auto& m : models) insts.push_back({&m.ck.params, m.quant()});

        Manifest manifest(cmdline, sha256_hex(models.front().ck.config_echo));
        const CkaMatrix grid = cka_grid(models.front().graph, insts, models.front().data, cka_m,
                                        cka_noise, cka_seed);
        manifest.write_artifact(out_dir + "/cka.json", cka_json(grid));
        if (!sweep_m.empty()) {
            std::vector<std::int64_t> ms;
            for (const auto& s : split_list(sweep_m)) ms.push_back(std::stoll(s));
            const auto rows = cka_m_sweep(models.front().graph, insts, models.front().data, ms,
                                          cka_noise, cka_seed);
            std::string csv = "m,mean_cka\n";
            for (const auto& [m, v] : rows)
                csv += std::to_string(m) + "," + format_double(v) + "\n";
            manifest.write_artifact(out_dir + "/cka_m_sweep.csv", csv);
        }
        if (!sweep_noise.empty()) {
            std::string csv = "noise,mean_cka\n";
            for (const auto& s : split_list(sweep_noise)) {
                const double sigma = std::stod(s);
                const CkaMatrix g = cka_grid(models.front().graph, insts, models.front().data,
                                             cka_m, sigma, cka_seed);
                csv += format_double(sigma) + "," +
                       (g.mean_offdiag ? format_double(*g.mean_offdiag) : std::string("nan")) +
                       "\n";
            }
            manifest.write_artifact(out_dir + "/cka_noise_sweep.csv", csv);
        }
        manifest.write_manifest(out_dir + "/manifest.json");
        std::cout << "mean off-diagonal "
                  << (grid.mean_offdiag ? format_double(*grid.mean_offdiag) : "undefined") << "\n";
        return 0;
    }

    if (*mc_cmd) {
        if (mc_ckpts.size() < 2) throw ConfigError("modeconn needs at least 2 checkpoints");
        std::vector<LoadedModel> models;
        models.reserve(mc_ckpts.size());
        for (const auto& p : mc_ckpts) models.emplace_back(p);
        for (const auto& m : models)
            if (m.ck.model_name != models.front().ck.model_name)
                throw ConfigError("modeconn checkpoints must share one model spec");
        std::vector<const ParamVector*> params;
        for (const auto& m : models) params.push_back(&m.ck.params);

        BendTrainConfig bc;
        bc.epochs = mc_epochs;
        bc.lr = mc_lr;
        bc.seed = mc_seed;
        const MaxMcReport rep =
            max_mc(models.front().graph, params, models.front().data, mc_m, mc_k, bc);
        Manifest manifest(cmdline, sha256_hex(models.front().ck.config_echo));
        manifest.write_artifact(out_dir + "/modeconn.json", maxmc_json(rep));
        for (std::size_t i = 0; i < rep.pairs.size(); ++i) {
            manifest.write_artifact(out_dir + "/modeconn_pair" + std::to_string(i) + ".json",
                                    modeconn_json(rep.pairs[i].whole_curve));
            manifest.write_artifact(out_dir + "/modeconn_pair" + std::to_string(i) + ".csv",
                                    curve_csv(rep.pairs[i].whole_curve));
        }
        manifest.write_manifest(out_dir + "/manifest.json");
        std::cout << "max mc " << format_double(rep.max_mc) << "\n";
        return 0;
    }

    if (*corrupt_cmd) {
        std::vector<LoadedModel> models;
        models.reserve(c_ckpts.size());
        for (const auto& p : c_ckpts) models.emplace_back(p);
        for (const auto& m : models)
            if (m.ck.model_name != models.front().ck.model_name)
                throw ConfigError("corrupt checkpoints must share one model spec");

        StressorKind kind;
        if (stressor == "gaussian") kind = StressorKind::kGaussianGrid;
        else if (stressor == "salt-pepper") kind = StressorKind::kSaltPepperGrid;
        else if (stressor == "bitflip-fkeras") kind = StressorKind::kBitflipFkeras;
        else if (stressor == "bitflip-random") kind = StressorKind::kBitflipRandom;
        else throw ConfigError("unknown stressor '" + stressor + "'");

        std::vector<double> grid;
        for (const auto& s : split_list(grid_str)) grid.push_back(std::stod(s));

        std::vector<SweepModelEntry> entries;
        for (const auto& m : models) {
            const KvMap kv = config_parse(m.ck.config_echo);
            SweepModelEntry e;
            e.bits = m.ck.quant.active() ? m.ck.quant.bits : 0;
            e.variant = kv.count("variant") ? kv.at("variant") : "baseline";
            e.seed = m.ck.seed;
            e.params = &m.ck.params;
            e.quant = m.quant();
            entries.push_back(e);
        }
        SweepOptions opts;
        opts.noise_seed = c_seed;
        opts.ranking_seed = c_seed;
        const auto rows =
            robustness_sweep(models.front().graph, entries, models.front().data, kind, grid, opts);
        Manifest manifest(cmdline, sha256_hex(models.front().ck.config_echo));
        const std::string csv = robustness_csv(rows);
        manifest.write_artifact(out_dir + "/robustness.csv", csv);
        manifest.write_artifact(out_dir + "/robustness.json", robustness_json(rows, kind));
        manifest.write_artifact(out_dir + "/robustness.svg", emit_plot(csv, "multi-line"));
        manifest.write_manifest(out_dir + "/manifest.json");
        std::cout << "rows " << rows.size() << "\n";
        return 0;
    }

    if (*sweep_cmd) {
        ExperimentConfig cfg = load_experiment_config(sweep_config);
        if (jobs > 0) cfg.jobs = jobs;
        if (app.count("--out")) cfg.out_dir = out_dir;
        Manifest manifest(cmdline, sha256_hex(config_serialize(experiment_to_kv(cfg))));
        run_experiment(cfg, manifest, std::cout);
        manifest.write_manifest(cfg.out_dir + "/manifest.json");
        std::cout << "sweep complete, artifacts under " << cfg.out_dir << "\n";
        return 0;
    }

    if (*report_cmd) {
        const std::string csv = read_file(csv_path);
        const std::string svg = emit_plot(csv, kind);
        if (out_file.empty()) out_file = out_dir + "/report.svg";
        Manifest manifest(cmdline, sha256_hex(csv));
        manifest.write_artifact(out_file, svg);
        manifest.write_manifest(out_dir + "/manifest.json");
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        try {
            return run(argc, argv);
        } catch (const CLI::ParseError& e) {
            if (e.get_exit_code() == 0) return 0;  // --help
            std::cerr << "llab: error kind=config msg=\"" << e.what() << "\"\n";
            return 2;
        }
    } catch (const llab::ConfigError& e) {
        std::cerr << "llab: error kind=config msg=\"" << e.what() << "\"\n";
        return 2;
    } catch (const llab::RangeError& e) {
        std::cerr << "llab: error kind=config msg=\"" << e.what() << "\"\n";
        return 2;
    } catch (const llab::NumericError& e) {
        std::cerr << "llab: error kind=numeric msg=\"" << e.what() << "\"\n";
        return 3;
    } catch (const llab::IoError& e) {
        std::cerr << "llab: error kind=io msg=\"" << e.what() << "\"\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "llab: error kind=internal msg=\"" << e.what() << "\"\n";
        return 1;
    }
}
