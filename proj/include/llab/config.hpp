#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace llab {

// `key = value` lines, '#' comments, lists comma-separated.
using KvMap = std::map<std::string, std::string>;

KvMap config_parse(const std::string& text);
std::string config_serialize(const KvMap& kv);  // canonical (sorted keys)

std::vector<std::string> split_list(const std::string& value);

struct ExperimentConfig {
    std::string model = "econ-s";
    std::vector<int> bits = {3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    std::vector<std::string> variants = {"baseline", "jacobian", "orthogonal"};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::map<std::string, double> delta;  // per-variant override of the registered defaults

    int epochs = 100;
    std::int64_t batch_size = 32;
    double lr = 1e-3;
    std::string optimizer = "adam";

    std::int64_t train_size = 256, test_size = 128;
    std::uint64_t data_seed = 1;

    bool run_hessian = true, run_cka = true, run_modeconn = true, run_landscape = true,
         run_corruption = true;

    int hessian_k = 4;
    int hessian_probes = 100;
    int hessian_iters = 100;
    double hessian_tol = 1e-4;
    std::int64_t hessian_batch = 256;
    std::uint64_t hessian_seed = 1;

    int landscape_steps = 41;
    double nu_min = -1.0, nu_max = 1.0;

    std::int64_t cka_m = 10;
    double cka_noise = 0.0;

    int mc_m = 60;
    int mc_epochs = 30;
    int mc_k = 2;

    std::vector<double> noise_grid = {0.0, 0.05, 0.1, 0.2};
    std::vector<double> flip_grid = {0.0, 1.0, 5.0};

    int jobs = 1;
    std::string out_dir;  // resolved against LLAB_OUT when empty

    double delta_for(const std::string& variant) const;
};

ExperimentConfig experiment_from_kv(const KvMap& kv);
KvMap experiment_to_kv(const ExperimentConfig& cfg);

// LLAB_OUT environment variable, falling back to "llab-out".
std::string default_out_dir();

}  // namespace llab
