#include "llab/config.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

#include "llab/errors.hpp"
#include "llab/model_zoo.hpp"
#include "llab/trainer.hpp"

namespace llab {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

}  // namespace

KvMap config_parse(const std::string& text) {
    KvMap kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

std::string config_serialize(const KvMap& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : value) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    const std::string last = trim(cur);
    if (!last.empty() || !out.empty()) out.push_back(last);
    return out;
}

double ExperimentConfig::delta_for(const std::string& variant) const {
    auto it = delta.find(variant);
    if (it != delta.end()) return it->second;
    return default_delta(model, regularizer_from_name(variant));
}

ExperimentConfig experiment_from_kv(const KvMap& kv) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : kv) {
        if (key == "model") cfg.model = value;
        else if (key == "bits") {
            cfg.bits.clear();
            for (const auto& b : split_list(value)) cfg.bits.push_back(to_int(key, b));
        } else if (key == "variants") {
            cfg.variants = split_list(value);
        } else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& s : split_list(value))
                cfg.seeds.push_back(static_cast<std::uint64_t>(to_int(key, s)));
        } else if (key == "delta.baseline" || key == "delta.jacobian" ||
                   key == "delta.orthogonal") {
            cfg.delta[key.substr(6)] = to_double(key, value);
        } else if (key == "epochs") cfg.epochs = to_int(key, value);
        else if (key == "batch_size") cfg.batch_size = to_int(key, value);
        else if (key == "lr") cfg.lr = to_double(key, value);
        else if (key == "optimizer") cfg.optimizer = value;
        else if (key == "train_size") cfg.train_size = to_int(key, value);
        else if (key == "test_size") cfg.test_size = to_int(key, value);
        else if (key == "data_seed") cfg.data_seed = static_cast<std::uint64_t>(to_int(key, value));
        else if (key == "run_hessian") cfg.run_hessian = to_bool(key, value);
        else if (key == "run_cka") cfg.run_cka = to_bool(key, value);
        else if (key == "run_modeconn") cfg.run_modeconn = to_bool(key, value);
        else if (key == "run_landscape") cfg.run_landscape = to_bool(key, value);
        else if (key == "run_corruption") cfg.run_corruption = to_bool(key, value);
        else if (key == "hessian_k") cfg.hessian_k = to_int(key, value);
        else if (key == "hessian_probes") cfg.hessian_probes = to_int(key, value);
        else if (key == "hessian_iters") cfg.hessian_iters = to_int(key, value);
        else if (key == "hessian_tol") cfg.hessian_tol = to_double(key, value);
        else if (key == "hessian_batch") cfg.hessian_batch = to_int(key, value);
        else if (key == "hessian_seed") cfg.hessian_seed = static_cast<std::uint64_t>(to_int(key, value));
        else if (key == "landscape_steps") cfg.landscape_steps = to_int(key, value);
        else if (key == "nu_min") cfg.nu_min = to_double(key, value);
        else if (key == "nu_max") cfg.nu_max = to_double(key, value);
        else if (key == "cka_m") cfg.cka_m = to_int(key, value);
        else if (key == "cka_noise") cfg.cka_noise = to_double(key, value);
        else if (key == "mc_m") cfg.mc_m = to_int(key, value);
        else if (key == "mc_epochs") cfg.mc_epochs = to_int(key, value);
        else if (key == "mc_k") cfg.mc_k = to_int(key, value);
        else if (key == "noise_grid") {
            cfg.noise_grid.clear();
            for (const auto& s : split_list(value)) cfg.noise_grid.push_back(to_double(key, s));
        } else if (key == "flip_grid") {
            cfg.flip_grid.clear();
            for (const auto& s : split_list(value)) cfg.flip_grid.push_back(to_double(key, s));
        } else if (key == "jobs") cfg.jobs = to_int(key, value);
        else if (key == "out_dir") cfg.out_dir = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }

    if (!zoo_has(cfg.model)) throw ConfigError("config model '" + cfg.model + "' not registered");
    std::set<std::uint64_t> unique_seeds(cfg.seeds.begin(), cfg.seeds.end());
    if (unique_seeds.size() != cfg.seeds.size()) throw ConfigError("seeds must be distinct");
    if (cfg.seeds.empty()) throw ConfigError("at least one seed required");
    for (int b : cfg.bits)
        if (b != 0 && (b < 3 || b > 12))
            throw ConfigError("bit width " + std::to_string(b) + " outside 0 or [3,12]");
    for (const auto& v : cfg.variants) (void)regularizer_from_name(v);
    if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (cfg.out_dir.empty()) cfg.out_dir = default_out_dir();
    return cfg;
}

KvMap experiment_to_kv(const ExperimentConfig& cfg) {
    KvMap kv;
    kv["model"] = cfg.model;
    {
        std::string v;
        for (std::size_t i = 0; i < cfg.bits.size(); ++i)
            v += (i ? "," : "") + std::to_string(cfg.bits[i]);
        kv["bits"] = v;
    }
    {
        std::string v;
        for (std::size_t i = 0; i < cfg.variants.size(); ++i)
            v += (i ? "," : "") + cfg.variants[i];
        kv["variants"] = v;
    }
    {
        std::string v;
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            v += (i ? "," : "") + std::to_string(cfg.seeds[i]);
        kv["seeds"] = v;
    }
    for (const auto& [variant, d] : cfg.delta) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.9g", d);
        kv["delta." + variant] = buf;
    }
    kv["epochs"] = std::to_string(cfg.epochs);
    kv["batch_size"] = std::to_string(cfg.batch_size);
    {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.9g", cfg.lr);
        kv["lr"] = buf;
    }
    kv["optimizer"] = cfg.optimizer;
    kv["train_size"] = std::to_string(cfg.train_size);
    kv["test_size"] = std::to_string(cfg.test_size);
    kv["data_seed"] = std::to_string(cfg.data_seed);
    // jobs and out_dir do not determine results, so they stay out of the
    // canonical form used for config hashing
    return kv;
}

std::string default_out_dir() {
    const char* env = std::getenv("LLAB_OUT");
    return env && *env ? env : "llab-out";
}

}  // namespace llab
