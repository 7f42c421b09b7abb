#include "llab/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "llab/errors.hpp"

namespace llab {

namespace {

// FIPS 180-4 SHA-256, small scalar implementation.
struct Sha256 {
    std::uint32_t state[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                              0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    std::uint64_t bitlen = 0;
    unsigned char buffer[64];
    std::size_t buflen = 0;

    static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

    void process(const unsigned char* chunk) {
        static const std::uint32_t k[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
            0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
            0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
            0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
            0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
            0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
            0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
            0xc67178f2};
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (static_cast<std::uint32_t>(chunk[i * 4]) << 24) |
                   (static_cast<std::uint32_t>(chunk[i * 4 + 1]) << 16) |
                   (static_cast<std::uint32_t>(chunk[i * 4 + 2]) << 8) |
                   static_cast<std::uint32_t>(chunk[i * 4 + 3]);
        for (int i = 16; i < 64; ++i) {
            const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = state[0], b = state[1], c = state[2], d = state[3];
        std::uint32_t e = state[4], f = state[5], g = state[6], h = state[7];
        for (int i = 0; i < 64; ++i) {
            const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
            const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t t2 = s0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        state[0] += a;
        state[1] += b;
        state[2] += c;
        state[3] += d;
        state[4] += e;
        state[5] += f;
        state[6] += g;
        state[7] += h;
    }

    void update(const unsigned char* data, std::size_t len) {
        bitlen += static_cast<std::uint64_t>(len) * 8;
        while (len > 0) {
            const std::size_t take = std::min(len, 64 - buflen);
            std::memcpy(buffer + buflen, data, take);
            buflen += take;
            data += take;
            len -= take;
            if (buflen == 64) {
                process(buffer);
                buflen = 0;
            }
        }
    }

    std::string hex_digest() {
        unsigned char pad[72] = {0x80};
        const std::uint64_t bits = bitlen;
        const std::size_t padlen = (buflen < 56) ? (56 - buflen) : (120 - buflen);
        update(pad, padlen);
        unsigned char lenbytes[8];
        for (int i = 0; i < 8; ++i) lenbytes[i] = static_cast<unsigned char>(bits >> (56 - i * 8));
        // update() would re-count these bytes; feed them directly
        std::memcpy(buffer + buflen, lenbytes, 8);
        process(buffer);
        char out[65];
        for (int i = 0; i < 8; ++i) std::snprintf(out + i * 8, 9, "%08x", state[i]);
        return std::string(out, 64);
    }
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    Sha256 h;
    h.update(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    return h.hex_digest();
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    std::error_code ec;
    if (target.has_parent_path()) {
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + target.parent_path().string());
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,train_loss,test_loss,penalty\n";
    for (const auto& row : history)
        out += std::to_string(row.epoch) + "," + format_double(row.train_loss) + "," +
               format_double(row.test_loss) + "," + format_double(row.penalty) + "\n";
    return out;
}

std::string landscape_csv(const LandscapeGrid& grid) {
    std::string out = "alpha,beta,loss\n";
    for (std::size_t i = 0; i < grid.alphas.size(); ++i)
        for (std::size_t j = 0; j < grid.betas.size(); ++j)
            out += format_double(grid.alphas[i]) + "," + format_double(grid.betas[j]) + "," +
                   (grid.flagged[i][j] ? std::string("nan") : format_double(grid.losses[i][j])) +
                   "\n";
    return out;
}

std::string curve_csv(const ModeConnectivityReport& report) {
    std::string out = "t,loss\n";
    for (std::size_t i = 0; i < report.t_values.size(); ++i)
        out += format_double(report.t_values[i]) + "," + format_double(report.curve_losses[i]) +
               "\n";
    return out;
}

std::string robustness_csv(const std::vector<RobustnessRow>& rows) {
    std::string out = "bit_width,variant,stressor_param,mean_loss,std_loss,n_seeds\n";
    for (const auto& r : rows)
        out += std::to_string(r.bits) + "," + r.variant + "," + format_double(r.stressor_param) +
               "," + format_double(r.mean_loss) + "," + format_double(r.std_loss) + "," +
               std::to_string(r.n_seeds) + "\n";
    return out;
}

std::string hessian_json(const HessianReport& report) {
    nlohmann::json j;
    j["eigenvalues"] = report.eigenvalues;
    j["trace"] = report.trace;
    j["stderr"] = report.trace_stderr;
    j["k"] = report.eigenvalues.size();
    j["probes"] = report.probes;
    j["batch_seed"] = report.batch_seed;
    j["batch_size"] = report.batch_size;
    j["iterations"] = report.iterations;
    std::vector<bool> conv(report.converged.begin(), report.converged.end());
    j["converged"] = conv;
    return j.dump(2) + "\n";
}

std::string cka_json(const CkaMatrix& grid) {
    nlohmann::json j;
    j["m"] = grid.m;
    j["noise"] = grid.noise_sigma;
    j["sample_seed"] = grid.sample_seed;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : grid.pairwise) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& v : row) {
            if (v) r.push_back(*v);
            else r.push_back(nullptr);  // undefined, never reported as 0
        }
        rows.push_back(std::move(r));
    }
    j["pairwise"] = std::move(rows);
    if (grid.mean_offdiag) j["mean_offdiag"] = *grid.mean_offdiag;
    else j["mean_offdiag"] = nullptr;
    return j.dump(2) + "\n";
}

std::string modeconn_json(const ModeConnectivityReport& report) {
    nlohmann::json j;
    j["t_values"] = report.t_values;
    j["curve_losses"] = report.curve_losses;
    j["d_values"] = report.d_values;
    j["mc"] = report.mc;
    j["t_star"] = report.t_star;
    j["epsilon"] = report.epsilon;
    j["classification"] = report.classification;
    return j.dump(2) + "\n";
}

std::string maxmc_json(const MaxMcReport& report) {
    nlohmann::json j;
    j["max_mc"] = report.max_mc;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : report.pairs) {
        nlohmann::json e;
        e["model_a"] = p.model_a;
        e["model_b"] = p.model_b;
        e["mc"] = p.mc;
        e["classification"] = p.whole_curve.classification;
        pairs.push_back(std::move(e));
    }
    j["pairs"] = std::move(pairs);
    return j.dump(2) + "\n";
}

std::string robustness_json(const std::vector<RobustnessRow>& rows, StressorKind stressor) {
    nlohmann::json j;
    j["stressor"] = stressor_name(stressor);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json e;
        e["bit_width"] = r.bits;
        e["variant"] = r.variant;
        e["stressor_param"] = r.stressor_param;
        e["mean_loss"] = r.mean_loss;
        e["std_loss"] = r.std_loss;
        e["n_seeds"] = r.n_seeds;
        out.push_back(std::move(e));
    }
    j["rows"] = std::move(out);
    return j.dump(2) + "\n";
}

void Manifest::write_artifact(const std::string& path, const std::string& bytes) {
    atomic_write_file(path, bytes);
    files_.emplace_back(path, sha256_hex(bytes));
}

void Manifest::write_manifest(const std::string& path) const {
    nlohmann::json j;
    j["command"] = command_;
    j["config_hash"] = config_hash_;
    nlohmann::json files = nlohmann::json::array();
    auto sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [p, h] : sorted) {
        nlohmann::json f;
        f["path"] = p;
        f["sha256"] = h;
        files.push_back(std::move(f));
    }
    j["files"] = std::move(files);
    atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace llab
