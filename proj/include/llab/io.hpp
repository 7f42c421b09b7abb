#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llab/cka.hpp"
#include "llab/corruption.hpp"
#include "llab/hessian.hpp"
#include "llab/landscape.hpp"
#include "llab/mode_connectivity.hpp"
#include "llab/trainer.hpp"

namespace llab {

std::string sha256_hex(const std::string& bytes);

// write-temp-rename so partially written artifacts never land under their
// final name
void atomic_write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

// deterministic float formatting shared by every CSV/JSON emitter
std::string format_double(double v);

std::string history_csv(const std::vector<EpochStats>& history);
std::string landscape_csv(const LandscapeGrid& grid);
std::string curve_csv(const ModeConnectivityReport& report);  // t,loss rows
std::string robustness_csv(const std::vector<RobustnessRow>& rows);

std::string hessian_json(const HessianReport& report);
std::string cka_json(const CkaMatrix& grid);
std::string modeconn_json(const ModeConnectivityReport& report);
std::string maxmc_json(const MaxMcReport& report);
std::string robustness_json(const std::vector<RobustnessRow>& rows, StressorKind stressor);

// Manifest accumulated by a CLI command; every artifact is listed with the
// sha256 of its bytes.
class Manifest {
public:
    Manifest(std::string command, std::string config_hash)
        : command_(std::move(command)), config_hash_(std::move(config_hash)) {}

    // writes the artifact atomically and records (path, sha256)
    void write_artifact(const std::string& path, const std::string& bytes);
    void write_manifest(const std::string& path) const;
    std::size_t size() const { return files_.size(); }

private:
    std::string command_;
    std::string config_hash_;
    std::vector<std::pair<std::string, std::string>> files_;  // path, sha256
};

}  // namespace llab
