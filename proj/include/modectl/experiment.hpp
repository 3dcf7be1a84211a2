#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modectl/stabilizer.hpp"
#include "modectl/trainer.hpp"

namespace modectl {

struct StabilizeSettings {
    int reference_samples = 1000;
    double dt = 1e-3;
    Vector2 q0 = Vector2(0.2, 0.2);
    Vector2 p0 = Vector2(5.0, 5.0);
    double periods = 3.0;
    /// Periods simulated before sampling the orbit point for the multipliers.
    double orbit_periods = 10.0;
    double fd_step = 1e-5;
};

/// Everything a command needs. Defaults reproduce the main experiment; the
/// task's q0 and h_star have no default and must be given.
struct RunConfig {
    Pendulum pendulum;
    TrainConfig train;
    ControllerGains gains;
    StabilizeSettings stabilize;
    int potential_grid = 64;
    std::filesystem::path output_dir = "run";
};

/// Parses a JSON document. Unknown keys, wrong types and invalid values throw
/// ConfigError.
RunConfig parse_config(const nlohmann::json& document);
/// Reads and parses a file; error messages carry the path.
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& config);
/// Applies MODECTL_SEED if set.
void apply_environment(RunConfig& config);

/// Files written by a command plus metadata, serialized as manifest.json.
class Manifest {
public:
    Manifest(std::filesystem::path root, std::string command);

    /// Records a file by its path relative to the root.
    void add_file(const std::filesystem::path& relative);
    void set(const std::string& key, nlohmann::json value);
    /// Wall-clock seconds since construction under `name`.
    void mark(const std::string& name);
    /// Writes manifest.json (listing itself) and returns its path.
    std::filesystem::path write();

    const std::filesystem::path& root() const { return root_; }
    const std::vector<std::string>& files() const { return files_; }

private:
    std::filesystem::path root_;
    nlohmann::json body_;
    std::vector<std::string> files_;
    std::chrono::steady_clock::time_point start_;
};

std::string build_id();

nlohmann::json certification_to_json(const CertificationReport& report);
nlohmann::json multipliers_to_json(const std::vector<CycleMultiplier>& multipliers);

/// CSV with header q1,q2,V_theta,V_gravity,V_spring,V_total on an n x n grid
/// spanning [-pi, pi]^2, q1 varying slowest.
void write_potential_csv(const std::filesystem::path& path, const Pendulum& params, const Net& net, int n);

struct TrainOutcome {
    TrainResult result;
    std::filesystem::path checkpoint;
    std::filesystem::path manifest;
};

/// Trains and writes potential_net.ckpt, checkpoints/epoch_XXXX.ckpt,
/// training_log.csv, trajectory.csv, certification.json, potential.csv and
/// manifest.json under config.output_dir. On divergence the last finite
/// parameters and the manifest are still written before DivergedTraining
/// propagates.
TrainOutcome run_train(const RunConfig& config);

struct CertificationFailure : std::runtime_error {
    explicit CertificationFailure(const std::string& what) : std::runtime_error(what) {}
};

struct StabilizeOutcome {
    ReferenceMode mode;
    CertificationReport reference;
    ClosedLoopResult closed_loop;
    PhaseState orbit_point;
    std::vector<CycleMultiplier> multipliers;
    std::filesystem::path manifest;
};

/// Builds the reference from the checkpoint's autonomous rollout, simulates
/// the stabilized system and evaluates the cycle multipliers. Writes
/// metrics.csv, multipliers.json and manifest.json. Throws
/// CertificationFailure if the rollout is not an eigenmode.
StabilizeOutcome run_stabilize(const RunConfig& config, const NetCheckpoint& checkpoint);

/// Parameters accepted by run_sweep.
const std::vector<std::string>& sweep_parameters();

/// Applies one textual value ("0.001", or "0.5,-1.2" for vectors) to a copy
/// of the configuration. Throws ConfigError.
RunConfig with_parameter(const RunConfig& base, const std::string& name, const std::string& value);

struct SweepRun {
    std::string value;
    std::filesystem::path directory;  ///< relative to output_dir
    std::string status;  ///< "ok", "diverged" or "error"
    std::string message;
    std::optional<TrainResult> result;
};

/// Independent train runs under output_dir/<name>=<value>, at most `jobs` at
/// a time, plus a manifest with per-run status. Per-run failures do not stop
/// the others.
std::vector<SweepRun> run_sweep(const RunConfig& base, const std::string& name, const std::vector<std::string>& values,
                                int jobs = 1);

}  // namespace modectl
