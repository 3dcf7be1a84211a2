// modectl: train, stabilize, sweep and export learned control potentials.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 numerical
// divergence, 3 certification failure or unusable checkpoint.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "modectl/experiment.hpp"

namespace {

using namespace modectl;

enum Exit { kOk = 0, kConfig = 1, kDiverged = 2, kCertification = 3 };

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    for (char c : text) {
        if (c == sep) {
            out.push_back(item);
            item.clear();
        } else if (c != ' ') {
            item += c;
        }
    }
    out.push_back(item);
    std::erase_if(out, [](const std::string& s) { return s.empty(); });
    return out;
}

RunConfig read_config(const std::string& path, const std::string& output) {
    RunConfig config = load_config(path);
    apply_environment(config);
    if (!output.empty()) config.output_dir = output;
    return config;
}

NetCheckpoint read_checkpoint(const std::string& path) {
    try {
        return load_checkpoint(path);
    } catch (const std::exception& e) {
        throw CertificationFailure(std::string("cannot load checkpoint: ") + e.what());
    }
}

int cmd_train(const std::string& config_path, const std::string& output, int epochs) {
    RunConfig config = read_config(config_path, output);
    if (epochs >= 0) config.train.epochs = epochs;
    const TrainOutcome out = run_train(config);
    const auto& r = out.result;
    const auto& c = r.certification;
    std::printf("loss %.6g  task error %.4g m  effort %.4g  T %.6g\n", r.final_loss.value, r.final_loss.task_error,
                r.final_loss.effort, r.period);
    std::printf("eigenmode %s (|p(T/2)| %.3g, closure %.3g, symmetry %.3g/%.3g, line %.3g)\n",
                c.is_eigenmode ? "yes" : "no", c.midpoint_momentum, c.closure_error, c.symmetry_q, c.symmetry_p,
                c.line_deviation);
    std::printf("wrote %s\n", out.manifest.string().c_str());
    return kOk;
}

int cmd_stabilize(const std::string& config_path, const std::string& checkpoint, const std::string& output,
                  const std::vector<double>& q0, const std::vector<double>& p0, double damping, double periods) {
    RunConfig config = read_config(config_path, output);
    if (!q0.empty()) config.stabilize.q0 = Vector2(q0[0], q0[1]);
    if (!p0.empty()) config.stabilize.p0 = Vector2(p0[0], p0[1]);
    if (damping >= 0) config.gains.b = damping;
    if (periods > 0) config.stabilize.periods = periods;
    const NetCheckpoint ckpt = read_checkpoint(checkpoint);
    const StabilizeOutcome out = run_stabilize(config, ckpt);
    const auto& first = out.closed_loop.metrics.front();
    const auto& last = out.closed_loop.metrics.back();
    std::printf("E_err %.4g -> %.4g  q_dist %.4g -> %.4g  p_dist %.4g -> %.4g\n", first.energy_error,
                last.energy_error, first.q_distance, last.q_distance, first.p_distance, last.p_distance);
    for (const auto& m : out.multipliers) {
        if (m.defined) {
            std::printf("multiplier[%d] %.4g\n", m.component, m.ratio);
        } else {
            std::printf("multiplier[%d] undefined\n", m.component);
        }
    }
    std::printf("wrote %s\n", out.manifest.string().c_str());
    return kOk;
}

int cmd_sweep(const std::string& config_path, const std::string& output, const std::string& param,
              const std::string& values, int jobs, int epochs) {
    RunConfig config = read_config(config_path, output);
    if (epochs >= 0) config.train.epochs = epochs;
    const bool vector_param = param == "q0" || param == "h_star";
    const auto list = split(values, vector_param ? ';' : ',');
    const auto runs = run_sweep(config, param, list, jobs);
    for (const auto& run : runs) {
        std::printf("%-24s %-8s", run.directory.string().c_str(), run.status.c_str());
        if (run.result) {
            std::printf(" eigenmode %s  effort %.4g  task error %.4g", run.result->certification.is_eigenmode ? "yes" : "no",
                        run.result->final_loss.effort, run.result->final_loss.task_error);
        }
        std::printf("\n");
    }
    return kOk;
}

int cmd_export(const std::string& checkpoint, const std::string& config_path, const std::string& output, int grid) {
    Pendulum params;
    if (!config_path.empty()) params = load_config(config_path).pendulum;
    NetCheckpoint ckpt;
    try {
        ckpt = load_checkpoint(checkpoint);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("cannot load checkpoint: ") + e.what());
    }
    if (grid < 2) throw ConfigError("--grid must be at least 2");
    write_potential_csv(output, params, ckpt.net, grid);
    std::printf("wrote %s\n", output.c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learn, certify and stabilize eigenmodes of a double pendulum with a neural control potential"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, output, param, values;
    int epochs = -1, jobs = 1, grid = 64;
    std::vector<double> q0, p0;
    double damping = -1, periods = -1;

    auto* train = app.add_subcommand("train", "Train a potential and write checkpoint, logs and certification");
    train->add_option("config", config_path, "JSON run configuration")->required();
    train->add_option("-o,--output", output, "Output directory (overrides the config)");
    train->add_option("--epochs", epochs, "Number of epochs (overrides the config)")->check(CLI::NonNegativeNumber);

    auto* stabilize = app.add_subcommand("stabilize", "Stabilize the learned eigenmode and evaluate cycle multipliers");
    stabilize->add_option("config", config_path, "JSON run configuration")->required();
    stabilize->add_option("checkpoint", checkpoint, "Trained potential checkpoint")->required();
    stabilize->add_option("-o,--output", output, "Output directory (overrides the config)");
    stabilize->add_option("--q0", q0, "Initial configuration a,b")->delimiter(',')->expected(2);
    stabilize->add_option("--p0", p0, "Initial momentum c,d")->delimiter(',')->expected(2);
    stabilize->add_option("--damping", damping, "Damping injection b")->check(CLI::NonNegativeNumber);
    stabilize->add_option("--periods", periods, "Simulated periods")->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("sweep", "Independent training runs over one parameter");
    sweep->add_option("config", config_path, "JSON run configuration")->required();
    sweep->add_option("-o,--output", output, "Output directory (overrides the config)");
    sweep->add_option("--param", param, "alpha_eff, T, q0, h_star or seed")
        ->required()
        ->check(CLI::IsMember(sweep_parameters()));
    sweep->add_option("--values", values, "Comma separated values; vectors as a,b;c,d")->required();
    sweep->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    sweep->add_option("--epochs", epochs, "Number of epochs (overrides the config)")->check(CLI::NonNegativeNumber);

    auto* exporter = app.add_subcommand("export-potential", "Write V_theta and the open-loop potentials on a grid");
    exporter->add_option("checkpoint", checkpoint, "Trained potential checkpoint")->required();
    exporter->add_option("--grid", grid, "Points per axis over [-pi, pi]");
    exporter->add_option("--config", config_path, "Configuration providing the pendulum parameters");
    exporter->add_option("-o,--output", output, "Output CSV")->default_str("potential.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfig;
    }

    try {
        if (*train) return cmd_train(config_path, output, epochs);
        if (*stabilize) return cmd_stabilize(config_path, checkpoint, output, q0, p0, damping, periods);
        if (*sweep) return cmd_sweep(config_path, output, param, values, jobs, epochs);
        if (*exporter) return cmd_export(checkpoint, config_path, output.empty() ? "potential.csv" : output, grid);
    } catch (const ConfigError& e) {
        std::cerr << "modectl: " << e.what() << '\n';
        return kConfig;
    } catch (const DivergedTraining& e) {
        std::cerr << "modectl: " << e.what() << '\n';
        return kDiverged;
    } catch (const NonFiniteState& e) {
        std::cerr << "modectl: " << e.what() << '\n';
        return kDiverged;
    } catch (const CertificationFailure& e) {
        std::cerr << "modectl: " << e.what() << '\n';
        return kCertification;
    } catch (const std::exception& e) {
        std::cerr << "modectl: " << e.what() << '\n';
        return kConfig;
    }
    return kOk;
}
