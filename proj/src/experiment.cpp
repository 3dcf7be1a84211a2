#include "modectl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "modectl/dynamics.hpp"

#ifndef MODECTL_BUILD_ID
#define MODECTL_BUILD_ID "unknown"
#endif

namespace modectl {

using nlohmann::json;

namespace {

// Strict reader for one JSON object: typed getters and a final check that
// every key was consumed.
class Section {
public:
    Section(const json& node, std::string name) : node_(node), name_(std::move(name)) {
        if (!node_.is_object()) throw ConfigError(name_ + ": expected an object");
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    void number(const std::string& key, double& out) {
        if (!take(key)) return;
        const json& v = node_.at(key);
        if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ConfigError(path(key) + ": must be finite");
    }

    void integer(const std::string& key, int& out) {
        if (!take(key)) return;
        const json& v = node_.at(key);
        if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
        out = v.get<int>();
    }

    void unsigned_integer(const std::string& key, std::uint64_t& out) {
        if (!take(key)) return;
        const json& v = node_.at(key);
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            throw ConfigError(path(key) + ": expected a non-negative integer");
        }
        out = v.get<std::uint64_t>();
    }

    void boolean(const std::string& key, bool& out) {
        if (!take(key)) return;
        const json& v = node_.at(key);
        if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
        out = v.get<bool>();
    }

    void string(const std::string& key, std::string& out) {
        if (!take(key)) return;
        const json& v = node_.at(key);
        if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
        out = v.get<std::string>();
    }

    void vector2(const std::string& key, Vector2& out) {
        if (!take(key)) return;
        const json& v = node_.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw ConfigError(path(key) + ": expected an array of two numbers");
        }
        out = Vector2(v[0].get<double>(), v[1].get<double>());
        if (!out.allFinite()) throw ConfigError(path(key) + ": must be finite");
    }

    Section child(const std::string& key) {
        take(key);
        return Section(node_.at(key), path(key));
    }

    void finish() const {
        for (const auto& item : node_.items()) {
            if (!seen_.count(item.key())) throw ConfigError("unknown key " + path(item.key()));
        }
    }

private:
    bool take(const std::string& key) {
        seen_.insert(key);
        return node_.contains(key);
    }
    std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

    const json& node_;
    std::string name_;
    std::set<std::string> seen_;
};

json to_json(const Vector2& v) { return json::array({v(0), v(1)}); }

template <typename F>
void rethrow_as_config_error(F&& check) {
    try {
        check();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

void validate(const RunConfig& c) {
    rethrow_as_config_error([&] {
        c.pendulum.validate();
        c.train.validate();
        c.gains.validate();
    });
    const auto& s = c.stabilize;
    if (s.reference_samples < 4 || s.reference_samples % 2 != 0) {
        throw ConfigError("stabilize.reference_samples must be an even number >= 4");
    }
    if (!(s.dt > 0) || !(s.periods > 0) || !(s.orbit_periods >= 1) || !(s.fd_step > 0)) {
        throw ConfigError("stabilize: dt, periods and fd_step must be positive, orbit_periods >= 1");
    }
    if (c.potential_grid < 2) throw ConfigError("potential_grid must be at least 2");
    if (c.train.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

void write_json(const std::filesystem::path& path, const json& value) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << value.dump(2) << '\n';
}

}  // namespace

RunConfig parse_config(const json& document) {
    RunConfig c;
    Section root(document, "");

    if (root.has("pendulum")) {
        Section s = root.child("pendulum");
        s.number("m", c.pendulum.m);
        s.number("d", c.pendulum.d);
        s.number("g", c.pendulum.g);
        s.number("k", c.pendulum.k);
        s.number("b", c.pendulum.b);
        s.finish();
    }
    if (root.has("net")) {
        Section s = root.child("net");
        s.integer("hidden", c.train.hidden);
        s.unsigned_integer("seed", c.train.seed);
        s.finish();
    }
    if (root.has("grid")) {
        Section s = root.child("grid");
        s.number("T", c.train.task.period);
        s.integer("steps", c.train.steps);
        s.finish();
    }
    if (root.has("weights")) {
        Section s = root.child("weights");
        auto& w = c.train.weights;
        s.number("alpha_task", w.alpha_task);
        s.number("alpha_eff", w.alpha_eff);
        s.number("lambda1", w.lambda1);
        s.number("alpha1", w.alpha1);
        s.number("lambda2", w.lambda2);
        s.number("beta", w.beta);
        s.finish();
    }
    if (!root.has("task")) throw ConfigError("task: missing; task.q0 and task.h_star are required");
    {
        Section s = root.child("task");
        if (!s.has("q0") || !s.has("h_star")) throw ConfigError("task: q0 and h_star are required");
        s.vector2("q0", c.train.task.q0);
        s.vector2("h_star", c.train.task.h_star);
        s.finish();
    }
    if (root.has("train")) {
        Section s = root.child("train");
        auto& t = c.train;
        s.integer("epochs", t.epochs);
        s.number("learning_rate", t.learning_rate);
        s.number("beta1", t.beta1);
        s.number("beta2", t.beta2);
        s.number("epsilon", t.epsilon);
        s.boolean("learnable_period", t.learnable_period);
        s.number("period_learning_rate", t.period_learning_rate);
        s.integer("checkpoint_every", t.checkpoint_every);
        s.finish();
    }
    if (root.has("certify")) {
        Section s = root.child("certify");
        auto& tol = c.train.tolerances;
        s.number("tol_p", tol.tol_p);
        s.number("tol_q", tol.tol_q);
        s.number("tol_line", tol.tol_line);
        s.finish();
    }
    if (root.has("gains")) {
        Section s = root.child("gains");
        s.number("alpha_E", c.gains.alpha_E);
        s.number("alpha_M", c.gains.alpha_M);
        s.number("b", c.gains.b);
        s.finish();
    }
    if (root.has("stabilize")) {
        Section s = root.child("stabilize");
        auto& st = c.stabilize;
        s.integer("reference_samples", st.reference_samples);
        s.number("dt", st.dt);
        s.vector2("q0", st.q0);
        s.vector2("p0", st.p0);
        s.number("periods", st.periods);
        s.number("orbit_periods", st.orbit_periods);
        s.number("fd_step", st.fd_step);
        s.finish();
    }
    root.integer("potential_grid", c.potential_grid);
    std::string output_dir = c.output_dir.string();
    root.string("output_dir", output_dir);
    c.output_dir = output_dir;
    root.finish();

    validate(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json document;
    try {
        document = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    try {
        return parse_config(document);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

json config_to_json(const RunConfig& c) {
    const auto& t = c.train;
    const auto& w = t.weights;
    const auto& s = c.stabilize;
    return {
        {"pendulum", {{"m", c.pendulum.m}, {"d", c.pendulum.d}, {"g", c.pendulum.g}, {"k", c.pendulum.k},
                      {"b", c.pendulum.b}}},
        {"net", {{"hidden", t.hidden}, {"seed", t.seed}}},
        {"grid", {{"T", t.task.period}, {"steps", t.steps}}},
        {"weights", {{"alpha_task", w.alpha_task}, {"alpha_eff", w.alpha_eff}, {"lambda1", w.lambda1},
                     {"alpha1", w.alpha1}, {"lambda2", w.lambda2}, {"beta", w.beta}}},
        {"task", {{"q0", to_json(t.task.q0)}, {"h_star", to_json(t.task.h_star)}}},
        {"train", {{"epochs", t.epochs}, {"learning_rate", t.learning_rate}, {"beta1", t.beta1},
                   {"beta2", t.beta2}, {"epsilon", t.epsilon}, {"learnable_period", t.learnable_period},
                   {"period_learning_rate", t.period_learning_rate}, {"checkpoint_every", t.checkpoint_every}}},
        {"certify", {{"tol_p", t.tolerances.tol_p}, {"tol_q", t.tolerances.tol_q},
                     {"tol_line", t.tolerances.tol_line}}},
        {"gains", {{"alpha_E", c.gains.alpha_E}, {"alpha_M", c.gains.alpha_M}, {"b", c.gains.b}}},
        {"stabilize", {{"reference_samples", s.reference_samples}, {"dt", s.dt}, {"q0", to_json(s.q0)},
                       {"p0", to_json(s.p0)}, {"periods", s.periods}, {"orbit_periods", s.orbit_periods},
                       {"fd_step", s.fd_step}}},
        {"potential_grid", c.potential_grid},
        {"output_dir", c.output_dir.string()},
    };
}

void apply_environment(RunConfig& config) {
    const char* seed = std::getenv("MODECTL_SEED");
    if (!seed || !*seed) return;
    try {
        std::size_t used = 0;
        const std::string text(seed);
        if (text.front() == '-') throw std::invalid_argument("negative");
        const unsigned long long value = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        config.train.seed = value;
    } catch (const std::exception&) {
        throw ConfigError(std::string("MODECTL_SEED is not a non-negative integer: ") + seed);
    }
}

Manifest::Manifest(std::filesystem::path root, std::string command)
    : root_(std::move(root)), start_(std::chrono::steady_clock::now()) {
    body_["command"] = std::move(command);
    body_["build"] = build_id();
    body_["timings"] = json::object();
}

void Manifest::add_file(const std::filesystem::path& relative) {
    const std::string name = relative.generic_string();
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
}

void Manifest::set(const std::string& key, json value) { body_[key] = std::move(value); }

void Manifest::mark(const std::string& name) {
    body_["timings"][name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

std::filesystem::path Manifest::write() {
    add_file("manifest.json");
    json body = body_;
    std::vector<std::string> sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    body["files"] = sorted;
    const auto path = root_ / "manifest.json";
    write_json(path, body);
    return path;
}

std::string build_id() { return MODECTL_BUILD_ID; }

json certification_to_json(const CertificationReport& r) {
    return {{"is_eigenmode", r.is_eigenmode},
            {"periodic", r.periodic},
            {"symmetric", r.symmetric},
            {"line_shaped", r.line_shaped},
            {"midpoint_momentum", r.midpoint_momentum},
            {"closure_error", r.closure_error},
            {"symmetry_q", r.symmetry_q},
            {"symmetry_p", r.symmetry_p},
            {"line_deviation", r.line_deviation}};
}

json multipliers_to_json(const std::vector<CycleMultiplier>& multipliers) {
    json out = json::array();
    for (const auto& m : multipliers) {
        out.push_back({{"component", m.component},
                       {"numerator", m.numerator},
                       {"denominator", m.denominator},
                       {"ratio", m.defined ? json(m.ratio) : json(nullptr)},
                       {"defined", m.defined}});
    }
    return out;
}

void write_potential_csv(const std::filesystem::path& path, const Pendulum& params, const Net& net, int n) {
    if (n < 2) throw std::invalid_argument("potential grid needs n >= 2");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "q1,q2,V_theta,V_gravity,V_spring,V_total\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    const double pi = std::numbers::pi;
    const double step = 2 * pi / (n - 1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const Vector2 q(-pi + i * step, -pi + j * step);
            const double vt = value(net, q);
            const double vg = dynamics::gravity_potential(params, q);
            const double vs = dynamics::spring_potential(params, q);
            out << q(0) << ',' << q(1) << ',' << vt << ',' << vg << ',' << vs << ',' << vt + vg + vs << '\n';
        }
    }
}

TrainOutcome run_train(const RunConfig& config) {
    validate(config);
    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir / "checkpoints");

    Manifest manifest(dir, "train");
    manifest.set("config", config_to_json(config));

    TrainConfig tc = config.train;
    tc.on_checkpoint = [&](int epoch, const Net& net, double period) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
        const auto relative = std::filesystem::path("checkpoints") / name;
        save_checkpoint(dir / relative, {net, config.train.seed, period});
        manifest.add_file(relative);
    };

    TrainOutcome outcome;
    try {
        outcome.result = train(config.pendulum, tc);
    } catch (const DivergedTraining& e) {
        manifest.set("status", "diverged");
        manifest.set("diverged_epoch", e.epoch);
        manifest.mark("total");
        manifest.write();
        throw;
    }
    manifest.mark("train");
    const TrainResult& r = outcome.result;

    outcome.checkpoint = dir / "potential_net.ckpt";
    save_checkpoint(outcome.checkpoint, {r.net, config.train.seed, r.period});
    manifest.add_file("potential_net.ckpt");

    write_training_log(dir / "training_log.csv", r.records);
    manifest.add_file("training_log.csv");
    write_trajectory_csv(dir / "trajectory.csv", r.final_trajectory);
    manifest.add_file("trajectory.csv");

    json cert = certification_to_json(r.certification);
    cert["period"] = r.period;
    cert["loss"] = r.final_loss.value;
    cert["l_task"] = r.final_loss.task;
    cert["l_eigen"] = r.final_loss.eigen;
    cert["effort"] = r.final_loss.effort;
    cert["task_error"] = r.final_loss.task_error;
    write_json(dir / "certification.json", cert);
    manifest.add_file("certification.json");

    write_potential_csv(dir / "potential.csv", config.pendulum, r.net, config.potential_grid);
    manifest.add_file("potential.csv");

    manifest.set("status", "ok");
    manifest.set("period", r.period);
    manifest.set("certified", r.certification.is_eigenmode);
    manifest.mark("total");
    outcome.manifest = manifest.write();
    return outcome;
}

StabilizeOutcome run_stabilize(const RunConfig& config, const NetCheckpoint& checkpoint) {
    validate(config);
    const auto& s = config.stabilize;
    const Pendulum& params = config.pendulum;
    const Net& net = checkpoint.net;
    const Vector2& q0 = config.train.task.q0;
    const double period = checkpoint.period.value_or(config.train.task.period);

    StabilizeOutcome out;
    Trajectory traj;
    try {
        traj = rollout(params, net, q0, TimeGrid{period, config.train.steps});
    } catch (const NonFiniteState& e) {
        throw CertificationFailure(std::string("reference rollout failed: ") + e.what());
    }
    out.reference = certify_eigenmode(traj, config.train.tolerances);
    if (!out.reference.is_eigenmode) {
        std::ostringstream msg;
        msg << "checkpoint rollout is not a certified eigenmode (|p(T/2)| = " << out.reference.midpoint_momentum
            << ", closure = " << out.reference.closure_error << ", symmetry = " << out.reference.symmetry_q << "/"
            << out.reference.symmetry_p << ", line = " << out.reference.line_deviation << ")";
        throw CertificationFailure(msg.str());
    }

    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir);
    Manifest manifest(dir, "stabilize");
    manifest.set("config", config_to_json(config));
    manifest.set("period", period);

    out.mode = make_reference_mode(params, net, q0, period, s.reference_samples);
    out.closed_loop = simulate_closed_loop(params, net, out.mode, PhaseState{s.q0, s.p0}, config.gains, s.periods, s.dt);
    manifest.mark("simulate");
    write_metrics_csv(dir / "metrics.csv", out.closed_loop);
    manifest.add_file("metrics.csv");

    out.orbit_point = converged_orbit_state(params, net, out.mode, config.gains, 0.0, s.orbit_periods, s.dt);
    out.multipliers = cycle_multipliers(params, net, out.mode, config.gains, out.orbit_point, {s.fd_step, s.dt});
    manifest.mark("multipliers");

    const auto& first = out.closed_loop.metrics.front();
    const auto& last = out.closed_loop.metrics.back();
    json report = {
        {"orbit_point", {{"q", to_json(out.orbit_point.q)}, {"p", to_json(out.orbit_point.p)}}},
        {"fd_step", s.fd_step},
        {"multipliers", multipliers_to_json(out.multipliers)},
        {"reference", certification_to_json(out.reference)},
        {"energy_level", out.mode.energy},
        {"initial", {{"E_err", first.energy_error}, {"q_dist", first.q_distance}, {"p_dist", first.p_distance}}},
        {"final", {{"E_err", last.energy_error}, {"q_dist", last.q_distance}, {"p_dist", last.p_distance}}},
    };
    write_json(dir / "multipliers.json", report);
    manifest.add_file("multipliers.json");
    manifest.mark("total");
    out.manifest = manifest.write();
    return out;
}

const std::vector<std::string>& sweep_parameters() {
    static const std::vector<std::string> names{"alpha_eff", "T", "q0", "h_star", "seed"};
    return names;
}

namespace {

double parse_number(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("bad value '" + text + "' for " + what);
}

Vector2 parse_pair(const std::string& text, const std::string& what) {
    const auto comma = text.find(',');
    if (comma == std::string::npos || text.find(',', comma + 1) != std::string::npos) {
        throw ConfigError("bad value '" + text + "' for " + what + ": expected a,b");
    }
    return {parse_number(text.substr(0, comma), what), parse_number(text.substr(comma + 1), what)};
}

std::string directory_name(const std::string& name, const std::string& value) {
    std::string v = value;
    std::replace(v.begin(), v.end(), ',', '_');
    return name + "=" + v;
}

}  // namespace

RunConfig with_parameter(const RunConfig& base, const std::string& name, const std::string& value) {
    RunConfig c = base;
    if (name == "alpha_eff") {
        c.train.weights.alpha_eff = parse_number(value, name);
    } else if (name == "T") {
        c.train.task.period = parse_number(value, name);
    } else if (name == "q0") {
        c.train.task.q0 = parse_pair(value, name);
    } else if (name == "h_star") {
        c.train.task.h_star = parse_pair(value, name);
    } else if (name == "seed") {
        const double v = parse_number(value, name);
        if (v < 0 || v != std::floor(v)) throw ConfigError("seed must be a non-negative integer");
        c.train.seed = static_cast<std::uint64_t>(v);
    } else {
        throw ConfigError("unsupported sweep parameter '" + name + "'");
    }
    validate(c);
    return c;
}

std::vector<SweepRun> run_sweep(const RunConfig& base, const std::string& name, const std::vector<std::string>& values,
                                int jobs) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    std::vector<RunConfig> configs;
    std::vector<SweepRun> runs(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        configs.push_back(with_parameter(base, name, values[i]));
        runs[i].value = values[i];
        runs[i].directory = directory_name(name, values[i]);
        configs.back().output_dir = base.output_dir / runs[i].directory;
    }

    Manifest manifest(base.output_dir, "sweep");
    manifest.set("config", config_to_json(base));
    manifest.set("parameter", name);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            SweepRun& run = runs[i];
            try {
                run.result = run_train(configs[i]).result;
                run.status = "ok";
            } catch (const DivergedTraining& e) {
                run.status = "diverged";
                run.message = e.what();
            } catch (const std::exception& e) {
                run.status = "error";
                run.message = e.what();
            }
        }
    };
    std::filesystem::create_directories(base.output_dir);
    const int threads = std::min<int>(jobs, static_cast<int>(runs.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    json listing = json::array();
    for (const auto& run : runs) {
        json entry = {{"value", run.value}, {"directory", run.directory.generic_string()}, {"status", run.status}};
        if (!run.message.empty()) entry["message"] = run.message;
        if (run.result) {
            entry["certified"] = run.result->certification.is_eigenmode;
            entry["effort"] = run.result->final_loss.effort;
            entry["task_error"] = run.result->final_loss.task_error;
            entry["period"] = run.result->period;
        }
        listing.push_back(entry);

        const auto sub = base.output_dir / run.directory / "manifest.json";
        if (std::ifstream in(sub); in) {
            try {
                const json sub_manifest = json::parse(in);
                for (const auto& f : sub_manifest.at("files")) {
                    manifest.add_file(run.directory / f.get<std::string>());
                }
            } catch (const json::exception&) {
            }
        }
    }
    manifest.set("runs", listing);
    manifest.mark("total");
    manifest.write();
    return runs;
}

}  // namespace modectl
