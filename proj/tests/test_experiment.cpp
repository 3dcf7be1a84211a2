#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "modectl/dynamics.hpp"
#include "modectl/experiment.hpp"

namespace {

using namespace modectl;
using nlohmann::json;
namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("modectl_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json minimal_document() {
    return json{{"task", {{"q0", {0.55, -1.2}}, {"h_star", {0.3, -1.25}}}}};
}

json tiny_document(const fs::path& out) {
    json doc = minimal_document();
    doc["net"] = {{"hidden", 8}, {"seed", 3}};
    doc["grid"] = {{"steps", 40}};
    doc["train"] = {{"epochs", 6}, {"checkpoint_every", 3}};
    doc["potential_grid"] = 4;
    doc["output_dir"] = out.string();
    return doc;
}

TEST(Config, DefaultsMatchTheMainExperiment) {
    const RunConfig c = parse_config(minimal_document());
    EXPECT_EQ(c.pendulum.m, 1.0);
    EXPECT_EQ(c.pendulum.g, 9.81);
    EXPECT_EQ(c.pendulum.k, 0.5);
    EXPECT_EQ(c.train.epochs, 500);
    EXPECT_EQ(c.train.learning_rate, 1e-3);
    EXPECT_EQ(c.train.hidden, 256);
    EXPECT_EQ(c.train.steps, 150);
    EXPECT_EQ(c.train.task.period, 1.5);
    EXPECT_EQ(c.train.weights.alpha_task, 10.0);
    EXPECT_EQ(c.train.weights.alpha_eff, 1e-4);
    EXPECT_EQ(c.train.weights.lambda1, 0.05);
    EXPECT_EQ(c.train.weights.alpha1, 5e-4);
    EXPECT_EQ(c.train.weights.lambda2, 0.95);
    EXPECT_EQ(c.gains.alpha_E, 1.0);
    EXPECT_EQ(c.gains.alpha_M, 10.0);
    EXPECT_EQ(c.gains.b, 0.0);
    EXPECT_EQ(c.train.task.q0, Vector2(0.55, -1.2));
    EXPECT_EQ(c.train.task.h_star, Vector2(0.3, -1.25));
}

TEST(Config, RoundTripsThroughJson) {
    json doc = minimal_document();
    doc["weights"] = {{"alpha_eff", 1e-3}};
    doc["gains"] = {{"b", 0.1}};
    doc["train"] = {{"learnable_period", true}};
    const RunConfig c = parse_config(doc);
    const RunConfig back = parse_config(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_EQ(back.train.weights.alpha_eff, 1e-3);
    EXPECT_EQ(back.gains.b, 0.1);
    EXPECT_TRUE(back.train.learnable_period);
}

TEST(Config, RejectsBadInput) {
    json unknown = minimal_document();
    unknown["weights"] = {{"alpha_typo", 1.0}};
    EXPECT_THROW(parse_config(unknown), ConfigError);

    json missing = minimal_document();
    missing["task"].erase("h_star");
    EXPECT_THROW(parse_config(missing), ConfigError);

    json wrong_type = minimal_document();
    wrong_type["train"] = {{"epochs", "many"}};
    EXPECT_THROW(parse_config(wrong_type), ConfigError);

    json odd_grid = minimal_document();
    odd_grid["grid"] = {{"steps", 151}};
    EXPECT_THROW(parse_config(odd_grid), ConfigError);

    json negative = minimal_document();
    negative["pendulum"] = {{"m", -1.0}};
    EXPECT_THROW(parse_config(negative), ConfigError);

    json short_vector = minimal_document();
    short_vector["task"]["q0"] = {0.1};
    EXPECT_THROW(parse_config(short_vector), ConfigError);
}

TEST(Config, FileErrorsNameThePath) {
    const auto dir = scratch_dir("config_files");
    try {
        load_config(dir / "nope.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("nope.json"), std::string::npos);
    }
    std::ofstream(dir / "broken.json") << "{ not json";
    EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
}

TEST(Config, SeedFromEnvironment) {
    RunConfig c = parse_config(minimal_document());
    ::setenv("MODECTL_SEED", "42", 1);
    apply_environment(c);
    EXPECT_EQ(c.train.seed, 42u);
    ::setenv("MODECTL_SEED", "x", 1);
    EXPECT_THROW(apply_environment(c), ConfigError);
    ::unsetenv("MODECTL_SEED");
}

TEST(Sweep, WithParameter) {
    const RunConfig base = parse_config(minimal_document());
    EXPECT_EQ(with_parameter(base, "alpha_eff", "0.01").train.weights.alpha_eff, 0.01);
    EXPECT_EQ(with_parameter(base, "T", "1.7").train.task.period, 1.7);
    EXPECT_EQ(with_parameter(base, "seed", "7").train.seed, 7u);
    EXPECT_EQ(with_parameter(base, "q0", "0.5,-1.0").train.task.q0, Vector2(0.5, -1.0));
    EXPECT_EQ(with_parameter(base, "h_star", "0.2,-1.3").train.task.h_star, Vector2(0.2, -1.3));
    EXPECT_THROW(with_parameter(base, "hidden", "3"), ConfigError);
    EXPECT_THROW(with_parameter(base, "alpha_eff", "abc"), ConfigError);
    EXPECT_THROW(with_parameter(base, "q0", "0.5"), ConfigError);
    EXPECT_THROW(with_parameter(base, "T", "-1"), ConfigError);
}

TEST(Manifest, ListsFilesAndItself) {
    const auto dir = scratch_dir("manifest");
    Manifest m(dir, "train");
    m.add_file("b.csv");
    m.add_file("a.csv");
    m.set("status", "ok");
    m.mark("done");
    const fs::path path = m.write();
    EXPECT_EQ(path, dir / "manifest.json");
    std::ifstream in(path);
    const json doc = json::parse(in);
    EXPECT_EQ(doc.at("command"), "train");
    EXPECT_EQ(doc.at("status"), "ok");
    EXPECT_TRUE(doc.contains("build"));
    EXPECT_EQ(doc.at("files"), (json{"a.csv", "b.csv", "manifest.json"}));
}

TEST(PotentialCsv, TwoByTwoGrid) {
    const auto dir = scratch_dir("potential_csv");
    const Pendulum P;
    const Net net = make_potential_net(4, 1);
    write_potential_csv(dir / "v.csv", P, net, 2);
    std::ifstream in(dir / "v.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "q1,q2,V_theta,V_gravity,V_spring,V_total");
    int rows = 0;
    while (std::getline(in, line)) {
        double q1, q2, vt, vg, vs, total;
        char c;
        std::istringstream row(line);
        row >> q1 >> c >> q2 >> c >> vt >> c >> vg >> c >> vs >> c >> total;
        EXPECT_NEAR(std::abs(q1), M_PI, 1e-12);
        EXPECT_NEAR(vt, value(net, Vector2(q1, q2)), 1e-12);
        EXPECT_NEAR(vg, dynamics::gravity_potential(P, Vector2(q1, q2)), 1e-12);
        EXPECT_NEAR(total, vt + vg + vs, 1e-12);
        ++rows;
    }
    EXPECT_EQ(rows, 4);
    EXPECT_THROW(write_potential_csv(dir / "w.csv", P, net, 1), std::invalid_argument);
}

TEST(RunTrain, WritesTheDocumentedArtifacts) {
    const auto dir = scratch_dir("run_train");
    const TrainOutcome out = run_train(parse_config(tiny_document(dir)));
    for (const char* name : {"potential_net.ckpt", "checkpoints/epoch_0003.ckpt", "checkpoints/epoch_0006.ckpt",
                             "training_log.csv", "trajectory.csv", "certification.json", "potential.csv",
                             "manifest.json"}) {
        EXPECT_TRUE(fs::exists(dir / name)) << name;
    }
    std::ifstream in(out.manifest);
    const json manifest = json::parse(in);
    EXPECT_EQ(manifest.at("status"), "ok");
    EXPECT_EQ(manifest.at("files").size(), 8u);
    EXPECT_EQ(manifest.at("period"), 1.5);

    const NetCheckpoint ckpt = load_checkpoint(out.checkpoint);
    EXPECT_EQ(ckpt.net.parameters(), out.result.net.parameters());
    EXPECT_EQ(ckpt.seed, 3u);
}

// An untrained tiny net does not produce an eigenmode, so stabilization
// must refuse it.
TEST(RunStabilize, RefusesUncertifiedReference) {
    const auto dir = scratch_dir("run_stabilize");
    const RunConfig config = parse_config(tiny_document(dir));
    const NetCheckpoint ckpt{make_potential_net(8, 3), 3, std::nullopt};
    EXPECT_THROW(run_stabilize(config, ckpt), CertificationFailure);
}

TEST(RunSweep, IndependentRunsAndRootManifest) {
    const auto dir = scratch_dir("run_sweep");
    const RunConfig base = parse_config(tiny_document(dir));
    const auto runs = run_sweep(base, "seed", {"1", "2"}, 2);
    ASSERT_EQ(runs.size(), 2u);
    std::set<std::string> dirs;
    for (const auto& run : runs) {
        EXPECT_EQ(run.status, "ok") << run.message;
        EXPECT_TRUE(run.result.has_value());
        EXPECT_TRUE(fs::exists(dir / run.directory / "manifest.json"));
        dirs.insert(run.directory.filename().string());
    }
    EXPECT_EQ(dirs, (std::set<std::string>{"seed=1", "seed=2"}));
    EXPECT_NE(runs[0].result->net.parameters(), runs[1].result->net.parameters());

    std::ifstream in(dir / "manifest.json");
    const json manifest = json::parse(in);
    EXPECT_EQ(manifest.at("runs").size(), 2u);
    EXPECT_GT(manifest.at("files").size(), 10u);
}

}  // namespace
