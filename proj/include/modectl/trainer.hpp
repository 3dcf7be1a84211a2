#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "modectl/adam.hpp"
#include "modectl/integrator.hpp"
#include "modectl/objectives.hpp"
#include "modectl/potential_net.hpp"

namespace modectl {

struct TrainConfig {
    int epochs = 500;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    int hidden = 256;
    /// Optimize log T jointly with theta, with its own Adam learning rate.
    bool learnable_period = false;
    double period_learning_rate = 1e-3;
    LossWeights weights;
    TaskSpec task;
    /// RK4 steps per period (even).
    int steps = 150;
    CertificationTolerances tolerances;
    /// Invoke on_checkpoint every this many epochs; 0 disables. The callback
    /// receives the number of completed updates.
    int checkpoint_every = 50;
    std::function<void(int epoch, const Net& net, double period)> on_checkpoint;
    /// Start from this network instead of a fresh seeded one.
    std::optional<Net> initial_net;

    void validate() const;
};

struct TrainRecord {
    int epoch = 0;
    double loss = 0.0;
    double l_task = 0.0;
    double l_eigen = 0.0;
    double effort = 0.0;
    double task_error = 0.0;
    double period = 0.0;
};

struct TrainResult {
    Net net;
    double period = 0.0;
    std::vector<TrainRecord> records;
    Trajectory final_trajectory;
    TotalLoss final_loss;
    CertificationReport certification;
};

/// Loss value and its gradient for one (theta, T) point.
struct LossAndGradient {
    Trajectory trajectory;
    TotalLoss loss;
    SensitivityResult sensitivity;
};

LossAndGradient evaluate_loss(const Pendulum& params, const Net& net, const TrainConfig& config, double period);

/// Adam on L = L_task + beta L_eigen, one full rollout per epoch. Records
/// hold the loss of the parameters in effect at the start of each epoch.
/// Throws DivergedTraining on a non-finite loss after handing the last
/// finite parameters to on_checkpoint.
TrainResult train(const Pendulum& params, const TrainConfig& config);

/// CSV with header epoch,loss,l_task,l_eigen,effort,task_err,T.
void write_training_log(const std::filesystem::path& path, const std::vector<TrainRecord>& records);

}  // namespace modectl
