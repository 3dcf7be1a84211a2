#include "modectl/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace modectl {

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (!(learning_rate > 0) || !(period_learning_rate > 0)) {
        throw std::invalid_argument("learning rates must be positive");
    }
    if (hidden < 1) throw std::invalid_argument("hidden width must be at least 1");
    if (!(task.period > 0)) throw NonPositivePeriod(task.period);
    weights.validate();
    TimeGrid{task.period, steps}.validate();
}

LossAndGradient evaluate_loss(const Pendulum& params, const Net& net, const TrainConfig& config, double period) {
    LossAndGradient out;
    out.trajectory = config.learnable_period ? rollout_scaled(params, net, config.task.q0, period, config.steps)
                                             : rollout(params, net, config.task.q0, TimeGrid{period, config.steps});
    out.loss = loss_total(params, out.trajectory, config.task, config.weights);
    out.sensitivity = backprop_trajectory(params, net, out.trajectory, out.loss.cotangents);
    return out;
}

TrainResult train(const Pendulum& params, const TrainConfig& config) {
    config.validate();
    Net net = config.initial_net ? *config.initial_net : make_potential_net(config.hidden, config.seed);
    double period = config.task.period;

    Adam<double> adam(net.parameter_count(), config.beta1, config.beta2, config.epsilon);
    Adam<double> period_adam(1, config.beta1, config.beta2, config.epsilon);
    Net::Vector theta = net.parameters();
    Eigen::VectorXd log_period = Eigen::VectorXd::Constant(1, std::log(period));

    TrainResult result;
    result.records.reserve(static_cast<std::size_t>(config.epochs));

    // `net` still holds the parameters after epoch - 1 updates.
    auto diverge = [&](int epoch, const Net& last_good, double last_period) {
        if (config.on_checkpoint) config.on_checkpoint(epoch - 1, last_good, last_period);
        throw DivergedTraining(epoch);
    };

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        LossAndGradient eval;
        try {
            eval = evaluate_loss(params, net, config, period);
        } catch (const NonFiniteState&) {
            diverge(epoch, net, period);
        }
        if (!std::isfinite(eval.loss.value) || !eval.sensitivity.d_theta.allFinite()) {
            diverge(epoch, net, period);
        }
        result.records.push_back({epoch, eval.loss.value, eval.loss.task, eval.loss.eigen, eval.loss.effort,
                                  eval.loss.task_error, period});

        adam.step(theta, eval.sensitivity.d_theta, config.learning_rate);
        net.set_parameters(theta);
        if (config.learnable_period) {
            // dL/dlogT = T dL/dT
            const Eigen::VectorXd g = Eigen::VectorXd::Constant(1, period * *eval.sensitivity.d_period);
            period_adam.step(log_period, g, config.period_learning_rate);
            period = std::exp(log_period(0));
        }

        if (config.on_checkpoint && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
            config.on_checkpoint(epoch, net, period);
        }
    }

    try {
        result.final_trajectory = config.learnable_period
                                      ? rollout_scaled(params, net, config.task.q0, period, config.steps)
                                      : rollout(params, net, config.task.q0, TimeGrid{period, config.steps});
    } catch (const NonFiniteState&) {
        diverge(config.epochs + 1, net, period);
    }
    result.final_loss = loss_total(params, result.final_trajectory, config.task, config.weights);
    if (!std::isfinite(result.final_loss.value)) diverge(config.epochs + 1, net, period);
    result.certification = certify_eigenmode(result.final_trajectory, config.tolerances);
    result.net = std::move(net);
    result.period = period;
    return result;
}

void write_training_log(const std::filesystem::path& path, const std::vector<TrainRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,loss,l_task,l_eigen,effort,task_err,T\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : records) {
        out << r.epoch << ',' << r.loss << ',' << r.l_task << ',' << r.l_eigen << ',' << r.effort << ','
            << r.task_error << ',' << r.period << '\n';
    }
}

}  // namespace modectl
