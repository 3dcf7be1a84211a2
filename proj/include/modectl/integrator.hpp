#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "modectl/potential_net.hpp"
#include "modectl/types.hpp"

namespace modectl {

/// Uniform grid t_i = i * T / N, i = 0..N. N must be even so that T/2 is
/// node N/2.
struct TimeGrid {
    double period = 1.5;
    int steps = 150;

    double dt() const { return period / steps; }
    double time(int i) const { return i * dt(); }
    int midpoint() const { return steps / 2; }
    void validate() const;
};

struct Trajectory {
    TimeGrid grid;
    std::vector<PhaseState> states;
    /// grad_q V_theta(q_i); the applied force is its negative.
    std::vector<Vector2> controls;
    /// H + V_theta at each node.
    std::vector<double> energies;
    /// Set by rollout_scaled: the period is a differentiable input.
    bool learnable_period = false;

    std::size_t size() const { return states.size(); }
};

/// Per-node cotangents dL/dx_i and dL/du_i, plus the explicit partial dL/dT
/// of the loss at fixed samples (e.g. from the quadrature weight dt).
struct TrajectoryCotangents {
    std::vector<Vector4> states;
    std::vector<Vector2> controls;
    double period = 0.0;

    static TrajectoryCotangents zeros(std::size_t nodes) {
        return {std::vector<Vector4>(nodes, Vector4::Zero()), std::vector<Vector2>(nodes, Vector2::Zero()), 0.0};
    }
    TrajectoryCotangents& operator+=(const TrajectoryCotangents& other);
    TrajectoryCotangents& operator*=(double scale);
};

struct SensitivityResult {
    Net::Vector d_theta;
    std::optional<double> d_period;
};

/// External feedback u_s(q, p), added to dp. An empty controller means none.
using Controller = std::function<Vector2(const PhaseState&)>;

/// Energy H + V_theta of the closed-loop conservative system.
double closed_loop_energy(const Pendulum& params, const Net& net, const PhaseState& x);

/// Field of the system with Hamiltonian H + V_theta plus an external force.
Vector4 closed_loop_field(const Pendulum& params, const Net& net, const Vector4& x,
                          const Vector2& external = Vector2::Zero());

/// Autonomous closed-loop rollout from (q0, 0) with fixed-step RK4.
Trajectory rollout(const Pendulum& params, const Net& net, const Vector2& q0, const TimeGrid& grid);

/// Same as rollout but starting from an arbitrary state with feedback added
/// at every RK4 stage. The step is shrunk so that an even number of steps
/// covers `duration` exactly.
Trajectory rollout_controlled(const Pendulum& params, const Net& net, const PhaseState& state0, double duration,
                              double dt, const Controller& controller);

/// Rollout of the time-rescaled system on s in [0, 1]; states coincide with
/// rollout() and backprop_trajectory additionally returns dL/dT.
Trajectory rollout_scaled(const Pendulum& params, const Net& net, const Vector2& q0, double period, int steps);

/// Exact reverse-mode derivative of the discrete RK4 rollout.
SensitivityResult backprop_trajectory(const Pendulum& params, const Net& net, const Trajectory& trajectory,
                                      const TrajectoryCotangents& cotangents);

/// CSV with header t,q1,q2,p1,p2,u1,u2,E.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory);

}  // namespace modectl
