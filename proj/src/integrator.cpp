#include "modectl/integrator.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "modectl/dynamics.hpp"

namespace modectl {

void TimeGrid::validate() const {
    if (!(period > 0) || !std::isfinite(period)) {
        throw NonPositivePeriod(period);
    }
    if (steps < 2 || steps % 2 != 0) {
        throw std::invalid_argument("time grid needs an even step count >= 2, got " + std::to_string(steps));
    }
}

TrajectoryCotangents& TrajectoryCotangents::operator+=(const TrajectoryCotangents& other) {
    if (other.states.size() != states.size() || other.controls.size() != controls.size()) {
        throw ShapeMismatch("cotangent sets have different lengths");
    }
    for (std::size_t i = 0; i < states.size(); ++i) states[i] += other.states[i];
    for (std::size_t i = 0; i < controls.size(); ++i) controls[i] += other.controls[i];
    period += other.period;
    return *this;
}

TrajectoryCotangents& TrajectoryCotangents::operator*=(double scale) {
    for (auto& s : states) s *= scale;
    for (auto& c : controls) c *= scale;
    period *= scale;
    return *this;
}

double closed_loop_energy(const Pendulum& params, const Net& net, const PhaseState& x) {
    return dynamics::hamiltonian(params, x, value(net, x.q));
}

Vector4 closed_loop_field(const Pendulum& params, const Net& net, const Vector4& x, const Vector2& external) {
    const PhaseState s = PhaseState::from_stacked(x);
    return dynamics::vector_field(params, s, Vector2(external - input_gradient(net, s.q))).stacked();
}

namespace {

struct Rk4Stages {
    Vector4 x[4];
    Vector4 k[4];
};

template <typename Field>
Rk4Stages rk4_stages(const Vector4& x, double h, const Field& field) {
    Rk4Stages st;
    st.x[0] = x;
    st.k[0] = field(st.x[0]);
    st.x[1] = x + 0.5 * h * st.k[0];
    st.k[1] = field(st.x[1]);
    st.x[2] = x + 0.5 * h * st.k[1];
    st.k[2] = field(st.x[2]);
    st.x[3] = x + h * st.k[2];
    st.k[3] = field(st.x[3]);
    return st;
}

Vector4 rk4_increment(const Rk4Stages& st) { return (st.k[0] + 2.0 * st.k[1] + 2.0 * st.k[2] + st.k[3]) / 6.0; }

void record(Trajectory& traj, const Pendulum& params, const Net& net, const Vector4& x) {
    const PhaseState s = PhaseState::from_stacked(x);
    traj.states.push_back(s);
    traj.controls.push_back(input_gradient(net, s.q));
    traj.energies.push_back(closed_loop_energy(params, net, s));
}

template <typename Field>
Trajectory integrate(const Pendulum& params, const Net& net, const PhaseState& start, const TimeGrid& grid,
                     const Field& field) {
    Trajectory traj;
    traj.grid = grid;
    const auto nodes = static_cast<std::size_t>(grid.steps) + 1;
    traj.states.reserve(nodes);
    traj.controls.reserve(nodes);
    traj.energies.reserve(nodes);

    const double h = grid.dt();
    Vector4 x = start.stacked();
    if (!x.allFinite()) throw NonFiniteState(0);
    record(traj, params, net, x);
    for (int i = 0; i < grid.steps; ++i) {
        x += h * rk4_increment(rk4_stages(x, h, field));
        if (!x.allFinite()) throw NonFiniteState(i + 1);
        record(traj, params, net, x);
    }
    return traj;
}

/// Closed-loop Jacobian d(field)/dx for the autonomous system.
Matrix4 closed_loop_jacobian(const Pendulum& params, const Net& net, const Vector4& x) {
    const PhaseState s = PhaseState::from_stacked(x);
    Matrix4 J = dynamics::vector_field_jacobian(params, s);
    J.block<2, 2>(2, 0) -= input_hessian(net, s.q);
    return J;
}

}  // namespace

Trajectory rollout(const Pendulum& params, const Net& net, const Vector2& q0, const TimeGrid& grid) {
    grid.validate();
    PhaseState start;
    start.q = q0;
    return integrate(params, net, start, grid,
                     [&](const Vector4& x) { return closed_loop_field(params, net, x); });
}

Trajectory rollout_controlled(const Pendulum& params, const Net& net, const PhaseState& state0, double duration,
                              double dt, const Controller& controller) {
    if (!(duration > 0) || !(dt > 0)) {
        throw std::invalid_argument("rollout_controlled needs positive duration and step");
    }
    TimeGrid grid;
    grid.period = duration;
    grid.steps = 2 * std::max(1, static_cast<int>(std::ceil(duration / (2.0 * dt) - 1e-9)));
    return integrate(params, net, state0, grid, [&](const Vector4& x) {
        if (!controller) return closed_loop_field(params, net, x);
        return closed_loop_field(params, net, x, controller(PhaseState::from_stacked(x)));
    });
}

Trajectory rollout_scaled(const Pendulum& params, const Net& net, const Vector2& q0, double period, int steps) {
    if (!(period > 0) || !std::isfinite(period)) throw NonPositivePeriod(period);
    // Stepping the rescaled field T f on s with ds = 1/N is the same map as
    // stepping f with dt = T/N; the period enters only through the step.
    Trajectory traj = rollout(params, net, q0, TimeGrid{period, steps});
    traj.learnable_period = true;
    return traj;
}

SensitivityResult backprop_trajectory(const Pendulum& params, const Net& net, const Trajectory& trajectory,
                                      const TrajectoryCotangents& cotangents) {
    const std::size_t nodes = trajectory.size();
    if (cotangents.states.size() != nodes || cotangents.controls.size() != nodes ||
        trajectory.controls.size() != nodes || nodes != static_cast<std::size_t>(trajectory.grid.steps) + 1) {
        throw ShapeMismatch("cotangents have " + std::to_string(cotangents.states.size()) + "/" +
                            std::to_string(cotangents.controls.size()) + " entries for a trajectory of " +
                            std::to_string(nodes) + " nodes");
    }

    const double h = trajectory.grid.dt();
    Net::Vector d_theta = Net::Vector::Zero(net.parameter_count());
    double d_step = 0.0;

    // Cotangent on x_i, including the control read-out u_i = grad V(q_i).
    auto direct = [&](std::size_t i) {
        Vector4 g = cotangents.states[i];
        const Vector2& ubar = cotangents.controls[i];
        if (!ubar.isZero(0.0)) {
            const Vector2& q = trajectory.states[i].q;
            g.head<2>() += input_hessian(net, q) * ubar;
            d_theta += parameter_jacobian_products(net, q, 0.0, ubar);
        }
        return g;
    };

    auto field = [&](const Vector4& x) { return closed_loop_field(params, net, x); };
    // Pulls a stage cotangent back through k = f(x): returns x-bar, adds theta-bar.
    auto pull_back = [&](const Vector4& x, const Vector4& kbar) {
        d_theta += parameter_jacobian_products(net, Vector2(x.head<2>()), 0.0, Vector2(-kbar.tail<2>()));
        return Vector4(closed_loop_jacobian(params, net, x).transpose() * kbar);
    };

    Vector4 lambda = direct(nodes - 1);
    for (std::size_t step = nodes - 1; step-- > 0;) {
        const Rk4Stages st = rk4_stages(trajectory.states[step].stacked(), h, field);
        d_step += lambda.dot(rk4_increment(st));

        Vector4 kbar[4] = {h / 6.0 * lambda, h / 3.0 * lambda, h / 3.0 * lambda, h / 6.0 * lambda};
        Vector4 xbar = lambda;

        const Vector4 xb3 = pull_back(st.x[3], kbar[3]);
        xbar += xb3;
        kbar[2] += h * xb3;
        d_step += xb3.dot(st.k[2]);

        const Vector4 xb2 = pull_back(st.x[2], kbar[2]);
        xbar += xb2;
        kbar[1] += 0.5 * h * xb2;
        d_step += 0.5 * xb2.dot(st.k[1]);

        const Vector4 xb1 = pull_back(st.x[1], kbar[1]);
        xbar += xb1;
        kbar[0] += 0.5 * h * xb1;
        d_step += 0.5 * xb1.dot(st.k[0]);

        xbar += pull_back(st.x[0], kbar[0]);
        lambda = xbar + direct(step);
    }

    SensitivityResult result;
    result.d_theta = std::move(d_theta);
    if (trajectory.learnable_period) {
        result.d_period = d_step / trajectory.grid.steps + cotangents.period;
    }
    return result;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,q1,q2,p1,p2,u1,u2,E\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        const auto& s = trajectory.states[i];
        const auto& u = trajectory.controls[i];
        out << trajectory.grid.time(static_cast<int>(i)) << ',' << s.q(0) << ',' << s.q(1) << ',' << s.p(0) << ','
            << s.p(1) << ',' << u(0) << ',' << u(1) << ',' << trajectory.energies[i] << '\n';
    }
}

}  // namespace modectl
