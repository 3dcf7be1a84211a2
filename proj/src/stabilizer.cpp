#include "modectl/stabilizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "modectl/dynamics.hpp"

namespace modectl {

ReferenceMode make_reference_mode(const Pendulum& params, const Net& net, const Vector2& q0, double period,
                                  int samples) {
    if (samples < 4 || samples % 2 != 0) throw std::invalid_argument("reference needs an even sample count >= 4");
    const Trajectory traj = rollout(params, net, q0, TimeGrid{period, samples});
    ReferenceMode mode;
    mode.period = period;
    mode.q.reserve(static_cast<std::size_t>(samples));
    mode.p.reserve(static_cast<std::size_t>(samples));
    for (int j = 0; j < samples; ++j) {
        mode.q.push_back(traj.states[static_cast<std::size_t>(j)].q);
        mode.p.push_back(traj.states[static_cast<std::size_t>(j)].p);
    }
    mode.energy = traj.energies.front();
    return mode;
}

void ControllerGains::validate() const {
    for (double g : {alpha_E, alpha_M, b}) {
        if (!(g >= 0) || !std::isfinite(g)) throw std::invalid_argument("controller gains must be finite and >= 0");
    }
}

ReferencePoint nearest_reference(const ReferenceMode& mode, const Vector2& q) {
    if (mode.size() == 0) throw std::invalid_argument("empty reference mode");
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    const std::size_t end = std::min(mode.search_end(), mode.size() - 1);
    for (std::size_t j = 0; j <= end; ++j) {
        const double d2 = (q - mode.q[j]).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = j;
        }
    }
    return {best, best * mode.sample_dt(), mode.q[best], mode.p[best], std::sqrt(best_d2)};
}

ReferencePoint locate_on_reference(const ReferenceMode& mode, const Vector2& q) {
    const ReferencePoint nearest = nearest_reference(mode, q);
    ReferencePoint best = nearest;
    const std::size_t end = std::min(mode.search_end(), mode.size() - 1);
    const double h = mode.sample_dt();

    // The two end segments are extended by one segment past the turning
    // points so that the lookup stays smooth for slight overshoots.
    auto try_segment = [&](std::size_t a) {
        const Vector2 ab = mode.q[a + 1] - mode.q[a];
        const double len2 = ab.squaredNorm();
        const double lo = a == 0 ? -1.0 : 0.0;
        const double hi = a + 1 == end ? 2.0 : 1.0;
        const double lambda = len2 > 0 ? std::clamp((q - mode.q[a]).dot(ab) / len2, lo, hi) : 0.0;
        const Vector2 qb = mode.q[a] + lambda * ab;
        const double d = (q - qb).norm();
        if (d < best.distance) {
            best = {a, (static_cast<double>(a) + lambda) * h, qb, mode.p[a] + lambda * (mode.p[a + 1] - mode.p[a]), d};
        }
    };
    if (nearest.index > 0) try_segment(nearest.index - 1);
    if (nearest.index < end) try_segment(nearest.index);
    return best;
}

namespace {

double inverse_mass_product(const Pendulum& params, const Vector2& q, const Vector2& a, const Vector2& b) {
    return a.dot(dynamics::mass_matrix_inverse(params, q) * b);
}

}  // namespace

int momentum_sign(const Pendulum& params, const Vector2& q, const Vector2& p, const Vector2& p_bar) {
    const double s = inverse_mass_product(params, q, p, p_bar);
    return (s > 0) - (s < 0);
}

Vector2 project_momentum(const Pendulum& params, const PhaseState& x, const Vector2& X) {
    const Matrix2 Minv = dynamics::mass_matrix_inverse(params, x.q);
    const double pp = x.p.dot(Minv * x.p);
    if (pp < kMomentumThreshold) return Vector2::Zero();
    return X - (x.p.dot(Minv * X) / pp) * x.p;
}

Vector2 energy_feedback(const Pendulum& params, const Net& net, const PhaseState& x, double E_bar, double alpha_E) {
    const double pp = inverse_mass_product(params, x.q, x.p, x.p);
    if (pp < kMomentumThreshold) return Vector2::Zero();
    return alpha_E * (E_bar - closed_loop_energy(params, net, x)) / std::sqrt(pp) * x.p;
}

Vector2 mode_feedback(const Pendulum& params, const PhaseState& x, const Vector2& p_bar, int sigma, double alpha_M) {
    return alpha_M * project_momentum(params, x, sigma * p_bar);
}

Vector2 stabilizing_feedback(const Pendulum& params, const Net& net, const ReferenceMode& mode, const PhaseState& x,
                             const ControllerGains& gains) {
    const ReferencePoint ref = locate_on_reference(mode, x.q);
    const int sigma = momentum_sign(params, x.q, x.p, ref.p_bar);
    Vector2 u = energy_feedback(params, net, x, mode.energy, gains.alpha_E) +
                mode_feedback(params, x, ref.p_bar, sigma, gains.alpha_M);
    if (gains.b != 0.0) u -= gains.b * dynamics::mass_matrix_inverse(params, x.q) * x.p;
    return u;
}

Vector4 mode_error(const Pendulum& params, const ReferenceMode& mode, const PhaseState& x) {
    const ReferencePoint ref = locate_on_reference(mode, x.q);
    const int sigma = momentum_sign(params, x.q, x.p, ref.p_bar);
    Vector4 e;
    e << x.q - ref.q_bar, x.p - sigma * ref.p_bar;
    return e;
}

ClosedLoopResult simulate_closed_loop(const Pendulum& params, const Net& net, const ReferenceMode& mode,
                                      const PhaseState& state0, const ControllerGains& gains, double periods,
                                      double dt) {
    gains.validate();
    if (!(periods > 0)) throw std::invalid_argument("number of periods must be positive");
    ClosedLoopResult out;
    out.trajectory = rollout_controlled(params, net, state0, periods * mode.period, dt, [&](const PhaseState& x) {
        return stabilizing_feedback(params, net, mode, x, gains);
    });
    const auto& traj = out.trajectory;
    out.metrics.reserve(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const PhaseState& x = traj.states[i];
        const Vector4 e = mode_error(params, mode, x);
        out.metrics.push_back({traj.grid.time(static_cast<int>(i)), std::abs(traj.energies[i] - mode.energy),
                               e.head<2>().norm(), e.tail<2>().norm(),
                               stabilizing_feedback(params, net, mode, x, gains)});
    }
    return out;
}

void write_metrics_csv(const std::filesystem::path& path, const ClosedLoopResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,E_err,q_dist,p_dist,q1,q2,p1,p2,u1,u2\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < result.metrics.size(); ++i) {
        const auto& m = result.metrics[i];
        const auto& x = result.trajectory.states[i];
        out << m.t << ',' << m.energy_error << ',' << m.q_distance << ',' << m.p_distance << ',' << x.q(0) << ','
            << x.q(1) << ',' << x.p(0) << ',' << x.p(1) << ',' << m.feedback(0) << ',' << m.feedback(1) << '\n';
    }
}

std::vector<CycleMultiplier> cycle_multipliers(const Pendulum& params, const Net& net, const ReferenceMode& mode,
                                               const ControllerGains& gains, const PhaseState& x0,
                                               const MultiplierOptions& options) {
    gains.validate();
    if (!(options.fd_step > 0)) throw std::invalid_argument("fd_step must be positive");
    const Controller controller = [&](const PhaseState& x) {
        return stabilizing_feedback(params, net, mode, x, gains);
    };
    auto flow = [&](const Vector4& x) {
        return rollout_controlled(params, net, PhaseState::from_stacked(x), mode.period, options.dt, controller)
            .states.back();
    };
    auto error = [&](const PhaseState& x) { return mode_error(params, mode, x); };

    std::vector<CycleMultiplier> out;
    const Vector4 base = x0.stacked();
    const double h = options.fd_step;
    for (int i = 0; i < 4; ++i) {
        Vector4 plus = base, minus = base;
        plus(i) += h;
        minus(i) -= h;
        CycleMultiplier m;
        m.component = i;
        m.denominator = (error(PhaseState::from_stacked(plus)) - error(PhaseState::from_stacked(minus))).norm() / (2 * h);
        m.numerator = (error(flow(plus)) - error(flow(minus))).norm() / (2 * h);
        m.defined = m.denominator > options.degenerate_threshold;
        m.ratio = m.defined ? m.numerator / m.denominator : std::numeric_limits<double>::quiet_NaN();
        out.push_back(m);
    }
    return out;
}

PhaseState converged_orbit_state(const Pendulum& params, const Net& net, const ReferenceMode& mode,
                                 const ControllerGains& gains, double phase, double periods, double dt) {
    if (!(phase >= 0 && phase < 1)) throw std::invalid_argument("phase must lie in [0, 1)");
    const auto j = static_cast<std::size_t>(std::lround(phase * static_cast<double>(mode.size()))) % mode.size();
    const PhaseState anchor{mode.q[j], mode.p[j]};
    const Trajectory traj =
        simulate_closed_loop(params, net, mode, anchor, gains, periods, dt).trajectory;
    const double t_last = (periods - 1.0) * mode.period;
    PhaseState best = traj.states.back();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traj.size(); ++i) {
        if (traj.grid.time(static_cast<int>(i)) < t_last) continue;
        const double d = (traj.states[i].stacked() - anchor.stacked()).norm();
        if (d < best_d) {
            best_d = d;
            best = traj.states[i];
        }
    }
    return best;
}

}  // namespace modectl
