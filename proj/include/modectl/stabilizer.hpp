#pragma once

#include <filesystem>
#include <vector>

#include "modectl/integrator.hpp"
#include "modectl/potential_net.hpp"

namespace modectl {

/// Densely sampled eigenmode (q_bar, p_bar) over one period, with its energy
/// level E_bar = H + V_theta at the first sample.
///
/// Lookups only scan the first half period [0, T/2]: on an eigenmode the
/// second half retraces it with p_bar negated, and the sign is resolved by
/// momentum_sign.
struct ReferenceMode {
    std::vector<Vector2> q;
    std::vector<Vector2> p;
    double energy = 0.0;
    double period = 0.0;

    std::size_t size() const { return q.size(); }
    double sample_dt() const { return period / static_cast<double>(q.size()); }
    /// Last index searched by lookups (the half-period sample).
    std::size_t search_end() const { return q.size() / 2; }
};

/// Samples the autonomous closed-loop trajectory from (q0, 0) at `samples`
/// (even) uniform instants t_j = j T / samples, j < samples.
ReferenceMode make_reference_mode(const Pendulum& params, const Net& net, const Vector2& q0, double period,
                                  int samples = 1000);

struct ControllerGains {
    double alpha_E = 1.0;
    double alpha_M = 10.0;
    double b = 0.0;

    void validate() const;
};

struct ReferencePoint {
    /// Sample index (nearest_reference) or lower segment end (locate_on_reference).
    std::size_t index = 0;
    double t_bar = 0.0;
    Vector2 q_bar = Vector2::Zero();
    Vector2 p_bar = Vector2::Zero();
    double distance = 0.0;
};

/// Exhaustive nearest sample in Euclidean configuration distance; the lowest
/// index wins ties.
ReferencePoint nearest_reference(const ReferenceMode& mode, const Vector2& q);

/// nearest_reference refined to the closest point of the two polyline
/// segments adjacent to the nearest sample, with t_bar and p_bar linearly
/// interpolated. Removes the sampling floor from the distance.
ReferencePoint locate_on_reference(const ReferenceMode& mode, const Vector2& q);

/// sign(p^T M^{-1}(q) p_bar), zero exactly at zero.
int momentum_sign(const Pendulum& params, const Vector2& q, const Vector2& p, const Vector2& p_bar);

/// Below this value of p^T M^{-1} p the normalized momentum and the
/// projection are treated as zero.
inline constexpr double kMomentumThreshold = 1e-10;

/// pi_p(X) = X - (p^T M^{-1} X / p^T M^{-1} p) p; zero when p is (near) zero.
Vector2 project_momentum(const Pendulum& params, const PhaseState& x, const Vector2& X);

/// u_E = alpha_E (E_bar - E) p / sqrt(p^T M^{-1} p).
Vector2 energy_feedback(const Pendulum& params, const Net& net, const PhaseState& x, double E_bar, double alpha_E);

/// u_M = alpha_M pi_p(sigma p_bar); injects no power.
Vector2 mode_feedback(const Pendulum& params, const PhaseState& x, const Vector2& p_bar, int sigma, double alpha_M);

/// u_s = u_E + u_M - b M^{-1} p with t_bar, sigma resolved on the reference.
Vector2 stabilizing_feedback(const Pendulum& params, const Net& net, const ReferenceMode& mode, const PhaseState& x,
                             const ControllerGains& gains);

/// Phase-space error x - (q_bar(t_bar), sigma p_bar(t_bar)).
Vector4 mode_error(const Pendulum& params, const ReferenceMode& mode, const PhaseState& x);

struct ClosedLoopSample {
    double t = 0.0;
    double energy_error = 0.0;    ///< |E - E_bar|
    double q_distance = 0.0;      ///< |q - q_bar(t_bar)|
    double p_distance = 0.0;      ///< |p - sigma p_bar(t_bar)|
    Vector2 feedback = Vector2::Zero();
};

struct ClosedLoopResult {
    Trajectory trajectory;
    std::vector<ClosedLoopSample> metrics;
};

/// Integrates the stabilized system for `periods` reference periods.
ClosedLoopResult simulate_closed_loop(const Pendulum& params, const Net& net, const ReferenceMode& mode,
                                      const PhaseState& state0, const ControllerGains& gains, double periods,
                                      double dt = 1e-3);

/// CSV with header t,E_err,q_dist,p_dist,q1,q2,p1,p2,u1,u2.
void write_metrics_csv(const std::filesystem::path& path, const ClosedLoopResult& result);

struct CycleMultiplier {
    int component = 0;
    double numerator = 0.0;
    double denominator = 0.0;
    double ratio = 0.0;
    bool defined = false;
};

struct MultiplierOptions {
    double fd_step = 1e-5;
    double dt = 1e-3;
    /// Denominators below this are reported as undefined.
    double degenerate_threshold = 1e-6;
};

/// Per-component cycle multipliers at x0: the central-difference rate of
/// change of the mode error after one period, Psi_T, divided by that of the
/// mode error at x0 itself,
///   |e(Psi_T(x0 + h e_i)) - e(Psi_T(x0 - h e_i))| / |e(x0 + h e_i) - e(x0 - h e_i)|.
/// At a point of the orbit this is the ratio of the partial derivatives of
/// the two distances to the mode; values below 1 in every defined component
/// certify local contraction.
std::vector<CycleMultiplier> cycle_multipliers(const Pendulum& params, const Net& net, const ReferenceMode& mode,
                                               const ControllerGains& gains, const PhaseState& x0,
                                               const MultiplierOptions& options = {});

/// A point of the stabilized orbit: simulate from the reference sample at
/// `phase` (fraction of the period) for `periods` periods and return the
/// final-period state closest to that sample.
PhaseState converged_orbit_state(const Pendulum& params, const Net& net, const ReferenceMode& mode,
                                 const ControllerGains& gains, double phase = 0.0, double periods = 10.0,
                                 double dt = 1e-3);

}  // namespace modectl
