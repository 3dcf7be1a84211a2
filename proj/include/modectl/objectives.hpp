#pragma once

#include "modectl/integrator.hpp"
#include "modectl/types.hpp"

namespace modectl {

/// Weights of L = L_task + beta L_eigen. Defaults are the reference
/// hyperparameters of the pick-and-place experiment.
struct LossWeights {
    double alpha_task = 10.0;
    double alpha_eff = 1e-4;
    double lambda1 = 0.05;
    double alpha1 = 5e-4;
    double lambda2 = 0.95;
    double beta = 1.0;

    void validate() const;
};

/// Pick-and-place task: start configuration q0 (at rest) and the end-effector
/// target h_star to be reached at half period.
struct TaskSpec {
    Vector2 q0 = Vector2::Zero();
    Vector2 h_star = Vector2::Zero();
    double period = 1.5;
};

struct LossTerms {
    double value = 0.0;
    TrajectoryCotangents cotangents;
};

struct TotalLoss {
    double value = 0.0;
    double task = 0.0;
    double eigen = 0.0;
    /// Trapezoid integral of |u|^2 over [0, T].
    double effort = 0.0;
    /// |h(q(T/2)) - h*|.
    double task_error = 0.0;
    TrajectoryCotangents cotangents;
};

/// Tip of link 2: d (sin q1 + sin(q1+q2), -cos q1 - cos(q1+q2)).
Vector2 forward_kinematics(const Pendulum& params, const Vector2& q);
Matrix2 forward_kinematics_jacobian(const Pendulum& params, const Vector2& q);

/// Trapezoid rule integral of |u|^2 dt over the stored controls.
double effort_integral(const Trajectory& trajectory);

/// 1/2 alpha_task |h(q(T/2)) - h*|^2 + alpha_eff int |u|^2 dt.
LossTerms loss_task(const Pendulum& params, const Trajectory& trajectory, const TaskSpec& spec,
                    const LossWeights& weights);

/// lambda1 (max_i |q_i - q_{N-i}|_1 + alpha1 max_i |p_i + p_{N-i}|_1) + lambda2/2 |p_{N/2}|^2
/// with i over [0, N/2]. Subgradients go to the first maximizing index.
LossTerms loss_eigen(const Trajectory& trajectory, const LossWeights& weights);

TotalLoss loss_total(const Pendulum& params, const Trajectory& trajectory, const TaskSpec& spec,
                     const LossWeights& weights);

struct CertificationTolerances {
    double tol_p = 1e-2;
    double tol_q = 1e-2;
    double tol_line = 5e-2;
};

struct CertificationReport {
    bool periodic = false;
    bool symmetric = false;
    bool line_shaped = false;
    bool is_eigenmode = false;
    double midpoint_momentum = 0.0;  ///< |p(T/2)|
    double closure_error = 0.0;      ///< |q(T) - q(0)|
    double symmetry_q = 0.0;         ///< max_i |q_i - q_{N-i}|_1
    double symmetry_p = 0.0;         ///< max_i |p_i + p_{N-i}|_1
    double line_deviation = 0.0;     ///< largest cross-axis jump between neighbours along the principal axis
};

/// Checks the eigenmode conditions on a sampled trajectory.
///
/// periodic: |p(T/2)| < tol_p and |q(T) - q(0)| < tol_q.
/// symmetric: both reversal norms of loss_eigen below tol_q / tol_p.
/// line_shaped: samples sorted by their projection on the principal axis of
/// the configuration cloud form a single-valued graph, i.e. neighbouring
/// samples never differ by more than tol_line across the axis. This is a
/// sufficient test; an equilibrium (zero extent) passes trivially.
CertificationReport certify_eigenmode(const Trajectory& trajectory, const CertificationTolerances& tolerances = {});

}  // namespace modectl
