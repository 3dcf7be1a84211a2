#include "modectl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace modectl {

void LossWeights::validate() const {
    for (double w : {alpha_task, alpha_eff, lambda1, alpha1, lambda2, beta}) {
        if (!(w >= 0) || !std::isfinite(w)) {
            throw std::invalid_argument("loss weights must be finite and non-negative");
        }
    }
}

Vector2 forward_kinematics(const Pendulum& params, const Vector2& q) {
    const double s12 = q(0) + q(1);
    return params.d * Vector2(std::sin(q(0)) + std::sin(s12), -std::cos(q(0)) - std::cos(s12));
}

Matrix2 forward_kinematics_jacobian(const Pendulum& params, const Vector2& q) {
    const double c1 = std::cos(q(0)), s1 = std::sin(q(0));
    const double c12 = std::cos(q(0) + q(1)), s12 = std::sin(q(0) + q(1));
    Matrix2 J;
    J << c1 + c12, c12,
         s1 + s12, s12;
    return params.d * J;
}

namespace {

double trapezoid_weight(std::size_t i, std::size_t nodes) { return (i == 0 || i + 1 == nodes) ? 0.5 : 1.0; }

void require_even_grid(const Trajectory& trajectory) {
    if (trajectory.grid.steps % 2 != 0 || trajectory.size() != static_cast<std::size_t>(trajectory.grid.steps) + 1) {
        throw ShapeMismatch("losses need a trajectory on an even grid");
    }
}

Vector2 sign(const Vector2& v) {
    return v.unaryExpr([](double x) { return static_cast<double>((x > 0) - (x < 0)); });
}

}  // namespace

double effort_integral(const Trajectory& trajectory) {
    const std::size_t nodes = trajectory.controls.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) sum += trapezoid_weight(i, nodes) * trajectory.controls[i].squaredNorm();
    return sum * trajectory.grid.dt();
}

LossTerms loss_task(const Pendulum& params, const Trajectory& trajectory, const TaskSpec& spec,
                    const LossWeights& weights) {
    require_even_grid(trajectory);
    const std::size_t nodes = trajectory.size();
    const int mid = trajectory.grid.midpoint();
    const double dt = trajectory.grid.dt();

    LossTerms out{0.0, TrajectoryCotangents::zeros(nodes)};

    const Vector2& q_mid = trajectory.states[mid].q;
    const Vector2 miss = forward_kinematics(params, q_mid) - spec.h_star;
    out.value = 0.5 * weights.alpha_task * miss.squaredNorm();
    out.cotangents.states[mid].head<2>() = weights.alpha_task * forward_kinematics_jacobian(params, q_mid).transpose() * miss;

    if (weights.alpha_eff != 0.0) {
        double weighted = 0.0;
        for (std::size_t i = 0; i < nodes; ++i) {
            const double w = trapezoid_weight(i, nodes);
            weighted += w * trajectory.controls[i].squaredNorm();
            out.cotangents.controls[i] = 2.0 * weights.alpha_eff * dt * w * trajectory.controls[i];
        }
        out.value += weights.alpha_eff * dt * weighted;
        // dt = T / N at fixed samples.
        out.cotangents.period = weights.alpha_eff * weighted / trajectory.grid.steps;
    }
    return out;
}

LossTerms loss_eigen(const Trajectory& trajectory, const LossWeights& weights) {
    require_even_grid(trajectory);
    const std::size_t nodes = trajectory.size();
    const std::size_t N = nodes - 1;
    const std::size_t mid = N / 2;
    const auto& x = trajectory.states;

    LossTerms out{0.0, TrajectoryCotangents::zeros(nodes)};

    std::size_t iq = 0, ip = 0;
    double max_q = -1.0, max_p = -1.0;
    for (std::size_t i = 0; i <= mid; ++i) {
        const double dq = (x[i].q - x[N - i].q).lpNorm<1>();
        const double dp = (x[i].p + x[N - i].p).lpNorm<1>();
        if (dq > max_q) { max_q = dq; iq = i; }
        if (dp > max_p) { max_p = dp; ip = i; }
    }
    const Vector2& p_mid = x[mid].p;
    out.value = weights.lambda1 * (max_q + weights.alpha1 * max_p) + 0.5 * weights.lambda2 * p_mid.squaredNorm();

    const Vector2 gq = weights.lambda1 * sign(x[iq].q - x[N - iq].q);
    out.cotangents.states[iq].head<2>() += gq;
    out.cotangents.states[N - iq].head<2>() -= gq;
    const Vector2 gp = weights.lambda1 * weights.alpha1 * sign(x[ip].p + x[N - ip].p);
    out.cotangents.states[ip].tail<2>() += gp;
    out.cotangents.states[N - ip].tail<2>() += gp;
    out.cotangents.states[mid].tail<2>() += weights.lambda2 * p_mid;
    return out;
}

TotalLoss loss_total(const Pendulum& params, const Trajectory& trajectory, const TaskSpec& spec,
                     const LossWeights& weights) {
    LossTerms task = loss_task(params, trajectory, spec, weights);
    LossTerms eigen = loss_eigen(trajectory, weights);

    TotalLoss out;
    out.task = task.value;
    out.eigen = eigen.value;
    out.value = task.value + weights.beta * eigen.value;
    out.effort = effort_integral(trajectory);
    out.task_error =
        (forward_kinematics(params, trajectory.states[trajectory.grid.midpoint()].q) - spec.h_star).norm();
    eigen.cotangents *= weights.beta;
    task.cotangents += eigen.cotangents;
    out.cotangents = std::move(task.cotangents);
    return out;
}

CertificationReport certify_eigenmode(const Trajectory& trajectory, const CertificationTolerances& tol) {
    require_even_grid(trajectory);
    const auto& x = trajectory.states;
    const std::size_t N = x.size() - 1;
    const std::size_t mid = N / 2;

    CertificationReport r;
    r.midpoint_momentum = x[mid].p.norm();
    r.closure_error = (x[N].q - x[0].q).norm();
    for (std::size_t i = 0; i <= mid; ++i) {
        r.symmetry_q = std::max(r.symmetry_q, (x[i].q - x[N - i].q).lpNorm<1>());
        r.symmetry_p = std::max(r.symmetry_p, (x[i].p + x[N - i].p).lpNorm<1>());
    }
    r.periodic = r.midpoint_momentum < tol.tol_p && r.closure_error < tol.tol_q;
    r.symmetric = r.symmetry_q < tol.tol_q && r.symmetry_p < tol.tol_p;

    // Principal axis of the configuration samples.
    Eigen::Matrix<double, Eigen::Dynamic, 2> Q(x.size(), 2);
    for (std::size_t i = 0; i < x.size(); ++i) Q.row(static_cast<Eigen::Index>(i)) = x[i].q.transpose();
    const Eigen::RowVector2d mean = Q.colwise().mean();
    Q.rowwise() -= mean;
    const Matrix2 cov = Q.transpose() * Q / static_cast<double>(x.size());
    Eigen::SelfAdjointEigenSolver<Matrix2> eig(cov);
    const Vector2 axis = eig.eigenvectors().col(1);
    const Vector2 normal(-axis(1), axis(0));
    const Eigen::VectorXd along = Q * axis;
    const Eigen::VectorXd across = Q * normal;

    std::vector<Eigen::Index> order(x.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return along(a) < along(b); });
    for (std::size_t k = 1; k < order.size(); ++k) {
        r.line_deviation = std::max(r.line_deviation, std::abs(across(order[k]) - across(order[k - 1])));
    }
    r.line_shaped = r.line_deviation < tol.tol_line;
    r.is_eigenmode = r.periodic && r.symmetric && r.line_shaped;
    return r;
}

}  // namespace modectl
