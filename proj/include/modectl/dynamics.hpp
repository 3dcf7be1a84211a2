// Closed-form double-pendulum mechanics in Hamiltonian coordinates.
//
// Angles q are measured from the downward vertical, q2 relative to link 1.
// Both links carry a point mass m at their tip and have length d. Every
// function is a pure template on the scalar type so the same code runs on
// double and on Eigen::AutoDiffScalar.
#pragma once

#include <cmath>
#include <numbers>

#include "modectl/types.hpp"

namespace modectl::dynamics {

/// M(q) = m d^2 [[3 + 2 cos q2, 1 + cos q2], [1 + cos q2, 1]].
template <typename Scalar>
Mat2<Scalar> mass_matrix(const PendulumParams<Scalar>& params, const Vec2<Scalar>& q) {
    using std::cos;
    const Scalar c = cos(q(1));
    const Scalar scale = params.m * params.d * params.d;
    Mat2<Scalar> M;
    M << Scalar(3) + Scalar(2) * c, Scalar(1) + c,
         Scalar(1) + c, Scalar(1);
    return scale * M;
}

/// det M = m^2 d^4 (1 + sin^2 q2), bounded below by m^2 d^4.
template <typename Scalar>
Mat2<Scalar> mass_matrix_inverse(const PendulumParams<Scalar>& params, const Vec2<Scalar>& q) {
    using std::cos;
    using std::sin;
    const Scalar c = cos(q(1));
    const Scalar s = sin(q(1));
    const Scalar denom = params.m * params.d * params.d * (Scalar(1) + s * s);
    Mat2<Scalar> A;
    A << Scalar(1), -(Scalar(1) + c),
         -(Scalar(1) + c), Scalar(3) + Scalar(2) * c;
    return A / denom;
}

/// First and second derivatives of M^{-1}(q) with respect to q2 (q1 does not
/// enter the inertia).
template <typename Scalar>
struct InverseMassDerivatives {
    Mat2<Scalar> first;
    Mat2<Scalar> second;
};

template <typename Scalar>
InverseMassDerivatives<Scalar> mass_matrix_inverse_derivatives(const PendulumParams<Scalar>& params,
                                                               const Vec2<Scalar>& q) {
    using std::cos;
    using std::sin;
    const Scalar c = cos(q(1));
    const Scalar s = sin(q(1));
    const Scalar D = Scalar(1) + s * s;
    const Scalar dD = Scalar(2) * s * c;
    const Scalar ddD = Scalar(2) * (c * c - s * s);
    // M^{-1} = A(q2) g(q2) / (m d^2) with g = 1 / D.
    const Scalar g = Scalar(1) / D;
    const Scalar dg = -dD / (D * D);
    const Scalar ddg = -ddD / (D * D) + Scalar(2) * dD * dD / (D * D * D);
    Mat2<Scalar> A, dA, ddA;
    A << Scalar(1), -(Scalar(1) + c),
         -(Scalar(1) + c), Scalar(3) + Scalar(2) * c;
    dA << Scalar(0), s,
          s, Scalar(-2) * s;
    ddA << Scalar(0), c,
           c, Scalar(-2) * c;
    const Scalar inv_scale = Scalar(1) / (params.m * params.d * params.d);
    InverseMassDerivatives<Scalar> out;
    out.first = (dA * g + A * dg) * inv_scale;
    out.second = (ddA * g + Scalar(2) * dA * dg + A * ddg) * inv_scale;
    return out;
}

/// Gravity potential -m d g (2 cos q1 + cos(q1 + q2)).
template <typename Scalar>
Scalar gravity_potential(const PendulumParams<Scalar>& params, const Vec2<Scalar>& q) {
    using std::cos;
    return -params.m * params.d * params.g * (Scalar(2) * cos(q(0)) + cos(q(0) + q(1)));
}

/// Spring potential k (q2 - pi/2)^2.
template <typename Scalar>
Scalar spring_potential(const PendulumParams<Scalar>& params, const Vec2<Scalar>& q) {
    const Scalar offset = q(1) - Scalar(std::numbers::pi / 2);
    return params.k * offset * offset;
}

/// Gravity plus spring potential; the learned potential is added separately.
template <typename Scalar>
Scalar open_loop_potential(const PendulumParams<Scalar>& params, const Vec2<Scalar>& q) {
    return gravity_potential(params, q) + spring_potential(params, q);
}

template <typename Scalar>
Vec2<Scalar> open_loop_potential_gradient(const PendulumParams<Scalar>& params, const Vec2<Scalar>& q) {
    using std::sin;
    const Scalar mdg = params.m * params.d * params.g;
    const Scalar s12 = sin(q(0) + q(1));
    return Vec2<Scalar>(mdg * (Scalar(2) * sin(q(0)) + s12),
                        mdg * s12 + Scalar(2) * params.k * (q(1) - Scalar(std::numbers::pi / 2)));
}

template <typename Scalar>
Mat2<Scalar> open_loop_potential_hessian(const PendulumParams<Scalar>& params, const Vec2<Scalar>& q) {
    using std::cos;
    const Scalar mdg = params.m * params.d * params.g;
    const Scalar c12 = cos(q(0) + q(1));
    Mat2<Scalar> H;
    H << mdg * (Scalar(2) * cos(q(0)) + c12), mdg * c12,
         mdg * c12, mdg * c12 + Scalar(2) * params.k;
    return H;
}

/// K = 1/2 p^T M^{-1}(q) p.
template <typename Scalar>
Scalar kinetic_energy(const PendulumParams<Scalar>& params, const State<Scalar>& x) {
    return Scalar(0.5) * x.p.dot(mass_matrix_inverse(params, x.q) * x.p);
}

/// dK/dq; only the q2 component is non-zero.
template <typename Scalar>
Vec2<Scalar> kinetic_energy_gradient_q(const PendulumParams<Scalar>& params, const State<Scalar>& x) {
    const auto dMinv = mass_matrix_inverse_derivatives(params, x.q);
    return Vec2<Scalar>(Scalar(0), Scalar(0.5) * x.p.dot(dMinv.first * x.p));
}

/// Total energy K + V_gravity + V_spring + learned_potential.
template <typename Scalar>
Scalar hamiltonian(const PendulumParams<Scalar>& params, const State<Scalar>& x, Scalar learned_potential) {
    return kinetic_energy(params, x) + open_loop_potential(params, x.q) + learned_potential;
}

/// dq = M^{-1} p, dp = -dH/dq - b M^{-1} p + u, with H the open-loop
/// Hamiltonian and u a generalized force collocated with q.
template <typename Scalar>
VectorField<Scalar> vector_field(const PendulumParams<Scalar>& params, const State<Scalar>& x,
                                 const Vec2<Scalar>& u) {
    const Vec2<Scalar> velocity = mass_matrix_inverse(params, x.q) * x.p;
    VectorField<Scalar> f;
    f.dq = velocity;
    f.dp = -kinetic_energy_gradient_q(params, x) - open_loop_potential_gradient(params, x.q) -
           params.b * velocity + u;
    return f;
}

/// Jacobian of vector_field with respect to the stacked state (q, p), for a
/// state-independent input u.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 4> vector_field_jacobian(const PendulumParams<Scalar>& params,
                                                  const State<Scalar>& x) {
    const Mat2<Scalar> Minv = mass_matrix_inverse(params, x.q);
    const auto dMinv = mass_matrix_inverse_derivatives(params, x.q);
    const Vec2<Scalar> dMinv_p = dMinv.first * x.p;

    Eigen::Matrix<Scalar, 4, 4> J = Eigen::Matrix<Scalar, 4, 4>::Zero();
    // dq rows
    J.template block<2, 1>(0, 1) = dMinv_p;
    J.template block<2, 2>(0, 2) = Minv;
    // dp rows
    J.template block<2, 2>(2, 0) = -open_loop_potential_hessian(params, x.q);
    J(3, 1) -= Scalar(0.5) * x.p.dot(dMinv.second * x.p);
    J.template block<1, 2>(3, 2) -= dMinv_p.transpose();
    J.template block<2, 1>(2, 1) -= params.b * dMinv_p;
    J.template block<2, 2>(2, 2) -= params.b * Minv;
    return J;
}

}  // namespace modectl::dynamics
