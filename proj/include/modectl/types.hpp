#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace modectl {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;

using Vector2 = Vec2<double>;
using Matrix2 = Mat2<double>;
using Vector4 = Eigen::Matrix<double, 4, 1>;
using Matrix4 = Eigen::Matrix<double, 4, 4>;

/// Phase-space point (q, p) of an n-DoF mechanical system.
template <typename Scalar, int Dim = 2>
struct State {
    Eigen::Matrix<Scalar, Dim, 1> q = Eigen::Matrix<Scalar, Dim, 1>::Zero();
    Eigen::Matrix<Scalar, Dim, 1> p = Eigen::Matrix<Scalar, Dim, 1>::Zero();

    /// Stacked (q, p).
    Eigen::Matrix<Scalar, 2 * Dim, 1> stacked() const {
        Eigen::Matrix<Scalar, 2 * Dim, 1> x;
        x << q, p;
        return x;
    }

    static State from_stacked(const Eigen::Matrix<Scalar, 2 * Dim, 1>& x) {
        State s;
        s.q = x.template head<Dim>();
        s.p = x.template tail<Dim>();
        return s;
    }

    bool all_finite() const { return q.allFinite() && p.allFinite(); }
};

/// Time derivative of a State.
template <typename Scalar, int Dim = 2>
struct VectorField {
    Eigen::Matrix<Scalar, Dim, 1> dq;
    Eigen::Matrix<Scalar, Dim, 1> dp;

    Eigen::Matrix<Scalar, 2 * Dim, 1> stacked() const {
        Eigen::Matrix<Scalar, 2 * Dim, 1> x;
        x << dq, dp;
        return x;
    }
};

using PhaseState = State<double>;

/// Physical constants of the double pendulum: point masses m at the end of
/// each link of length d, gravity g, a torsional spring k at joint 2 with
/// rest angle pi/2, and viscous joint damping b.
template <typename Scalar>
struct PendulumParams {
    Scalar m = Scalar(1.0);
    Scalar d = Scalar(1.0);
    Scalar g = Scalar(9.81);
    Scalar k = Scalar(0.5);
    Scalar b = Scalar(0.0);

    void validate() const {
        if (!(m > Scalar(0)) || !(d > Scalar(0)) || g < Scalar(0) || k < Scalar(0) || b < Scalar(0)) {
            throw std::invalid_argument("pendulum parameters require m > 0, d > 0, g >= 0, k >= 0, b >= 0");
        }
    }
};

using Pendulum = PendulumParams<double>;

struct NonFiniteState : std::runtime_error {
    explicit NonFiniteState(long step)
        : std::runtime_error("non-finite state at step " + std::to_string(step)), step(step) {}
    long step;
};

struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonPositivePeriod : std::invalid_argument {
    explicit NonPositivePeriod(double period)
        : std::invalid_argument("period must be positive, got " + std::to_string(period)) {}
};

struct DivergedTraining : std::runtime_error {
    explicit DivergedTraining(int epoch)
        : std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(epoch)),
          epoch(epoch) {}
    int epoch;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace modectl
