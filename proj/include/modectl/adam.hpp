#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace modectl {

/// Bias-corrected Adam (Kingma & Ba) over a flat parameter vector.
template <typename Scalar>
class Adam {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    explicit Adam(Eigen::Index size, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                  Scalar epsilon = Scalar(1e-8))
        : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

    /// Updates `parameters` in place and returns the applied step.
    Vector step(Vector& parameters, const Vector& gradient, Scalar learning_rate) {
        ++t_;
        m_ = beta1_ * m_ + (Scalar(1) - beta1_) * gradient;
        v_ = beta2_ * v_ + (Scalar(1) - beta2_) * gradient.cwiseAbs2();
        const Scalar c1 = Scalar(1) - std::pow(beta1_, Scalar(t_));
        const Scalar c2 = Scalar(1) - std::pow(beta2_, Scalar(t_));
        const Vector update =
            -learning_rate * (m_ / c1).array() / ((v_ / c2).array().sqrt() + epsilon_);
        parameters += update;
        return update;
    }

    long iterations() const { return t_; }
    const Vector& first_moment() const { return m_; }
    const Vector& second_moment() const { return v_; }

private:
    Scalar beta1_, beta2_, epsilon_;
    Vector m_, v_;
    long t_ = 0;
};

}  // namespace modectl
