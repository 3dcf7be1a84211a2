#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "modectl/types.hpp"

namespace modectl {

/// Learnable control potential V(q) = w2 . tanh(W1 q + b1) + b2 with one
/// tanh hidden layer and a linear scalar output.
///
/// Flat parameter layout, used by the optimizer and checkpoints:
///   [ W1 row-major (hidden x 2) | b1 (hidden) | w2 (hidden) | b2 ]
template <typename Scalar>
class PotentialNet {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Weights = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;

    PotentialNet() : PotentialNet(0) {}

    /// All-zero network of the given width.
    explicit PotentialNet(Eigen::Index hidden)
        : W1_(Weights::Zero(hidden, 2)), b1_(Vector::Zero(hidden)), w2_(Vector::Zero(hidden)), b2_(0) {}

    Eigen::Index hidden() const { return b1_.size(); }
    Eigen::Index parameter_count() const { return 4 * hidden() + 1; }

    const Weights& W1() const { return W1_; }
    const Vector& b1() const { return b1_; }
    const Vector& w2() const { return w2_; }
    Scalar b2() const { return b2_; }
    Weights& W1() { return W1_; }
    Vector& b1() { return b1_; }
    Vector& w2() { return w2_; }
    Scalar& b2() { return b2_; }

    Vector parameters() const {
        const Eigen::Index h = hidden();
        Vector theta(parameter_count());
        theta.head(2 * h) = Eigen::Map<const Vector>(W1_.data(), 2 * h);
        theta.segment(2 * h, h) = b1_;
        theta.segment(3 * h, h) = w2_;
        theta(4 * h) = b2_;
        return theta;
    }

    void set_parameters(const Vector& theta) {
        if (theta.size() != parameter_count()) {
            throw ShapeMismatch("parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                                std::to_string(parameter_count()));
        }
        const Eigen::Index h = hidden();
        Eigen::Map<Vector>(W1_.data(), 2 * h) = theta.head(2 * h);
        b1_ = theta.segment(2 * h, h);
        w2_ = theta.segment(3 * h, h);
        b2_ = theta(4 * h);
    }

    bool all_finite() const {
        return W1_.allFinite() && b1_.allFinite() && w2_.allFinite() && std::isfinite(double(b2_));
    }

    /// Hidden activations a = tanh(W1 q + b1) and their derivative 1 - a^2.
    struct Activations {
        Vector a;
        Vector s;
    };

    Activations activations(const Vec2<Scalar>& q) const {
        Activations act;
        act.a = (W1_ * q + b1_).array().tanh();
        act.s = Scalar(1) - act.a.array().square();
        return act;
    }

private:
    Weights W1_;
    Vector b1_;
    Vector w2_;
    Scalar b2_;
};

using Net = PotentialNet<double>;

template <typename Scalar>
Scalar value(const PotentialNet<Scalar>& net, const Vec2<Scalar>& q) {
    const typename PotentialNet<Scalar>::Vector a = (net.W1() * q + net.b1()).array().tanh();
    return net.w2().dot(a) + net.b2();
}

/// grad_q V = W1^T diag(1 - tanh^2) w2.
template <typename Scalar>
Vec2<Scalar> input_gradient(const PotentialNet<Scalar>& net, const Vec2<Scalar>& q) {
    const auto act = net.activations(q);
    return net.W1().transpose() * (act.s.array() * net.w2().array()).matrix();
}

/// d^2 V / dq^2 = W1^T diag(-2 a (1 - a^2) w2) W1; symmetric by construction.
template <typename Scalar>
Mat2<Scalar> input_hessian(const PotentialNet<Scalar>& net, const Vec2<Scalar>& q) {
    const auto act = net.activations(q);
    const typename PotentialNet<Scalar>::Vector curvature =
        (Scalar(-2) * act.a.array() * act.s.array() * net.w2().array()).matrix();
    const auto& W1 = net.W1();
    Mat2<Scalar> H;
    H(0, 0) = (curvature.array() * W1.col(0).array().square()).sum();
    H(1, 1) = (curvature.array() * W1.col(1).array().square()).sum();
    H(0, 1) = (curvature.array() * W1.col(0).array() * W1.col(1).array()).sum();
    H(1, 0) = H(0, 1);
    return H;
}

/// Vector-Jacobian product of (V, grad_q V) with respect to the flat
/// parameters: cotangent_value * dV/dtheta + cotangent_grad^T d(grad_q V)/dtheta.
template <typename Scalar>
typename PotentialNet<Scalar>::Vector parameter_jacobian_products(const PotentialNet<Scalar>& net,
                                                                  const Vec2<Scalar>& q, Scalar cotangent_value,
                                                                  const Vec2<Scalar>& cotangent_grad) {
    using Vector = typename PotentialNet<Scalar>::Vector;
    const Eigen::Index h = net.hidden();
    const auto act = net.activations(q);
    const Vector ds = (Scalar(-2) * act.a.array() * act.s.array()).matrix();
    // Projection of each hidden unit's input row onto the gradient cotangent.
    const Vector proj = net.W1() * cotangent_grad;

    const Vector w2s = (net.w2().array() * act.s.array()).matrix();
    // Sensitivity of each hidden pre-activation.
    const Vector dz = (cotangent_value * w2s.array() + proj.array() * net.w2().array() * ds.array()).matrix();

    Vector out(4 * h + 1);
    for (Eigen::Index j = 0; j < h; ++j) {
        out(2 * j) = dz(j) * q(0) + w2s(j) * cotangent_grad(0);
        out(2 * j + 1) = dz(j) * q(1) + w2s(j) * cotangent_grad(1);
    }
    out.segment(2 * h, h) = dz;
    out.segment(3 * h, h) = (cotangent_value * act.a.array() + proj.array() * act.s.array()).matrix();
    out(4 * h) = cotangent_value;
    return out;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer, deterministic in seed.
Net make_potential_net(Eigen::Index hidden, std::uint64_t seed);

/// Text checkpoint; see README for the layout.
struct NetCheckpoint {
    Net net;
    std::uint64_t seed = 0;
    std::optional<double> period;
};

void save_checkpoint(const std::filesystem::path& path, const NetCheckpoint& checkpoint);
NetCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace modectl
