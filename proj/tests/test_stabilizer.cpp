#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "modectl/dynamics.hpp"
#include "modectl/objectives.hpp"
#include "modectl/stabilizer.hpp"
#include "test_support.hpp"

namespace {

using namespace modectl;
using modectl::testing::random_net;
using modectl::testing::random_state;
using modectl::testing::uniform;

class StabilizerTest : public ::testing::Test {
protected:
    Pendulum P;
    Net net = random_net(17, 8, 0.5);
    ReferenceMode mode = make_reference_mode(P, net, Vector2(0.55, -1.2), 1.5, 400);
};

double power(const Pendulum& P, const PhaseState& x, const Vector2& u) {
    return u.dot(dynamics::mass_matrix_inverse(P, x.q) * x.p);
}

TEST_F(StabilizerTest, ReferenceSampling) {
    ASSERT_EQ(mode.size(), 400u);
    EXPECT_EQ(mode.search_end(), 200u);
    EXPECT_DOUBLE_EQ(mode.sample_dt(), 1.5 / 400);
    EXPECT_EQ(mode.q.front(), Vector2(0.55, -1.2));
    EXPECT_EQ(mode.p.front(), Vector2::Zero());
    EXPECT_NEAR(mode.energy, closed_loop_energy(P, net, PhaseState{mode.q[0], mode.p[0]}), 1e-14);
    EXPECT_THROW(make_reference_mode(P, net, Vector2::Zero(), 1.5, 401), std::invalid_argument);
}

TEST_F(StabilizerTest, NearestReferenceMatchesBruteForce) {
    std::mt19937_64 rng(1);
    for (int n = 0; n < 200; ++n) {
        const Vector2 q = modectl::testing::random_q(rng, 1.5);
        std::size_t best = 0;
        for (std::size_t j = 1; j <= mode.search_end(); ++j) {
            if ((q - mode.q[j]).norm() < (q - mode.q[best]).norm()) best = j;
        }
        const ReferencePoint r = nearest_reference(mode, q);
        EXPECT_EQ(r.index, best);
        EXPECT_DOUBLE_EQ(r.distance, (q - mode.q[best]).norm());
        EXPECT_DOUBLE_EQ(r.t_bar, best * mode.sample_dt());
    }
}

TEST(NearestReference, LowestIndexWinsTies) {
    ReferenceMode mode;
    mode.period = 1.0;
    mode.q = {Vector2(1, 0), Vector2(0, 1), Vector2(-1, 0), Vector2(0, 1), Vector2(0, 0), Vector2(0, 0)};
    mode.p.assign(6, Vector2::Zero());
    EXPECT_EQ(nearest_reference(mode, Vector2(0, 1)).index, 1u);
    EXPECT_EQ(nearest_reference(mode, Vector2(0, 0)).index, 0u);
}

TEST(NearestReference, OnlyTheFirstHalfIsSearched) {
    ReferenceMode mode;
    mode.period = 1.0;
    mode.q = {Vector2(0, 0), Vector2(1, 0), Vector2(2, 0), Vector2(5, 0)};
    mode.p.assign(4, Vector2::Zero());
    EXPECT_EQ(nearest_reference(mode, Vector2(5, 0)).index, 2u);
}

TEST(LocateOnReference, InterpolatesAlongSegments) {
    ReferenceMode mode;
    mode.period = 1.0;
    mode.q = {Vector2(0, 0), Vector2(1, 0), Vector2(2, 0), Vector2(3, 0), Vector2(9, 9), Vector2(9, 9)};
    mode.p = {Vector2(0, 0), Vector2(1, 0), Vector2(2, 0), Vector2(3, 0), Vector2(0, 0), Vector2(0, 0)};
    const ReferencePoint r = locate_on_reference(mode, Vector2(1.25, 0.5));
    EXPECT_NEAR(r.distance, 0.5, 1e-15);
    EXPECT_NEAR(r.t_bar, 1.25 / 6.0, 1e-15);
    EXPECT_NEAR((r.p_bar - Vector2(1.25, 0)).norm(), 0.0, 1e-15);

    // Overshoot at either end extends by at most one segment.
    EXPECT_NEAR(locate_on_reference(mode, Vector2(-0.5, 0)).t_bar, -0.5 / 6.0, 1e-15);
    EXPECT_NEAR(locate_on_reference(mode, Vector2(-3.0, 0)).t_bar, -1.0 / 6.0, 1e-15);
    EXPECT_NEAR(locate_on_reference(mode, Vector2(10.0, 0)).t_bar, 4.0 / 6.0, 1e-15);
}

TEST(MomentumSign, Examples) {
    const Pendulum P;
    const Vector2 q(0.3, -0.4), p_bar(1.0, -0.5);
    EXPECT_EQ(momentum_sign(P, q, p_bar, p_bar), 1);
    EXPECT_EQ(momentum_sign(P, q, -p_bar, p_bar), -1);
    EXPECT_EQ(momentum_sign(P, q, Vector2::Zero(), p_bar), 0);
    EXPECT_EQ(momentum_sign(P, q, p_bar, Vector2::Zero()), 0);
}

TEST(Projection, IdempotentAndAnnihilatesMomentum) {
    std::mt19937_64 rng(2);
    const Pendulum P;
    for (int n = 0; n < 200; ++n) {
        const PhaseState x = random_state(rng);
        const Vector2 X = modectl::testing::random_q(rng);
        const Vector2 once = project_momentum(P, x, X);
        EXPECT_LT((project_momentum(P, x, once) - once).norm(), 1e-12 * (1 + X.norm()));
        EXPECT_LT(project_momentum(P, x, x.p).norm(), 1e-12 * (1 + x.p.norm()));
    }
    EXPECT_EQ(project_momentum(P, PhaseState{Vector2(0.1, 0.2), Vector2(1e-7, 0)}, Vector2(1, 1)), Vector2::Zero());
}

TEST_F(StabilizerTest, ModeFeedbackInjectsNoPower) {
    std::mt19937_64 rng(3);
    for (int n = 0; n < 1000; ++n) {
        const PhaseState x = random_state(rng);
        const Vector2 p_bar = modectl::testing::random_q(rng, 5.0);
        const Vector2 u = mode_feedback(P, x, p_bar, n % 2 ? 1 : -1, 10.0);
        EXPECT_LT(std::abs(power(P, x, u)), 1e-12 * std::max(1.0, u.norm() * x.p.norm()));
    }
}

// With u_E alone, dE/dt = u_E^T qdot = alpha_E (E_bar - E) sqrt(p^T M^{-1} p).
TEST_F(StabilizerTest, EnergyFeedbackPower) {
    std::mt19937_64 rng(4);
    for (int n = 0; n < 500; ++n) {
        const PhaseState x = random_state(rng);
        const double E_bar = uniform(rng, -20, 20);
        const double alpha = uniform(rng, 0.1, 3);
        const Vector2 u = energy_feedback(P, net, x, E_bar, alpha);
        const double pp = x.p.dot(dynamics::mass_matrix_inverse(P, x.q) * x.p);
        const double expected = alpha * (E_bar - closed_loop_energy(P, net, x)) * std::sqrt(pp);
        EXPECT_NEAR(power(P, x, u), expected, 1e-10 * std::max(1.0, std::abs(expected)));
    }
    EXPECT_EQ(energy_feedback(P, net, PhaseState{Vector2(1, 1), Vector2::Zero()}, 5.0, 1.0), Vector2::Zero());
}

TEST_F(StabilizerTest, ZeroGainsGiveZeroFeedback) {
    std::mt19937_64 rng(5);
    const ControllerGains off{0.0, 0.0, 0.0};
    for (int n = 0; n < 50; ++n) {
        EXPECT_EQ(stabilizing_feedback(P, net, mode, random_state(rng, 1.5), off), Vector2::Zero());
    }
}

TEST_F(StabilizerTest, DampingInjectionIsDissipative) {
    std::mt19937_64 rng(6);
    const ControllerGains damp{0.0, 0.0, 0.7};
    for (int n = 0; n < 100; ++n) {
        const PhaseState x = random_state(rng, 1.5);
        const Vector2 qdot = dynamics::mass_matrix_inverse(P, x.q) * x.p;
        EXPECT_NEAR(power(P, x, stabilizing_feedback(P, net, mode, x, damp)), -0.7 * qdot.squaredNorm(), 1e-10);
    }
}

TEST_F(StabilizerTest, ModeErrorResolvesDirection) {
    const std::size_t j = 60;
    const PhaseState forward{mode.q[j], mode.p[j]};
    const PhaseState backward{mode.q[j], -mode.p[j]};
    EXPECT_LT(mode_error(P, mode, forward).norm(), 1e-12);
    EXPECT_LT(mode_error(P, mode, backward).norm(), 1e-12);
    const PhaseState off{mode.q[j] + Vector2(0.01, 0), 1.1 * mode.p[j]};
    EXPECT_GT(mode_error(P, mode, off).tail<2>().norm(), 0.09 * mode.p[j].norm());
}

// An exact eigenmode of the uncontrolled pendulum: start on the slow linear
// mode around the equilibrium and shoot on (q0_2, tau) until p(tau) = 0.
struct BrakeOrbit {
    Vector2 q0;
    double period;
};

BrakeOrbit brake_orbit(const Pendulum& P, double amplitude) {
    Vector2 eq(0.0, 0.3);
    for (int it = 0; it < 50; ++it) {
        eq -= dynamics::open_loop_potential_hessian(P, eq).ldlt().solve(dynamics::open_loop_potential_gradient(P, eq));
    }
    const Eigen::GeneralizedSelfAdjointEigenSolver<Matrix2> modes(dynamics::open_loop_potential_hessian(P, eq),
                                                                  dynamics::mass_matrix(P, eq));
    const Vector2 v = modes.eigenvectors().col(0).normalized();
    const double omega = std::sqrt(modes.eigenvalues()(0));

    const Net zero(1);
    const int steps = 2000;
    const double q01 = eq(0) + amplitude * v(0);
    auto rest = [&](const Vector2& z) {
        return Vector2(rollout(P, zero, Vector2(q01, z(0)), TimeGrid{z(1), steps}).states.back().p);
    };
    Vector2 z(eq(1) + amplitude * v(1), M_PI / omega);
    for (int it = 0; it < 30 && rest(z).norm() > 1e-13; ++it) {
        Matrix2 J;
        for (int j = 0; j < 2; ++j) {
            Vector2 zp = z;
            zp(j) += 1e-7;
            J.col(j) = (rest(zp) - rest(z)) / 1e-7;
        }
        z -= J.lu().solve(rest(z));
    }
    return {Vector2(q01, z(0)), 2 * z(1)};
}

TEST(OnTheMode, FeedbackVanishesAndTheModeIsInvariant) {
    const Pendulum P;
    const Net zero(1);
    const BrakeOrbit orbit = brake_orbit(P, 0.3);
    const ReferenceMode mode = make_reference_mode(P, zero, orbit.q0, orbit.period, 1000);
    const CertificationReport report = certify_eigenmode(rollout(P, zero, orbit.q0, TimeGrid{orbit.period, 150}));
    ASSERT_TRUE(report.is_eigenmode);

    const ControllerGains gains;
    for (std::size_t j = 0; j < mode.size(); j += 37) {
        const PhaseState x{mode.q[j], mode.p[j]};
        EXPECT_LT(stabilizing_feedback(P, zero, mode, x, gains).norm(), 1e-6) << "sample " << j;
    }

    const ClosedLoopResult r =
        simulate_closed_loop(P, zero, mode, PhaseState{orbit.q0, Vector2::Zero()}, gains, 2.0, 1e-3);
    // Feedback stays at round-off, so the controlled run is the free flow.
    const Trajectory free =
        rollout_controlled(P, zero, PhaseState{orbit.q0, Vector2::Zero()}, 2.0 * orbit.period, 1e-3, nullptr);
    ASSERT_EQ(free.size(), r.trajectory.size());
    for (std::size_t i = 0; i < r.metrics.size(); ++i) {
        const auto& m = r.metrics[i];
        EXPECT_LT((r.trajectory.states[i].stacked() - free.states[i].stacked()).norm(), 1e-6);
        EXPECT_LT(m.feedback.norm(), 1e-5);
        EXPECT_LT(m.energy_error, 1e-9);
        EXPECT_LT(m.q_distance, 1e-6);
        // Near the turning points q moves quadratically in t, so t_bar and
        // with it p_bar(t_bar) are poorly conditioned there.
        EXPECT_LT(m.p_distance, r.trajectory.states[i].p.norm() > 1.0 ? 1e-4 : 1e-2);
    }
}

TEST(Gains, Validation) {
    EXPECT_NO_THROW(ControllerGains{}.validate());
    EXPECT_THROW((ControllerGains{-1, 10, 0}.validate()), std::invalid_argument);
    EXPECT_THROW((ControllerGains{1, 10, std::numeric_limits<double>::infinity()}.validate()), std::invalid_argument);
}

TEST_F(StabilizerTest, ClosedLoopWithoutFeedbackConservesEnergy) {
    const PhaseState x0{Vector2(0.2, 0.2), Vector2(0.5, 0.5)};
    const ClosedLoopResult r = simulate_closed_loop(P, net, mode, x0, ControllerGains{0, 0, 0}, 1.0, 1e-3);
    ASSERT_EQ(r.metrics.size(), r.trajectory.size());
    for (const auto& m : r.metrics) {
        EXPECT_NEAR(m.energy_error, r.metrics.front().energy_error, 1e-9);
        EXPECT_EQ(m.feedback, Vector2::Zero());
    }
    EXPECT_NEAR(r.metrics.back().t, 1.5, 1e-12);
}

TEST_F(StabilizerTest, EnergyFeedbackDrivesToReferenceLevel) {
    const PhaseState x0{Vector2(0.2, 0.2), Vector2(2.0, 1.0)};
    const ClosedLoopResult r = simulate_closed_loop(P, net, mode, x0, ControllerGains{1.0, 0.0, 0.0}, 3.0, 1e-3);
    EXPECT_LT(r.metrics.back().energy_error, 1e-2 * r.metrics.front().energy_error);
}

TEST_F(StabilizerTest, MetricsCsv) {
    const auto path = std::filesystem::temp_directory_path() / "modectl_test_metrics.csv";
    const ClosedLoopResult r =
        simulate_closed_loop(P, net, mode, PhaseState{Vector2(0.2, 0.2), Vector2(1, 1)}, ControllerGains{}, 0.1, 1e-2);
    write_metrics_csv(path, r);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,E_err,q_dist,p_dist,q1,q2,p1,p2,u1,u2");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, r.metrics.size());
}

TEST_F(StabilizerTest, MultipliersReportFourComponents) {
    const PhaseState x0{mode.q[50], mode.p[50]};
    const auto mult = cycle_multipliers(P, net, mode, ControllerGains{}, x0);
    ASSERT_EQ(mult.size(), 4u);
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(mult[i].component, i);
        if (mult[i].defined) {
            EXPECT_NEAR(mult[i].ratio, mult[i].numerator / mult[i].denominator, 1e-15);
        } else {
            EXPECT_TRUE(std::isnan(mult[i].ratio));
        }
    }
    MultiplierOptions bad;
    bad.fd_step = 0;
    EXPECT_THROW(cycle_multipliers(P, net, mode, ControllerGains{}, x0, bad), std::invalid_argument);
    EXPECT_THROW(converged_orbit_state(P, net, mode, ControllerGains{}, 1.0), std::invalid_argument);
}

}  // namespace
