#include <gtest/gtest.h>

#include <cmath>

#include "dpflab/controllers.hpp"
#include "oracles.hpp"

using dpflab::Matrix;
namespace nm = dpflab::numerics;

namespace {

const double kGolden = (1.0 + std::sqrt(5.0)) / 2.0;

dpflab::StateSpace chain(std::size_t td, double a, double sw = 1.0, double sv = 1.0, bool full = true) {
    return dpflab::delay_chain_plant({td, a, sw, sv, true, full});
}

// Closed loop of plant + LTI controller, state [x; xi].
Matrix closed_loop(const dpflab::StateSpace& p, const dpflab::LtiRealization& k) {
    const std::size_t n = p.states(), nc = k.ac.rows();
    Matrix f(n + nc, n + nc);
    f.set_block(0, 0, p.a + p.b * k.dc * p.c);
    if (nc > 0) {
        f.set_block(0, n, p.b * k.cc);
        f.set_block(n, 0, k.bc * p.c);
        f.set_block(n, n, k.ac);
    }
    return f;
}

const std::vector<double> kGridA{-2, -1.5, -1, -0.5, -0.25, 0.25, 0.5, 1, 1.5, 2};
const std::vector<double> kGridSigma{0.1, 1, 10};

}  // namespace

TEST(StateFeedback, GoldenGainNoDpf) {
    const auto p = dpflab::scalar_plant(1.0, 1.0, 0.0);
    auto ctrl = dpflab::make_sf(p, Matrix{{1}}, Matrix{{1}});
    const auto& g = std::get<dpflab::StaticGainEngine>(ctrl.engine()).gain;
    EXPECT_NEAR(g(0, 0), -(kGolden - 1.0), 1e-10);
    EXPECT_TRUE(dpflab::extract_dpf(ctrl).empty());
    EXPECT_EQ(ctrl.wiring().size(), 1u);
    EXPECT_EQ(dpflab::report_signal_dims(ctrl), (dpflab::DimensionReport{1, 0}));
    EXPECT_NEAR(ctrl.step(Matrix{{2.0}})(0, 0), -2.0 * (kGolden - 1.0), 1e-10);
}

TEST(StateFeedback, ZeroPoleAndStableClosedLoop) {
    auto z = dpflab::make_sf(dpflab::scalar_plant(0.0, 1.0, 0.0), Matrix{{1}}, Matrix{{1}});
    EXPECT_EQ(std::get<dpflab::StaticGainEngine>(z.engine()).gain(0, 0), 0.0);
    EXPECT_TRUE(z.wiring().empty());

    auto h = dpflab::make_sf(dpflab::scalar_plant(0.5, 1.0, 0.0), Matrix{{1}}, Matrix{{1}});
    const double k = -std::get<dpflab::StaticGainEngine>(h.engine()).gain(0, 0);
    const double p = oracle::scalar_dare(0.5, 1, 1, 1);
    EXPECT_NEAR(k, 0.5 * p / (1.0 + p), 1e-10);
    EXPECT_LT(std::abs(0.5 - k), 1.0);
}

TEST(StateFeedback, RejectsNoisySensing) {
    try {
        dpflab::make_sf(dpflab::scalar_plant(1.0, 1.0, 0.5), Matrix{{1}}, Matrix{{1}});
        FAIL();
    } catch (const dpflab::PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("SF requires perfect sensing"), std::string::npos);
    }
}

TEST(StateFeedback, MultiStateDimensions) {
    auto p = dpflab::make_state_space(Matrix{{1.1, 0.2, 0}, {0, 0.9, 0.1}, {0.3, 0, 0.5}}, Matrix::identity(3),
                                      Matrix::identity(3), Matrix::identity(3), Matrix(3, 3));
    auto c = dpflab::make_sf(p, Matrix::identity(3), Matrix::identity(3));
    EXPECT_EQ(dpflab::report_signal_dims(c), (dpflab::DimensionReport{3, 0}));
}

TEST(FullControl, DelayChainGolden) {
    auto ctrl = dpflab::make_fc(chain(1, 1.0));
    const auto& g = std::get<dpflab::StaticGainEngine>(ctrl.engine()).gain;
    EXPECT_NEAR(-g(0, 0), kGolden - 1.0, 1e-9);
    EXPECT_NEAR(-g(1, 0), kGolden - 1.0, 1e-9);
    const auto dpf = dpflab::extract_dpf(ctrl);
    ASSERT_EQ(dpf.size(), 1u);
    EXPECT_EQ(dpf[0].dest, "u2");
    EXPECT_EQ(dpflab::report_signal_dims(ctrl), (dpflab::DimensionReport{1, 1}));
}

TEST(FullControl, ZeroPoleOpenLoop) {
    auto ctrl = dpflab::make_fc(chain(1, 0.0));
    EXPECT_TRUE(std::get<dpflab::StaticGainEngine>(ctrl.engine()).gain.all_zero());
    EXPECT_TRUE(dpflab::extract_dpf(ctrl).empty());
}

TEST(FullControl, NoDelayNoDpf) {
    for (double sv : {0.1, 1.0, 5.0}) {
        auto ctrl = dpflab::make_fc(chain(0, 1.2, 1.0, sv));
        EXPECT_TRUE(dpflab::extract_dpf(ctrl).empty());
        EXPECT_EQ(dpflab::report_signal_dims(ctrl).feedback_dim, 0u);
    }
}

TEST(FullControl, DimensionsFollowDelay) {
    for (std::size_t td = 1; td <= 5; ++td) {
        auto ctrl = dpflab::make_fc(chain(td, 1.0));
        EXPECT_EQ(dpflab::report_signal_dims(ctrl), (dpflab::DimensionReport{1, td})) << td;
        EXPECT_EQ(dpflab::extract_dpf(ctrl).size(), td);
    }
}

TEST(FullControl, TwoStepDpfEdges) {
    auto ctrl = dpflab::make_fc(chain(2, 1.0));
    const auto dpf = dpflab::extract_dpf(ctrl);
    ASSERT_EQ(dpf.size(), 2u);
    EXPECT_EQ(dpf[0].label, "l2");
    EXPECT_EQ(dpf[1].label, "l3");
}

TEST(FullControl, RequiresFullActuation) {
    EXPECT_THROW(dpflab::make_fc(chain(1, 1.0, 1, 1, false)), dpflab::PreconditionError);
}

TEST(FullControl, DpfPresentWhenDisturbed) {
    for (std::size_t td = 1; td <= 4; ++td)
        for (double a : kGridA) {
            auto ctrl = dpflab::make_fc(chain(td, a, 1.0, 1.0));
            EXPECT_FALSE(dpflab::extract_dpf(ctrl).empty()) << td << " " << a;
        }
}

TEST(OutputFeedback, ScalarGoldenAndSeparation) {
    const auto p = dpflab::scalar_plant(1.0, 1.0, 1.0);
    auto ctrl = dpflab::make_of(p, Matrix{{1}}, Matrix{{1}}, p.w, p.v);
    const auto& e = std::get<dpflab::ObserverEngine>(ctrl.engine());
    EXPECT_NEAR(e.k(0, 0), kGolden - 1.0, 1e-10);
    EXPECT_NEAR(e.l(0, 0), kGolden - 1.0, 1e-10);
    const Matrix f = closed_loop(p, ctrl.lti());
    const double rho = nm::spectral_radius(f);
    EXPECT_LT(rho, 1.0);
    const double sep = std::max(nm::spectral_radius(p.a - p.b * e.k), nm::spectral_radius(p.a - e.l * p.c));
    EXPECT_NEAR(rho, sep, 1e-9);
}

TEST(OutputFeedback, SeparationOnDelayChains) {
    for (std::size_t td = 0; td <= 3; ++td)
        for (double a : {-1.5, 0.5, 1.0, 2.0}) {
            const auto p = chain(td, a, 1.0, 1.0, false);
            const auto w = dpflab::default_weights(p);
            auto ctrl = dpflab::make_of(p, w.q, w.r, p.w, p.v);
            const auto& e = std::get<dpflab::ObserverEngine>(ctrl.engine());
            const double sep = std::max(nm::spectral_radius(p.a - p.b * e.k), nm::spectral_radius(p.a - e.l * p.c));
            EXPECT_NEAR(nm::spectral_radius(closed_loop(p, ctrl.lti())), sep, 1e-9) << td << " " << a;
        }
}

TEST(OutputFeedback, WiringAndDimensions) {
    const auto p = chain(1, 1.0, 1.0, 1.0, false);  // n = 2, m = 1
    const auto w = dpflab::default_weights(p);
    auto lateral = dpflab::make_of(p, w.q, w.r, p.w, p.v);
    auto dpf = dpflab::extract_dpf(lateral);
    ASSERT_EQ(dpf.size(), 1u);
    EXPECT_EQ(dpf[0].label, "B");
    EXPECT_EQ(dpflab::report_signal_dims(lateral), (dpflab::DimensionReport{2, 3}));

    dpflab::OfOptions opts;
    opts.estimator_dynamics_as_feedback = true;
    auto feedback = dpflab::make_of(p, w.q, w.r, p.w, p.v, opts);
    EXPECT_EQ(dpflab::extract_dpf(feedback).size(), 2u);
    EXPECT_EQ(dpflab::report_signal_dims(feedback), (dpflab::DimensionReport{2, 3}));
}

TEST(OutputFeedback, NoActuationNoEfferenceEdge) {
    const Matrix k(1, 1), l{{0.5}};
    auto p = dpflab::make_state_space(Matrix{{0.5}}, Matrix{{0.0}}, Matrix{{1}}, Matrix{{1}}, Matrix{{1}});
    auto ctrl = dpflab::make_of_with_gains(p, k, l);
    for (const auto& e : ctrl.wiring()) EXPECT_NE(e.label, "B");
}

TEST(OutputFeedback, UndetectableIsSynthesisError) {
    auto p = dpflab::make_state_space(Matrix{{2.0, 0}, {0, 0.5}}, Matrix{{1}, {1}}, Matrix{{0, 1}},
                                      Matrix::identity(2), Matrix{{1}});
    EXPECT_THROW(dpflab::make_of(p, Matrix::identity(2), Matrix{{1}}, p.w, p.v), dpflab::SynthesisError);
}

TEST(OutputFeedback, StepMatchesLtiForm) {
    const auto p = chain(2, 1.3, 1.0, 0.5, false);
    const auto w = dpflab::default_weights(p);
    auto ctrl = dpflab::make_of(p, w.q, w.r, p.w, p.v);
    const auto lti = ctrl.lti();
    Matrix xi(lti.ac.rows(), 1);
    for (int t = 0; t < 20; ++t) {
        const Matrix y{{std::sin(0.7 * t) + 0.1 * t}};
        const Matrix u = ctrl.step(y);
        const Matrix u_ref = lti.cc * xi + lti.dc * y;
        xi = lti.ac * xi + lti.bc * y;
        EXPECT_LT(dpflab::max_abs_diff(u, u_ref), 1e-12);
    }
}

TEST(ScalarDelayGains, GoldenExample) {
    const auto g = dpflab::scalar_delay_gains(1, 1, 1);
    EXPECT_NEAR(g.p2, kGolden, 1e-12);
    EXPECT_NEAR(g.beta, -1.0, 1e-15);
    EXPECT_NEAR(g.l2, kGolden / (kGolden + 1.0), 1e-12);
    EXPECT_NEAR(g.l1, g.l2, 1e-15);
    EXPECT_FALSE(g.limit_case);
}

TEST(ScalarDelayGains, ZeroCases) {
    const auto s = dpflab::scalar_delay_gains(0.5, 0, 1);
    EXPECT_EQ(s.l1, 0.0);
    EXPECT_EQ(s.l2, 0.0);
    const auto z = dpflab::scalar_delay_gains(0.0, 1, 1);
    EXPECT_TRUE(z.limit_case);
    EXPECT_EQ(z.l1, 0.0);
    EXPECT_EQ(z.l2, 0.0);
    EXPECT_GT(dpflab::scalar_delay_gains(2, 0, 1).l2, 0.0);
    EXPECT_NEAR(dpflab::scalar_delay_gains(2, 0, 1).l2, 1.5, 1e-12);  // (a^2 - 1) / a
    EXPECT_THROW(dpflab::scalar_delay_gains(1, 0, 0), dpflab::InputError);
}

TEST(ScalarDelayGains, AgreesWithFilterDareOnGrid) {
    for (double a : kGridA)
        for (double sw : kGridSigma)
            for (double sv : kGridSigma) {
                const auto g = dpflab::scalar_delay_gains(a, sw, sv);
                const auto p = chain(1, a, sw, sv);
                const auto sol = nm::solve_filter_dare(p.a, p.c, p.w, p.v);
                EXPECT_NEAR(g.l1, sol.gain(0, 0), 1e-8) << a << " " << sw << " " << sv;
                EXPECT_NEAR(g.l2, sol.gain(1, 0), 1e-8) << a << " " << sw << " " << sv;
                EXPECT_NEAR(g.p2, sol.p(0, 1), 1e-8 * std::max(1.0, std::abs(g.p2)));
            }
}

TEST(ScalarDelayGains, ZeroL2ImpliesZeroL1) {
    for (double a : kGridA)
        for (double sw : {0.0, 0.1, 1.0, 10.0})
            for (double sv : kGridSigma) {
                if (sw == 0.0 && std::abs(a) == 1.0) continue;  // no stabilizing filter exists
                const auto g = dpflab::scalar_delay_gains(a, sw, sv);
                if (std::abs(g.l2) < 1e-12) {
                    EXPECT_LT(std::abs(g.l1), 1e-12);
                }
            }
}

TEST(ScalarDelayGains, Monotonicity) {
    const std::vector<double> sws{0.0, 0.1, 1.0, 10.0}, svs{0.1, 1.0, 10.0};
    for (double a : kGridA) {
        for (double sv : svs) {
            double prev = -1.0;
            for (double sw : sws) {
                if (sw == 0.0 && std::abs(a) == 1.0) continue;
                const double l2 = std::abs(dpflab::scalar_delay_gains(a, sw, sv).l2);
                EXPECT_GE(l2, prev - 1e-12) << a << " " << sw << " " << sv;
                prev = l2;
            }
        }
        for (double sw : sws) {
            if (sw == 0.0 && std::abs(a) == 1.0) continue;
            double prev = 1e300;
            for (double sv : svs) {
                const double l2 = std::abs(dpflab::scalar_delay_gains(a, sw, sv).l2);
                EXPECT_LE(l2, prev + 1e-12) << a << " " << sw << " " << sv;
                prev = l2;
            }
        }
    }
}

TEST(Dot, ExportsEveryEdge) {
    auto ctrl = dpflab::make_fc(chain(2, 1.0));
    const std::string dot = dpflab::to_dot(ctrl, "fc");
    EXPECT_NE(dot.find("digraph fc"), std::string::npos);
    EXPECT_NE(dot.find("\"y\" -> \"u2\""), std::string::npos);
    EXPECT_NE(dot.find("class=\"feedback\""), std::string::npos);
}
