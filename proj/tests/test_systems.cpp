#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "ptstab/systems.hpp"

using namespace ptstab;

namespace {

constexpr double kT = 5.0;
constexpr double kTbar = 5.05;
constexpr double kNormalFloor = 1e-280;

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// one feedback run shared by the trajectory-level tests
class FeedbackRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    preset_ = new Preset(make_preset("example2-paper", TimeHorizon(kT)));
    traj_ = new Trajectory(integrate(preset_->system, preset_->horizon, preset_->x0, preset_->options));
  }
  static void TearDownTestSuite() {
    delete traj_;
    delete preset_;
  }
  static Preset* preset_;
  static Trajectory* traj_;
};
Preset* FeedbackRun::preset_ = nullptr;
Trajectory* FeedbackRun::traj_ = nullptr;

}  // namespace

TEST(Helpers, IpowMatchesPow) {
  for (double x : {-1.7, -0.3, 0.0, 0.9, 2.5}) {
    for (unsigned n = 0; n <= 12; ++n) EXPECT_NEAR(detail::ipow(x, n), std::pow(x, n), 1e-14 * std::max(1.0, std::abs(std::pow(x, n))));
  }
}

TEST(Helpers, ProductAvoidsIntermediateOverflow) {
  EXPECT_DOUBLE_EQ(detail::product_smallest_first<4>({1e300, 1e300, 1e-300, 1e-300}), 1.0);
  EXPECT_DOUBLE_EQ(detail::product_smallest_first<4>({1e-300, 1e300, 1e-300, 1e300}), 1.0);
  EXPECT_DOUBLE_EQ(detail::product_smallest_first<3>({-2.0, 3.0, 0.5}), -3.0);
}

TEST(Helpers, Dominates) {
  const auto a = BlowUpFunction::monomial(1.0, 2, kTbar, 6.0);
  const auto b = BlowUpFunction::monomial(1.0, 3, kTbar, 6.0);
  EXPECT_TRUE(detail::dominates(b, a));
  EXPECT_FALSE(detail::dominates(a, b));
  // 3 xi^2 and xi^3 + 2 cross at xi = 1 + sqrt(3)
  const auto c = BlowUpFunction::monomial(3.0, 2, kTbar);
  const auto d = BlowUpFunction::monomial(1.0, 3, kTbar, 2.0);
  EXPECT_FALSE(detail::dominates(c, d));
  EXPECT_FALSE(detail::dominates(d, c));
}

TEST(Helpers, PhiAtMatchesDerivative) {
  const BlowUpFunction f(XiPolynomial({{0, 0.5}, {2, 1.0}, {3, 0.25}, {5, 2.0}}, kTbar), 6.0);
  for (double t : {0.0, 1.0, 3.3, 5.0}) {
    const auto p = detail::phi_at(f, t);
    EXPECT_LT(rel(p.v, f(t)), 1e-14);
    EXPECT_LT(rel(p.dv, derivative(f)(t)), 1e-14);
  }
  EXPECT_THROW(detail::phi_at(f, kTbar), TimeOutOfHorizon);
}

TEST(Cascade, Dynamics) {
  EXPECT_EQ(example1_dynamics(Vec{{0.0, 0.0}}, 2.0, kTbar), Vec::Zero(2));
  const Vec f = example1_dynamics(Vec{{1.0, 2.0}}, 0.0, kTbar);
  EXPECT_DOUBLE_EQ(f(0), -1.0);
  EXPECT_DOUBLE_EQ(f(1), 0.0);
  EXPECT_THROW(example1_dynamics(Vec{{1.0, 2.0}}, kTbar, kTbar), TimeOutOfHorizon);
}

TEST(Cascade, Phi3EnvelopeBoundsTrueCoefficient) {
  const auto env = example1_phi3_envelope(kTbar);
  for (double xi = 1.0; xi < 1e3; xi *= 1.07) {
    const double p2 = xi * xi * xi;
    EXPECT_LE(4.0 * (1 + p2 * p2) * (1 + p2 * p2) / (p2 * p2), env.at_xi(xi) * (1 + 1e-14));
  }
}

TEST(Cascade, ConvergesAndIsCertified) {
  const auto p = make_preset("example1", TimeHorizon(kT));
  const auto tr = integrate(p.system, p.horizon, p.x0, p.options);
  EXPECT_NEAR(tr.times.back(), kT - 5e-4, 1e-12);
  EXPECT_LT(std::abs(tr.states.back()(0)), 1e-3);
  EXPECT_LT(std::abs(tr.states.back()(1)), 1e-3);
  EXPECT_EQ(tr.column_names(), (std::vector<std::string>{"t", "x1", "x2", "V1", "V2", "env1"}));
  const auto cert = certify_pt_exp(tr.times, tr.signal("x1"), example1_phi1(kTbar), p.horizon);
  EXPECT_TRUE(cert.certified);
  for (const auto& ineq : p.inequalities) EXPECT_TRUE(lyapunov_residual(tr, p.system, ineq).satisfied) << ineq.v;
  // x1 solves xdot = -phi1 x exactly
  const auto a = integral_transform(example1_phi1(kTbar));
  for (std::size_t i = 0; i < tr.size(); i += 997) {
    const double exact = std::exp(-a(tr.times[i]));
    if (exact < kNormalFloor) break;
    EXPECT_LT(rel(tr.states[i](0), exact), 1e-6);
  }
}

TEST(Cascade, InterconnectionCertifiedAsT2) {
  const auto r = check_theorem_conditions(example1_interconnection(kTbar));
  EXPECT_EQ(r.theorem, TheoremId::T2);
  EXPECT_TRUE(r.certified);
}

TEST(Feedback, U1TermByTerm) {
  const auto p = Example2Params::reference(kTbar);
  EXPECT_EQ(example2_u1(0.0, 0.0, 1.0, p), 0.0);
  // x11 = x12 = 1, t = 0: phi1 = 7, phi1dot = 2 / Tbar
  const double phi = 7.0, dphi = 2.0 / kTbar;
  const double k11 = 0.25, k12 = 0.1, k13 = 0.5, c1 = 0.05;
  const double z12 = 1.0 + k11 * phi + k12 * phi;
  const double g = k11 + 9 * k12;
  const double expected[5] = {-k13 * z12 * phi, -1.0 / c1, -dphi * (k11 + k12), -phi * g,
                              -k12 * std::pow(c1, 3) * std::pow(z12, 3) * std::pow(phi, 5) * std::pow(g, 4)};
  const auto terms = example2_u1_terms(1.0, 1.0, 0.0, p);
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) {
    EXPECT_LT(rel(terms[i], expected[i]), 1e-14) << i;
    sum += expected[i];
  }
  EXPECT_LT(rel(example2_u1(1.0, 1.0, 0.0, p), sum), 1e-14);
}

TEST(Feedback, U2TermByTerm) {
  const auto p = Example2Params::reference(kTbar);
  EXPECT_EQ(example2_u2(0.0, 0.0, 1.0, p), 0.0);
  // phi2(0) = 7, phi2dot(0) = 3 / Tbar
  const double phi = 7.0, dphi = 3.0 / kTbar, k21 = 0.25, k22 = 0.5, c2 = 0.02;
  const double xb22 = 1.0 / phi, z22 = xb22 + k21;
  const double expected = -dphi * k21 + phi * (-k21 * phi * xb22 - phi / c2 - 0.5 * c2 * k21 * k21 * z22 - phi * k22 * z22);
  EXPECT_LT(rel(example2_u2(1.0, 1.0, 0.0, p), expected), 1e-14);
  EXPECT_THROW(example2_u2(1.0, 1.0, kTbar + 0.1, p), TimeOutOfHorizon);
}

TEST(Feedback, LyapunovAtUnitState) {
  const auto p = Example2Params::reference(kTbar);
  const auto zero = example2_lyapunov(Vec::Zero(4), 1.0, p);
  EXPECT_EQ(zero.V1, 0.0);
  EXPECT_EQ(zero.V2, 0.0);
  const auto L = example2_lyapunov(Vec::Ones(4), 0.0, p);
  EXPECT_LT(rel(L.V1, 0.25 + 0.025 * std::pow(1 + 7 * 0.35, 2)), 1e-14);
  EXPECT_LT(rel(L.V2, 0.25 + 0.01 * std::pow(1.0 / 7 + 0.25, 2)), 1e-14);
}

TEST(Feedback, DerivedGains) {
  const auto p = Example2Params::reference(kTbar);
  const auto g = derive_gains_example2(p, 7.0, 7.0);
  EXPECT_DOUBLE_EQ(g.a1, 1.0);
  EXPECT_DOUBLE_EQ(g.a2, 0.5);
  EXPECT_NEAR(g.b1, 0.608, 1e-3);
  EXPECT_NEAR(g.b2, 0.801, 1e-3);
  EXPECT_NEAR(g.a1a2(), 0.5, 1e-12);
  EXPECT_NEAR(g.b1b2(), 0.487, 1e-3);
  EXPECT_GT(g.a1a2(), g.b1b2());
  const auto same = derive_gains_example2(p);
  EXPECT_EQ(same.b1, g.b1);

  auto big = p;
  big.k13 = 1e9;
  EXPECT_DOUBLE_EQ(derive_gains_example2(big, 7.0, 7.0).a1, 1.0);
  const auto doubled = derive_gains_example2(p, 14.0, 7.0);
  EXPECT_NEAR(g.b1 / doubled.b1, 2.0 * std::cbrt(2.0), 1e-12);
}

TEST(Feedback, ParamsValidated) {
  auto p = Example2Params::reference(kTbar);
  p.c1 = 0.0;
  EXPECT_THROW(example2(p), DomainError);
  p = Example2Params::reference(kTbar);
  p.phi2 = BlowUpFunction::monomial(1.0, 1, kTbar);
  EXPECT_THROW(example2(p), NoQuadraticFloor);
}

TEST(Feedback, AnalyticGradientsMatchFiniteDifferences) {
  const auto sys = example2(Example2Params::reference(kTbar));
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1.2, 1.2), Ut(0.0, 4.5);
  for (int trial = 0; trial < 50; ++trial) {
    Vec x(4);
    for (int i = 0; i < 4; ++i) x(i) = U(rng);
    const double t = Ut(rng);
    for (const auto& L : sys.lyapunov) {
      const Vec grad = L.gradient(t, x);
      for (int i = 0; i < 4; ++i) {
        const double h = 1e-6;
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const double fd = (L.value(t, xp) - L.value(t, xm)) / (2 * h);
        EXPECT_NEAR(grad(i), fd, 1e-6 * std::max(1.0, std::abs(fd))) << L.name << " i=" << i;
      }
      const double h = 1e-7;
      const double fd_t = (L.value(t + h, x) - L.value(t - h, x)) / (2 * h);
      EXPECT_NEAR(L.partial_t(t, x), fd_t, 1e-5 * std::max(1.0, std::abs(fd_t))) << L.name;
    }
  }
}

TEST(Feedback, InterconnectionCertifiedAsT4) {
  const auto spec = example2_interconnection(Example2Params::reference(kTbar));
  const auto r = check_theorem_conditions(spec);
  EXPECT_EQ(r.theorem, TheoremId::T4);
  EXPECT_TRUE(r.certified);
  ASSERT_TRUE(r.witnesses.decay.has_value());
  // delta of [[-1, 0.608], [0.801, -0.5]]: largest root of l^2 + 1.5 l + (0.5 - b1 b2)
  const auto g = derive_gains_example2(Example2Params::reference(kTbar));
  const double alpha = (-1.5 + std::sqrt(2.25 - 4 * (0.5 - g.b1b2()))) / 2;
  EXPECT_NEAR(r.witnesses.decay->delta, -alpha, 1e-10);
}

TEST(Feedback, SoftPresetHasNoEnvelope) {
  const auto soft = Example2Params::soft(kTbar);
  const auto g = derive_gains_example2(soft);
  EXPECT_DOUBLE_EQ(g.a1, 0.4);
  EXPECT_DOUBLE_EQ(g.a2, 0.2);
  EXPECT_LT(g.a1a2(), g.b1b2());
  EXPECT_TRUE(example2(soft).envelopes.empty());
  EXPECT_EQ(example2(Example2Params::reference(kTbar)).envelopes.size(), 2u);
}

TEST_F(FeedbackRun, ConvergesWithBoundedInputs) {
  const auto& tr = *traj_;
  for (int i = 0; i < 4; ++i) EXPECT_LT(std::abs(tr.states.back()(i)), 1e-2) << i;
  for (const auto& m : terminal_metrics(tr)) {
    if (m.name == "u1" || m.name == "u2") {
      ASSERT_TRUE(m.bounded.has_value());
      EXPECT_TRUE(*m.bounded);
      EXPECT_LT(m.final_abs, 1e-2);
    }
  }
}

TEST_F(FeedbackRun, ResidualsNonpositive) {
  for (const auto& ineq : preset_->inequalities) {
    const auto r = lyapunov_residual(*traj_, preset_->system, ineq);
    EXPECT_TRUE(r.satisfied) << ineq.v << " first violation at " << r.first_violation.value_or(-1.0);
  }
}

TEST_F(FeedbackRun, ScaledStateIdentity) {
  const auto p = Example2Params::reference(kTbar);
  for (std::size_t i = 0; i < traj_->size(); i += 101) {
    const double phi2 = p.phi2(traj_->times[i]);
    const double x22 = traj_->states[i](3);
    const auto s = example2_scaled(traj_->states[i](2), x22, phi2, p.k21);
    if (std::abs(s.x22_bar) < kNormalFloor) continue;
    EXPECT_NEAR(s.x22_bar * phi2, x22, 4e-16 * std::abs(x22));
  }
}

TEST_F(FeedbackRun, EnvelopesDominate) {
  const auto V1 = traj_->signal("V1"), V2 = traj_->signal("V2");
  const auto e1 = traj_->signal("env1"), e2 = traj_->signal("env2");
  for (std::size_t i = 0; i < traj_->size(); ++i) {
    EXPECT_LE(V1[i], e1[i] * (1 + 1e-9));
    EXPECT_LE(V2[i], e2[i] * (1 + 1e-9));
  }
}

TEST(DoubleIntegrator, OriginAndHorizon) {
  const auto phi = BlowUpFunction::monomial(1.0, 2, kTbar);
  const auto r = remark2_double_integrator(Vec::Zero(2), 3.0, 1.0, phi);
  EXPECT_EQ(r.xdot, Vec::Zero(2));
  EXPECT_EQ(r.V, 0.0);
  EXPECT_EQ(r.u, 0.0);
  EXPECT_THROW(remark2_double_integrator(Vec::Ones(2), kTbar, 1.0, phi), TimeOutOfHorizon);
  EXPECT_THROW(remark2_double_integrator(Vec::Ones(2), 0.0, -1.0, phi), DomainError);
}

TEST(DoubleIntegrator, LyapunovDerivativeIsExact) {
  // Vdot = grad V . f + dV/dt, evaluated pointwise, equals -2 phi V
  const auto phi = BlowUpFunction::monomial(1.0, 2, kTbar);
  const auto sys = remark2(1.7, phi);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-2, 2), Ut(0, 4.9);
  for (int i = 0; i < 100; ++i) {
    const Vec x{{U(rng), U(rng)}};
    const double t = Ut(rng);
    const auto& L = sys.lyapunov[0];
    const double vdot = L.gradient(t, x).dot(sys.rhs(t, x)) + L.partial_t(t, x);
    EXPECT_NEAR(vdot, -2 * phi(t) * L.value(t, x), 1e-9 * std::max(1.0, std::abs(vdot)));
  }
}

TEST(DoubleIntegrator, RunMatchesGronwall) {
  const auto p = make_preset("remark2", TimeHorizon(kT));
  const auto tr = integrate(p.system, p.horizon, p.x0, p.options);
  const auto V = tr.signal("V"), env = tr.signal("env");
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (env[i] < kNormalFloor) break;
    EXPECT_LT(rel(V[i], env[i]), 1e-3) << "t=" << tr.times[i];
  }
  const auto r = lyapunov_residual(tr, p.system, p.inequalities[0]);
  EXPECT_TRUE(r.satisfied);
  EXPECT_LT(r.max_fd_relative_error, 1e-3);
}

TEST(DoubleIntegrator, PbarEigenvalueCollapses) {
  for (double c : {0.5, 1.0, 3.0}) {
    for (double phi : {0.0, 1.0, 10.0, 1e3}) {
      Eigen::Matrix2d P{{1 + c * phi * phi, c * phi}, {c * phi, c}};
      P *= 0.5;
      const double oracle = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(P).eigenvalues()(0);
      // the symmetric solver loses relative accuracy as lambda_min -> 0; det / trace does not
      const double tol = phi < 100 ? 1e-12 : 1e-6;
      EXPECT_NEAR(remark2_pbar_min_eigenvalue(c, phi), oracle, tol * std::max(oracle, 1e-12)) << c << " " << phi;
    }
    EXPECT_LT(remark2_pbar_min_eigenvalue(c, 1e3), remark2_pbar_min_eigenvalue(c, 10.0));
  }
}

TEST(Presets, EquilibriumPreserved) {
  for (const auto& name : preset_names()) {
    const auto p = make_preset(name, TimeHorizon(kT));
    for (double t : {0.0, 2.5, 4.99}) {
      const Vec f = p.system.rhs(t, Vec::Zero(p.x0.size()));
      EXPECT_EQ(f.norm(), 0.0) << name << " t=" << t;
    }
  }
}

TEST(Presets, DefaultsAndOverrides) {
  EXPECT_EQ(make_preset("example1", TimeHorizon(kT)).x0, (Vec{{1.0, 2.0}}));
  EXPECT_EQ(make_preset("example2-paper", TimeHorizon(kT)).x0, Vec::Ones(4));
  const auto p = make_preset("example2-paper", TimeHorizon(kT),
                             {{"x0", {0.5, 0, 0, 0}}, {"params", {{"k11", 0.3}}}, {"integrator", {{"eta", 0.01}}}});
  EXPECT_EQ(p.x0(0), 0.5);
  EXPECT_EQ(p.config.at("k11"), 0.3);
  EXPECT_EQ(p.options.eta, 0.01);
  EXPECT_EQ(p.config.at("blowup_horizon"), "Tbar");
  const auto r = make_preset("remark2", TimeHorizon(kT),
                             nlohmann::json::parse(R"({"params": {"c": 2.0, "phi": {"terms": [{"k": 3, "c": 1.0}]}}})"));
  EXPECT_EQ(r.config.at("c"), 2.0);
  EXPECT_DOUBLE_EQ(r.system.lyapunov[0].value(0.0, Vec{{1.0, 1.0}}), 0.5 + 1.0 * 4.0);

  EXPECT_THROW(make_preset("nope", TimeHorizon(kT)), DomainError);
  EXPECT_THROW(make_preset("example1", TimeHorizon(kT), {{"x0", {1.0}}}), DomainError);
  EXPECT_THROW(make_preset("example2-soft", TimeHorizon(kT), {{"params", {{"k99", 1.0}}}}), DomainError);
  EXPECT_THROW(make_preset("example1", TimeHorizon(kT), {{"integrator", {{"step", 1.0}}}}), DomainError);
}
