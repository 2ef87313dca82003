#pragma once

// Closed-loop examples: a cascade of scalar systems, a feedback pair under a
// backstepping and a high-gain-scaling controller, and a double integrator
// whose Lyapunov function is time-varying and only semidefinite in the limit.
//
// All blow-up functions here are parameterized by Tbar.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptstab/blowup.hpp"
#include "ptstab/decay.hpp"
#include "ptstab/error.hpp"
#include "ptstab/sim.hpp"

namespace ptstab {

namespace detail {

inline void require_floor(const BlowUpFunction& f) {
  try {
    quadratic_floor(f);
  } catch (const NotCertifiable& e) {
    throw NoQuadraticFloor(e.what());
  }
}

/// x^n by repeated squaring.
inline double ipow(double x, unsigned n) {
  double r = 1.0;
  while (n) {
    if (n & 1u) r *= x;
    x *= x;
    n >>= 1u;
  }
  return r;
}

/// Sorts by magnitude, then multiplies smallest, largest, next smallest, ...
/// so the running product stays near 1 instead of overflowing or underflowing.
template <std::size_t N>
double product_smallest_first(std::array<double, N> f) {
  std::sort(f.begin(), f.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  double r = 1.0;
  std::size_t lo = 0, hi = N;
  while (lo < hi) {
    r *= f[lo++];
    if (lo < hi) r *= f[--hi];
  }
  return r;
}

}  // namespace detail

// --- cascade

inline BlowUpFunction example1_phi1(double Tbar) { return BlowUpFunction::monomial(1.0, 2, Tbar); }
inline BlowUpFunction example1_phi2(double Tbar) { return BlowUpFunction::monomial(1.0, 3, Tbar); }

/// Polynomial envelope of 4 (1 + phi2^2)^2 / phi2^2 = 4 (xi^-6 + 2 + xi^6) <= 12 + 4 xi^6.
inline XiPolynomial example1_phi3_envelope(double Tbar) { return XiPolynomial({{0, 12.0}, {6, 4.0}}, Tbar); }

inline Vec example1_dynamics(const Vec& x, double t, const BlowUpFunction& phi1, const BlowUpFunction& phi2) {
  const double p1 = phi1(t);
  const double p2 = phi2(t);
  return Vec{{-p1 * x(0), -p2 * x(1) + (1.0 + p2 * p2) * x(0) * x(0) * x(0)}};
}

inline Vec example1_dynamics(const Vec& x, double t, double Tbar) {
  return example1_dynamics(x, t, example1_phi1(Tbar), example1_phi2(Tbar));
}

inline ClosedLoop example1(const TimeHorizon& h) {
  const auto phi1 = example1_phi1(h.Tbar);
  const auto phi2 = example1_phi2(h.Tbar);
  ClosedLoop sys;
  sys.state_names = {"x1", "x2"};
  sys.rhs = [phi1, phi2](double t, const Vec& x) { return example1_dynamics(x, t, phi1, phi2); };
  sys.lyapunov.push_back({"V1", [](double, const Vec& x) { return 0.5 * x(0) * x(0); },
                          [](double, const Vec& x) { return Vec{{x(0), 0.0}}; }, {}});
  sys.lyapunov.push_back({"V2", [](double, const Vec& x) { return 0.5 * x(1) * x(1); },
                          [](double, const Vec& x) { return Vec{{0.0, x(1)}}; }, {}});
  sys.envelopes.push_back({"env1", [a = integral_transform(phi1)](double t, const Vec& x0) {
                             return gronwall_envelope(0.5 * x0(0) * x0(0), a, 2.0, t);
                           }});
  return sys;
}

/// V1dot = -2 phi1 V1 and V2dot <= phi2 [-V2 + phi3 V1^3].
inline std::vector<LyapunovInequality> example1_inequalities(double Tbar) {
  Drive d{"V1", 1.0, false, {0.0, 0.0, 0.0, 1.0}, example1_phi3_envelope(Tbar)};
  return {LyapunovInequality::form_b("V1", example1_phi1(Tbar), 2.0),
          LyapunovInequality::form_a("V2", example1_phi2(Tbar), 1.0, {d})};
}

inline InterconnectionSpec example1_interconnection(double Tbar) {
  InterconnectionSpec s;
  s.topology = Topology::Cascade2;
  s.systems = {{example1_phi1(Tbar), 2.0}, {example1_phi2(Tbar), 1.0}};
  s.coupling = CouplingSpec{{0.0, 0.0, 0.0, 1.0}, example1_phi3_envelope(Tbar)};
  return s;
}

// --- feedback pair

struct Example2Params {
  double k11 = 0.25, k12 = 0.1, k13 = 0.5, c1 = 0.05;
  double k21 = 0.25, k22 = 0.5, c2 = 0.02;
  BlowUpFunction phi1;
  BlowUpFunction phi2;

  static Example2Params reference(double Tbar) {
    return {0.25, 0.1, 0.5, 0.05, 0.25, 0.5, 0.02, BlowUpFunction::monomial(1.0, 2, Tbar, 6.0),
            BlowUpFunction::monomial(1.0, 3, Tbar, 6.0)};
  }
  /// Smaller k11, k21 and no offsets in the blow-up functions.
  static Example2Params soft(double Tbar) {
    return {0.1, 0.1, 0.5, 0.05, 0.1, 0.5, 0.02, BlowUpFunction::monomial(1.0, 2, Tbar),
            BlowUpFunction::monomial(1.0, 3, Tbar)};
  }

  void validate() const {
    for (double g : {k11, k12, k13, c1, k21, k22, c2}) {
      if (!(g > 0.0) || !std::isfinite(g)) throw DomainError("controller gains must be positive");
    }
    detail::require_floor(phi1);
    detail::require_floor(phi2);
  }
};

namespace detail {

struct Phi {
  double v, dv;
};

/// f(t) and f'(t) in one pass; the same numbers as f(t) and derivative(f)(t).
inline Phi phi_at(const BlowUpFunction& f, double t) {
  const double T = f.horizon();
  const double xi = xi_of(t, T);
  double v = f.offset(), dv = 0.0, power = 1.0;
  int at = 0;
  for (const auto& [k, c] : f.poly().terms()) {
    for (; at < k; ++at) power *= xi;
    v += c * power;
    dv += k * c / T * power * xi;
  }
  return {v, dv};
}

}  // namespace detail

/// The five terms of u1, in the order of the control law.
inline std::array<double, 5> example2_u1_terms(double x11, double x12, double t, const Example2Params& p) {
  using detail::ipow;
  const auto [phi, dphi] = detail::phi_at(p.phi1, t);
  const double x11_8 = ipow(x11, 8);
  const double x11_9 = x11_8 * x11;
  const double g = p.k11 + 9.0 * p.k12 * x11_8;
  const double z12 = x12 + p.k11 * phi * x11 + p.k12 * phi * x11_9;
  return {-p.k13 * z12 * phi,
          -ipow(x11, 3) / p.c1,
          -dphi * (p.k11 * x11 + p.k12 * x11_9),
          -phi * g * x12,
          -detail::product_smallest_first<4>({p.k12, ipow(p.c1 * z12, 3), ipow(phi, 5), ipow(g, 4)})};
}

inline double example2_u1(double x11, double x12, double t, const Example2Params& p) {
  const auto terms = example2_u1_terms(x11, x12, t, p);
  double u = 0.0;
  for (double v : terms) u += v;
  return u;
}

struct ScaledStates {
  double x21_bar, x22_bar, z22;
};

inline ScaledStates example2_scaled(double x21, double x22, double phi2, double k21) {
  const double x22_bar = x22 / phi2;
  return {x21, x22_bar, x22_bar + k21 * x21};
}

inline double example2_u2(double x21, double x22, double t, const Example2Params& p) {
  const auto [phi, dphi] = detail::phi_at(p.phi2, t);
  const auto s = example2_scaled(x21, x22, phi, p.k21);
  const double bracket = -p.k21 * phi * s.x22_bar - phi * detail::ipow(s.x21_bar, 3) / p.c2 -
                         0.5 * p.c2 * p.k21 * p.k21 * s.z22 - phi * p.k22 * s.z22;
  return -dphi * p.k21 * s.x21_bar + phi * bracket;
}

inline Vec example2_dynamics(const Vec& x, double t, const Example2Params& p) {
  const double u1 = example2_u1(x(0), x(1), t, p);
  const double u2 = example2_u2(x(2), x(3), t, p);
  return Vec{{x(1) + detail::ipow(x(2), 3), u1, x(3) + std::sin(x(2)) * x(0), u2}};
}

struct Example2Lyapunov {
  double V1 = 0.0, V2 = 0.0;
  double V1dot_bound = 0.0;  ///< right-hand side of the V1 inequality
  double V2dot_bound = 0.0;
};

inline Example2Lyapunov example2_lyapunov(const Vec& x, double t, const Example2Params& p) {
  using detail::ipow;
  const double phi1 = p.phi1(t);
  const double phi2 = p.phi2(t);
  const double x11 = x(0), x12 = x(1), x21 = x(2), x22 = x(3);
  const double z12 = x12 + p.k11 * phi1 * x11 + p.k12 * phi1 * ipow(x11, 9);
  const auto s = example2_scaled(x21, x22, phi2, p.k21);
  Example2Lyapunov out;
  out.V1 = 0.25 * ipow(x11, 4) + 0.5 * p.c1 * z12 * z12;
  out.V2 = 0.25 * ipow(s.x21_bar, 4) + 0.5 * p.c2 * s.z22 * s.z22;
  out.V1dot_bound = -p.k11 * phi1 * ipow(x11, 4) - p.k13 * phi1 * p.c1 * z12 * z12 +
                    1.5 / std::cbrt(4.0 * phi1 * p.k12) * ipow(x21, 4);
  out.V2dot_bound = -0.5 * phi2 * p.k21 * ipow(s.x21_bar, 4) - p.k22 * phi2 * p.c2 * s.z22 * s.z22 +
                    (27.0 / (4.0 * ipow(phi2 * p.k21, 3)) + 1.0 / (4.0 * phi2 * p.k21)) * ipow(x11, 4);
  return out;
}

struct DerivedGains {
  double a1, a2, b1, b2;
  double a1a2() const { return a1 * a2; }
  double b1b2() const { return b1 * b2; }
};

inline DerivedGains derive_gains_example2(const Example2Params& p, double phi10, double phi20) {
  return {std::min(4.0 * p.k11, 2.0 * p.k13), std::min(2.0 * p.k21, 2.0 * p.k22),
          6.0 / (phi10 * std::cbrt(4.0 * phi10 * p.k12)),
          27.0 / (phi20 * detail::ipow(phi20 * p.k21, 3)) + 1.0 / (phi20 * phi20 * p.k21)};
}

inline DerivedGains derive_gains_example2(const Example2Params& p) {
  return derive_gains_example2(p, p.phi1.initial_value(), p.phi2.initial_value());
}

inline InterconnectionSpec example2_interconnection(const Example2Params& p) {
  const auto g = derive_gains_example2(p);
  InterconnectionSpec s;
  s.topology = Topology::Feedback2;
  s.systems = {{p.phi1, g.a1}, {p.phi2, g.a2}};
  s.b = Eigen::Matrix2d{{0.0, g.b1}, {g.b2, 0.0}};
  return s;
}

namespace detail {

/// f >= g on xi >= 1, decided by shifting f - g to powers of u = xi - 1 and
/// checking the signs of the coefficients.
inline bool dominates(const BlowUpFunction& f, const BlowUpFunction& g) {
  const int deg = std::max(f.poly().degree(), g.poly().degree());
  std::vector<double> d(deg + 1, 0.0);
  for (const auto& [k, c] : f.poly().terms()) d[k] += c;
  for (const auto& [k, c] : g.poly().terms()) d[k] -= c;
  d[0] += f.offset() - g.offset();
  for (int j = 0; j <= deg; ++j) {
    double coeff = 0.0;
    double binom = 1.0;  // C(k, j), built up as k grows
    for (int k = j; k <= deg; ++k) {
      coeff += d[k] * binom;
      binom = binom * (k + 1) / (k + 1 - j);
    }
    if (coeff < 0.0) return false;
  }
  return true;
}

}  // namespace detail

/// V_i <= phi_i(t) exp(-delta integral_0^t min(phi1, phi2)) Vbar0 / q_i, with
/// Vbar0 = sum_i q_i V_i(0) / phi_i(0). Empty when delta(A) does not exist or
/// neither blow-up function dominates the other.
inline std::vector<NamedEnvelope> example2_envelopes(const Example2Params& p) {
  const auto g = derive_gains_example2(p);
  DecayRateResult dr;
  try {
    dr = weighted_decay_rate(GainMatrix::two_by_two(g.a1, g.a2, g.b1, g.b2));
  } catch (const NotDiagonallyStable&) {
    return {};
  }
  std::optional<BlowUpFunction> lower;
  if (detail::dominates(p.phi2, p.phi1)) {
    lower = p.phi1;
  } else if (detail::dominates(p.phi1, p.phi2)) {
    lower = p.phi2;
  } else {
    return {};
  }
  const auto a = integral_transform(*lower);
  const double q1 = dr.q(0), q2 = dr.q(1), delta = dr.delta;
  auto vbar0 = [p, q1, q2](const Vec& x0) {
    const auto L = example2_lyapunov(x0, 0.0, p);
    return q1 * L.V1 / p.phi1.initial_value() + q2 * L.V2 / p.phi2.initial_value();
  };
  auto env = [=](const BlowUpFunction& phi, double qi) {
    return [=](double t, const Vec& x0) { return phi(t) * std::exp(-delta * a(t)) * vbar0(x0) / qi; };
  };
  return {{"env1", env(p.phi1, q1)}, {"env2", env(p.phi2, q2)}};
}

inline ClosedLoop example2(const Example2Params& p) {
  p.validate();
  ClosedLoop sys;
  sys.state_names = {"x11", "x12", "x21", "x22"};
  sys.input_names = {"u1", "u2"};
  sys.rhs = [p](double t, const Vec& x) { return example2_dynamics(x, t, p); };
  sys.inputs = [p](double t, const Vec& x) {
    return Vec{{example2_u1(x(0), x(1), t, p), example2_u2(x(2), x(3), t, p)}};
  };
  using detail::ipow;
  // V1 = x11^4/4 + c1 z12^2/2, z12 = x12 + phi1 (k11 x11 + k12 x11^9)
  sys.lyapunov.push_back(
      {"V1", [p](double t, const Vec& x) { return example2_lyapunov(x, t, p).V1; },
       [p](double t, const Vec& x) {
         const double phi = p.phi1(t);
         const double z12 = x(1) + phi * (p.k11 * x(0) + p.k12 * ipow(x(0), 9));
         return Vec{{ipow(x(0), 3) + p.c1 * z12 * phi * (p.k11 + 9.0 * p.k12 * ipow(x(0), 8)), p.c1 * z12, 0.0, 0.0}};
       },
       [p](double t, const Vec& x) {
         const auto [phi, dphi] = detail::phi_at(p.phi1, t);
         const double inner = p.k11 * x(0) + p.k12 * ipow(x(0), 9);
         return p.c1 * (x(1) + phi * inner) * dphi * inner;
       }});
  // V2 = x21^4/4 + c2 z22^2/2, z22 = x22/phi2 + k21 x21
  sys.lyapunov.push_back(
      {"V2", [p](double t, const Vec& x) { return example2_lyapunov(x, t, p).V2; },
       [p](double t, const Vec& x) {
         const double phi = p.phi2(t);
         const double z22 = x(3) / phi + p.k21 * x(2);
         return Vec{{0.0, 0.0, ipow(x(2), 3) + p.c2 * z22 * p.k21, p.c2 * z22 / phi}};
       },
       [p](double t, const Vec& x) {
         const auto [phi, dphi] = detail::phi_at(p.phi2, t);
         const double z22 = x(3) / phi + p.k21 * x(2);
         return -p.c2 * z22 * x(3) * dphi / (phi * phi);
       }});
  sys.envelopes = example2_envelopes(p);
  return sys;
}

/// The state-level bounds on V1dot and V2dot, plus the coupled comparison form
/// Vi' <= phi_i [-a_i V_i + b_i V_j] with the derived gains.
inline std::vector<LyapunovInequality> example2_inequalities(const Example2Params& p) {
  const auto g = derive_gains_example2(p);
  return {
      LyapunovInequality::custom("V1", p.phi1, [p](double t, const Vec& x) { return example2_lyapunov(x, t, p).V1dot_bound; }),
      LyapunovInequality::custom("V2", p.phi2, [p](double t, const Vec& x) { return example2_lyapunov(x, t, p).V2dot_bound; }),
      LyapunovInequality::coupled("V1", p.phi1, g.a1, {Drive{"V2", g.b1}}),
      LyapunovInequality::coupled("V2", p.phi2, g.a2, {Drive{"V1", g.b2}}),
  };
}

// --- double integrator with a time-varying Lyapunov function

struct DoubleIntegratorResult {
  Vec xdot;
  double V = 0.0;
  double u = 0.0;
};

inline DoubleIntegratorResult remark2_double_integrator(const Vec& x, double t, double c, const BlowUpFunction& phi) {
  if (!(c > 0.0)) throw DomainError("c must be positive");
  const auto [p, dp] = detail::phi_at(phi, t);
  const double z2 = x(1) + p * x(0);
  const double u = -x(0) / c - p * x(1) - dp * x(0) - p * z2;
  return {Vec{{x(1), u}}, 0.5 * x(0) * x(0) + 0.5 * c * z2 * z2, u};
}

/// Smallest eigenvalue of Pbar = 1/2 [[1 + c phi^2, c phi], [c phi, c]];
/// computed as det / lambda_max so it keeps its digits as it goes to zero.
inline double remark2_pbar_min_eigenvalue(double c, double phi) {
  const double a = 0.5 * (1.0 + c * phi * phi), b = 0.5 * c * phi, d = 0.5 * c;
  const double half_tr = 0.5 * (a + d);
  const double lmax = half_tr + std::hypot(0.5 * (a - d), b);
  return (a * d - b * b) / lmax;
}

inline ClosedLoop remark2(double c, const BlowUpFunction& phi) {
  detail::require_floor(phi);
  ClosedLoop sys;
  sys.state_names = {"x1", "x2"};
  sys.input_names = {"u"};
  sys.rhs = [c, phi](double t, const Vec& x) { return remark2_double_integrator(x, t, c, phi).xdot; };
  sys.inputs = [c, phi](double t, const Vec& x) { return Vec{{remark2_double_integrator(x, t, c, phi).u}}; };
  sys.lyapunov.push_back({"V", [c, phi](double t, const Vec& x) { return remark2_double_integrator(x, t, c, phi).V; },
                          [c, phi](double t, const Vec& x) {
                            const double p = phi(t);
                            const double z2 = x(1) + p * x(0);
                            return Vec{{x(0) + c * z2 * p, c * z2}};
                          },
                          [c, phi](double t, const Vec& x) {
                            const auto [p, dp] = detail::phi_at(phi, t);
                            return c * (x(1) + p * x(0)) * dp * x(0);
                          }});
  sys.envelopes.push_back({"env", [c, phi, a = integral_transform(phi)](double t, const Vec& x0) {
                             return gronwall_envelope(remark2_double_integrator(x0, 0.0, c, phi).V, a, 2.0, t);
                           }});
  return sys;
}

// --- presets

struct Preset {
  std::string name;
  TimeHorizon horizon;
  ClosedLoop system;
  Vec x0;
  IntegratorOptions options;
  std::vector<LyapunovInequality> inequalities;
  nlohmann::json config;  ///< resolved parameters, echoed into run metadata
  nlohmann::json figure;  ///< which columns to plot against t
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"example1", "example2-paper", "example2-soft", "remark2"};
  return names;
}

namespace detail {

inline Vec x0_from(const nlohmann::json& cfg, const Vec& fallback) {
  if (!cfg.contains("x0")) return fallback;
  const auto v = cfg.at("x0").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != fallback.size()) {
    throw DomainError("x0 must have " + std::to_string(fallback.size()) + " entries");
  }
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline IntegratorOptions options_from(const nlohmann::json& cfg) {
  IntegratorOptions o;
  if (!cfg.contains("integrator")) return o;
  const auto& j = cfg.at("integrator");
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"h0", "kappa", "eta", "terminal_gap", "t_end", "max_steps"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw DomainError("integrator: unknown field '" + key + "'");
    }
  }
  if (j.contains("h0")) o.h0 = j.at("h0").get<double>();
  if (j.contains("kappa")) o.kappa = j.at("kappa").get<double>();
  if (j.contains("eta")) o.eta = j.at("eta").is_null() ? std::numeric_limits<double>::infinity() : j.at("eta").get<double>();
  if (j.contains("terminal_gap")) o.terminal_gap = j.at("terminal_gap").get<double>();
  if (j.contains("t_end")) o.t_end = j.at("t_end").get<double>();
  if (j.contains("max_steps")) o.max_steps = j.at("max_steps").get<long>();
  return o;
}

inline BlowUpFunction phi_override(const nlohmann::json& params, const char* key, const BlowUpFunction& fallback,
                                   double Tbar) {
  if (!params.contains(key)) return fallback;
  nlohmann::json j = params.at(key);
  if (!j.contains("T")) j["T"] = Tbar;
  return blowup_from_json(j);
}

}  // namespace detail

/// Builds a named preset. cfg may override "x0", "params" and "integrator".
inline Preset make_preset(const std::string& name, const TimeHorizon& horizon, const nlohmann::json& cfg = {}) {
  const nlohmann::json params = cfg.contains("params") ? cfg.at("params") : nlohmann::json::object();
  const double Tbar = horizon.Tbar;
  Preset out{name, horizon, {}, {}, detail::options_from(cfg), {}, {}, {}};
  if (name == "example1") {
    if (!params.empty()) throw DomainError("example1 takes no params");
    out.system = example1(horizon);
    out.x0 = detail::x0_from(cfg, Vec{{1.0, 2.0}});
    out.inequalities = example1_inequalities(Tbar);
    out.config = {{"phi1", to_json_value(example1_phi1(Tbar))},
                  {"phi2", to_json_value(example1_phi2(Tbar))},
                  {"phi3_envelope", to_json_value(example1_phi3_envelope(Tbar))}};
    out.figure = {{"title", "cascade interconnection"}, {"x", "t"}, {"panels", {{{"y", {"x1", "x2"}}}, {{"y", {"V1", "env1"}}, {"log_y", true}}}}};
  } else if (name == "example2-paper" || name == "example2-soft") {
    auto p = name == "example2-paper" ? Example2Params::reference(Tbar) : Example2Params::soft(Tbar);
    for (const auto& [key, value] : params.items()) {
      double* slot = key == "k11" ? &p.k11 : key == "k12" ? &p.k12 : key == "k13" ? &p.k13 : key == "c1" ? &p.c1
                   : key == "k21" ? &p.k21 : key == "k22" ? &p.k22 : key == "c2" ? &p.c2 : nullptr;
      if (slot) {
        *slot = value.get<double>();
      } else if (key != "phi1" && key != "phi2") {
        throw DomainError("params: unknown field '" + key + "'");
      }
    }
    p.phi1 = detail::phi_override(params, "phi1", p.phi1, Tbar);
    p.phi2 = detail::phi_override(params, "phi2", p.phi2, Tbar);
    if (p.phi1.horizon() != Tbar || p.phi2.horizon() != Tbar) throw DomainError("params: phi T must equal Tbar");
    out.system = example2(p);
    out.x0 = detail::x0_from(cfg, Vec{{1.0, 1.0, 1.0, 1.0}});
    out.inequalities = example2_inequalities(p);
    const auto g = derive_gains_example2(p);
    out.config = {{"k11", p.k11}, {"k12", p.k12}, {"k13", p.k13}, {"c1", p.c1}, {"k21", p.k21}, {"k22", p.k22},
                  {"c2", p.c2}, {"phi1", to_json_value(p.phi1)}, {"phi2", to_json_value(p.phi2)},
                  {"derived_gains", {{"a1", g.a1}, {"a2", g.a2}, {"b1", g.b1}, {"b2", g.b2}}}};
    nlohmann::json v_panel = {{"y", {"V1", "V2"}}, {"log_y", true}};
    if (!out.system.envelopes.empty()) v_panel["y"] = {"V1", "V2", "env1", "env2"};
    out.figure = {{"title", "feedback interconnection"}, {"x", "t"},
                  {"panels", {{{"y", {"x11", "x12", "x21", "x22"}}}, {{"y", {"u1", "u2"}}}, v_panel}}};
  } else if (name == "remark2") {
    double c = 1.0;
    for (const auto& [key, value] : params.items()) {
      if (key == "c") {
        c = value.get<double>();
      } else if (key != "phi") {
        throw DomainError("params: unknown field '" + key + "'");
      }
    }
    const auto phi = detail::phi_override(params, "phi", BlowUpFunction::monomial(1.0, 2, Tbar), Tbar);
    out.system = remark2(c, phi);
    out.x0 = detail::x0_from(cfg, Vec{{1.0, 1.0}});
    out.inequalities = {LyapunovInequality::form_b("V", phi, 2.0)};
    out.config = {{"c", c}, {"phi", to_json_value(phi)}};
    out.figure = {{"title", "double integrator"}, {"x", "t"},
                  {"panels", {{{"y", {"x1", "x2"}}}, {{"y", {"u"}}}, {{"y", {"V", "env"}}, {"log_y", true}}}}};
  } else {
    throw DomainError("unknown preset '" + name + "'");
  }
  out.config["x0"] = std::vector<double>(out.x0.data(), out.x0.data() + out.x0.size());
  out.config["blowup_horizon"] = "Tbar";
  return out;
}

}  // namespace ptstab
