#pragma once

// Terminal-time-aware integration of prescribed-time closed loops, Gronwall
// envelopes, along-trajectory Lyapunov residuals and exponential-convergence
// certificates.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ptstab/blowup.hpp"
#include "ptstab/error.hpp"

namespace ptstab {

/// Controllers run on Tbar, the simulation on [0, T - gap].
struct TimeHorizon {
  double T = 1.0;
  double Tbar = 1.01;

  TimeHorizon(double t, double tbar) : T(t), Tbar(tbar) {
    if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("T must be positive");
    if (!(Tbar > T) || !std::isfinite(Tbar)) throw DomainError("Tbar must exceed T");
  }
  explicit TimeHorizon(double t) : TimeHorizon(t, 1.01 * t) {}
};

using Vec = Eigen::VectorXd;

struct LyapunovFunction {
  std::string name;
  std::function<double(double, const Vec&)> value;
  std::function<Vec(double, const Vec&)> gradient;
  std::function<double(double, const Vec&)> partial_t;  ///< empty means dV/dt|_x = 0
};

/// t -> bound, given the initial state.
struct NamedEnvelope {
  std::string name;
  std::function<double(double, const Vec&)> value;
};

struct ClosedLoop {
  std::vector<std::string> state_names;
  std::function<Vec(double, const Vec&)> rhs;
  std::vector<std::string> input_names;
  std::function<Vec(double, const Vec&)> inputs;  ///< may be empty when there are no inputs
  std::vector<LyapunovFunction> lyapunov;
  std::vector<NamedEnvelope> envelopes;
};

struct IntegratorOptions {
  std::optional<double> h0;      ///< default 1e-3 T
  double kappa = 1e-2;           ///< h <= kappa (Tbar - t)
  double eta = 0.02;             ///< h <= eta / rho(J); infinity disables
  std::optional<double> terminal_gap;  ///< default 1e-4 T
  std::optional<double> t_end;   ///< stop earlier than T - gap
  long max_steps = 50'000'000;
};

struct IntegratorStats {
  long steps = 0;
  long rejected = 0;  ///< fixed-stage scheme: always 0
  double min_step = std::numeric_limits<double>::infinity();
  double max_step = 0.0;
  double final_time = 0.0;
  long jacobian_limited = 0;  ///< steps where eta / rho(J) was the binding bound
};

struct Trajectory {
  TimeHorizon horizon{1.0};
  IntegratorOptions options;
  IntegratorStats stats;
  std::vector<std::string> state_names, input_names, lyapunov_names, envelope_names;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<std::vector<double>> inputs, lyapunov, envelopes;

  std::size_t size() const noexcept { return times.size(); }

  std::vector<std::string> column_names() const {
    std::vector<std::string> out{"t"};
    for (const auto* group : {&state_names, &input_names, &lyapunov_names, &envelope_names}) {
      out.insert(out.end(), group->begin(), group->end());
    }
    return out;
  }

  bool has_signal(const std::string& name) const {
    const auto cols = column_names();
    return std::find(cols.begin(), cols.end(), name) != cols.end();
  }

  std::vector<double> signal(const std::string& name) const {
    if (name == "t") return times;
    std::vector<double> out(size());
    auto find_in = [&](const std::vector<std::string>& names) -> int {
      auto it = std::find(names.begin(), names.end(), name);
      return it == names.end() ? -1 : static_cast<int>(it - names.begin());
    };
    if (int i = find_in(state_names); i >= 0) {
      for (std::size_t s = 0; s < size(); ++s) out[s] = states[s](i);
      return out;
    }
    const std::pair<const std::vector<std::string>*, const std::vector<std::vector<double>>*> groups[] = {
        {&input_names, &inputs}, {&lyapunov_names, &lyapunov}, {&envelope_names, &envelopes}};
    for (const auto& [names, rows] : groups) {
      if (int i = find_in(*names); i >= 0) {
        for (std::size_t s = 0; s < size(); ++s) out[s] = (*rows)[s][i];
        return out;
      }
    }
    throw MissingSignal("trajectory has no signal '" + name + "'");
  }
};

namespace detail {

inline bool all_finite(const Vec& v) { return v.allFinite(); }

// Forward-difference Jacobian, delta_j = sqrt(eps) max(|x_j|, 1).
inline Eigen::MatrixXd jacobian(const std::function<Vec(double, const Vec&)>& f, double t, const Vec& x,
                                const Vec& fx) {
  const auto n = x.size();
  Eigen::MatrixXd J(n, n);
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  Vec xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = root_eps * std::max(std::abs(x(j)), 1.0);
    xp(j) = x(j) + d;
    J.col(j) = (f(t, xp) - fx) / d;
    xp(j) = x(j);
  }
  return J;
}

inline double spectral_radius(const Eigen::MatrixXd& J) {
  if (J.rows() == 1) return std::abs(J(0, 0));
  if (J.rows() == 2) {
    const double tr = J.trace();
    const double det = J.determinant();
    const double disc = 0.25 * tr * tr - det;
    if (disc < 0.0) return std::sqrt(std::abs(det));
    const double s = std::sqrt(disc);
    return std::max(std::abs(0.5 * tr + s), std::abs(0.5 * tr - s));
  }
  return Eigen::EigenSolver<Eigen::MatrixXd>(J, false).eigenvalues().cwiseAbs().maxCoeff();
}

inline void record(Trajectory& traj, const ClosedLoop& sys, double t, const Vec& x, const Vec& x0) {
  traj.times.push_back(t);
  traj.states.push_back(x);
  if (sys.inputs) {
    const Vec u = sys.inputs(t, x);
    if (!all_finite(u)) throw NonFiniteState("non-finite control input", t);
    traj.inputs.emplace_back(u.data(), u.data() + u.size());
  } else {
    traj.inputs.emplace_back();
  }
  std::vector<double> vs;
  for (const auto& V : sys.lyapunov) vs.push_back(V.value(t, x));
  traj.lyapunov.push_back(std::move(vs));
  std::vector<double> es;
  for (const auto& e : sys.envelopes) es.push_back(e.value(t, x0));
  traj.envelopes.push_back(std::move(es));
}

}  // namespace detail

/// Classic RK4 with h = min(h0, kappa (Tbar - t), eta / rho(J)), stopping at
/// T - terminal_gap (or t_end). Every accepted step is recorded.
inline Trajectory integrate(const ClosedLoop& sys, const TimeHorizon& horizon, const Vec& x0,
                            const IntegratorOptions& opts = {}) {
  if (x0.size() != static_cast<Eigen::Index>(sys.state_names.size())) {
    throw DomainError("initial state has the wrong dimension");
  }
  if (!detail::all_finite(x0)) throw NonFiniteState("non-finite initial state", 0.0);
  const double T = horizon.T;
  const double h0 = opts.h0.value_or(1e-3 * T);
  const double gap = opts.terminal_gap.value_or(1e-4 * T);
  if (!(h0 > 0.0) || !(opts.kappa > 0.0) || !(opts.eta > 0.0) || !(gap >= 0.0) || gap >= T) {
    throw DomainError("invalid integrator options");
  }
  double t_stop = T - gap;
  if (opts.t_end) {
    if (!(*opts.t_end > 0.0)) throw DomainError("t_end must be positive");
    t_stop = std::min(t_stop, *opts.t_end);
  }
  const bool use_jacobian = std::isfinite(opts.eta);

  Trajectory traj;
  traj.horizon = horizon;
  traj.options = opts;
  traj.options.h0 = h0;
  traj.options.terminal_gap = gap;
  traj.state_names = sys.state_names;
  traj.input_names = sys.input_names;
  for (const auto& V : sys.lyapunov) traj.lyapunov_names.push_back(V.name);
  for (const auto& e : sys.envelopes) traj.envelope_names.push_back(e.name);

  double t = 0.0;
  Vec x = x0;
  detail::record(traj, sys, t, x, x0);
  auto& st = traj.stats;
  while (t < t_stop) {
    if (st.steps >= opts.max_steps) throw ConvergenceFailure("integrator exceeded max_steps");
    const Vec k1 = sys.rhs(t, x);
    if (!detail::all_finite(k1)) throw NonFiniteState("non-finite vector field", t);
    double h = std::min(h0, opts.kappa * (horizon.Tbar - t));
    if (use_jacobian) {
      const double rho = detail::spectral_radius(detail::jacobian(sys.rhs, t, x, k1));
      if (rho > 0.0 && opts.eta / rho < h) {
        h = opts.eta / rho;
        ++st.jacobian_limited;
      }
    }
    if (!(h > 0.0)) throw NonFiniteState("step size collapsed", t);
    const bool last = t + h >= t_stop;
    if (last) h = t_stop - t;

    const Vec k2 = sys.rhs(t + 0.5 * h, x + 0.5 * h * k1);
    const Vec k3 = sys.rhs(t + 0.5 * h, x + 0.5 * h * k2);
    const Vec k4 = sys.rhs(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = last ? t_stop : t + h;
    if (!detail::all_finite(x)) throw NonFiniteState("state became non-finite", t);

    ++st.steps;
    st.min_step = std::min(st.min_step, h);
    st.max_step = std::max(st.max_step, h);
    detail::record(traj, sys, t, x, x0);
  }
  st.final_time = t;
  return traj;
}

/// V0 exp(-scale * a(t)) with a the closed-form integral of rate.
inline double gronwall_envelope(double V0, const TimeScaleTransform& a, double scale, double t) {
  if (!(V0 >= 0.0)) throw DomainError("V0 must be >= 0");
  return V0 == 0.0 ? 0.0 : V0 * std::exp(-scale * a(t));
}

inline double gronwall_envelope(double V0, const BlowUpFunction& rate, double scale, double t) {
  return gronwall_envelope(V0, integral_transform(rate), scale, t);
}

// --- Lyapunov inequalities

/// One term b * w(t)^p-polynomial * weight(t) on the right-hand side.
struct Drive {
  std::string signal;
  double gain = 1.0;
  bool absolute = false;                 ///< use |w|
  std::vector<double> p_coeffs{0.0, 1.0};  ///< p(w) = sum p_i w^i
  std::optional<XiPolynomial> weight;    ///< extra time factor, e.g. phi3
};

struct LyapunovInequality {
  enum class Form { A, B, Coupled, Custom };

  Form form = Form::B;
  std::string v;  ///< name of the Lyapunov function being checked
  BlowUpFunction rate;
  double a = 1.0;
  std::vector<Drive> drives;
  /// Custom form: full right-hand side as a function of (t, x).
  std::function<double(double, const Vec&)> custom_rhs;

  /// A: phi [-a V + sum drives]; Coupled is A with other V's as drives.
  static LyapunovInequality form_a(std::string v, BlowUpFunction rate, double a, std::vector<Drive> drives = {}) {
    return {Form::A, std::move(v), std::move(rate), a, std::move(drives), {}};
  }
  /// B: -a phi V + sum drives.
  static LyapunovInequality form_b(std::string v, BlowUpFunction rate, double a, std::vector<Drive> drives = {}) {
    return {Form::B, std::move(v), std::move(rate), a, std::move(drives), {}};
  }
  static LyapunovInequality coupled(std::string v, BlowUpFunction rate, double a, std::vector<Drive> drives) {
    return {Form::Coupled, std::move(v), std::move(rate), a, std::move(drives), {}};
  }
  /// The tolerance still scales with rate * V.
  static LyapunovInequality custom(std::string v, BlowUpFunction rate, std::function<double(double, const Vec&)> rhs) {
    return {Form::Custom, std::move(v), std::move(rate), 1.0, {}, std::move(rhs)};
  }
};

struct ResidualSeries {
  std::vector<double> times;
  std::vector<double> residual;      ///< Vdot - RHS
  std::vector<double> vdot;          ///< analytic, chain rule
  std::vector<double> vdot_fd;       ///< central differences of sampled V; NaN at the ends
  std::vector<double> tolerance;     ///< 1e-6 + 1e-3 phi V
  bool satisfied = true;
  std::optional<std::size_t> first_violation;
  double worst_scaled_residual = -std::numeric_limits<double>::infinity();  ///< max residual / tolerance
  double max_fd_relative_error = 0.0;  ///< over samples with |Vdot| > 1e-8
};

inline constexpr double kResidualAbsTol = 1e-6;
inline constexpr double kResidualRelTol = 1e-3;
inline constexpr double kFdCheckFloor = 1e-8;

/// Residual of ineq along traj, with V's time derivative from the stored
/// gradient, the vector field and the explicit time partial.
inline ResidualSeries lyapunov_residual(const Trajectory& traj, const ClosedLoop& sys, const LyapunovInequality& ineq) {
  const auto vit = std::find_if(sys.lyapunov.begin(), sys.lyapunov.end(),
                                [&](const LyapunovFunction& V) { return V.name == ineq.v; });
  if (vit == sys.lyapunov.end() || !traj.has_signal(ineq.v)) {
    throw MissingSignal("no Lyapunov function '" + ineq.v + "' recorded");
  }
  if (!(ineq.a > 0.0) && ineq.form != LyapunovInequality::Form::Custom) throw DomainError("a must be positive");
  if (ineq.form == LyapunovInequality::Form::Custom && !ineq.custom_rhs) throw DomainError("custom form needs a rhs");
  std::vector<std::vector<double>> drive_values;
  for (const auto& d : ineq.drives) drive_values.push_back(traj.signal(d.signal));  // throws MissingSignal
  const auto V = traj.signal(ineq.v);
  const auto& fn = *vit;

  ResidualSeries out;
  const std::size_t n = traj.size();
  out.times = traj.times;
  out.residual.resize(n);
  out.vdot.resize(n);
  out.vdot_fd.assign(n, std::numeric_limits<double>::quiet_NaN());
  out.tolerance.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = traj.times[i];
    const Vec& x = traj.states[i];
    double vdot = fn.gradient(t, x).dot(sys.rhs(t, x));
    if (fn.partial_t) vdot += fn.partial_t(t, x);
    const double phi = ineq.rate(t);

    double drive = 0.0;
    for (std::size_t k = 0; k < ineq.drives.size(); ++k) {
      const auto& d = ineq.drives[k];
      double w = drive_values[k][i];
      if (d.absolute) w = std::abs(w);
      double p = 0.0;
      for (std::size_t j = d.p_coeffs.size(); j-- > 0;) p = p * w + d.p_coeffs[j];
      drive += d.gain * p * (d.weight ? (*d.weight)(t) : 1.0);
    }
    double rhs = 0.0;
    switch (ineq.form) {
      case LyapunovInequality::Form::A:
      case LyapunovInequality::Form::Coupled: rhs = phi * (-ineq.a * V[i] + drive); break;
      case LyapunovInequality::Form::B: rhs = -ineq.a * phi * V[i] + drive; break;
      case LyapunovInequality::Form::Custom: rhs = ineq.custom_rhs(t, x); break;
    }
    out.vdot[i] = vdot;
    out.residual[i] = vdot - rhs;
    out.tolerance[i] = kResidualAbsTol + kResidualRelTol * phi * std::abs(V[i]);
    const double scaled = out.residual[i] / out.tolerance[i];
    out.worst_scaled_residual = std::max(out.worst_scaled_residual, scaled);
    if (!(out.residual[i] <= out.tolerance[i]) && !out.first_violation) {
      out.satisfied = false;
      out.first_violation = i;
    }
  }
  // three-point central differences on the nonuniform grid
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h1 = traj.times[i] - traj.times[i - 1];
    const double h2 = traj.times[i + 1] - traj.times[i];
    out.vdot_fd[i] = (-h2 / (h1 * (h1 + h2))) * V[i - 1] + ((h2 - h1) / (h1 * h2)) * V[i] +
                     (h1 / (h2 * (h1 + h2))) * V[i + 1];
    if (std::abs(out.vdot[i]) > kFdCheckFloor) {
      const double rel = std::abs(out.vdot_fd[i] - out.vdot[i]) / std::abs(out.vdot[i]);
      out.max_fd_relative_error = std::max(out.max_fd_relative_error, rel);
    }
  }
  return out;
}

// --- certification

inline constexpr double kCertifyMagnitudeFloor = 1e-300;
inline constexpr double kCertifyMaxScale = 1e12;

struct CertificateOptions {
  double onset = 0.0;
  bool search_onset = false;  ///< try onset in {0, 0.1 T, ..., 0.9 T} if the first fails
};

struct CertificateReport {
  bool certified = false;
  double log_scale = 0.0;  ///< log c
  double onset = 0.0;
  double onset_xi = 1.0;   ///< T~1
  double p0 = 0.0;
  BlowUpFunction rate;
  std::vector<double> times;
  std::vector<double> margin;  ///< log c - integral - log|q|; NaN before onset or below the floor
  std::optional<std::size_t> first_violation;

  double scale() const { return std::exp(log_scale); }
  std::optional<ExpEnvelope> envelope() const {
    if (!certified) return std::nullopt;
    return ExpEnvelope(scale(), onset, rate);
  }
};

namespace detail {

inline CertificateReport certify_at(const std::vector<double>& times, const std::vector<double>& values,
                                    const BlowUpFunction& rate, double p0, double onset) {
  const auto a = integral_transform(rate);
  const double a_on = a(onset);
  CertificateReport r{false, -std::numeric_limits<double>::infinity(), onset, rate.horizon() / (rate.horizon() - onset),
                      p0, rate, times, std::vector<double>(times.size(), std::numeric_limits<double>::quiet_NaN()),
                      std::nullopt};
  const double log_limit = std::log(kCertifyMaxScale);
  std::vector<double> lifted(times.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double q = std::abs(values[i]);
    if (times[i] < onset || !(q > kCertifyMagnitudeFloor)) continue;
    if (!std::isfinite(q)) {
      r.first_violation = r.first_violation.value_or(i);
      continue;
    }
    lifted[i] = std::log(q) + (a(times[i]) - a_on);
    if (lifted[i] > log_limit && !r.first_violation) r.first_violation = i;
    r.log_scale = std::max(r.log_scale, lifted[i]);
  }
  if (!std::isfinite(r.log_scale)) r.log_scale = 0.0;  // nothing above the floor: any c works
  bool nonnegative = true;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::isnan(lifted[i])) continue;
    r.margin[i] = r.log_scale - lifted[i];
    nonnegative = nonnegative && r.margin[i] >= 0.0;
  }
  r.certified = !r.first_violation && r.log_scale <= log_limit && nonnegative;
  return r;
}

}  // namespace detail

/// Fits |q(t)| <= c exp(-integral_{onset}^t phi) by taking the smallest c that
/// works at every sample. Certified iff that c is at most 1e12.
inline CertificateReport certify_pt_exp(const std::vector<double>& times, const std::vector<double>& values,
                                        const BlowUpFunction& rate, const TimeHorizon& horizon,
                                        const CertificateOptions& opts = {}) {
  double p0 = 0.0;
  try {
    p0 = quadratic_floor(rate);
  } catch (const NotCertifiable& e) {
    throw NoQuadraticFloor(e.what());
  }
  if (times.size() != values.size() || times.empty()) throw DomainError("times and values must be non-empty and aligned");
  const double limit = std::min(horizon.Tbar, rate.horizon());
  for (double t : times) {
    if (!(t >= 0.0) || !(t < limit)) throw TimeOutOfHorizon("sample time outside the rate's horizon");
  }
  auto best = detail::certify_at(times, values, rate, p0, opts.onset);
  if (best.certified || !opts.search_onset) return best;
  for (int k = 1; k <= 9; ++k) {
    const double onset = 0.1 * k * horizon.T;
    if (onset < opts.onset || onset >= rate.horizon()) continue;
    auto r = detail::certify_at(times, values, rate, p0, onset);
    if (r.certified) return r;
  }
  return best;
}

// --- terminal metrics

inline constexpr double kInputBound = 1e12;

struct SignalMetrics {
  std::string name;
  double final_abs = 0.0;
  double tail_max = 0.0;  ///< max |.| over the last 1% of [0, T]
  double max_abs = 0.0;
  std::optional<bool> bounded;  ///< inputs only: finite and below 1e12 everywhere
};

inline std::vector<SignalMetrics> terminal_metrics(const Trajectory& traj) {
  if (traj.size() == 0) throw DomainError("empty trajectory");
  const double tail_start = traj.times.back() - 0.01 * traj.horizon.T;
  std::vector<SignalMetrics> out;
  const auto cols = traj.column_names();
  for (std::size_t c = 1; c < cols.size(); ++c) {
    const auto s = traj.signal(cols[c]);
    SignalMetrics m{cols[c], std::abs(s.back()), 0.0, 0.0, std::nullopt};
    bool finite = true;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double v = std::abs(s[i]);
      finite = finite && std::isfinite(v);
      m.max_abs = std::max(m.max_abs, v);
      if (traj.times[i] >= tail_start) m.tail_max = std::max(m.tail_max, v);
    }
    if (std::find(traj.input_names.begin(), traj.input_names.end(), cols[c]) != traj.input_names.end()) {
      m.bounded = finite && m.max_abs <= kInputBound;
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline nlohmann::json to_json_value(const std::vector<SignalMetrics>& metrics) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& m : metrics) {
    nlohmann::json e = {{"final_abs", m.final_abs}, {"tail_max", m.tail_max}, {"max_abs", m.max_abs}};
    if (m.bounded) e["bounded"] = *m.bounded;
    j[m.name] = e;
  }
  return j;
}

// --- CSV / JSON export

/// Column-oriented table, as read back from CSV.
struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  const std::vector<double>& column(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw MissingSignal("no column '" + name + "'");
    return columns[it - names.begin()];
  }
};

/// Sample indices 0, stride, 2 stride, ... plus the last sample; stride 1 keeps all.
inline std::vector<std::size_t> thinned_indices(std::size_t n, std::size_t max_rows) {
  std::vector<std::size_t> idx;
  if (n == 0) return idx;
  const std::size_t stride = (max_rows == 0 || n <= max_rows) ? 1 : (n + max_rows - 2) / (max_rows - 1);
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  if (idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

inline void write_csv(std::ostream& os, const Trajectory& traj, std::size_t max_rows = 0) {
  const auto names = traj.column_names();
  for (std::size_t c = 0; c < names.size(); ++c) os << (c ? "," : "") << names[c];
  os << '\n';
  char buf[32];
  auto put = [&](double v, bool first) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    if (!first) os << ',';
    os << buf;
  };
  for (std::size_t i : thinned_indices(traj.size(), max_rows)) {
    put(traj.times[i], true);
    for (Eigen::Index k = 0; k < traj.states[i].size(); ++k) put(traj.states[i](k), false);
    for (double v : traj.inputs[i]) put(v, false);
    for (double v : traj.lyapunov[i]) put(v, false);
    for (double v : traj.envelopes[i]) put(v, false);
    os << '\n';
  }
}

inline Table read_csv(std::istream& is) {
  Table tab;
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw DomainError("CSV is empty");
  {
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) tab.names.push_back(name);
  }
  tab.columns.resize(tab.names.size());
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= tab.names.size()) throw DomainError("CSV row " + std::to_string(row) + " has too many fields");
      // strtod, unlike stod, accepts subnormals
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw DomainError("CSV row " + std::to_string(row) + ", column '" + tab.names[c] + "': bad number '" + cell + "'");
      }
      tab.columns[c].push_back(v);
      ++c;
    }
    if (c != tab.names.size()) throw DomainError("CSV row " + std::to_string(row) + " has too few fields");
  }
  return tab;
}

inline nlohmann::json meta_json(const Trajectory& traj) {
  const auto& o = traj.options;
  const auto& s = traj.stats;
  return {{"horizon", {{"T", traj.horizon.T}, {"Tbar", traj.horizon.Tbar}}},
          {"options",
           {{"h0", o.h0.value_or(1e-3 * traj.horizon.T)},
            {"kappa", o.kappa},
            {"eta", std::isfinite(o.eta) ? nlohmann::json(o.eta) : nlohmann::json(nullptr)},
            {"terminal_gap", o.terminal_gap.value_or(1e-4 * traj.horizon.T)},
            {"t_end", o.t_end ? nlohmann::json(*o.t_end) : nlohmann::json(nullptr)},
            {"scheme", "rk4"}}},
          {"stats",
           {{"steps", s.steps},
            {"rejected", s.rejected},
            {"min_step", s.min_step},
            {"max_step", s.max_step},
            {"final_time", s.final_time},
            {"jacobian_limited_steps", s.jacobian_limited},
            {"samples", traj.size()}}},
          {"columns", traj.column_names()}};
}

inline nlohmann::json to_json_value(const CertificateReport& r) {
  nlohmann::json margin = nlohmann::json::array();
  double min_margin = std::numeric_limits<double>::infinity();
  for (double m : r.margin) {
    margin.push_back(std::isnan(m) ? nlohmann::json(nullptr) : nlohmann::json(m));
    if (!std::isnan(m)) min_margin = std::min(min_margin, m);
  }
  nlohmann::json j = {{"verdict", r.certified ? "Certified" : "Violated"},
                      {"log_c", r.log_scale},
                      {"c", std::isfinite(r.scale()) ? nlohmann::json(r.scale()) : nlohmann::json(nullptr)},
                      {"onset", r.onset},
                      {"onset_xi", r.onset_xi},
                      {"p0", r.p0},
                      {"rate", to_json_value(r.rate)},
                      {"min_margin", std::isfinite(min_margin) ? nlohmann::json(min_margin) : nlohmann::json(nullptr)},
                      {"times", r.times},
                      {"margin", margin}};
  if (r.first_violation) {
    j["first_violation"] = {{"index", *r.first_violation}, {"t", r.times[*r.first_violation]}};
  }
  return j;
}

}  // namespace ptstab
