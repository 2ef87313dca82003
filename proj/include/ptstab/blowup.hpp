#pragma once

// Polynomially bounded blow-up functions in the variable xi = T / (T - t).
//
// Everything here is expressed in the xi domain internally: t in [0, T) maps
// onto xi in [1, inf). Time-domain entry points convert once, at the boundary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>
#include <nlohmann/json.hpp>

#include "ptstab/error.hpp"

namespace ptstab {

/// xi = T / (T - t). Throws TimeOutOfHorizon unless 0 <= t < T.
inline double xi_of(double t, double horizon) {
  if (!(t >= 0.0) || !(t < horizon)) {
    throw TimeOutOfHorizon("t = " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + ")");
  }
  return horizon / (horizon - t);
}

inline double time_of_xi(double xi, double horizon) { return horizon * (1.0 - 1.0 / xi); }

/// Finite polynomial sum_k c_k xi^k with nonnegative integer exponents.
class XiPolynomial {
 public:
  using Terms = std::map<int, double>;

  XiPolynomial(Terms terms, double horizon) : horizon_(horizon) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw DomainError("horizon must be positive and finite");
    }
    for (const auto& [k, c] : terms) {
      if (k < 0) throw DomainError("negative exponent " + std::to_string(k));
      if (!std::isfinite(c)) throw DomainError("non-finite coefficient");
      if (c != 0.0) terms_.emplace(k, c);
    }
  }

  static XiPolynomial constant(double c, double horizon) { return XiPolynomial({{0, c}}, horizon); }

  double horizon() const noexcept { return horizon_; }
  const Terms& terms() const noexcept { return terms_; }
  bool is_zero() const noexcept { return terms_.empty(); }

  /// -1 for the zero polynomial.
  int degree() const noexcept { return terms_.empty() ? -1 : terms_.rbegin()->first; }

  double coefficient(int k) const noexcept {
    auto it = terms_.find(k);
    return it == terms_.end() ? 0.0 : it->second;
  }

  bool has_nonnegative_coefficients() const noexcept {
    return std::all_of(terms_.begin(), terms_.end(), [](const auto& kv) { return kv.second >= 0.0; });
  }

  double at_xi(double xi) const noexcept {
    // terms are sorted by exponent, so each power builds on the previous one
    double acc = 0.0, power = 1.0;
    int at = 0;
    for (const auto& [k, c] : terms_) {
      for (; at < k; ++at) power *= xi;
      acc += c * power;
    }
    return acc;
  }

  double operator()(double t) const { return at_xi(xi_of(t, horizon_)); }

  XiPolynomial scaled(double s) const {
    Terms out;
    for (const auto& [k, c] : terms_) out.emplace(k, s * c);
    return XiPolynomial(std::move(out), horizon_);
  }

  friend bool operator==(const XiPolynomial&, const XiPolynomial&) = default;

 private:
  Terms terms_;
  double horizon_;
};

/// offset + p(xi): positive, nondecreasing on [0, T) and divergent as t -> T.
///
/// Coefficients and offset must be nonnegative and at least one term must
/// have exponent >= 1; that is the constructor-level divergence guarantee.
class BlowUpFunction {
 public:
  explicit BlowUpFunction(XiPolynomial poly, double offset = 0.0) : poly_(std::move(poly)), offset_(offset) {
    if (!(offset >= 0.0) || !std::isfinite(offset)) throw DomainError("offset must be finite and >= 0");
    if (!poly_.has_nonnegative_coefficients()) {
      throw DomainError("blow-up function coefficients must be nonnegative");
    }
    if (poly_.degree() < 1) throw DomainError("blow-up function needs a term with exponent >= 1");
  }

  static BlowUpFunction monomial(double c, int k, double horizon, double offset = 0.0) {
    return BlowUpFunction(XiPolynomial({{k, c}}, horizon), offset);
  }

  const XiPolynomial& poly() const noexcept { return poly_; }
  double offset() const noexcept { return offset_; }
  double horizon() const noexcept { return poly_.horizon(); }

  double at_xi(double xi) const noexcept { return offset_ + poly_.at_xi(xi); }
  double operator()(double t) const { return at_xi(xi_of(t, horizon())); }
  double initial_value() const noexcept { return at_xi(1.0); }

  /// Coefficient-wise scaling, offset included.
  BlowUpFunction scaled(double s) const {
    if (!(s > 0.0)) throw DomainError("scale must be positive");
    return BlowUpFunction(poly_.scaled(s), s * offset_);
  }

  friend bool operator==(const BlowUpFunction&, const BlowUpFunction&) = default;

 private:
  XiPolynomial poly_;
  double offset_;
};

/// d/dt of each term: c_k xi^k -> (k c_k / T) xi^(k+1); the offset drops out.
inline XiPolynomial derivative(const BlowUpFunction& f) {
  const double T = f.horizon();
  XiPolynomial::Terms out;
  for (const auto& [k, c] : f.poly().terms()) {
    if (k > 0) out.emplace(k + 1, k * c / T);
  }
  return XiPolynomial(std::move(out), T);
}

namespace detail {

// Closed-form integral over [0, t] written in u = xi - 1 = t / (T - t), which
// keeps a(t) accurate for small t.
inline double integral_in_u(const XiPolynomial::Terms& terms, double offset, double T, double u) {
  const double log_xi = std::log1p(u);
  const double t = T * u / (1.0 + u);
  double acc = offset * t;
  for (const auto& [k, c] : terms) {
    if (k == 0) {
      acc += c * t;
    } else if (k == 1) {
      acc += c * T * log_xi;
    } else {
      acc += c / (k - 1) * T * std::expm1((k - 1) * log_xi);
    }
  }
  return acc;
}

}  // namespace detail

/// tau = a(t) = integral_0^t phi(s) ds in closed form, with its inverse.
///
/// a(t) = lin * t + L * log(xi) + sum_m d_m (xi^m - 1), where lin collects the
/// offset and any xi^0 term, L = c_1 T, and d_m = c_{m+1} T / m for m >= 1.
class TimeScaleTransform {
 public:
  explicit TimeScaleTransform(BlowUpFunction source) : source_(std::move(source)) {
    const double T = source_.horizon();
    linear_rate_ = source_.offset() + source_.poly().coefficient(0);
    log_coefficient_ = source_.poly().coefficient(1) * T;
    for (const auto& [k, c] : source_.poly().terms()) {
      if (k >= 2) powers_.emplace(k - 1, c * T / (k - 1));
    }
  }

  const BlowUpFunction& source() const noexcept { return source_; }
  double horizon() const noexcept { return source_.horizon(); }
  double linear_rate() const noexcept { return linear_rate_; }
  double log_coefficient() const noexcept { return log_coefficient_; }
  const std::map<int, double>& power_coefficients() const noexcept { return powers_; }

  double operator()(double t) const {
    const double T = horizon();
    xi_of(t, T);
    return in_u(t / (T - t));
  }

  double at_xi(double xi) const {
    if (!(xi >= 1.0)) throw DomainError("xi must be >= 1");
    return in_u(xi - 1.0);
  }

  /// a'(t), which is the source blow-up function.
  double rate(double t) const { return source_(t); }

  /// True when a single monomial c xi^k (k >= 1) with no linear part remains.
  bool is_single_monomial() const noexcept {
    return linear_rate_ == 0.0 && ((log_coefficient_ != 0.0) != (!powers_.empty())) && powers_.size() <= 1;
  }

  /// The unique t in [0, T) with a(t) = tau.
  double inverse(double tau) const {
    if (!(tau >= 0.0)) throw DomainError("tau must be >= 0");
    const double T = horizon();
    if (tau == 0.0) return 0.0;
    if (std::isinf(tau)) return std::nextafter(T, 0.0);
    if (is_single_monomial()) {
      if (log_coefficient_ != 0.0) {
        // t = T (1 - exp(-tau / (c T)))
        return -T * std::expm1(-tau / log_coefficient_);
      }
      // t = T (1 - (c T / ((k-1) tau + c T))^(1/(k-1))), with d = c T / (k-1).
      const auto [m, d] = *powers_.begin();
      return -T * std::expm1(-std::log1p(tau / d) / m);
    }
    auto residual = [&](double s) { return in_u(s / (1.0 - s)) - tau; };
    double hi = 0.5;
    while (residual(hi) < 0.0) {
      const double next = 0.5 * (1.0 + hi);
      if (next >= 1.0) return T * hi;
      hi = next;
    }
    std::uintmax_t max_iter = 200;
    auto [lo_s, hi_s] = boost::math::tools::toms748_solve(residual, 0.0, hi, -tau, residual(hi),
                                                          boost::math::tools::eps_tolerance<double>(48), max_iter);
    return T * 0.5 * (lo_s + hi_s);
  }

 private:
  double in_u(double u) const {
    const double log_xi = std::log1p(u);
    const double T = horizon();
    double acc = linear_rate_ * T * u / (1.0 + u) + log_coefficient_ * log_xi;
    for (const auto& [m, d] : powers_) acc += d * std::expm1(m * log_xi);
    return acc;
  }

  BlowUpFunction source_;
  double linear_rate_ = 0.0;
  double log_coefficient_ = 0.0;
  std::map<int, double> powers_;
};

inline TimeScaleTransform integral_transform(const BlowUpFunction& f) { return TimeScaleTransform(f); }

inline double inverse_transform(const TimeScaleTransform& a, double tau) { return a.inverse(tau); }

/// Certified p0 > 0 with phi(t) >= p0 xi^2 on [0, T): the coefficient mass at
/// exponents >= 2, since xi^k >= xi^2 for xi >= 1 and the rest is nonnegative.
inline double quadratic_floor(const BlowUpFunction& f) {
  double p0 = 0.0;
  for (const auto& [k, c] : f.poly().terms()) {
    if (k >= 2) p0 += c;
  }
  if (!(p0 > 0.0)) throw NotCertifiable("no term with exponent >= 2; phi has no xi^2 floor");
  return p0;
}

/// c * exp(-integral_{onset}^t phi) with phi >= p0 xi^2 certified.
class ExpEnvelope {
 public:
  ExpEnvelope(double scale, double onset, BlowUpFunction rate)
      : scale_(scale), onset_(onset), transform_(std::move(rate)) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("envelope scale must be positive");
    if (!(onset >= 0.0) || !(onset < horizon())) throw TimeOutOfHorizon("envelope onset outside [0, T)");
    floor_ = quadratic_floor(transform_.source());
    onset_integral_ = transform_(onset_);
  }

  double scale() const noexcept { return scale_; }
  double onset() const noexcept { return onset_; }
  const BlowUpFunction& rate() const noexcept { return transform_.source(); }
  const TimeScaleTransform& transform() const noexcept { return transform_; }
  double horizon() const noexcept { return transform_.horizon(); }
  double floor() const noexcept { return floor_; }

  /// T~1 = T / (T - onset).
  double onset_xi() const noexcept { return horizon() / (horizon() - onset_); }

  double log_value_at_xi(double xi) const { return std::log(scale_) - (transform_.at_xi(xi) - onset_integral_); }

  double log_value(double t) const {
    if (t < onset_) throw DomainError("envelope evaluated before its onset");
    return std::log(scale_) - (transform_(t) - onset_integral_);
  }

  double operator()(double t) const { return std::exp(log_value(t)); }

 private:
  double scale_;
  double onset_;
  TimeScaleTransform transform_;
  double floor_ = 0.0;
  double onset_integral_ = 0.0;
};

inline constexpr int kEnvelopeGridPoints = 10000;
inline constexpr double kEnvelopeGridMaxXi = 1e6;

/// Envelope for the product p2(xi) * q(t) where |q| <= env.
///
/// A constant p2 just rescales c. Otherwise the rate is halved and the onset
/// moves to the first point of a geometric xi grid after which
/// p2(xi) * c * exp(-1/2 integral phi) stays <= 1 for the rest of the grid.
inline ExpEnvelope product_limit_envelope(const XiPolynomial& p2, const ExpEnvelope& env) {
  if (!p2.has_nonnegative_coefficients()) throw DomainError("p2 must have nonnegative coefficients");
  if (p2.degree() <= 0) {
    const double k0 = p2.coefficient(0);
    if (k0 <= 0.0) return env;
    return ExpEnvelope(env.scale() * k0, env.onset(), env.rate());
  }

  const BlowUpFunction half = env.rate().scaled(0.5);
  const TimeScaleTransform half_a(half);
  const double xi_start = env.onset_xi();
  const double a_start = half_a.at_xi(xi_start);
  const double log_c = std::log(env.scale());

  auto log_bound = [&](double xi) { return std::log(p2.at_xi(xi)) + log_c - (half_a.at_xi(xi) - a_start); };

  const double ratio = std::pow(kEnvelopeGridMaxXi / xi_start, 1.0 / (kEnvelopeGridPoints - 1));
  int last_violation = -1;
  double xi = xi_start;
  std::vector<double> grid(kEnvelopeGridPoints);
  for (int i = 0; i < kEnvelopeGridPoints; ++i) {
    grid[i] = xi;
    if (log_bound(xi) > 0.0) last_violation = i;
    xi *= ratio;
  }
  if (last_violation == kEnvelopeGridPoints - 1) {
    throw NotCertifiable("product bound still exceeds 1 at xi = 1e6");
  }
  const double xi_on = grid[last_violation + 1];
  const double onset = std::max(env.onset(), time_of_xi(xi_on, env.horizon()));
  const double scale = std::exp(-(half_a.at_xi(xi_on) - a_start));
  return ExpEnvelope(scale, onset, half);
}

/// Closed-form integral_1^xi p2(rho) / rho^2 d rho next to the coarser
/// polynomial bound a0 + (a1 + a2) xi + sum_{i>=3} a_i / (i-1) xi^(i-1).
struct IntegralBound {
  double exact = 0.0;
  double polynomial_bound = 0.0;
};

inline IntegralBound integral_bound(const XiPolynomial& p2, double xi) {
  if (!(xi >= 1.0) || !std::isfinite(xi)) throw DomainError("xi must be >= 1");
  if (!p2.has_nonnegative_coefficients()) throw DomainError("p2 must have nonnegative coefficients");
  IntegralBound out;
  const double log_xi = std::log(xi);
  for (const auto& [i, a] : p2.terms()) {
    switch (i) {
      case 0:
        out.exact += a * (1.0 - 1.0 / xi);
        out.polynomial_bound += a;
        break;
      case 1:
        out.exact += a * log_xi;
        out.polynomial_bound += a * xi;
        break;
      case 2:
        out.exact += a * (xi - 1.0);
        out.polynomial_bound += a * xi;
        break;
      default:
        out.exact += a / (i - 1) * std::expm1((i - 1) * log_xi);
        out.polynomial_bound += a / (i - 1) * std::pow(xi, i - 1);
        break;
    }
  }
  return out;
}

struct AxiomReport {
  bool positive = false;
  bool monotone = false;
  bool finite = false;
  bool divergent = false;
  bool divergent_integral = false;

  bool all() const noexcept { return positive && monotone && finite && divergent && divergent_integral; }
};

/// Grid checks of the blow-up axioms on raw data (no constructor validation).
///
/// The grid is geometric in xi from 1 to 1e6, so it accumulates at T.
/// Divergence: phi(xi = 1e6) > 1e6 * phi(0). Divergent integral: a(xi = 1e6) > 1e3.
inline AxiomReport check_blowup_axioms(const XiPolynomial& poly, double offset, int grid) {
  if (grid < 2) throw DomainError("grid must have at least 2 points");
  constexpr double kMaxXi = 1e6;
  const double T = poly.horizon();
  auto value = [&](double xi) { return offset + poly.at_xi(xi); };

  AxiomReport r;
  r.positive = true;
  r.monotone = true;
  r.finite = true;
  double prev = value(1.0);
  for (int j = 0; j < grid; ++j) {
    const double xi = std::pow(kMaxXi, static_cast<double>(j) / (grid - 1));
    const double v = value(xi);
    r.finite = r.finite && std::isfinite(v);
    r.positive = r.positive && v > 0.0;
    r.monotone = r.monotone && v >= prev;
    prev = v;
  }
  const double phi0 = value(1.0);
  r.divergent = value(kMaxXi) > kMaxXi * phi0;
  r.divergent_integral = detail::integral_in_u(poly.terms(), offset, T, kMaxXi - 1.0) > 1e3;
  return r;
}

inline AxiomReport check_blowup_axioms(const BlowUpFunction& f, int grid) {
  return check_blowup_axioms(f.poly(), f.offset(), grid);
}

// --- JSON: {"T": number, "offset": number, "terms": [{"k": integer, "c": number}, ...]}

namespace detail {

inline int exponent_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_number_float()) {
    const double k = j.get<double>();
    if (std::floor(k) == k && std::abs(k) < 1e6) return static_cast<int>(k);
    throw DomainError("fractional exponent " + j.dump() + " is not supported");
  }
  throw DomainError("exponent must be an integer");
}

}  // namespace detail

inline XiPolynomial xi_polynomial_from_json(const nlohmann::json& j, double* offset_out = nullptr) {
  if (!j.is_object()) throw DomainError("blow-up function must be a JSON object");
  XiPolynomial::Terms terms;
  if (j.contains("terms")) {
    for (const auto& term : j.at("terms")) {
      const int k = detail::exponent_from_json(term.at("k"));
      terms[k] += term.at("c").get<double>();
    }
  }
  const double offset = j.value("offset", 0.0);
  if (offset_out != nullptr) {
    *offset_out = offset;
  } else if (offset != 0.0) {
    terms[0] += offset;
  }
  return XiPolynomial(std::move(terms), j.at("T").get<double>());
}

inline BlowUpFunction blowup_from_json(const nlohmann::json& j) {
  double offset = 0.0;
  XiPolynomial poly = xi_polynomial_from_json(j, &offset);
  return BlowUpFunction(std::move(poly), offset);
}

inline nlohmann::json to_json_value(const XiPolynomial& p, double offset = 0.0) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [k, c] : p.terms()) terms.push_back({{"k", k}, {"c", c}});
  return {{"T", p.horizon()}, {"offset", offset}, {"terms", terms}};
}

inline nlohmann::json to_json_value(const BlowUpFunction& f) { return to_json_value(f.poly(), f.offset()); }

}  // namespace ptstab
