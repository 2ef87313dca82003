#pragma once

// Comparison-matrix certificates for interconnected prescribed-time systems.
//
// The gain matrix A has -a_i on the diagonal and couplings b_ij >= 0 off it,
// so it is Metzler: its dominant eigenvalue is real and carries a positive
// left eigenvector. The weighted decay rate is delta(A) = -alpha(A).

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ptstab/blowup.hpp"
#include "ptstab/error.hpp"

namespace ptstab {

class GainMatrix {
 public:
  /// `coupling` is n x n; its diagonal must be zero.
  GainMatrix(std::vector<double> decay, Eigen::MatrixXd coupling)
      : decay_(std::move(decay)), coupling_(std::move(coupling)) {
    const auto n = static_cast<Eigen::Index>(decay_.size());
    if (n < 1) throw DomainError("gain matrix needs at least one system");
    if (coupling_.rows() != n || coupling_.cols() != n) throw DomainError("coupling matrix must be n x n");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(decay_[i] > 0.0) || !std::isfinite(decay_[i])) throw DomainError("decay rates a_i must be positive");
      for (Eigen::Index j = 0; j < n; ++j) {
        const double b = coupling_(i, j);
        if (i == j) {
          if (b != 0.0) throw DomainError("coupling diagonal must be zero");
        } else if (!(b >= 0.0) || !std::isfinite(b)) {
          throw DomainError("couplings b_ij must be finite and >= 0");
        }
      }
    }
  }

  static GainMatrix two_by_two(double a1, double a2, double b1, double b2) {
    Eigen::Matrix2d b;
    b << 0.0, b1, b2, 0.0;
    return GainMatrix({a1, a2}, b);
  }

  /// From a full Metzler matrix with strictly negative diagonal.
  static GainMatrix from_matrix(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols()) throw DomainError("matrix must be square");
    std::vector<double> a(A.rows());
    Eigen::MatrixXd b = A;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      a[i] = -A(i, i);
      b(i, i) = 0.0;
    }
    return GainMatrix(std::move(a), std::move(b));
  }

  int size() const noexcept { return static_cast<int>(decay_.size()); }
  double decay(int i) const { return decay_.at(i); }
  const std::vector<double>& decays() const noexcept { return decay_; }
  double coupling(int i, int j) const { return coupling_(i, j); }
  const Eigen::MatrixXd& couplings() const noexcept { return coupling_; }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd A = coupling_;
    for (int i = 0; i < size(); ++i) A(i, i) = -decay_[i];
    return A;
  }

 private:
  std::vector<double> decay_;
  Eigen::MatrixXd coupling_;
};

struct PerronResult {
  double alpha = 0.0;          ///< dominant (real) eigenvalue of A
  Eigen::RowVectorXd left;     ///< strictly positive, sums to 1
  double bracket_width = 0.0;  ///< Collatz-Wielandt bracket width at exit
  int iterations = 0;
};

inline constexpr double kMetzlerRegularization = 1e-12;

/// Dominant eigenvalue and positive left eigenvector of a Metzler matrix.
///
/// Power iteration on A + eps + s I with s = max a_i + 1, where eps = 1e-12 is
/// added to every off-diagonal entry so the iterate stays strictly positive.
/// Each iterate yields a Collatz-Wielandt bracket min_i (qM)_i/q_i <= rho <=
/// max_i (qM)_i/q_i. Converged when successive Rayleigh quotients differ by
/// < 1e-12 and the bracket is narrower than 1e-12 * s. If plain power
/// iteration stalls (close subdominant eigenvalue), the same iterate is refined
/// by inverse iteration shifted just above the bracket, which keeps q > 0.
inline PerronResult spectral_abscissa_metzler(const GainMatrix& gains) {
  constexpr int kMaxIterations = 100000;
  constexpr int kPowerPhase = 2000;
  const int n = gains.size();
  const double shift = *std::max_element(gains.decays().begin(), gains.decays().end()) + 1.0;
  Eigen::MatrixXd M = gains.matrix();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) M(i, j) += (i == j) ? shift : kMetzlerRegularization;
  }
  const double target_width = 1e-12 * shift;

  Eigen::RowVectorXd q = Eigen::RowVectorXd::Constant(n, 1.0 / n);
  double rq_prev = std::numeric_limits<double>::quiet_NaN();
  auto bracket = [&](const Eigen::RowVectorXd& v, double& lo, double& hi) {
    const Eigen::RowVectorXd w = v * M;
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (int i = 0; i < n; ++i) {
      const double r = w(i) / v(i);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  };

  for (int it = 1; it <= kMaxIterations; ++it) {
    double lo = 0.0;
    double hi = 0.0;
    bracket(q, lo, hi);
    const double rq = (q * M).dot(q) / q.squaredNorm();
    if (std::abs(rq - rq_prev) < 1e-12 && hi - lo < target_width) {
      return {0.5 * (lo + hi) - shift, q, hi - lo, it};
    }
    rq_prev = rq;
    if (it <= kPowerPhase) {
      q = q * M;
    } else {
      // (mu I - M)^{-1} >= 0 for mu > rho(M), so positivity survives.
      const double mu = hi + std::max(hi - lo, 1e-9 * shift);
      const Eigen::MatrixXd shifted = mu * Eigen::MatrixXd::Identity(n, n) - M;
      q = shifted.transpose().partialPivLu().solve(q.transpose()).transpose();
    }
    if (!(q.minCoeff() > 0.0) || !q.allFinite()) throw ConvergenceFailure("Perron iterate lost positivity");
    q /= q.sum();
  }
  throw ConvergenceFailure("Perron iteration did not converge within 1e5 iterations");
}

/// All eigenvalues in the open left half plane.
inline bool is_hurwitz(const GainMatrix& gains) {
  const int n = gains.size();
  if (n == 1) return true;
  if (n == 2) {
    const double a1 = gains.decay(0);
    const double a2 = gains.decay(1);
    const double trace = -(a1 + a2);
    const double det = a1 * a2 - gains.coupling(0, 1) * gains.coupling(1, 0);
    return trace < 0.0 && det > 0.0;
  }
  return spectral_abscissa_metzler(gains).alpha < 0.0;
}

struct DecayRateResult {
  double delta = 0.0;
  Eigen::RowVectorXd q;  ///< strictly positive, sums to 1
  double slack = 0.0;    ///< q A <= -(delta - slack) q holds element-wise
};

/// delta(A) = sup { y : exists q > 0 with q A < -y q }, which equals -alpha(A)
/// for Metzler A. The witness is checked against the unregularized matrix.
inline DecayRateResult weighted_decay_rate(const GainMatrix& gains) {
  const PerronResult perron = spectral_abscissa_metzler(gains);
  if (perron.alpha >= 0.0) {
    throw NotDiagonallyStable("spectral abscissa " + std::to_string(perron.alpha) + " >= 0");
  }
  DecayRateResult out;
  out.delta = -perron.alpha;
  out.q = perron.left;
  const Eigen::RowVectorXd qA = out.q * gains.matrix();
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < gains.size(); ++i) worst = std::max(worst, qA(i) / out.q(i));
  out.slack = std::max(0.0, worst + out.delta);
  return out;
}

inline constexpr double kFeasibilityMinWeight = 1e-9;
inline constexpr double kFeasibilityMargin = 1e-12;

/// Is there q with sum q = 1, q_i >= 1e-9 and q (A + y I) <= -1e-12 q?
///
/// Decided by linear algebra rather than eigenvectors: with M = A + y I
/// Metzler, such q exists iff -M is a nonsingular M-matrix, in which case
/// q = 1^T (-M)^{-1} is strictly positive and q M = -1^T. Any candidate is
/// verified against the inequalities before it is returned.
inline std::optional<Eigen::RowVectorXd> bisection_feasibility(const GainMatrix& gains, double y) {
  if (!(y >= 0.0)) throw DomainError("y must be >= 0");
  const int n = gains.size();
  Eigen::MatrixXd M = gains.matrix();
  M.diagonal().array() += y;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu((-M).transpose());
  if (!lu.isInvertible()) return std::nullopt;
  Eigen::RowVectorXd q = lu.solve(Eigen::VectorXd::Ones(n)).transpose();
  if (!q.allFinite() || !(q.sum() > 0.0)) return std::nullopt;
  q /= q.sum();
  const Eigen::RowVectorXd qM = q * M;
  for (int i = 0; i < n; ++i) {
    if (!(q(i) >= kFeasibilityMinWeight)) return std::nullopt;
    if (!(qM(i) <= -kFeasibilityMargin * q(i))) return std::nullopt;
  }
  return q;
}

/// delta(A) by bisection on y over [0, min a_i] with bisection_feasibility.
inline double bisection_decay_rate(const GainMatrix& gains, double width = 1e-9) {
  if (!bisection_feasibility(gains, 0.0)) throw NotDiagonallyStable("y = 0 is infeasible");
  double lo = 0.0;
  double hi = *std::min_element(gains.decays().begin(), gains.decays().end());
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    (bisection_feasibility(gains, mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct DiagonalStability2x2 {
  bool stable = false;
  std::optional<double> gamma;  ///< P = diag(gamma^2, 1) when stable
};

/// -A Lyapunov diagonally stable for A = [[-a1, b1], [b2, -a2]] iff a1 a2 > b1 b2.
/// The witness gamma solves gamma^2 b1 + b2 < 2 gamma sqrt(a1 a2).
inline DiagonalStability2x2 diag_stability_2x2(double a1, double a2, double b1, double b2) {
  if (!(a1 > 0.0) || !(a2 > 0.0) || !(b1 >= 0.0) || !(b2 >= 0.0)) {
    throw DomainError("need a1, a2 > 0 and b1, b2 >= 0");
  }
  DiagonalStability2x2 out;
  out.stable = a1 * a2 > b1 * b2;
  if (!out.stable) return out;
  const double root = std::sqrt(a1 * a2);
  auto satisfies = [&](double g) { return g > 0.0 && g * g * b1 + b2 < 2.0 * g * root; };
  if (b1 > 0.0 && b2 > 0.0 && satisfies(std::sqrt(b2 / b1))) {
    out.gamma = std::sqrt(b2 / b1);
  } else if (b1 > 0.0) {
    // midpoint of the roots (root +- sqrt(a1 a2 - b1 b2)) / b1
    out.gamma = root / b1;
  } else {
    out.gamma = b2 / root + 1.0;
  }
  return out;
}

struct LyapunovSolution {
  Eigen::MatrixXd P;
  double lambda_min_P = 0.0;
  double lambda_max_P = 0.0;
  double lambda_min_Q = 0.0;
  double residual = 0.0;  ///< ||P A + A^T P + Q||_F

  /// lambda_min(Q) / lambda_max(P): V = v^T P v decays at least this fast.
  double decay_constant() const noexcept { return lambda_min_Q / lambda_max_P; }
};

/// Solves P A + A^T P = -Q through the Kronecker form
/// (A^T (x) I + I (x) A^T) vec(P) = -vec(Q), with iterative refinement.
inline LyapunovSolution lyapunov_solve(const GainMatrix& gains, const Eigen::MatrixXd& Q) {
  const int n = gains.size();
  if (Q.rows() != n || Q.cols() != n) throw DomainError("Q must be n x n");
  if (!Q.isApprox(Q.transpose(), 1e-12)) throw DomainError("Q must be symmetric");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> q_eig(Q);
  if (!(q_eig.eigenvalues().minCoeff() > 0.0)) throw DomainError("Q must be positive definite");
  if (!is_hurwitz(gains)) throw NotHurwitz("gain matrix is not Hurwitz");

  const Eigen::MatrixXd A = gains.matrix();
  const Eigen::MatrixXd At = A.transpose();
  const int nn = n * n;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nn, nn);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      // (A^T (x) I): block (i, j) is At(i, j) * I; (I (x) A^T): diagonal blocks At.
      K.block(i * n, j * n, n, n).diagonal().array() += At(i, j);
      if (i == j) K.block(i * n, i * n, n, n) += At;
    }
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Q.data(), nn);
  Eigen::VectorXd vecP = lu.solve(rhs);
  auto residual_of = [&](const Eigen::MatrixXd& P) { return (P * A + At * P + Q).norm(); };

  LyapunovSolution out;
  for (int pass = 0; pass < 3; ++pass) {
    Eigen::MatrixXd P = Eigen::Map<Eigen::MatrixXd>(vecP.data(), n, n);
    P = 0.5 * (P + P.transpose());
    out.P = P;
    out.residual = residual_of(P);
    if (out.residual <= 1e-12 * Q.norm()) break;
    vecP = Eigen::Map<Eigen::VectorXd>(P.data(), nn);
    vecP += lu.solve(rhs - K * vecP);
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> p_eig(out.P);
  out.lambda_min_P = p_eig.eigenvalues().minCoeff();
  out.lambda_max_P = p_eig.eigenvalues().maxCoeff();
  out.lambda_min_Q = q_eig.eigenvalues().minCoeff();
  return out;
}

// --- Interconnection specs and theorem dispatch

enum class Topology { Cascade2, Feedback2, FeedbackN };
enum class TheoremId { T1, T2, T3, T4, T5, T6 };

inline std::string to_string(TheoremId id) {
  static const char* names[] = {"T1", "T2", "T3", "T4", "T5", "T6"};
  return names[static_cast<int>(id)];
}

inline std::string to_string(Topology t) {
  switch (t) {
    case Topology::Cascade2: return "cascade2";
    case Topology::Feedback2: return "feedback2";
    case Topology::FeedbackN: return "feedbackN";
  }
  return "?";
}

struct SubsystemSpec {
  BlowUpFunction phi;
  double a = 0.0;
};

/// V2' <= phi2 [-a V2 + phi3(t) p(V1)], phi3 given by a polynomial envelope.
struct CouplingSpec {
  std::vector<double> p_coeffs;  ///< p(v) = sum_i p_coeffs[i] v^i
  XiPolynomial phi3_envelope;
};

struct InterconnectionSpec {
  Topology topology = Topology::Feedback2;
  std::vector<SubsystemSpec> systems;
  Eigen::MatrixXd b;  ///< n x n, b(i, j) couples V_j into V_i'; may be empty for T2
  std::optional<CouplingSpec> coupling;
  std::optional<TheoremId> theorem;  ///< overrides the default dispatch
};

struct Hypothesis {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct TheoremWitnesses {
  std::optional<double> c1, c2, kappa, gamma;
  std::optional<LyapunovSolution> lyapunov;
  std::optional<DecayRateResult> decay;
};

struct TheoremReport {
  TheoremId theorem = TheoremId::T1;
  std::vector<Hypothesis> hypotheses;
  bool certified = false;
  TheoremWitnesses witnesses;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline Hypothesis floor_hypothesis(const std::string& label, const BlowUpFunction& phi) {
  try {
    const double p0 = quadratic_floor(phi);
    return {label + " has a xi^2 floor", true, "p0 = " + fmt(p0)};
  } catch (const NotCertifiable& e) {
    return {label + " has a xi^2 floor", false, e.what()};
  }
}

inline Hypothesis positive_hypothesis(const std::string& label, double v) {
  return {label + " > 0", v > 0.0, label + " = " + fmt(v)};
}

inline Hypothesis shared_phi_hypothesis(const std::vector<SubsystemSpec>& systems) {
  const bool shared = std::all_of(systems.begin(), systems.end(),
                                  [&](const SubsystemSpec& s) { return s.phi == systems.front().phi; });
  return {"all subsystems share one blow-up function", shared, shared ? "identical" : "blow-up functions differ"};
}

inline Hypothesis product_hypothesis(double a1, double a2, double b1, double b2) {
  return {"a1 a2 > b1 b2", a1 * a2 > b1 * b2, "a1 a2 = " + fmt(a1 * a2) + ", b1 b2 = " + fmt(b1 * b2)};
}

inline void check_t1(const InterconnectionSpec& s, TheoremReport& r) {
  const double a1 = s.systems[0].a;
  const double a = s.systems[1].a;
  const double b = s.b(1, 0);
  r.hypotheses.push_back(shared_phi_hypothesis(s.systems));
  r.hypotheses.push_back(floor_hypothesis("phi", s.systems[0].phi));
  r.hypotheses.push_back(positive_hypothesis("a1", a1));
  r.hypotheses.push_back(positive_hypothesis("a", a));
  if (a1 > 0.0 && a > 0.0) {
    // V = c1 V1 + c2 V2 with c1 a1 > c2 b gives V' <= -kappa phi V.
    const double c2 = 1.0;
    const double c1 = 2.0 * b / a1 + 1.0;
    r.witnesses.c1 = c1;
    r.witnesses.c2 = c2;
    r.witnesses.kappa = std::min((c1 * a1 - c2 * b) / c1, a);
  }
}

inline void check_t2(const InterconnectionSpec& s, TheoremReport& r) {
  r.hypotheses.push_back(floor_hypothesis("phi1", s.systems[0].phi));
  r.hypotheses.push_back(floor_hypothesis("phi2", s.systems[1].phi));
  r.hypotheses.push_back({"phi2 polynomially bounded", true, "finite polynomial in xi"});
  r.hypotheses.push_back(positive_hypothesis("a1", s.systems[0].a));
  r.hypotheses.push_back(positive_hypothesis("a", s.systems[1].a));
  if (!s.coupling) {
    r.hypotheses.push_back({"coupling p(V1), phi3 supplied", false, "missing coupling"});
    return;
  }
  const auto& p = s.coupling->p_coeffs;
  const bool p_zero = p.empty() || p.front() == 0.0;
  r.hypotheses.push_back({"p(0) = 0", p_zero, p.empty() ? "p = 0" : "p(0) = " + fmt(p.front())});
  const bool nonneg = s.coupling->phi3_envelope.has_nonnegative_coefficients();
  r.hypotheses.push_back({"phi3 polynomially bounded semi-blow-up", nonneg,
                          "envelope degree " + std::to_string(s.coupling->phi3_envelope.degree())});
}

inline void check_t3(const InterconnectionSpec& s, TheoremReport& r) {
  const double a1 = s.systems[0].a, a2 = s.systems[1].a;
  const double b1 = s.b(0, 1), b2 = s.b(1, 0);
  r.hypotheses.push_back(shared_phi_hypothesis(s.systems));
  r.hypotheses.push_back(floor_hypothesis("phi", s.systems[0].phi));
  r.hypotheses.push_back(positive_hypothesis("a1", a1));
  r.hypotheses.push_back(positive_hypothesis("a2", a2));
  r.hypotheses.push_back(product_hypothesis(a1, a2, b1, b2));
  if (a1 > 0.0 && a2 > 0.0 && a1 * a2 > b1 * b2) {
    // c1/c2 must lie in (b2/a1, a2/b1); take the geometric mean when finite.
    const double lower = b2 / a1;
    const double ratio = b1 > 0.0 ? (lower > 0.0 ? std::sqrt(lower * (a2 / b1)) : 0.5 * a2 / b1) : 2.0 * lower + 1.0;
    const double c1 = ratio, c2 = 1.0;
    r.witnesses.c1 = c1;
    r.witnesses.c2 = c2;
    r.witnesses.kappa = std::min((a1 * c1 - b2 * c2) / c1, (a2 * c2 - b1 * c1) / c2);
  }
}

inline void check_t4(const InterconnectionSpec& s, TheoremReport& r) {
  const double a1 = s.systems[0].a, a2 = s.systems[1].a;
  const double b1 = s.b(0, 1), b2 = s.b(1, 0);
  r.hypotheses.push_back(floor_hypothesis("phi1", s.systems[0].phi));
  r.hypotheses.push_back(floor_hypothesis("phi2", s.systems[1].phi));
  r.hypotheses.push_back(positive_hypothesis("a1", a1));
  r.hypotheses.push_back(positive_hypothesis("a2", a2));
  r.hypotheses.push_back(product_hypothesis(a1, a2, b1, b2));
  if (a1 > 0.0 && a2 > 0.0) {
    const auto ds = diag_stability_2x2(a1, a2, b1, b2);
    r.witnesses.gamma = ds.gamma;
    if (ds.stable) r.witnesses.decay = weighted_decay_rate(GainMatrix::two_by_two(a1, a2, b1, b2));
  }
}

inline bool all_positive(const InterconnectionSpec& s, TheoremReport& r) {
  bool ok = true;
  for (std::size_t i = 0; i < s.systems.size(); ++i) {
    r.hypotheses.push_back(positive_hypothesis("a" + std::to_string(i + 1), s.systems[i].a));
    ok = ok && s.systems[i].a > 0.0;
  }
  return ok;
}

inline GainMatrix gains_of(const InterconnectionSpec& s) {
  std::vector<double> a;
  for (const auto& sys : s.systems) a.push_back(sys.a);
  Eigen::MatrixXd b = s.b;
  b.diagonal().setZero();
  return GainMatrix(std::move(a), std::move(b));
}

inline void check_t5(const InterconnectionSpec& s, TheoremReport& r) {
  r.hypotheses.push_back(shared_phi_hypothesis(s.systems));
  r.hypotheses.push_back(floor_hypothesis("phi", s.systems[0].phi));
  if (!all_positive(s, r)) return;
  const GainMatrix g = gains_of(s);
  const bool hurwitz = is_hurwitz(g);
  r.hypotheses.push_back({"A strictly Hurwitz", hurwitz, hurwitz ? "all eigenvalues in Re < 0" : "not Hurwitz"});
  if (hurwitz) {
    const int n = g.size();
    auto sol = lyapunov_solve(g, Eigen::MatrixXd::Identity(n, n));
    r.hypotheses.push_back({"P A + A^T P = -I has P > 0", sol.lambda_min_P > 0.0,
                            "lambda_min(P) = " + fmt(sol.lambda_min_P) + ", residual " + fmt(sol.residual)});
    r.witnesses.lyapunov = std::move(sol);
  }
}

inline void check_t6(const InterconnectionSpec& s, TheoremReport& r) {
  for (std::size_t i = 0; i < s.systems.size(); ++i) {
    r.hypotheses.push_back(floor_hypothesis("phi" + std::to_string(i + 1), s.systems[i].phi));
  }
  if (!all_positive(s, r)) return;
  try {
    auto res = weighted_decay_rate(gains_of(s));
    r.hypotheses.push_back({"-A Lyapunov diagonally stable (delta(A) > 0)", true, "delta(A) = " + fmt(res.delta)});
    r.witnesses.decay = std::move(res);
  } catch (const NotDiagonallyStable& e) {
    r.hypotheses.push_back({"-A Lyapunov diagonally stable (delta(A) > 0)", false, e.what()});
  }
}

inline void validate_spec(const InterconnectionSpec& s) {
  const auto n = s.systems.size();
  if (n == 0) throw SpecMismatch("no subsystems given");
  const bool pairwise = s.topology != Topology::FeedbackN;
  if (pairwise && n != 2) throw SpecMismatch(to_string(s.topology) + " needs exactly 2 systems");
  const double T = s.systems.front().phi.horizon();
  for (const auto& sys : s.systems) {
    if (sys.phi.horizon() != T) throw SpecMismatch("subsystem blow-up functions use different horizons");
  }
  const bool needs_b = !(s.topology == Topology::Cascade2 && s.coupling);
  if (needs_b || s.b.size() != 0) {
    if (s.b.rows() != static_cast<Eigen::Index>(n) || s.b.cols() != static_cast<Eigen::Index>(n)) {
      throw SpecMismatch("b must be " + std::to_string(n) + " x " + std::to_string(n));
    }
    for (Eigen::Index i = 0; i < s.b.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.b.cols(); ++j) {
        if (i != j && !(s.b(i, j) >= 0.0)) throw SpecMismatch("off-diagonal b must be >= 0");
      }
    }
  }
  if (s.topology == Topology::Cascade2 && s.b.size() != 0 && s.b(0, 1) != 0.0) {
    throw SpecMismatch("cascade2 forbids coupling from system 2 into system 1 (b[0][1] != 0)");
  }
  if (s.coupling && s.topology != Topology::Cascade2) throw SpecMismatch("coupling polynomial only applies to cascade2");
  if (s.coupling && s.coupling->phi3_envelope.horizon() != T) {
    throw SpecMismatch("phi3 uses a different horizon");
  }
  if (s.theorem) {
    const auto id = *s.theorem;
    const bool ok = (s.topology == Topology::Cascade2 && (id == TheoremId::T1 || id == TheoremId::T2)) ||
                    (s.topology == Topology::Feedback2 && (id == TheoremId::T3 || id == TheoremId::T4)) ||
                    (s.topology == Topology::FeedbackN && (id == TheoremId::T5 || id == TheoremId::T6));
    if (!ok) throw SpecMismatch(to_string(id) + " does not apply to " + to_string(s.topology));
    if (id == TheoremId::T1 && s.b.size() == 0) throw SpecMismatch("T1 needs b");
    if (id == TheoremId::T2 && !s.coupling) throw SpecMismatch("T2 needs a coupling block");
  }
}

inline TheoremId default_theorem(const InterconnectionSpec& s) {
  const bool shared = shared_phi_hypothesis(s.systems).pass;
  switch (s.topology) {
    case Topology::Cascade2: return s.coupling ? TheoremId::T2 : TheoremId::T1;
    case Topology::Feedback2: return shared ? TheoremId::T3 : TheoremId::T4;
    case Topology::FeedbackN: return shared ? TheoremId::T5 : TheoremId::T6;
  }
  return TheoremId::T1;
}

}  // namespace detail

/// Checks the sufficient conditions of the applicable interconnection theorem.
/// Only hypotheses are verified; a NotCertified verdict says nothing about
/// the system itself.
inline TheoremReport check_theorem_conditions(const InterconnectionSpec& spec) {
  detail::validate_spec(spec);
  TheoremReport r;
  r.theorem = spec.theorem.value_or(detail::default_theorem(spec));
  switch (r.theorem) {
    case TheoremId::T1: detail::check_t1(spec, r); break;
    case TheoremId::T2: detail::check_t2(spec, r); break;
    case TheoremId::T3: detail::check_t3(spec, r); break;
    case TheoremId::T4: detail::check_t4(spec, r); break;
    case TheoremId::T5: detail::check_t5(spec, r); break;
    case TheoremId::T6: detail::check_t6(spec, r); break;
  }
  r.certified = !r.hypotheses.empty() &&
                std::all_of(r.hypotheses.begin(), r.hypotheses.end(), [](const Hypothesis& h) { return h.pass; });
  return r;
}

// --- JSON

namespace detail {

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw DomainError("matrix must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw DomainError("ragged matrix rows");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(row);
  }
  return out;
}

inline nlohmann::json vector_to_json(const Eigen::RowVectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace detail

/// {"a": [a_1, ...], "b": [[...], ...]}; the diagonal of b is ignored if zero.
inline GainMatrix gain_matrix_from_json(const nlohmann::json& j) {
  auto a = j.at("a").get<std::vector<double>>();
  Eigen::MatrixXd b = j.contains("b") ? detail::matrix_from_json(j.at("b"))
                                      : Eigen::MatrixXd::Zero(a.size(), a.size());
  return GainMatrix(std::move(a), std::move(b));
}

inline nlohmann::json to_json_value(const DecayRateResult& r) {
  return {{"delta", r.delta}, {"q", detail::vector_to_json(r.q)}, {"slack", r.slack}};
}

inline InterconnectionSpec interconnection_from_json(const nlohmann::json& j) {
  InterconnectionSpec s;
  const auto topo = j.at("topology").get<std::string>();
  if (topo == "cascade2") {
    s.topology = Topology::Cascade2;
  } else if (topo == "feedback2") {
    s.topology = Topology::Feedback2;
  } else if (topo == "feedbackN") {
    s.topology = Topology::FeedbackN;
  } else {
    throw SpecMismatch("unknown topology '" + topo + "'");
  }
  for (const auto& sys : j.at("systems")) {
    s.systems.push_back({blowup_from_json(sys.at("phi")), sys.at("a").get<double>()});
  }
  if (j.contains("b")) s.b = detail::matrix_from_json(j.at("b"));
  if (j.contains("coupling") && !j.at("coupling").is_null()) {
    const auto& c = j.at("coupling");
    s.coupling = CouplingSpec{c.at("p_coeffs").get<std::vector<double>>(), xi_polynomial_from_json(c.at("phi3"))};
  }
  if (j.contains("theorem")) {
    const auto id = j.at("theorem").get<std::string>();
    static const char* names[] = {"T1", "T2", "T3", "T4", "T5", "T6"};
    auto it = std::find(std::begin(names), std::end(names), id);
    if (it == std::end(names)) throw SpecMismatch("unknown theorem '" + id + "'");
    s.theorem = static_cast<TheoremId>(it - std::begin(names));
  }
  return s;
}

inline nlohmann::json to_json_value(const TheoremReport& r) {
  nlohmann::json hyps = nlohmann::json::array();
  for (const auto& h : r.hypotheses) hyps.push_back({{"name", h.name}, {"pass", h.pass}, {"detail", h.detail}});
  nlohmann::json w = nlohmann::json::object();
  const auto& wit = r.witnesses;
  if (wit.c1) w["c1"] = *wit.c1;
  if (wit.c2) w["c2"] = *wit.c2;
  if (wit.kappa) w["kappa"] = *wit.kappa;
  if (wit.gamma) w["gamma"] = *wit.gamma;
  if (wit.lyapunov) {
    w["P"] = detail::matrix_to_json(wit.lyapunov->P);
    w["lambda_min_P"] = wit.lyapunov->lambda_min_P;
    w["lambda_max_P"] = wit.lyapunov->lambda_max_P;
    w["decay_constant"] = wit.lyapunov->decay_constant();
  }
  if (wit.decay) {
    w["delta"] = wit.decay->delta;
    w["q"] = detail::vector_to_json(wit.decay->q);
  }
  return {{"theorem", to_string(r.theorem)},
          {"verdict", r.certified ? "PT-C-certified" : "NotCertified"},
          {"hypotheses", hyps},
          {"witnesses", w}};
}

}  // namespace ptstab
