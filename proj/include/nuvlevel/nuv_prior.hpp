#pragma once

// Scalar mathematics of the binarizing NUV prior
//
//   rho(x, theta) = N(x; a, sigma_a^2) * N(x; b, sigma_b^2),
//
// which for fixed variances is a scaled Gaussian in x and whose
// variance-maximized profile 1/(|x-a||x-b|) favours the two levels. This
// header holds the closed-form pieces (moments, updates, thresholds) and the
// scalar AM/EM iterations built from them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nuvlevel/error.hpp"

namespace nuvlevel {

/// Two admissible values a < b.
struct BinaryLevels {
  double a;
  double b;

  BinaryLevels(double lower, double upper) : a(lower), b(upper) {
    if (!(std::isfinite(lower) && std::isfinite(upper)) || !(lower < upper)) {
      throw InvalidArgument("binary levels must be finite with a < b");
    }
  }

  double midpoint() const noexcept { return 0.5 * (a + b); }
  double gap() const noexcept { return b - a; }
};

/// The pair of NUV variances attached to the two levels.
struct NuvTheta {
  double sigma_a_sq = 1.0;
  double sigma_b_sq = 1.0;

  bool valid() const noexcept {
    return sigma_a_sq >= 0.0 && sigma_b_sq >= 0.0 &&
           sigma_a_sq + sigma_b_sq > 0.0;
  }
  bool pinned() const noexcept { return sigma_a_sq == 0.0 || sigma_b_sq == 0.0; }
  friend bool operator==(const NuvTheta&, const NuvTheta&) = default;
};

struct GaussianMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Gaussian likelihood of a scalar, N(x; mu, s_sq) up to an irrelevant scale.
struct ScalarObservation {
  double mu;
  double s_sq;

  ScalarObservation(double mean, double variance) : mu(mean), s_sq(variance) {
    if (!(variance > 0.0) || !std::isfinite(variance) || !std::isfinite(mean)) {
      throw InvalidArgument("scalar observation needs finite mu and s_sq > 0");
    }
  }
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// log N(x; mean, variance) for variance > 0.
inline double log_normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + d * d / variance);
}

inline void require_valid(const NuvTheta& theta) {
  if (!theta.valid()) {
    throw InvalidTheta("NUV variances must be nonnegative and not both zero");
  }
}

struct PriorProduct {
  GaussianMoments moments;
  /// log rho(theta), the x-independent factor of rho(x, theta).
  double log_scale;
};

/// rho(x, theta) = exp(log_scale) * N(x; moments.mean, moments.variance).
///
/// A zero variance pins the Gaussian to its level (variance 0); log_scale
/// stays finite as long as the other variance is positive.
inline PriorProduct product_of_gaussians(const BinaryLevels& levels,
                                         const NuvTheta& theta) {
  require_valid(theta);
  const double va = theta.sigma_a_sq;
  const double vb = theta.sigma_b_sq;
  const double total = va + vb;
  const double d = levels.a - levels.b;
  const double log_scale = -0.5 * (kLog2Pi + std::log(total) + d * d / total);

  GaussianMoments m;
  if (va == 0.0) {
    m = {levels.a, 0.0};
  } else if (vb == 0.0) {
    m = {levels.b, 0.0};
  } else {
    m.mean = (levels.b * va + levels.a * vb) / total;
    m.variance = va * vb / total;
  }
  return {m, log_scale};
}

/// log rho(x, theta) evaluated directly as the product of two Gaussians.
inline double log_prior_density(double x, const BinaryLevels& levels,
                                const NuvTheta& theta) {
  return log_normal_pdf(x, levels.a, theta.sigma_a_sq) +
         log_normal_pdf(x, levels.b, theta.sigma_b_sq);
}

/// Posterior of x under N(x; mu, s^2) * rho(x, theta) for fixed theta.
///
/// The mean is formed around the midpoint of the levels so that a symmetric
/// problem stays exactly symmetric in floating point.
inline GaussianMoments scalar_posterior(const ScalarObservation& obs,
                                        const BinaryLevels& levels,
                                        const NuvTheta& theta) {
  require_valid(theta);
  if (theta.sigma_a_sq == 0.0) return {levels.a, 0.0};
  if (theta.sigma_b_sq == 0.0) return {levels.b, 0.0};

  const double pa = 1.0 / theta.sigma_a_sq;
  const double pb = 1.0 / theta.sigma_b_sq;
  const double ps = 1.0 / obs.s_sq;
  const double variance = 1.0 / (pa + pb + ps);
  const double c = levels.midpoint();
  const double shift =
      (levels.a - c) * pa + (levels.b - c) * pb + (obs.mu - c) * ps;
  return {c + variance * shift, variance};
}

/// Joint-MAP variance update: theta maximizing rho(x_hat, theta).
inline NuvTheta am_update(double x_hat, const BinaryLevels& levels) {
  const double da = x_hat - levels.a;
  const double db = x_hat - levels.b;
  return {da * da, db * db};
}

/// EM variance update: E[(X-a)^2], E[(X-b)^2] under the posterior.
inline NuvTheta em_update(const GaussianMoments& posterior,
                          const BinaryLevels& levels) {
  const double v = std::max(posterior.variance, 0.0);
  const double da = posterior.mean - levels.a;
  const double db = posterior.mean - levels.b;
  return {v + da * da, v + db * db};
}

/// log of the scalar evidence  rho(theta) * N(mu - mu_theta; 0, sigma_theta^2 + s^2),
/// i.e. the integral over x of N(x; mu, s^2) rho(x, theta).
inline double scalar_log_evidence(const ScalarObservation& obs,
                                  const BinaryLevels& levels,
                                  const NuvTheta& theta) {
  const PriorProduct p = product_of_gaussians(levels, theta);
  return p.log_scale +
         log_normal_pdf(obs.mu, p.moments.mean, p.moments.variance + obs.s_sq);
}

// ---------------------------------------------------------------------------
// Binarization thresholds

/// Coefficients (c0, c1, c2, c3) of the cubic whose unique real root is the
/// joint-MAP threshold. The polynomial equals the discriminant of the
/// stationarity cubic of  (mu-x)^2/(2 zeta) + log|x-a| + log|x-b|  as a
/// function of zeta = s^2.
inline std::array<double, 4> am_threshold_polynomial(const BinaryLevels& levels,
                                                     double mu) {
  const double a = levels.a;
  const double b = levels.b;
  const double ab2 = (a - b) * (a - b);
  const double c0 = ab2 * (a - mu) * (a - mu) * (b - mu) * (b - mu);
  const double c1 =
      -2.0 * ab2 * (2.0 * (a * a + b * b) + a * b - 5.0 * mu * (a + b - mu));
  const double c2 = 13.0 * ab2 + 4.0 * (a * b - a * mu - b * mu + mu * mu);
  return {c0, c1, c2, -32.0};
}

inline double eval_cubic(const std::array<double, 4>& c, double z) {
  return ((c[3] * z + c[2]) * z + c[1]) * z + c[0];
}

struct AmThreshold {
  double value;
  /// mu coincides with a level: the constant coefficient vanishes and the
  /// threshold is the positive root of the remaining quadratic (0 if none).
  bool level_limit;
};

namespace detail {

// Safeguarded Newton for the root of -32 t^3 + p t + q on [lo, hi], where the
// cubic is positive at lo and negative at hi. Stops once the bracket is below
// 1e-15 * scale.
inline double depressed_root(double p, double q, double lo, double hi, double scale) {
  auto f = [&](double t) { return (-32.0 * t * t + p) * t + q; };
  auto df = [&](double t) { return -96.0 * t * t + p; };
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double ft = f(t);
    if (ft == 0.0) return t;
    if (ft > 0.0) lo = t; else hi = t;
    if (hi - lo <= 1e-15 * scale) break;
    // Every other step bisects, so the bracket at least halves per two steps
    // even where Newton crawls (the triple root at mu = (a+b)/2).
    const double slope = df(t);
    const double newton = slope != 0.0 ? t - ft / slope : lo;
    t = (it % 2 == 0 && newton > lo && newton < hi) ? newton : 0.5 * (lo + hi);
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline AmThreshold am_threshold(const BinaryLevels& levels, double mu) {
  const auto c = am_threshold_polynomial(levels, mu);
  if (c[0] == 0.0) {
    // zeta * (-32 zeta^2 + c2 zeta + c1): largest positive root of the quadratic.
    const double disc = c[2] * c[2] + 4.0 * 32.0 * c[1];
    if (disc < 0.0) return {0.0, true};
    const double r = (c[2] + std::sqrt(disc)) / 64.0;
    return {std::max(r, 0.0), true};
  }
  // Same cubic shifted to its inflection point zeta0, with the coefficients
  // written in d = b - a and h = mu - (a+b)/2. Evaluating the expanded form
  // near mu = (a+b)/2 loses about a third of the digits to cancellation
  // around the (near) triple root; this form does not.
  const double d2 = levels.gap() * levels.gap();
  const double h = mu - levels.midpoint();
  const double h2 = h * h;
  const double zeta0 = (3.0 * d2 + h2) / 24.0;
  const double p = -h2 * (54.0 * d2 - h2) / 6.0;
  const double q = -h2 * (729.0 * d2 * d2 - 270.0 * d2 * h2 - 2.0 * h2 * h2) / 432.0;
  // phi(0) = c0 > 0 and phi -> -inf; grow the bracket until the sign flips.
  double hi = std::max(1.0, zeta0);
  while ((-32.0 * hi * hi + p) * hi + q >= 0.0) hi *= 2.0;
  const double t = detail::depressed_root(p, q, -zeta0, hi, zeta0);
  return {zeta0 + t, false};
}

/// Smallest s^2 above which the joint-MAP objective has no interior local
/// maximum, so AM started off the middle returns a or b.
inline double s2_am_threshold(const BinaryLevels& levels, double mu) {
  return am_threshold(levels, mu).value;
}

/// Smallest s^2 above which type-II (EM) estimation has the binarizing point
/// on mu's side as its only extremum. Throws at the midpoint, where it is
/// undefined.
inline double s2_em_threshold(const BinaryLevels& levels, double mu) {
  const double a = levels.a;
  const double b = levels.b;
  const double sum = a + b;
  const double width = b - a;
  const double reach = width / std::numbers::sqrt2;
  if (2.0 * mu == sum) {
    throw UndefinedThreshold("EM threshold is undefined at mu = (a+b)/2");
  }
  const double outer = (3.0 - std::sqrt(8.0)) * (a - mu) * (b - mu);
  if (2.0 * mu < sum) {
    if (mu < a - reach) return outer;
    return (a - mu) * (a - mu) * width / (sum - 2.0 * mu);
  }
  if (mu > b + reach) return outer;
  return (b - mu) * (b - mu) * width / (2.0 * mu - sum);
}

// ---------------------------------------------------------------------------
// Scalar estimators

/// Variances (1, 1) scaled by (b-a)^2.
inline NuvTheta default_scalar_init(const BinaryLevels& levels) {
  const double g2 = levels.gap() * levels.gap();
  return {g2, g2};
}

struct ScalarSolveResult {
  double x_hat = 0.0;
  NuvTheta theta;
  std::size_t iterations = 0;
  bool converged = false;
  /// x_hat lies within 1e-6 (b-a) of a level.
  bool binarized = false;
};

inline constexpr double kScalarBinaryTolerance = 1e-6;

namespace detail {

inline bool near_level(double x, const BinaryLevels& levels) {
  const double d = std::min(std::abs(x - levels.a), std::abs(x - levels.b));
  return d <= kScalarBinaryTolerance * levels.gap();
}

inline void check_solver_args(double tol, std::size_t max_iters) {
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
  if (max_iters == 0) throw InvalidArgument("max_iters must be positive");
}

}  // namespace detail

/// Alternating maximization over x and theta. Stops once |x_i - x_{i-1}|
/// falls below tol * (b - a).
inline ScalarSolveResult scalar_am_solve(const ScalarObservation& obs,
                                         const BinaryLevels& levels,
                                         const NuvTheta& init, double tol,
                                         std::size_t max_iters) {
  detail::check_solver_args(tol, max_iters);
  require_valid(init);
  ScalarSolveResult r;
  r.theta = init;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 1; i <= max_iters; ++i) {
    const double x = scalar_posterior(obs, levels, r.theta).mean;
    r.x_hat = x;
    r.iterations = i;
    r.theta = am_update(x, levels);
    if (!r.theta.valid()) break;  // unreachable for a < b
    if (i > 1 && std::abs(x - prev) < tol * levels.gap()) {
      r.converged = true;
      break;
    }
    prev = x;
  }
  r.binarized = detail::near_level(r.x_hat, levels);
  return r;
}

struct ScalarEmOptions {
  /// Jump to an exact binarizing fixed point when it is a local maximum of
  /// the evidence and improves on the current iterate.
  bool pin_levels = true;
};

/// Local-maximum test for the binarizing point theta* pinned at `level`:
/// the linearized EM map contracts sigma_level^2 toward 0 iff
/// 1/g^2 + 1/s^2 - ((other-level)/g^2 + (mu-level)/s^2)^2 > 0, g = b - a.
inline bool binarizing_point_is_local_max(const ScalarObservation& obs,
                                          const BinaryLevels& levels,
                                          double level) {
  const double other = level == levels.a ? levels.b : levels.a;
  const double g2 = levels.gap() * levels.gap();
  const double precision = 1.0 / g2 + 1.0 / obs.s_sq;
  const double h = (other - level) / g2 + (obs.mu - level) / obs.s_sq;
  return precision - h * h > 0.0;
}

/// Expectation maximization of the evidence over theta, reporting the MAP
/// x for the final theta.
inline ScalarSolveResult scalar_em_solve(const ScalarObservation& obs,
                                         const BinaryLevels& levels,
                                         const NuvTheta& init, double tol,
                                         std::size_t max_iters,
                                         const ScalarEmOptions& options = {}) {
  detail::check_solver_args(tol, max_iters);
  require_valid(init);
  ScalarSolveResult r;
  r.theta = init;
  const double g2 = levels.gap() * levels.gap();
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 1; i <= max_iters; ++i) {
    const GaussianMoments post = scalar_posterior(obs, levels, r.theta);
    r.x_hat = post.mean;
    r.iterations = i;
    if (i > 1 && std::abs(post.mean - prev) < tol * levels.gap()) {
      r.converged = true;
      break;
    }
    prev = post.mean;

    NuvTheta next = em_update(post, levels);
    const double c = levels.midpoint();
    if (options.pin_levels && !next.pinned() && post.mean != c) {
      const double level = post.mean < c ? levels.a : levels.b;
      const NuvTheta star = level == levels.a ? NuvTheta{0.0, g2} : NuvTheta{g2, 0.0};
      if (binarizing_point_is_local_max(obs, levels, level) &&
          scalar_log_evidence(obs, levels, star) >=
              scalar_log_evidence(obs, levels, next)) {
        next = star;
      }
    }
    r.theta = next;
  }
  r.binarized = detail::near_level(r.x_hat, levels);
  return r;
}

// ---------------------------------------------------------------------------
// Effective prior

inline constexpr double kInfiniteMarker = std::numeric_limits<double>::infinity();

/// max over theta of rho(x, theta), up to scale: 1/(|x-a| |x-b|).
inline double effective_prior(const BinaryLevels& levels, double x) {
  const double p = std::abs(x - levels.a) * std::abs(x - levels.b);
  return p == 0.0 ? kInfiniteMarker : 1.0 / p;
}

inline std::vector<std::pair<double, double>> effective_prior_curve(
    const BinaryLevels& levels, const std::vector<double>& x_grid) {
  std::vector<std::pair<double, double>> out;
  out.reserve(x_grid.size());
  for (double x : x_grid) out.emplace_back(x, effective_prior(levels, x));
  return out;
}

}  // namespace nuvlevel
