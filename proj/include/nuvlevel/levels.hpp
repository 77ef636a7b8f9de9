#pragma once

// M-level inputs written as  u = beta0 + sum_j beta_j u_j  with every channel
// u_j binarized to {0, 1}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "nuvlevel/nuv_prior.hpp"
#include "nuvlevel/statespace.hpp"

namespace nuvlevel {

struct LevelSpec {
  double beta0 = 0.0;
  std::vector<double> betas{1.0};

  LevelSpec() = default;
  LevelSpec(double offset, std::vector<double> coefficients)
      : beta0(offset), betas(std::move(coefficients)) {
    detail::require(!betas.empty(), "a level spec needs at least one channel");
    detail::require(betas.size() <= 30, "at most 30 binary channels are supported");
    detail::require(std::isfinite(beta0), "beta0 must be finite");
    for (double b : betas) {
      detail::require(std::isfinite(b) && b != 0.0, "channel coefficients must be finite and nonzero");
    }
  }

  /// M equidistant levels from lo to hi: J = M-1 equal coefficients.
  static LevelSpec equidistant(double lo, double hi, std::size_t count) {
    detail::require(count >= 2, "need at least two levels");
    detail::require(lo < hi, "need lo < hi");
    const double step = (hi - lo) / static_cast<double>(count - 1);
    return LevelSpec(lo, std::vector<double>(count - 1, step));
  }

  /// Plain binary levels {a, b}.
  static LevelSpec binary(double a, double b) { return LevelSpec(a, {b - a}); }

  std::size_t channels() const noexcept { return betas.size(); }

  /// Value for a channel bit pattern: channel terms summed in index order,
  /// then beta0. Every level reported anywhere goes through this.
  double compose(std::uint64_t bits) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < betas.size(); ++j) {
      if (bits >> j & 1u) sum += betas[j];
    }
    return sum + beta0;
  }

  /// Distinct attainable levels, ascending.
  std::vector<double> level_set() const {
    std::vector<double> out;
    const std::uint64_t n = std::uint64_t{1} << betas.size();
    out.reserve(n);
    for (std::uint64_t s = 0; s < n; ++s) out.push_back(compose(s));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool contains(double value) const {
    const auto set = level_set();
    return std::binary_search(set.begin(), set.end(), value);
  }
};

struct DecodedLevels {
  VectorXd levels;          // K
  MatrixXd bits;            // K x J, each 0 or 1
  /// Largest channel distance to its snapped bit.
  double max_distance = 0.0;
};

/// Snaps each channel to {0, 1} (exactly 0.5 goes to 0) and composes.
inline DecodedLevels decode_levels(const MatrixXd& u_cont, const LevelSpec& spec) {
  detail::require(static_cast<std::size_t>(u_cont.cols()) == spec.channels(),
                  "channel count must match the level spec");
  DecodedLevels d;
  d.levels.resize(u_cont.rows());
  d.bits.resize(u_cont.rows(), u_cont.cols());
  for (Eigen::Index k = 0; k < u_cont.rows(); ++k) {
    std::uint64_t bits = 0;
    for (Eigen::Index j = 0; j < u_cont.cols(); ++j) {
      const double v = u_cont(k, j);
      const bool one = v > 0.5;
      if (one) bits |= std::uint64_t{1} << j;
      d.bits(k, j) = one ? 1.0 : 0.0;
      d.max_distance = std::max(d.max_distance, std::abs(v - (one ? 1.0 : 0.0)));
    }
    d.levels(k) = spec.compose(bits);
  }
  return d;
}

/// Channel model: the single physical input column b is split into one
/// column beta_j b per channel and beta0 b joins the drift.
inline Lssm compose_channels(const Lssm& physical, const LevelSpec& spec) {
  detail::require(physical.inputs() == 1, "M-level planning needs a single physical input");
  const auto J = static_cast<Eigen::Index>(spec.channels());
  MatrixXd b(physical.states(), J);
  for (Eigen::Index j = 0; j < J; ++j) {
    b.col(j) = physical.B.col(0) * spec.betas[static_cast<std::size_t>(j)];
  }
  VectorXd drift = physical.drift + physical.B.col(0) * spec.beta0;
  return Lssm(physical.A, std::move(b), physical.C, std::move(drift), physical.x0_mean,
              physical.x0_cov);
}

/// Joint-MAP effective prior of the composed input, up to scale. One channel
/// carries the fractional part while the others sit exactly on bits, so the
/// profile is |beta_j| / (|x - l| |x - l - beta_j|), maximized over the
/// fractional channel j and the bits of the rest.
inline double effective_prior(const LevelSpec& spec, double x) {
  const std::size_t J = spec.channels();
  double best = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    const double bj = spec.betas[j];
    const std::uint64_t others = std::uint64_t{1} << (J - 1);
    for (std::uint64_t s = 0; s < others; ++s) {
      // Spread the J-1 bits of s over all channels except j.
      const std::uint64_t low = s & ((std::uint64_t{1} << j) - 1);
      const std::uint64_t high = (s >> j) << (j + 1);
      const double lo = spec.compose(low | high);
      const double hi = lo + bj;
      const double p = std::abs(x - lo) * std::abs(x - hi);
      if (p == 0.0) return kInfiniteMarker;
      best = std::max(best, std::abs(bj) / p);
    }
  }
  return best;
}

inline std::vector<std::pair<double, double>> effective_prior_curve(
    const LevelSpec& spec, const std::vector<double>& x_grid) {
  std::vector<std::pair<double, double>> out;
  out.reserve(x_grid.size());
  for (double x : x_grid) out.emplace_back(x, effective_prior(spec, x));
  return out;
}

/// The naive multi-level product prior  prod_m N(x; l_m, sigma_m^2)  maximized
/// over the variances: prod_m 1/|x - l_m|. Favors the middle levels.
inline double product_prior(const std::vector<double>& levels, double x) {
  double p = 1.0;
  for (double l : levels) p *= std::abs(x - l);
  return p == 0.0 ? kInfiniteMarker : 1.0 / p;
}

}  // namespace nuvlevel
