#pragma once
// GLM marginal models: Poisson with log link, Bernoulli with logit or probit link.
//
// All quantities are functions of the linear predictor nu = x'beta. The mean
// is clamped into [1e-12, 1 - 1e-12] (Bernoulli) or [1e-12, 1e12] (Poisson)
// before any log or division; score and weight use the clamped mean.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <boost/math/special_functions/gamma.hpp>

#include "wscl/errors.hpp"
#include "wscl/normal.hpp"

namespace wscl {

enum class MarginFamily : std::uint8_t { PoissonLog, BernoulliLogit, BernoulliProbit };

struct MarginPoint {
  double nu = 0.0;
  int y = 0;
};

inline constexpr double kMeanFloor = 1e-12;
inline constexpr double kPoissonMeanCeiling = 1e12;
inline constexpr double kDefaultPoissonTail = 1e-9;

inline std::string_view family_name(MarginFamily family) {
  switch (family) {
    case MarginFamily::PoissonLog: return "poisson";
    case MarginFamily::BernoulliLogit: return "logit";
    case MarginFamily::BernoulliProbit: return "probit";
  }
  return "?";
}

inline MarginFamily parse_family(std::string_view name) {
  if (name == "poisson") return MarginFamily::PoissonLog;
  if (name == "logit" || name == "binary" || name == "bernoulli") return MarginFamily::BernoulliLogit;
  if (name == "probit") return MarginFamily::BernoulliProbit;
  throw ConfigError("unknown margin family '" + std::string(name) + "' (expected poisson, logit or probit)");
}

inline bool is_binary(MarginFamily family) { return family != MarginFamily::PoissonLog; }

inline bool in_support(MarginFamily family, int y) {
  return is_binary(family) ? (y == 0 || y == 1) : y >= 0;
}

namespace detail {

struct BinaryMeans {
  double mu;
  double one_minus_mu;
};

inline BinaryMeans binary_means(MarginFamily family, double nu) {
  double mu;
  double q;
  if (family == MarginFamily::BernoulliLogit) {
    if (nu >= 0.0) {
      const double e = std::exp(-nu);
      mu = 1.0 / (1.0 + e);
      q = e / (1.0 + e);
    } else {
      const double e = std::exp(nu);
      mu = e / (1.0 + e);
      q = 1.0 / (1.0 + e);
    }
  } else {
    mu = norm_cdf(nu);
    q = norm_cdf(-nu);
  }
  mu = std::clamp(mu, kMeanFloor, 1.0 - kMeanFloor);
  q = std::clamp(q, kMeanFloor, 1.0 - kMeanFloor);
  return {mu, q};
}

inline double poisson_mean(double nu) { return std::clamp(std::exp(nu), kMeanFloor, kPoissonMeanCeiling); }

inline void require_support(MarginFamily family, int y) {
  if (!in_support(family, y)) {
    throw ConfigError("response " + std::to_string(y) + " outside the support of the " +
                      std::string(family_name(family)) + " margin");
  }
}

}  // namespace detail

/// Inverse link h^{-1}(nu).
inline double mean(MarginFamily family, double nu) {
  if (family == MarginFamily::PoissonLog) return detail::poisson_mean(nu);
  return detail::binary_means(family, nu).mu;
}

/// d mu / d nu.
inline double mean_derivative(MarginFamily family, double nu) {
  switch (family) {
    case MarginFamily::PoissonLog: return detail::poisson_mean(nu);
    case MarginFamily::BernoulliLogit: {
      const auto m = detail::binary_means(family, nu);
      return m.mu * m.one_minus_mu;
    }
    case MarginFamily::BernoulliProbit: return norm_pdf(nu);
  }
  return 0.0;
}

inline double log_pmf(MarginFamily family, MarginPoint p) {
  detail::require_support(family, p.y);
  if (family == MarginFamily::PoissonLog) {
    const double mu = detail::poisson_mean(p.nu);
    return -std::lgamma(p.y + 1.0) - mu + p.y * std::log(mu);
  }
  const auto m = detail::binary_means(family, p.nu);
  return p.y == 1 ? std::log(m.mu) : std::log(m.one_minus_mu);
}

inline double pmf(MarginFamily family, MarginPoint p) {
  if (!in_support(family, p.y)) return 0.0;
  return std::exp(log_pmf(family, p));
}

/// d l1 / d nu from the standard GLM score table.
inline double score(MarginFamily family, MarginPoint p) {
  detail::require_support(family, p.y);
  switch (family) {
    case MarginFamily::PoissonLog: return p.y - detail::poisson_mean(p.nu);
    case MarginFamily::BernoulliLogit: {
      const auto m = detail::binary_means(family, p.nu);
      return p.y == 1 ? m.one_minus_mu : -m.mu;
    }
    case MarginFamily::BernoulliProbit: {
      // (y - mu) / (mu (1 - mu)) * phi(Phi^{-1}(mu)), with Phi^{-1}(mu) = nu.
      const auto m = detail::binary_means(family, p.nu);
      const double phi = norm_pdf(p.nu);
      return p.y == 1 ? phi / m.mu : -phi / m.one_minus_mu;
    }
  }
  return 0.0;
}

/// Delta = -E[d^2 l1 / d nu^2], equal to the score variance for every family here.
inline double fisher_weight(MarginFamily family, double nu) {
  switch (family) {
    case MarginFamily::PoissonLog: return detail::poisson_mean(nu);
    case MarginFamily::BernoulliLogit: {
      const auto m = detail::binary_means(family, nu);
      return m.mu * m.one_minus_mu;
    }
    case MarginFamily::BernoulliProbit: {
      const auto m = detail::binary_means(family, nu);
      const double phi = norm_pdf(nu);
      return phi * phi / (m.mu * m.one_minus_mu);
    }
  }
  return 0.0;
}

/// F1(y; nu). Zero for y < 0.
inline double cdf(MarginFamily family, int y, double nu) {
  if (y < 0) return 0.0;
  if (family == MarginFamily::PoissonLog) return boost::math::gamma_q(y + 1.0, detail::poisson_mean(nu));
  if (y >= 1) return 1.0;
  return detail::binary_means(family, nu).one_minus_mu;
}

/// 1 - F1(y; nu), computed directly so that small upper tails keep precision.
inline double survival(MarginFamily family, int y, double nu) {
  if (y < 0) return 1.0;
  if (family == MarginFamily::PoissonLog) return boost::math::gamma_p(y + 1.0, detail::poisson_mean(nu));
  if (y >= 1) return 0.0;
  return detail::binary_means(family, nu).mu;
}

/// d F1(y; nu) / d nu, i.e. sum_{t <= y} f1(t) * score(t).
inline double cdf_dnu(MarginFamily family, int y, double nu) {
  if (y < 0) return 0.0;
  if (family == MarginFamily::PoissonLog) {
    // dF/dmu = -f1(y), dmu/dnu = mu.
    const double mu = detail::poisson_mean(nu);
    return -mu * pmf(family, {nu, y});
  }
  if (y >= 1) return 0.0;
  return -mean_derivative(family, nu);
}

/// Latent cutpoint Phi^{-1}(F1(y; nu)); -inf below the support, +inf at its top.
inline double cutpoint(MarginFamily family, int y, double nu) {
  if (y < 0) return -kInf;
  const double f = cdf(family, y, nu);
  if (f <= 0.5) return norm_quantile(f);
  return norm_quantile_upper(survival(family, y, nu));
}

/// d Phi^{-1}(F1(y; nu)) / d nu; zero at infinite cutpoints.
inline double cutpoint_dnu(MarginFamily family, int y, double nu) {
  const double z = cutpoint(family, y, nu);
  if (std::isinf(z)) return 0.0;
  return cdf_dnu(family, y, nu) / norm_pdf(z);
}

/// Largest response value enumerated in expectations: 1 for Bernoulli; for
/// Poisson the smallest y* with F1(y*) >= 1 - tail.
inline int support_max(MarginFamily family, double nu, double tail = kDefaultPoissonTail) {
  if (is_binary(family)) return 1;
  if (!(tail > 0.0 && tail < 1.0)) throw ConfigError("Poisson truncation tail must lie in (0, 1)");
  int lo = -1;
  int hi = std::max(1, static_cast<int>(std::ceil(detail::poisson_mean(nu))));
  while (survival(family, hi, nu) > tail) {
    lo = hi;
    hi *= 2;
  }
  // invariant: survival(lo) > tail >= survival(hi)
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    if (survival(family, mid, nu) > tail) lo = mid; else hi = mid;
  }
  return hi;
}

}  // namespace wscl
