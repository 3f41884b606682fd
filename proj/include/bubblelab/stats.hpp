#pragma once

// Small numerics kernel: Student t distribution, one-sample t-test and simple
// OLS with a slope test. Self-contained so analysis has no runtime deps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace bubblelab::stats {

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for Student t with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

/// P(T <= t).
inline double t_cdf(double t, double df) {
  const double tail = 0.5 * t_two_sided_p(t, df);
  return t >= 0 ? 1.0 - tail : tail;
}

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Population variance (divides by n). Shifting by the first value makes
/// identical samples come out exactly zero.
inline double population_variance(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("variance of empty sample");
  const double k = xs.front();
  double s = 0.0;
  double ss = 0.0;
  for (double x : xs) {
    s += x - k;
    ss += (x - k) * (x - k);
  }
  const double n = static_cast<double>(xs.size());
  return std::max(0.0, (ss - s * s / n) / n);
}

/// Sample variance (divides by n - 1).
inline double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample variance needs two observations");
  return population_variance(xs) * static_cast<double>(xs.size()) / static_cast<double>(xs.size() - 1);
}

struct TTest {
  double mean = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Two-sided one-sample test of mean == mu0. A zero-variance sample gives
/// t = 0 when it sits on mu0 and an infinite t otherwise.
inline TTest one_sample_t(const std::vector<double>& xs, double mu0 = 0.0) {
  if (xs.size() < 2) throw std::invalid_argument("t-test needs two observations");
  TTest r;
  r.mean = mean(xs);
  r.df = static_cast<double>(xs.size() - 1);
  const double se = std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
  const double diff = r.mean - mu0;
  if (se == 0.0 || se < 1e-12 * std::fabs(diff)) {
    r.t = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  } else {
    r.t = diff / se;
  }
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

struct OlsFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// y = a + b x + e. nullopt when x has no variance or n < 3.
inline std::optional<OlsFit> ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("ols: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) return std::nullopt;
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 1e-12 * (1.0 + mx * mx) * static_cast<double>(n)) return std::nullopt;
  OlsFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.df = static_cast<double>(n - 2);
  double sse = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    sse += r * r;
    syy += (y[i] - my) * (y[i] - my);
  }
  // Exact fits leave only rounding noise in the residuals.
  if (sse <= 1e-20 * (1.0 + syy)) sse = 0.0;
  f.slope_se = std::sqrt(sse / f.df / sxx);
  if (f.slope_se == 0.0) {
    f.t = std::fabs(f.slope) < 1e-12 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), f.slope);
  } else {
    f.t = f.slope / f.slope_se;
  }
  f.p = t_two_sided_p(f.t, f.df);
  return f;
}

/// Pearson r; nullopt if either side has zero variance.
inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("pearson: need two observations");
  const double ma = mean(a);
  const double mb = mean(b);
  double saa = 0.0;
  double sbb = 0.0;
  double sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Median by order statistics; even counts average the middle pair.
inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median of empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace bubblelab::stats
