// Copyright 2026 The cocstress Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Statistical engine: distribution functions, hypothesis tests, effect sizes,
// bootstrap intervals, correlation, regression and AIC model selection.
// Everything here is self-contained (no external numerics library).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cocstress/errors.hpp"
#include "cocstress/rng.hpp"

namespace cocstress::stats
{

// ------------------------------------------------------------ special functions

namespace detail
{

// Continued fraction for the incomplete beta function (modified Lentz).
inline double betacf(double a, double b, double x)
{
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) {
      return h;
    }
  }
  throw StatsError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x)
{
  if (!(a > 0.0) || !(b > 0.0)) {
    throw StatsError("incomplete_beta: a and b must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
    std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::betacf(a, b, x) / a;
  }
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double student_t_two_sided_p(double t, double df)
{
  if (!(df > 0.0)) {
    throw StatsError("student t: df must be positive");
  }
  if (std::isnan(t)) {
    throw StatsError("student t: statistic is NaN");
  }
  if (std::isinf(t)) {
    return 0.0;
  }
  return std::clamp(incomplete_beta(0.5 * df, 0.5, df / (df + t * t)), 0.0, 1.0);
}

/// Student-t cumulative distribution function.
inline double student_t_cdf(double t, double df)
{
  const double tail = 0.5 * student_t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Two-sided normal tail P(|Z| >= |z|).
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

// ------------------------------------------------------------ descriptive

inline double mean(std::span<const double> v)
{
  if (v.empty()) {
    throw StatsError("mean of empty sample");
  }
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample variance (n - 1 denominator).
inline double variance(std::span<const double> v)
{
  if (v.size() < 2) {
    throw StatsError("variance needs at least two values");
  }
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

inline double stddev(std::span<const double> v) { return std::sqrt(variance(v)); }

inline double median(std::vector<double> v)
{
  if (v.empty()) {
    throw StatsError("median of empty sample");
  }
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Linear-interpolated quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double q)
{
  if (sorted.empty()) {
    throw StatsError("quantile of empty sample");
  }
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Average (mid) ranks, 1-based.
inline std::vector<double> average_ranks(std::span<const double> v)
{
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// ------------------------------------------------------------ tests

struct TestResult
{
  double statistic = 0.0;
  double p_value = 1.0;
  std::optional<double> df;
  std::optional<double> effect_size;
};

// Spread at rounding-error level relative to the mean counts as zero, so a
// constant shift computed in floating point is not reported as significant.
inline bool negligible_spread(double sd, double m) { return !(sd > 1e-12 * std::abs(m)); }

/// One-sample t-test on paired differences (H0: mean = 0), two-sided.
/// effect_size carries Cohen's d_z.
inline TestResult paired_t_test(std::span<const double> diffs)
{
  const std::size_t n = diffs.size();
  if (n < 2) {
    throw StatsError("paired t-test needs n >= 2");
  }
  const double m = mean(diffs);
  const double sd = stddev(diffs);
  if (negligible_spread(sd, m)) {
    throw StatsError("paired t-test: differences have zero variance");
  }
  TestResult r;
  r.statistic = m / (sd / std::sqrt(static_cast<double>(n)));
  r.df = static_cast<double>(n - 1);
  r.p_value = student_t_two_sided_p(r.statistic, *r.df);
  r.effect_size = m / sd;
  return r;
}

inline TestResult paired_t_test(std::span<const double> a, std::span<const double> b)
{
  if (a.size() != b.size()) {
    throw StatsError("paired t-test: samples differ in length");
  }
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return paired_t_test(d);
}

/// Welch's unequal-variance t-test for mean(a) - mean(b).
inline TestResult welch_t_test(std::span<const double> a, std::span<const double> b)
{
  if (a.size() < 2 || b.size() < 2) {
    throw StatsError("welch t-test needs n >= 2 per group");
  }
  const double va = variance(a) / static_cast<double>(a.size());
  const double vb = variance(b) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (!(se2 > 0.0)) {
    throw StatsError("welch t-test: both groups have zero variance");
  }
  TestResult r;
  r.statistic = (mean(a) - mean(b)) / std::sqrt(se2);
  r.df = se2 * se2 /
    (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p_value = student_t_two_sided_p(r.statistic, *r.df);
  return r;
}

enum class WilcoxonMethod { automatic, exact, normal };

struct WilcoxonResult
{
  double w_plus = 0.0;  // sum of ranks of positive differences
  double p_value = 1.0;
  std::size_t n = 0;    // after dropping zeros
  bool exact = false;
};

/// Wilcoxon signed-rank test, two-sided. Zero differences are dropped; ties
/// receive average ranks. Exact enumeration of all 2^n sign assignments for
/// n <= 12 under the automatic method; otherwise the normal approximation
/// with tie-corrected variance and a 0.5 continuity correction.
inline WilcoxonResult wilcoxon_signed_rank(
  std::span<const double> diffs, WilcoxonMethod method = WilcoxonMethod::automatic)
{
  std::vector<double> d;
  for (double x : diffs) {
    if (x != 0.0) d.push_back(x);
  }
  if (d.empty()) {
    throw StatsError("wilcoxon: all differences are zero");
  }
  if (d.size() < 5) {
    throw StatsError("wilcoxon: need at least 5 non-zero differences");
  }
  const std::size_t n = d.size();
  std::vector<double> absd(n);
  for (std::size_t i = 0; i < n; ++i) absd[i] = std::abs(d[i]);
  const auto ranks = average_ranks(absd);

  WilcoxonResult res;
  res.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0.0) res.w_plus += ranks[i];
  }
  const bool exact = method == WilcoxonMethod::exact ||
    (method == WilcoxonMethod::automatic && n <= 12);
  if (exact) {
    if (n > 24) {
      throw StatsError("wilcoxon: exact enumeration limited to n <= 24");
    }
    // Doubled ranks are integers, so the comparison below is exact.
    std::vector<std::int64_t> r2(n);
    std::int64_t total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = std::llround(2.0 * ranks[i]);
      total2 += r2[i];
    }
    const std::int64_t obs2 = std::llround(2.0 * res.w_plus);
    // |2W - total| measures distance from the null centre total/2 (in doubled units).
    const std::int64_t obs_dev = std::llabs(2 * obs2 - total2);
    const std::uint64_t count = 1ULL << n;
    std::uint64_t extreme = 0;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      std::int64_t w2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (1ULL << i)) w2 += r2[i];
      }
      if (std::llabs(2 * w2 - total2) >= obs_dev) ++extreme;
    }
    res.p_value = static_cast<double>(extreme) / static_cast<double>(count);
    res.exact = true;
    return res;
  }
  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  double tie_term = 0.0;
  {
    auto sorted = absd;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) {
    throw StatsError("wilcoxon: degenerate variance");
  }
  const double z = std::max(0.0, std::abs(res.w_plus - mu) - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, normal_two_sided_p(z));
  return res;
}

// ------------------------------------------------------------ correlation

inline double pearson(std::span<const double> x, std::span<const double> y)
{
  if (x.size() != y.size()) {
    throw StatsError("pearson: length mismatch");
  }
  if (x.size() < 3) {
    throw StatsError("pearson: need n >= 3");
  }
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw StatsError("pearson: constant input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> x, std::span<const double> y)
{
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

/// Pearson correlation with the binary variable coded 0/1.
inline double point_biserial(std::span<const bool> labels, std::span<const double> y)
{
  std::vector<double> coded(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) coded[i] = labels[i] ? 1.0 : 0.0;
  return pearson(coded, y);
}

inline double point_biserial(const std::vector<bool> & labels, std::span<const double> y)
{
  std::vector<double> coded(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) coded[i] = labels[i] ? 1.0 : 0.0;
  return pearson(coded, y);
}

/// Two-sided p-value for H0: rho = 0 via t = r sqrt((n-2)/(1-r^2)).
inline double correlation_p_value(double r, std::size_t n)
{
  if (n < 3) {
    throw StatsError("correlation test needs n >= 3");
  }
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  return student_t_two_sided_p(r * std::sqrt(df / (1.0 - r * r)), df);
}

// ------------------------------------------------------------ effect sizes

/// (mean1 - mean0) / pooled SD, pooling df-weighted sample variances.
inline double cohens_d(std::span<const double> group0, std::span<const double> group1)
{
  if (group0.size() < 2 || group1.size() < 2) {
    throw StatsError("cohens_d: each group needs n >= 2");
  }
  const double n0 = static_cast<double>(group0.size());
  const double n1 = static_cast<double>(group1.size());
  const double pooled =
    std::sqrt(((n0 - 1.0) * variance(group0) + (n1 - 1.0) * variance(group1)) / (n0 + n1 - 2.0));
  if (!(pooled > 0.0)) {
    throw StatsError("cohens_d: zero pooled standard deviation");
  }
  return (mean(group1) - mean(group0)) / pooled;
}

inline double cohens_dz(std::span<const double> diffs)
{
  const double sd = stddev(diffs);
  if (negligible_spread(sd, mean(diffs))) {
    throw StatsError("cohens_dz: differences have zero variance");
  }
  return mean(diffs) / sd;
}

// ------------------------------------------------------------ bootstrap

struct Interval
{
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapOptions
{
  std::size_t resamples = 10000;
  std::uint64_t seed = 42;
  double confidence = 0.95;
  unsigned threads = 1;
  std::size_t chunk = 500;  // resamples per counter-based substream
};

/// Percentile bootstrap interval for the mean. Resample b draws from the
/// substream keyed by (seed, b / chunk), so the interval is identical for any
/// thread count.
inline Interval bootstrap_ci(std::span<const double> values, const BootstrapOptions & opt = {})
{
  if (values.empty()) {
    throw StatsError("bootstrap: empty input");
  }
  if (values.size() < 2) {
    throw StatsError("bootstrap: need n >= 2");
  }
  if (opt.resamples < 1000) {
    throw StatsError("bootstrap: need at least 1000 resamples");
  }
  if (!(opt.confidence > 0.0 && opt.confidence < 1.0)) {
    throw StatsError("bootstrap: confidence must lie in (0, 1)");
  }
  const std::size_t n = values.size();
  const std::size_t B = opt.resamples;
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t n_chunks = (B + chunk - 1) / chunk;
  std::vector<double> stats(B);

  auto run_chunk = [&](std::size_t c) {
    CounterRng rng(KeyBuilder{}.add(opt.seed).add("bootstrap").add(std::uint64_t{c}).finish());
    const std::size_t end = std::min(B, (c + 1) * chunk);
    for (std::size_t b = c * chunk; b < end; ++b) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += values[rng.below(n)];
      stats[b] = sum / static_cast<double>(n);
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(n_chunks)));
  if (threads == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < n_chunks; c += threads) run_chunk(c);
      });
    }
    for (auto & th : pool) th.join();
  }
  std::sort(stats.begin(), stats.end());
  const double tail = 0.5 * (1.0 - opt.confidence);
  return {quantile_sorted(stats, tail), quantile_sorted(stats, 1.0 - tail)};
}

// ------------------------------------------------------------ regression

enum class Family { linear, log_linear, power_law, saturating };

inline const char * to_string(Family f)
{
  switch (f) {
    case Family::linear: return "linear";
    case Family::log_linear: return "log_linear";
    case Family::power_law: return "power_law";
    case Family::saturating: return "saturating";
  }
  return "?";
}

inline constexpr std::array<Family, 4> kAllFamilies = {
  Family::linear, Family::log_linear, Family::power_law, Family::saturating};

/// Fitted dose-response curve.
///  linear      y = a + b x            params {a, b}
///  log_linear  y = a + b ln x         params {a, b}
///  power_law   y = a x^b              params {a, b}
///  saturating  y = c + a (1 - e^-bx)  params {c, a, b}, b > 0
struct FitResult
{
  Family family = Family::linear;
  std::vector<double> params;
  double r_squared = 0.0;
  double ss_res = 0.0;
  double aic = 0.0;
  std::size_t n = 0;
  bool converged = true;
  int iterations = 0;
  std::string diagnostic;
  // Slope inference; populated for linear fits.
  std::optional<double> slope_se;
  std::optional<double> slope_t;
  std::optional<double> slope_p;

  std::size_t k() const noexcept { return params.size(); }
  double predict(double x) const;
};

inline double evaluate_family(Family f, std::span<const double> p, double x)
{
  switch (f) {
    case Family::linear: return p[0] + p[1] * x;
    case Family::log_linear: return p[0] + p[1] * std::log(x);
    case Family::power_law: return p[0] * std::pow(x, p[1]);
    case Family::saturating: return p[0] + p[1] * (1.0 - std::exp(-p[2] * x));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double FitResult::predict(double x) const { return evaluate_family(family, params, x); }

/// AIC = n ln(SSres / n) + 2k. SSres is floored at the smallest normal double
/// so an exact fit yields a finite, very negative score.
inline double aic_score(double ss_res, std::size_t n, std::size_t k)
{
  const double nn = static_cast<double>(n);
  const double per = std::max(ss_res / nn, std::numeric_limits<double>::min());
  return nn * std::log(per) + 2.0 * static_cast<double>(k);
}

namespace detail
{

inline double total_ss(std::span<const double> y)
{
  const double my = mean(y);
  double s = 0.0;
  for (double v : y) s += (v - my) * (v - my);
  return s;
}

inline void finish_fit(FitResult & fit, std::span<const double> x, std::span<const double> y)
{
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.predict(x[i]);
    ss += r * r;
  }
  fit.ss_res = ss;
  fit.n = x.size();
  const double sst = total_ss(y);
  fit.r_squared = sst > 0.0 ? 1.0 - ss / sst : (ss == 0.0 ? 1.0 : 0.0);
  fit.aic = aic_score(ss, fit.n, fit.k());
}

// Solves the k x k system A z = b by Gaussian elimination with partial pivoting.
inline bool solve_small(std::vector<double> A, std::vector<double> b, std::size_t k, std::vector<double> & z)
{
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r) {
      if (std::abs(A[r * k + col]) > std::abs(A[piv * k + col])) piv = r;
    }
    if (!(std::abs(A[piv * k + col]) > 1e-300)) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < k; ++c) std::swap(A[piv * k + c], A[col * k + c]);
      std::swap(b[piv], b[col]);
    }
    for (std::size_t r = col + 1; r < k; ++r) {
      const double f = A[r * k + col] / A[col * k + col];
      for (std::size_t c = col; c < k; ++c) A[r * k + c] -= f * A[col * k + c];
      b[r] -= f * b[col];
    }
  }
  z.assign(k, 0.0);
  for (std::size_t i = k; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < k; ++c) s -= A[i * k + c] * z[c];
    z[i] = s / A[i * k + i];
  }
  return true;
}

struct LmOutcome
{
  std::vector<double> params;
  bool converged = false;
  int iterations = 0;
  std::string diagnostic;
};

// Gauss-Newton with Levenberg-Marquardt damping. `model(x, p, grad)` returns
// f(x; p) and writes df/dp into grad.
template <class Model>
LmOutcome levenberg_marquardt(
  Model && model, std::vector<double> p, std::span<const double> x, std::span<const double> y,
  int max_iter = 200, double rel_tol = 1e-10)
{
  const std::size_t k = p.size();
  const std::size_t n = x.size();
  std::vector<double> grad(k);
  auto sse = [&](const std::vector<double> & q) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - model(x[i], q, grad);
      s += r * r;
    }
    return s;
  };
  double ss = sse(p);
  if (!std::isfinite(ss)) {
    return {p, false, 0, "non-finite residuals at the starting point"};
  }
  double lambda = 1e-3;
  LmOutcome out;
  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    std::vector<double> JtJ(k * k, 0.0), Jtr(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - model(x[i], p, grad);
      for (std::size_t a = 0; a < k; ++a) {
        Jtr[a] += grad[a] * r;
        for (std::size_t b = 0; b < k; ++b) JtJ[a * k + b] += grad[a] * grad[b];
      }
    }
    bool improved = false;
    while (lambda < 1e20) {
      auto A = JtJ;
      for (std::size_t a = 0; a < k; ++a) A[a * k + a] += lambda * std::max(JtJ[a * k + a], 1e-12);
      std::vector<double> step;
      if (!solve_small(A, Jtr, k, step)) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> cand(k);
      for (std::size_t a = 0; a < k; ++a) cand[a] = p[a] + step[a];
      const double ss_new = sse(cand);
      if (std::isfinite(ss_new) && ss_new <= ss) {
        const double rel = (ss - ss_new) / std::max(ss, 1e-300);
        p = cand;
        ss = ss_new;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        if (rel < rel_tol || ss == 0.0) {
          out.params = p;
          out.converged = true;
          return out;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      // No descent direction at any damping: p is stationary.
      out.params = p;
      out.converged = true;
      return out;
    }
  }
  out.params = p;
  out.converged = false;
  out.diagnostic = "no convergence within " + std::to_string(max_iter) + " iterations";
  return out;
}

inline void check_xy(std::span<const double> x, std::span<const double> y, std::size_t min_n)
{
  if (x.size() != y.size()) {
    throw StatsError("fit: x and y differ in length");
  }
  if (x.size() < min_n) {
    throw StatsError("fit: need n >= " + std::to_string(min_n));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw StatsError("fit: non-finite input");
    }
  }
}

// Plain least squares of y on a single regressor u (with intercept).
inline std::pair<double, double> simple_ols(std::span<const double> u, std::span<const double> y)
{
  const double mu = mean(u);
  const double my = mean(y);
  double suu = 0.0, suy = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suy += (u[i] - mu) * (y[i] - my);
  }
  if (!(suu > 0.0)) {
    throw StatsError("fit: regressor is constant");
  }
  const double b = suy / suu;
  return {my - b * mu, b};
}

}  // namespace detail

/// Ordinary least squares y = a + b x with R^2 and a slope t-test (df = n - 2).
inline FitResult ols_fit(std::span<const double> x, std::span<const double> y)
{
  detail::check_xy(x, y, 3);
  const auto [a, b] = detail::simple_ols(x, y);
  FitResult fit;
  fit.family = Family::linear;
  fit.params = {a, b};
  detail::finish_fit(fit, x, y);
  const double mx = mean(x);
  double sxx = 0.0;
  for (double v : x) sxx += (v - mx) * (v - mx);
  const double df = static_cast<double>(x.size() - 2);
  const double se = std::sqrt(fit.ss_res / df / sxx);
  fit.slope_se = se;
  if (se > 0.0) {
    fit.slope_t = b / se;
    fit.slope_p = student_t_two_sided_p(*fit.slope_t, df);
  } else {
    fit.slope_t = b == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b);
    fit.slope_p = b == 0.0 ? 1.0 : 0.0;
  }
  return fit;
}

/// Fits one dose-response family. Nonlinear families start from
/// linearized estimates (log-log OLS for power_law; a grid over b with the
/// linear sub-problem solved exactly for saturating) and are refined by
/// Levenberg-Marquardt. Non-convergence is reported via `converged = false`.
inline FitResult fit_family(std::span<const double> x, std::span<const double> y, Family family)
{
  const std::size_t k = family == Family::saturating ? 3 : 2;
  detail::check_xy(x, y, k + 1);
  FitResult fit;
  fit.family = family;

  switch (family) {
    case Family::linear:
      return ols_fit(x, y);

    case Family::log_linear: {
      std::vector<double> lx(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) throw StatsError("log_linear fit requires x > 0");
        lx[i] = std::log(x[i]);
      }
      const auto [a, b] = detail::simple_ols(lx, y);
      fit.params = {a, b};
      detail::finish_fit(fit, x, y);
      return fit;
    }

    case Family::power_law: {
      std::vector<double> p0 = {mean(y), 0.0};
      bool all_pos = true;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) throw StatsError("power_law fit requires x > 0");
        all_pos = all_pos && y[i] > 0.0;
      }
      if (all_pos) {
        std::vector<double> lx(x.size()), ly(y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
          lx[i] = std::log(x[i]);
          ly[i] = std::log(y[i]);
        }
        const auto [la, b] = detail::simple_ols(lx, ly);
        p0 = {std::exp(la), b};
      }
      auto model = [](double xv, const std::vector<double> & p, std::vector<double> & g) {
        const double xb = std::pow(xv, p[1]);
        g[0] = xb;
        g[1] = p[0] * xb * std::log(xv);
        return p[0] * xb;
      };
      auto lm = detail::levenberg_marquardt(model, p0, x, y);
      fit.params = lm.params;
      fit.converged = lm.converged;
      fit.iterations = lm.iterations;
      fit.diagnostic = lm.diagnostic;
      detail::finish_fit(fit, x, y);
      return fit;
    }

    case Family::saturating: {
      // Internally b = exp(beta) keeps the rate positive.
      const double xmax = *std::max_element(x.begin(), x.end());
      const double xscale = xmax > 0.0 ? xmax : 1.0;
      double best_ss = std::numeric_limits<double>::infinity();
      std::vector<double> p0;
      std::vector<double> u(x.size());
      for (int gi = 0; gi <= 60; ++gi) {
        const double b = std::pow(10.0, -4.0 + 6.0 * gi / 60.0) / xscale;
        for (std::size_t i = 0; i < x.size(); ++i) u[i] = 1.0 - std::exp(-b * x[i]);
        std::pair<double, double> ca;
        try {
          ca = detail::simple_ols(u, y);
        } catch (const StatsError &) {
          continue;
        }
        double ss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double r = y[i] - (ca.first + ca.second * u[i]);
          ss += r * r;
        }
        if (ss < best_ss) {
          best_ss = ss;
          p0 = {ca.first, ca.second, std::log(b)};
        }
      }
      if (p0.empty()) {
        fit.params = {mean(y), 0.0, 1.0};
        fit.converged = false;
        fit.diagnostic = "grid initialization failed";
        detail::finish_fit(fit, x, y);
        return fit;
      }
      auto model = [](double xv, const std::vector<double> & p, std::vector<double> & g) {
        const double b = std::exp(p[2]);
        const double e = std::exp(-b * xv);
        g[0] = 1.0;
        g[1] = 1.0 - e;
        g[2] = p[1] * xv * e * b;
        return p[0] + p[1] * (1.0 - e);
      };
      auto lm = detail::levenberg_marquardt(model, p0, x, y);
      fit.params = {lm.params[0], lm.params[1], std::exp(lm.params[2])};
      fit.converged = lm.converged;
      fit.iterations = lm.iterations;
      fit.diagnostic = lm.diagnostic;
      detail::finish_fit(fit, x, y);
      return fit;
    }
  }
  throw StatsError("unknown family");
}

struct AicEntry
{
  Family family = Family::linear;
  double aic = 0.0;
  double delta_aic = 0.0;
};

/// Ranks converged fits by AIC (ascending); ΔAIC is relative to the best.
/// Non-converged fits are excluded.
inline std::vector<AicEntry> aic_compare(std::span<const FitResult> fits)
{
  std::vector<AicEntry> out;
  for (const auto & f : fits) {
    if (f.converged && std::isfinite(f.aic)) out.push_back({f.family, f.aic, 0.0});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto & a, const auto & b) { return a.aic < b.aic; });
  if (!out.empty()) {
    for (auto & e : out) e.delta_aic = e.aic - out.front().aic;
  }
  return out;
}

// ------------------------------------------------------------ multiple comparisons

struct BonferroniResult
{
  std::vector<double> adjusted;
  std::vector<bool> significant;
};

inline BonferroniResult bonferroni(std::span<const double> p_values, double alpha = 0.05)
{
  BonferroniResult r;
  const double m = static_cast<double>(p_values.size());
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw StatsError("bonferroni: p-values must lie in [0, 1]");
    }
    const double adj = std::min(1.0, p * m);
    r.adjusted.push_back(adj);
    r.significant.push_back(adj < alpha);
  }
  return r;
}

}  // namespace cocstress::stats
