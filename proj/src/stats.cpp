#include "synthgym/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "synthgym/error.hpp"

namespace synthgym::stats {

double kolmogorov_sf(double x) {
  if (x < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 20; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1) ? term : -term;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double tol = 1e-12;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < tol) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DataError("incomplete beta needs positive parameters");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double f_cdf(double f, double df1, double df2) {
  if (f <= 0.0) return 0.0;
  if (std::isinf(f)) return 1.0;
  return incomplete_beta(0.5 * df1, 0.5 * df2, df1 * f / (df1 * f + df2));
}

namespace {
// Upper tail of F without cancellation.
double f_sf(double f, double df1, double df2) {
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f));
}
}  // namespace

double mean(std::span<const double> x) {
  double s = 0.0;
  for (const double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (const double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

TestResult ks2_test(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("KS test needs nonempty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double k = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    k = std::max(k, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  TestResult r;
  r.statistic = k;
  r.p_value = kolmogorov_sf(std::sqrt(na * nb / (na + nb)) * k);
  return r;
}

TestResult t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("t test needs samples of size >= 2");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double diff = mean(a) - mean(b);
  const double pooled = std::sqrt(0.5 * (variance(a) + variance(b)));
  TestResult r;
  if (pooled == 0.0) {
    r.degenerate = true;
    if (diff == 0.0) return r;
    r.statistic = diff > 0 ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  const double t = diff / pooled * std::sqrt(na * nb / (na + nb));
  const double df = na + nb - 2.0;
  r.statistic = t;
  r.p_value = std::min(1.0, incomplete_beta(0.5 * df, 0.5, df / (df + t * t)));
  return r;
}

TestResult f_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("F test needs samples of size >= 2");
  const double va = variance(a);
  const double vb = variance(b);
  TestResult r;
  if (vb == 0.0) {
    r.degenerate = true;
    if (va == 0.0) {
      r.statistic = 1.0;
      return r;
    }
    r.statistic = std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  const double f = va / vb;
  const double d1 = static_cast<double>(a.size() - 1);
  const double d2 = static_cast<double>(b.size() - 1);
  r.statistic = f;
  r.p_value = std::min(1.0, 2.0 * std::min(f_cdf(f, d1, d2), f_sf(f, d1, d2)));
  return r;
}

TestResult anova_oneway(std::span<const std::vector<double>> groups) {
  std::size_t k = 0;
  std::size_t n = 0;
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    ++k;
    n += g.size();
    for (const double v : g) total += v;
  }
  if (k < 2 || n <= k) throw DataError("ANOVA needs at least 2 nonempty groups and n > groups");
  const double grand = total / static_cast<double>(n);
  double ssb = 0.0;
  double ssw = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    const double m = mean(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (const double v : g) ssw += (v - m) * (v - m);
  }
  const double dfb = static_cast<double>(k - 1);
  const double dfw = static_cast<double>(n - k);
  TestResult r;
  if (ssw == 0.0) {
    r.degenerate = true;
    if (ssb == 0.0) {
      r.statistic = 0.0;
      return r;
    }
    r.statistic = std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  r.statistic = (ssb / dfb) / (ssw / dfw);
  r.p_value = f_sf(r.statistic, dfb, dfw);
  return r;
}

TestResult categorical_f_test(std::span<const double> a_ranks, std::span<const double> b_ranks) {
  const std::vector<double> groups[] = {{a_ranks.begin(), a_ranks.end()},
                                        {b_ranks.begin(), b_ranks.end()}};
  return anova_oneway(groups);
}

ThreeSigmaResult three_sigma_test(std::span<const double> real, std::span<const double> syn,
                                  double sigma_multiplier, double coverage) {
  if (real.size() < 2 || syn.empty()) throw DataError("three-sigma test needs data");
  const double m = mean(real);
  const double sd = std::sqrt(variance(real));
  ThreeSigmaResult r;
  r.lower = m - sigma_multiplier * sd;
  r.upper = m + sigma_multiplier * sd;
  std::size_t inside = 0;
  for (const double v : syn) inside += (v >= r.lower && v <= r.upper) ? 1 : 0;
  r.fraction = static_cast<double>(inside) / static_cast<double>(syn.size());
  r.pass = r.fraction > coverage;
  return r;
}

namespace {

TauResult tau_from_counts(std::int64_t s, std::int64_t n0, std::int64_t n1, std::int64_t n2) {
  TauResult r;
  if (n0 - n1 == 0 || n0 - n2 == 0) {
    r.degenerate = true;
    return r;
  }
  r.tau = static_cast<double>(s) /
          std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  r.tau = std::clamp(r.tau, -1.0, 1.0);
  return r;
}

std::int64_t tied_pairs_sorted(const std::vector<double>& v) {
  std::int64_t total = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i + 1;
    while (j < v.size() && v[j] == v[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

// Merge sort counting inversions (strict).
std::int64_t sort_count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                              std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = sort_count_swaps(v, buf, lo, mid) + sort_count_swaps(v, buf, mid, hi);
  std::size_t i = lo;
  std::size_t j = mid;
  std::size_t k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      buf[k++] = v[j++];
      swaps += static_cast<std::int64_t>(mid - i);
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

TauResult kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DataError("Kendall tau needs equal-length columns of size >= 2");
  }
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[idx[i]];
    ys[i] = y[idx[i]];
  }
  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t n1 = tied_pairs_sorted(xs);
  std::int64_t n3 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && xs[j] == xs[i] && ys[j] == ys[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    n3 += t * (t - 1) / 2;
    i = j;
  }
  std::vector<double> buf(n);
  const std::int64_t swaps = sort_count_swaps(ys, buf, 0, n);
  const std::int64_t n2 = tied_pairs_sorted(ys);
  const std::int64_t s = n0 - n1 - n2 + n3 - 2 * swaps;
  return tau_from_counts(s, n0, n1, n2);
}

namespace serial {

TauResult kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DataError("Kendall tau needs equal-length columns of size >= 2");
  }
  const std::size_t n = x.size();
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::int64_t tie_x = 0;
  std::int64_t tie_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0) ++tie_x;
      if (dy == 0.0) ++tie_y;
      if (dx != 0.0 && dy != 0.0) {
        if ((dx > 0.0) == (dy > 0.0)) ++concordant;
        else ++discordant;
      }
    }
  }
  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  return tau_from_counts(concordant - discordant, n0, tie_x, tie_y);
}

}  // namespace serial

}  // namespace synthgym::stats
