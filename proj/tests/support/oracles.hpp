#pragma once

// Independent reference implementations used as test oracles. Each one is a
// deliberately naive loop, never a call back into the code under test.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "diffcore/array.hpp"

namespace oracle {

using pbcnn::diffcore::Array;

inline double relative_error(const Array& a, const Array& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  if (scale < 1e-10) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

/// Central differences of a scalar function.
inline Array numeric_gradient(const std::function<double(const Array&)>& f, Array x, double h = 1e-5) {
  Array g(x.extents());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Same-padded stride-1 convolution, input [n,h,w,cin], kernel [kh,kw,cin,cout].
inline Array conv2d(const Array& x, const Array& k, const Array& b) {
  const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2), ci = x.extent(3);
  const std::size_t kh = k.extent(0), kw = k.extent(1), co = k.extent(3);
  Array out({n, h, w, co});
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t o = 0; o < co; ++o) {
          double acc = b[o];
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t c = 0; c < kw; ++c) {
              const long r = static_cast<long>(i + a) - static_cast<long>(kh / 2);
              const long s = static_cast<long>(j + c) - static_cast<long>(kw / 2);
              if (r < 0 || s < 0 || r >= static_cast<long>(h) || s >= static_cast<long>(w)) continue;
              for (std::size_t q = 0; q < ci; ++q) {
                acc += x.at({e, static_cast<std::size_t>(r), static_cast<std::size_t>(s), q}) * k.at({a, c, q, o});
              }
            }
          out.at({e, i, j, o}) = acc;
        }
  return out;
}

/// Composite Simpson quadrature of KL(N(mu,sigma^2) || N(m,s^2)).
inline double kl_quadrature(double mu, double sigma, double m, double s, int intervals = 40000) {
  const double lo = mu - 14.0 * sigma, hi = mu + 14.0 * sigma;
  const double step = (hi - lo) / intervals;
  auto f = [&](double x) {
    const double zq = (x - mu) / sigma, zp = (x - m) / s;
    const double q = std::exp(-0.5 * zq * zq) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const double log_ratio = -0.5 * zq * zq - std::log(sigma) + 0.5 * zp * zp + std::log(s);
    return q * log_ratio;
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) acc += f(lo + i * step) * (i % 2 ? 4.0 : 2.0);
  return acc * step / 3.0;
}

/// P(score_id < score_ood) + 0.5 P(tie), counted over every ID/OOD pair.
inline double mann_whitney(const std::vector<double>& scores, const std::vector<bool>& is_id) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!is_id[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (is_id[j]) continue;
      pairs += 1.0;
      if (scores[i] < scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Uncertainty measures straight from their definitions over an M x N matrix.
inline std::vector<double> column_means(const std::vector<std::vector<double>>& p) {
  std::vector<double> m(p[0].size(), 0.0);
  for (const auto& row : p)
    for (std::size_t i = 0; i < row.size(); ++i) m[i] += row[i];
  for (double& v : m) v /= static_cast<double>(p.size());
  return m;
}

inline double entropy_bits(const std::vector<std::vector<double>>& p) {
  double h = 0.0;
  for (double v : column_means(p)) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

inline std::vector<double> column_variances(const std::vector<std::vector<double>>& p) {
  const auto mean = column_means(p);
  std::vector<double> var(mean.size(), 0.0);
  for (std::size_t i = 0; i < mean.size(); ++i) {
    for (const auto& row : p) var[i] += (row[i] - mean[i]) * (row[i] - mean[i]);
    var[i] /= static_cast<double>(p.size() - 1);
  }
  return var;
}

inline double total_std(const std::vector<std::vector<double>>& p) {
  double s = 0.0;
  for (double v : column_variances(p)) s += v;
  return std::sqrt(s);
}

inline double classwise_std_max(const std::vector<std::vector<double>>& p) {
  double best = 0.0;
  for (double v : column_variances(p)) best = std::max(best, std::sqrt(v));
  return best;
}

inline double classwise_range_max(const std::vector<std::vector<double>>& p) {
  double best = 0.0;
  for (std::size_t i = 0; i < p[0].size(); ++i) {
    double lo = p[0][i], hi = p[0][i];
    for (const auto& row : p) {
      lo = std::min(lo, row[i]);
      hi = std::max(hi, row[i]);
    }
    best = std::max(best, hi - lo);
  }
  return best;
}

/// Error rate among examples with uncertainty <= t.
inline double risk_at(const std::vector<double>& u, const std::vector<bool>& correct, double t,
                      double* coverage = nullptr) {
  double kept = 0.0, wrong = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] <= t) {
      kept += 1.0;
      if (!correct[i]) wrong += 1.0;
    }
  }
  if (coverage) *coverage = kept / static_cast<double>(u.size());
  return kept > 0.0 ? wrong / kept : 0.0;
}

/// Magnitude at one frequency bin via the Goertzel recurrence, with a
/// periodic Hann window applied over the frame.
inline double goertzel_hann(const std::vector<double>& frame, std::size_t bin) {
  const std::size_t n = frame.size();
  const double w = 2.0 * std::numbers::pi * static_cast<double>(bin) / static_cast<double>(n);
  const double coeff = 2.0 * std::cos(w);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    const double s0 = frame[k] * hann + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  const std::complex<double> y = std::complex<double>(s1, 0.0) - std::polar(1.0, -w) * s2;
  return std::abs(y);
}

}  // namespace oracle
