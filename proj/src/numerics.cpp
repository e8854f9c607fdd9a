#include "obml/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace obml {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogTwoPi = 1.8378770664093454836;

double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// Acklam's rational approximation, relative error ~1.15e-9 before refinement.
double cdf_inv_estimate(double p) {
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// SplitMix-style 64-bit finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

double std_normal_cdf(double x) {
  if (!std::isfinite(x)) throw std::domain_error("std_normal_cdf: non-finite input");
  return 0.5 * std::erfc(-x * kInvSqrt2);
}

double log_std_normal_cdf(double x) {
  if (!std::isfinite(x)) throw std::domain_error("log_std_normal_cdf: non-finite input");
  if (x > -37.0) {
    return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  }
  // Far left tail: log Q(|x|) with the asymptotic expansion of Mills' ratio.
  const double t = -x;
  const double t2 = t * t;
  const double series = -1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2);
  return -0.5 * t2 - 0.5 * kLogTwoPi - std::log(t) + std::log1p(series);
}

double std_normal_cdf_inv(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("std_normal_cdf_inv: p must lie strictly inside (0,1)");
  }
  double x = cdf_inv_estimate(p);
  // One Newton step against the erfc-based CDF. Work in the nearer tail so the
  // residual does not cancel.
  if (p <= 0.5) {
    const double err = 0.5 * std::erfc(-x * kInvSqrt2) - p;
    x -= err / std_normal_pdf(x);
  } else {
    const double q = 1.0 - p;
    const double err = 0.5 * std::erfc(x * kInvSqrt2) - q;  // Q(x) - q
    x += err / std_normal_pdf(x);
  }
  return x;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) {
  state_ = mix64(seed ^ 0x9e3779b97f4a7c15ULL) ^ mix64(stream_id + 0x632be59bd9b4e019ULL);
  increment_ = mix64(stream_id ^ (seed << 1) ^ 0xda442d24691348aaULL) | 1ULL;
}

std::uint64_t RngStream::next_u64() {
  state_ += increment_;
  return mix64(state_);
}

double RngStream::next_unit() {
  // 53-bit mantissa mapped to (0, 1]; never zero, safe under log().
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = next_unit();
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double RngStream::gaussian(double mean, double variance) {
  if (variance < 0.0 || !std::isfinite(variance)) {
    throw std::domain_error("gaussian: variance must be finite and >= 0");
  }
  if (variance == 0.0) return mean;
  return mean + std::sqrt(variance) * next_gaussian();
}

double sample_gaussian(double mean, double variance, RngStream& rng) {
  return rng.gaussian(mean, variance);
}

}  // namespace obml
