#pragma once

#include <cstdint>

namespace obml {

// Standard normal CDF. Absolute error well below 1e-12 over the full range.
// Throws std::domain_error on non-finite input.
double std_normal_cdf(double x);

// log(std_normal_cdf(x)), finite for every finite x; switches to an
// asymptotic tail expansion where erfc underflows.
double log_std_normal_cdf(double x);

// Inverse standard normal CDF on the open interval (0,1).
// Rational initial guess refined by a Newton step; |cdf(inv(p)) - p| <= 1e-10
// on [1e-9, 1-1e-9]. Throws std::domain_error for p outside (0,1); callers
// that may see saturated probabilities clamp first.
double std_normal_cdf_inv(double p);

// Deterministic splittable random stream. Streams with equal (seed, stream_id)
// produce bit-identical sequences; distinct stream ids give statistically
// independent sequences. Not shared between concurrent tasks; each task owns
// its stream.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();

  // Uniform on (0, 1].
  double next_unit();

  // Standard normal via Box-Muller; consumes two uniforms per pair of draws.
  double next_gaussian();

  // N(mean, variance). variance == 0 returns mean exactly without consuming
  // randomness. Throws std::domain_error for negative variance.
  double gaussian(double mean, double variance);

 private:
  std::uint64_t state_;
  std::uint64_t increment_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

double sample_gaussian(double mean, double variance, RngStream& rng);

}  // namespace obml
