#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace mmtc {

using cx = std::complex<double>;
using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;
using rvec = Eigen::VectorXd;
using rmat = Eigen::MatrixXd;
using ivec = Eigen::VectorXi;

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

// Stafford mix13 finalizer; used to derive independent engine seeds so that
// per-trial streams do not depend on scheduling order.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic stream for (seed, a, b): identical regardless of which worker
// runs the trial.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t a = 0,
                                   std::uint64_t b = 0) {
  std::uint64_t s = mix64(seed);
  s = mix64(s ^ (a * 0xd1342543de82ef95ULL));
  s = mix64(s ^ (b * 0xaf251af3b0f025b5ULL));
  return std::mt19937_64(s);
}

// CN(0, sigma2) draw, split evenly over the real and imaginary parts.
inline cx cgauss(std::mt19937_64& rng, double sigma2 = 1.0) {
  std::normal_distribution<double> g(0.0, std::sqrt(sigma2 / 2.0));
  double re = g(rng);
  double im = g(rng);
  return {re, im};
}

inline cmat cgauss_matrix(int rows, int cols, std::mt19937_64& rng,
                          double sigma2 = 1.0) {
  cmat out(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) out(r, c) = cgauss(rng, sigma2);
  return out;
}

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log(exp(a) + exp(b)) without overflow (max-star).
inline double log_sum_exp(double a, double b) {
  double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace mmtc
