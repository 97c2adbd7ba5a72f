#pragma once

#include "mmtc/common.hpp"

namespace mmtc {

inline cx sgn(cx w) {
  double mag = std::abs(w);
  if (mag == 0.0) return {0.0, 0.0};
  return w / mag;
}

inline double sgn_real(double w) { return w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0); }

// Three-branch zero-attraction weight function, as printed:
//   xi^2*w + xi on [-1/xi, 0),  xi^2*w - xi on [0, 1/xi],  0 otherwise.
inline double f_xi(double w, double xi) {
  if (w >= -1.0 / xi && w < 0.0) return xi * xi * w + xi;
  if (w >= 0.0 && w <= 1.0 / xi) return xi * xi * w - xi;
  return 0.0;
}

// Per-real-coordinate l0 penalty displacement. The gradient of the penalty
// gamma*(1 - exp(-xi*|w|)) is gamma*xi*sgn(w)*exp(-xi*|w|); the default uses
// its first-order Taylor form, shrinking any tap with |w| <= 1/xi toward
// zero by gamma*xi*(1 - xi*|w|). The composite variant
// (-gamma*xi*sgn(w)*f_xi(w)) folds an extra xi factor into the step and
// repels small coordinates away from zero; it is kept only behind a flag.
inline double l0_displacement(double w, double gamma, double xi,
                              bool printed_variant = false) {
  if (printed_variant) return -gamma * xi * sgn_real(w) * f_xi(w, xi);
  double a = std::abs(w);
  if (a > 1.0 / xi) return 0.0;
  return -gamma * xi * sgn_real(w) * (1.0 - xi * a);
}

// One adaptive filter with its inverse-correlation matrix. Taps whose
// regressor entries have been zero so far stay at zero and their P block
// stays a scaled identity until data reaches them.
struct RlsFilter {
  cvec w;
  cmat P;

  void init(int dim, double rho, double delta_reg) {
    w = cvec::Zero(dim);
    P = (rho / delta_reg) * cmat::Identity(dim, dim);
  }
  int dim() const { return static_cast<int>(w.size()); }
};

namespace detail {

// Full-dimension recursion on an assembled regressor u:
//   k = P u / (lambda + u^H P u)
//   w <- w + k conj(err) + displacement(w)
//   P <- (P - P u u^H P / denom) / lambda
// The attraction displacement is applied to the leading disp_taps taps.
inline void rls_step(RlsFilter& f, const cvec& u, cx error, double lambda,
                     double gamma, double xi, bool printed_attraction,
                     int disp_taps) {
  cvec pu = f.P * u;
  double denom = lambda + std::real(u.dot(pu));  // u^H P u, real for Hermitian P
  if (!(denom > 0.0))
    throw std::runtime_error("rls_step: gain denominator not positive");
  cvec k = pu / denom;

  f.w += k * std::conj(error);
  if (gamma != 0.0) {
    for (int i = 0; i < disp_taps; ++i) {
      double re = f.w(i).real() + l0_displacement(f.w(i).real(), gamma, xi, printed_attraction);
      double im = f.w(i).imag() + l0_displacement(f.w(i).imag(), gamma, xi, printed_attraction);
      f.w(i) = cx(re, im);
    }
  }
  // P - P u u^H P / denom, formed from pu on both sides so the subtracted
  // term is elementwise Hermitian and P stays exactly Hermitian. Writing it
  // as k (P u)^H instead leaves anti-Hermitian roundoff uncorrected, and the
  // 1/lambda rescale compounds it into a lost positive definiteness after a
  // few hundred steps.
  f.P -= (pu * pu.adjoint()) / denom;
  f.P /= lambda;
}

}  // namespace detail

// RLS update through the leading `len` taps. Zero-padding the regressor
// keeps every update an exact full-size RLS step, so P stays positive
// definite even when consecutive updates use different block lengths; the
// gain denominator and the leading-tap updates coincide with the
// len-dimensional recursion.
inline void rls_update_block(RlsFilter& f, int len, const cvec& y_cat, cx error,
                             double lambda, double gamma, double xi,
                             bool printed_attraction = false) {
  if (len > f.dim() || y_cat.size() != len)
    throw std::logic_error("rls_update_block: length mismatch");
  cvec y_pad = cvec::Zero(f.dim());
  y_pad.head(len) = y_cat;
  detail::rls_step(f, y_pad, error, lambda, gamma, xi, printed_attraction, len);
}

// RLS update on a caller-assembled full-dimension regressor whose inactive
// taps carry zeros (scattered feedback layout). The attraction displacement
// covers every tap: with a full gain vector all of them move each step, and
// the inactive ones are exactly the sparse targets.
inline void rls_update_padded(RlsFilter& f, const cvec& u, cx error,
                              double lambda, double gamma, double xi,
                              bool printed_attraction = false) {
  if (u.size() != f.dim())
    throw std::logic_error("rls_update_padded: length mismatch");
  detail::rls_step(f, u, error, lambda, gamma, xi, printed_attraction, f.dim());
}

inline void rls_update(RlsFilter& f, const cvec& y_cat, cx error, double lambda,
                       double gamma, double xi, bool printed_attraction = false) {
  rls_update_block(f, f.dim(), y_cat, error, lambda, gamma, xi,
                   printed_attraction);
}

}  // namespace mmtc
