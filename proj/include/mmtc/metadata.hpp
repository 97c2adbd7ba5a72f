#pragma once

#include <vector>

#include "mmtc/common.hpp"
#include "mmtc/config.hpp"

namespace mmtc {

// Orthonormal sequence set: row a is the metadata sequence of codebook
// index a. Any unitary basis works; a scaled DFT is used.
struct MetadataCodebook {
  cmat sequences;  // tau_phi x tau_phi, rows orthonormal

  int size() const { return static_cast<int>(sequences.rows()); }
  cvec sequence(int a) const { return sequences.row(a).transpose(); }
};

inline MetadataCodebook build_codebook(int tau_phi) {
  if (tau_phi < 1) throw std::invalid_argument("build_codebook: tau_phi >= 1");
  cmat f(tau_phi, tau_phi);
  const double scale = 1.0 / std::sqrt(static_cast<double>(tau_phi));
  for (int a = 0; a < tau_phi; ++a)
    for (int t = 0; t < tau_phi; ++t) {
      double ang = -2.0 * M_PI * a * t / tau_phi;
      f(a, t) = scale * cx(std::cos(ang), std::sin(ang));
    }
  return {f};
}

// Probability that c of the other K-1 active devices picked the observed
// device's sequence: Binomial(K-1, 1/tau_phi).
inline double collision_probability(int c, int K, int tau_phi) {
  if (c < 0 || c > K - 1)
    throw std::domain_error("collision_probability: need 0 <= c <= K-1");
  if (tau_phi < 1)
    throw std::invalid_argument("collision_probability: tau_phi >= 1");
  double p = 1.0 / tau_phi;
  return std::exp(log_binomial(K - 1, c) + c * std::log(p) +
                  (K - 1 - c) * std::log1p(-p));
}

// Contaminator sets per device: C_i = other active devices sharing i's
// sequence. Indices of inactive devices get empty sets.
struct CollisionReport {
  std::vector<std::vector<int>> contaminators;

  int count(int i) const { return static_cast<int>(contaminators[i].size()); }
};

inline CollisionReport collision_report(const std::vector<int>& assignment,
                                        const std::vector<uint8_t>& delta) {
  int n = static_cast<int>(assignment.size());
  CollisionReport rep;
  rep.contaminators.resize(n);
  for (int i = 0; i < n; ++i) {
    if (!delta[i]) continue;
    for (int j = 0; j < n; ++j)
      if (j != i && delta[j] && assignment[j] == assignment[i])
        rep.contaminators[i].push_back(j);
  }
  return rep;
}

struct ChannelEstimate {
  cmat H_hat;    // M x N, zero columns for inactive devices
  rvec err_var;  // per-coefficient error variance of each column estimate
};

// Correlate the metadata block against each active device's sequence and
// scale by the LMMSE coefficient. Devices sharing a sequence share the
// correlator output, so their estimates are contaminated mixtures.
// err_var[n] is the true per-coefficient MSE of this estimator; in the
// normalization tau_phi/sigma_v2 = 1 with no collision it reduces to the
// nominal eta_n/(b_n*eta_n + 1).
inline ChannelEstimate lmmse_channel_estimate(
    const cmat& Y_phi, const MetadataCodebook& codebook,
    const std::vector<int>& assignment,
    const std::vector<DeviceProfile>& profiles, double sigma_v2, int tau_phi) {
  const int m = static_cast<int>(Y_phi.rows());
  const int n = static_cast<int>(profiles.size());
  if (Y_phi.cols() != tau_phi)
    throw std::invalid_argument("lmmse_channel_estimate: Y_phi must be M x tau_phi");

  ChannelEstimate est;
  est.H_hat = cmat::Zero(m, n);
  est.err_var = rvec::Zero(n);

  std::vector<uint8_t> active(n, 0);
  for (int i = 0; i < n; ++i) active[i] = assignment[i] >= 0 ? 1 : 0;
  CollisionReport rep = collision_report(assignment, active);

  const double sqrt_tau = std::sqrt(static_cast<double>(tau_phi));
  for (int i = 0; i < n; ++i) {
    if (!active[i]) {
      est.err_var(i) = profiles[i].eta;  // no observation, prior variance
      continue;
    }
    cvec corr = Y_phi * codebook.sequence(assignment[i]).conjugate();
    double denom = sigma_v2;
    double cross = 0.0;  // power-weighted gain of the contaminators
    denom += tau_phi * profiles[i].b * profiles[i].eta;
    for (int j : rep.contaminators[i]) {
      denom += tau_phi * profiles[j].b * profiles[j].eta;
      cross += tau_phi * profiles[j].b * profiles[j].eta;
    }
    double c = sqrt_tau * std::sqrt(profiles[i].b) * profiles[i].eta / denom;
    est.H_hat.col(i) = c * corr;
    est.err_var(i) = profiles[i].eta * (cross + sigma_v2) / denom;
  }
  return est;
}

// Activity-blind variant for the detection pipeline. The receiver knows every
// device's assigned sequence but not which devices transmitted, so each column
// is the LMMSE estimate of the effective channel delta_i * h_i: the correlator
// output shrunk by the activity probability, with the interference sum running
// over every device sharing the sequence weighted by its own probability.
// Inactive devices thus get small nonzero columns instead of exact zeros;
// telling them apart is the detector's job.
inline ChannelEstimate blind_channel_estimate(
    const cmat& Y_phi, const MetadataCodebook& codebook,
    const std::vector<int>& assignment,
    const std::vector<DeviceProfile>& profiles, double sigma_v2, int tau_phi) {
  const int m = static_cast<int>(Y_phi.rows());
  const int n = static_cast<int>(profiles.size());
  if (Y_phi.cols() != tau_phi)
    throw std::invalid_argument("blind_channel_estimate: Y_phi must be M x tau_phi");

  ChannelEstimate est;
  est.H_hat = cmat::Zero(m, n);
  est.err_var = rvec::Zero(n);

  const double sqrt_tau = std::sqrt(static_cast<double>(tau_phi));
  for (int i = 0; i < n; ++i) {
    if (assignment[i] < 0)
      throw std::invalid_argument(
          "blind_channel_estimate: every device needs an assigned sequence");
    cvec corr = Y_phi * codebook.sequence(assignment[i]).conjugate();
    double denom = sigma_v2;
    for (int j = 0; j < n; ++j)
      if (assignment[j] == assignment[i])
        denom += tau_phi * profiles[j].rho * profiles[j].b * profiles[j].eta;
    const double num =
        sqrt_tau * std::sqrt(profiles[i].b) * profiles[i].eta * profiles[i].rho;
    est.H_hat.col(i) = (num / denom) * corr;
    est.err_var(i) = profiles[i].rho * profiles[i].eta - num * num / denom;
  }
  return est;
}

}  // namespace mmtc
