#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "mmtc/common.hpp"
#include "mmtc/config.hpp"
#include "mmtc/metadata.hpp"
#include "mmtc/modulation.hpp"

namespace mmtc {

inline std::vector<double> sample_activity_probabilities(double alpha,
                                                         double beta, int n,
                                                         std::mt19937_64& rng) {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument(
        "sample_activity_probabilities: shape parameters must be > 0");
  std::gamma_distribution<double> ga(alpha, 1.0), gb(beta, 1.0);
  std::vector<double> rho(n);
  for (int i = 0; i < n; ++i) {
    double x = ga(rng);
    double y = gb(rng);
    rho[i] = x / (x + y);
  }
  return rho;
}

inline double binomial_activity_pmf(int K, int N, double rho) {
  if (K < 0 || K > N)
    throw std::domain_error("binomial_activity_pmf: need 0 <= K <= N");
  if (!(rho >= 0.0 && rho <= 1.0))
    throw std::invalid_argument("binomial_activity_pmf: rho outside [0,1]");
  if (rho == 0.0) return K == 0 ? 1.0 : 0.0;
  if (rho == 1.0) return K == N ? 1.0 : 0.0;
  return std::exp(log_binomial(N, K) + K * std::log(rho) +
                  (N - K) * std::log1p(-rho));
}

// Beta-binomial activity count pmf, log-gamma evaluation:
//   p(K) = C(N,K) * B(K+alpha, N-K+beta) / B(alpha, beta)
inline double beta_binomial_pmf(int K, int N, double alpha, double beta) {
  if (K < 0 || K > N)
    throw std::domain_error("beta_binomial_pmf: need 0 <= K <= N");
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("beta_binomial_pmf: shape parameters must be > 0");
  double lg = log_binomial(N, K);
  lg += std::lgamma(K + alpha) + std::lgamma(N - K + beta) -
        std::lgamma(N + alpha + beta);
  lg += std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta);
  return std::exp(lg);
}

// Generative counterpart of the beta-binomial: one activity probability
// drawn per slot, shared across devices. Used to validate the aggregate
// traffic model; detection experiments use per-device profiles instead.
inline int sample_activity_count(int N, double alpha, double beta,
                                 std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(alpha, 1.0), gb(beta, 1.0);
  double x = ga(rng);
  double y = gb(rng);
  double rho = x / (x + y);
  std::binomial_distribution<int> bin(N, rho);
  return bin(rng);
}

// Large-scale gain: 10*log10(chi) + omega in dB with omega ~ N(0, sigma^2),
// chi the mean gain given in dB. Returned in linear scale.
inline std::vector<double> sample_large_scale(double snr_db,
                                              double sigma_omega, int n,
                                              std::mt19937_64& rng) {
  if (sigma_omega < 0.0)
    throw std::invalid_argument("sample_large_scale: sigma_omega must be >= 0");
  std::normal_distribution<double> g(0.0, sigma_omega);
  std::vector<double> eta(n);
  for (int i = 0; i < n; ++i)
    eta[i] = db_to_lin(snr_db + (sigma_omega > 0.0 ? g(rng) : 0.0));
  return eta;
}

// h_n = a_n * sqrt(eta_n), a_n entries iid CN(0,1).
inline cmat draw_channel(int m, const std::vector<double>& eta,
                         std::mt19937_64& rng) {
  int n = static_cast<int>(eta.size());
  cmat h(m, n);
  for (int c = 0; c < n; ++c) {
    if (!(eta[c] > 0.0))
      throw std::invalid_argument("draw_channel: eta entries must be > 0");
    double s = std::sqrt(eta[c]);
    for (int r = 0; r < m; ++r) h(r, c) = s * cgauss(rng);
  }
  return h;
}

// Device population for one experiment: rho ~ Beta(alpha,beta), b uniform in
// [power_min, power_max], eta from the 0 dB-mean large-scale model (the
// scenario SNR enters through the noise variance, not eta).
inline std::vector<DeviceProfile> make_profiles(const SystemConfig& cfg,
                                                std::mt19937_64& rng) {
  std::vector<double> rho =
      sample_activity_probabilities(cfg.alpha, cfg.beta, cfg.n_devices, rng);
  std::uniform_real_distribution<double> ub(cfg.power_min, cfg.power_max);
  std::vector<double> b(cfg.n_devices);
  for (auto& v : b) v = ub(rng);
  std::vector<double> eta =
      sample_large_scale(0.0, cfg.sigma_omega, cfg.n_devices, rng);
  std::vector<DeviceProfile> profiles(cfg.n_devices);
  for (int i = 0; i < cfg.n_devices; ++i) {
    profiles[i] = {rho[i], b[i], eta[i]};
    profiles[i].validate();
  }
  return profiles;
}

struct SlotRealization {
  std::vector<uint8_t> delta;   // activity mask
  cmat H;                       // M x N channel (A scaled by sqrt(eta))
  cmat A;                       // M x N fast fading
  cmat symbols;                 // N x tau transmitted symbols, zero rows inactive
  cmat Y;                       // M x tau received block
  double sigma_v2 = 0.0;
  // Sequence index assigned to each device. The receiver knows this mapping
  // for every device; only active devices transmit theirs.
  std::vector<int> assignment;
  // N x tau_phi receiver-side training reference: the metadata actually on
  // the air (zero rows for silent devices). Resolving which devices
  // transmitted during the metadata phase is taken as given by the adaptive
  // scheme; the conventional estimation path never uses this knowledge.
  cmat pilots;
};

// Balanced random sequence schedule: hands out the whole codebook in random
// order before reusing any index, so each device's sequence is uniform
// marginally but no sequence carries more than ceil(n/tau_phi) devices. With
// n <= tau_phi the schedule is collision free.
inline std::vector<int> schedule_sequences(int n, int tau_phi,
                                           std::mt19937_64& rng) {
  std::vector<int> out(n);
  std::vector<int> perm(tau_phi);
  int filled = 0;
  while (filled < n) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int k = 0; k < tau_phi && filled < n; ++k) out[filled++] = perm[k];
  }
  return out;
}

// Fills slot.pilots from slot.assignment and slot.delta.
inline void fill_pilots(SlotRealization& slot, const MetadataCodebook& codebook) {
  const int n = static_cast<int>(slot.assignment.size());
  slot.pilots = cmat::Zero(n, codebook.size());
  for (int i = 0; i < n; ++i)
    if (slot.delta[i] && slot.assignment[i] >= 0)
      slot.pilots.row(i) = codebook.sequences.row(slot.assignment[i]);
}

// Received block for a given channel and symbol matrix with fresh noise.
// Metadata instants are scaled by sqrt(tau_phi), data instants by sqrt(tau_x).
inline cmat synthesize_received(const SystemConfig& cfg,
                                const std::vector<DeviceProfile>& profiles,
                                const cmat& H, const cmat& symbols,
                                double sigma_v2, std::mt19937_64& rng) {
  const int n = cfg.n_devices, m = cfg.m_antennas;
  const int tau_phi = cfg.tau_phi, tau = cfg.tau();
  cvec scaled_b(n);
  for (int i = 0; i < n; ++i) scaled_b(i) = std::sqrt(profiles[i].b);
  const double g_phi = std::sqrt(static_cast<double>(tau_phi));
  const double g_x = std::sqrt(static_cast<double>(cfg.tau_x));
  cmat Y(m, tau);
  for (int t = 0; t < tau; ++t) {
    const double g = t < tau_phi ? g_phi : g_x;
    cvec bx = symbols.col(t).cwiseProduct(scaled_b);
    Y.col(t) = g * (H * bx);
    for (int r = 0; r < m; ++r) Y(r, t) += cgauss(rng, sigma_v2);
  }
  return Y;
}

// Assembles one slot: metadata block y[t] = H*sqrt(tau_phi)*B*phi[t] + v,
// data block y[t] = H*sqrt(tau_x)*B*x[t] + v.
inline SlotRealization generate_slot(const SystemConfig& cfg,
                                     const std::vector<DeviceProfile>& profiles,
                                     const MetadataCodebook& codebook,
                                     std::mt19937_64& rng) {
  const int n = cfg.n_devices, m = cfg.m_antennas;
  const int tau_phi = cfg.tau_phi, tau = cfg.tau();
  if (codebook.size() != tau_phi)
    throw std::invalid_argument("generate_slot: codebook size != tau_phi");
  const auto& alphabet = augmented_alphabet();

  SlotRealization slot;
  slot.sigma_v2 = cfg.noise_variance();
  slot.delta.resize(n);

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> usym(0, alphabet.constellation_size() - 1);

  for (int i = 0; i < n; ++i) slot.delta[i] = u01(rng) < profiles[i].rho;
  slot.assignment = schedule_sequences(n, tau_phi, rng);
  fill_pilots(slot, codebook);

  std::vector<double> eta(n);
  for (int i = 0; i < n; ++i) eta[i] = profiles[i].eta;
  slot.A = cgauss_matrix(m, n, rng);
  slot.H = slot.A;
  for (int i = 0; i < n; ++i) slot.H.col(i) *= std::sqrt(eta[i]);

  slot.symbols = cmat::Zero(n, tau);
  for (int i = 0; i < n; ++i) {
    if (!slot.delta[i]) continue;
    slot.symbols.row(i).head(tau_phi) =
        codebook.sequences.row(slot.assignment[i]);
    for (int t = tau_phi; t < tau; ++t)
      slot.symbols(i, t) = alphabet[usym(rng)];
  }

  slot.Y = synthesize_received(cfg, profiles, slot.H, slot.symbols,
                               slot.sigma_v2, rng);
  return slot;
}

}  // namespace mmtc
