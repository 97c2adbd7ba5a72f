#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmtc/common.hpp"
#include "mmtc/config.hpp"
#include "mmtc/detector.hpp"
#include "mmtc/metadata.hpp"
#include "mmtc/traffic.hpp"

namespace mmtc {

// ---- complex-FLOP cost models ----

enum class Algorithm {
  kLmmse,
  kSaSic,
  kSaSicAsqrd,
  kAaRlsLinear,
  kAaRlsLinearIl,
  kAaRlsDf,
  kAaRlsDfIl,
  kAaVglDf,
};

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kLmmse: return "lmmse";
    case Algorithm::kSaSic: return "sa_sic";
    case Algorithm::kSaSicAsqrd: return "sa_sic_asqrd";
    case Algorithm::kAaRlsLinear: return "aa_rls_linear";
    case Algorithm::kAaRlsLinearIl: return "aa_rls_linear_il";
    case Algorithm::kAaRlsDf: return "aa_rls_df";
    case Algorithm::kAaRlsDfIl: return "aa_rls_df_il";
    case Algorithm::kAaVglDf: return "aa_vgl_df";
  }
  throw std::invalid_argument("algorithm_name: unknown algorithm");
}

struct FlopReport {
  Algorithm algorithm;
  int m = 0;
  int n = 0;
  int card_a0 = 0;
  long long vartheta_sum = 0;
  long long g_ext = 0;
  long long flops = 0;
};

// Per-slot-instant cost of each detector, in complex FLOPs. The list terms
// charge 2*M*|A0| per device flagged unreliable, and the external list adds
// 2*M per candidate tuple in the group of size G.
inline long long flop_count(Algorithm alg, int m, int n, int card_a0,
                            const std::vector<int>& vartheta, long long g_ext) {
  if (m < 1 || n < 1) throw std::invalid_argument("flop_count: need M,N >= 1");
  if (card_a0 < 1) throw std::invalid_argument("flop_count: need |A0| >= 1");
  if (g_ext < 0) throw std::invalid_argument("flop_count: G < 0");
  if (static_cast<int>(vartheta.size()) > n)
    throw std::invalid_argument("flop_count: vartheta longer than N");
  const long long M = m, N = n, A = card_a0;
  long long vt = 0;
  for (int v : vartheta) {
    if (v != 0 && v != 1)
      throw std::invalid_argument("flop_count: vartheta entries must be 0/1");
    vt += v;
  }
  auto df_sum = [&]() {
    long long s = 0;
    for (long long i = 1; i <= N; ++i) s += 6 * (M + i) * (M + i) + 10 * (M + i);
    return s;
  };
  switch (alg) {
    case Algorithm::kLmmse:
      return 2 * M * M * M + 4 * (N + 1) * M * M + 2 * (N * N + N + 1) * M -
             (N * N + N);
    case Algorithm::kSaSic:
      return A * (N * N * N + N * N + 6);
    case Algorithm::kSaSicAsqrd:
      return 2 * N * N * N + 4 * (M + 1) * N * N + (M - 1) * N;
    case Algorithm::kAaRlsLinear:
      return (6 * M * M + 10 * M) * N;
    case Algorithm::kAaRlsLinearIl:
      return (6 * M * M + 10 * M) * N + 2 * M * A * vt;
    case Algorithm::kAaRlsDf:
      return df_sum();
    case Algorithm::kAaRlsDfIl:
      return df_sum() + 2 * M * A * vt;
    case Algorithm::kAaVglDf:
      return df_sum() + 2 * M * A * vt + 2 * M * g_ext;
  }
  throw std::invalid_argument("flop_count: unknown algorithm");
}

inline FlopReport make_flop_report(Algorithm alg, int m, int n, int card_a0,
                                   const std::vector<int>& vartheta,
                                   long long g_ext) {
  FlopReport r;
  r.algorithm = alg;
  r.m = m;
  r.n = n;
  r.card_a0 = card_a0;
  r.vartheta_sum = std::accumulate(vartheta.begin(), vartheta.end(), 0LL);
  r.g_ext = g_ext;
  r.flops = flop_count(alg, m, n, card_a0, vartheta, g_ext);
  return r;
}

// ---- diversity order ----

// d = M - K + (vartheta'*m_ord + vartheta0) + G, where m_ord is the
// all-|A| vector and vartheta0 counts the zeros (reliable steps).
inline long long diversity_order(int m, int k, const std::vector<int>& vartheta,
                                 int card_a, long long g_ext) {
  if (static_cast<int>(vartheta.size()) != k)
    throw std::invalid_argument("diversity_order: vartheta length != K");
  if (card_a < 1) throw std::invalid_argument("diversity_order: |A| < 1");
  long long ones = 0;
  for (int v : vartheta) {
    if (v != 0 && v != 1)
      throw std::invalid_argument("diversity_order: entries must be 0/1");
    ones += v;
  }
  const long long zeros = k - ones;
  return static_cast<long long>(m) - k + card_a * ones + zeros + g_ext;
}

// Incremental per-step values of the cancellation recursion: after step i
// the order is M - K + |A|*(ones among the first i flags) + (zeros among
// the first i flags). The last entry equals diversity_order with G = 0.
inline std::vector<long long> diversity_steps(int m, int k,
                                              const std::vector<int>& vartheta,
                                              int card_a) {
  if (static_cast<int>(vartheta.size()) != k)
    throw std::invalid_argument("diversity_steps: vartheta length != K");
  std::vector<long long> steps(k);
  long long ones = 0, zeros = 0;
  for (int i = 0; i < k; ++i) {
    (vartheta[i] ? ones : zeros) += 1;
    steps[i] = static_cast<long long>(m) - k + card_a * ones + zeros;
  }
  return steps;
}

// ---- SINR expressions ----

// Perfect-CSI output SINR of device i under filter w with unit-variance
// noise: |w^H h_i sqrt(b_i)|^2 / (sum_{j != i} |w^H h_j sqrt(b_j)|^2 + ||w||^2).
// Callers with sigma_v2 != 1 pre-scale H by 1/sigma_v.
inline double sinr_perfect(const cvec& w, const cmat& H, int i,
                           const std::vector<double>& b) {
  const int k = static_cast<int>(H.cols());
  if (i < 0 || i >= k) throw std::invalid_argument("sinr_perfect: bad index");
  if (static_cast<int>(b.size()) != k)
    throw std::invalid_argument("sinr_perfect: b length mismatch");
  if (w.size() != H.rows())
    throw std::invalid_argument("sinr_perfect: dimension mismatch");
  double interference = 0.0;
  for (int j = 0; j < k; ++j) {
    if (j == i) continue;
    interference += b[j] * std::norm(w.dot(H.col(j)));
  }
  const double signal = b[i] * std::norm(w.dot(H.col(i)));
  return signal / (interference + w.squaredNorm());
}

// Imperfect-CSI output SINR of device i. Colliders (same metadata sequence)
// enter through their estimated channels, estimation errors through their
// error variances, all remaining active devices through their average
// energies, and the adaptive filter contributes the excess-noise term
// ((1-lambda)^2 sigma_v^2 sigma_y^2 + 1) / (2(1-lambda)) in place of the
// plain noise quadratic form. lambda = 1 makes that term singular and is
// rejected. Empty err_vars selects the nominal LMMSE error variance
// eta_j / (b_j eta_j + 1).
inline double sinr_imperfect(const cvec& w, int i, const cmat& H_hat,
                             std::vector<double> err_vars,
                             const std::vector<int>& collision_set,
                             const std::vector<double>& b,
                             const std::vector<double>& eta, double lambda,
                             double sigma_v2, double sigma_y2) {
  const int k = static_cast<int>(H_hat.cols());
  if (i < 0 || i >= k) throw std::invalid_argument("sinr_imperfect: bad index");
  if (static_cast<int>(b.size()) != k || static_cast<int>(eta.size()) != k)
    throw std::invalid_argument("sinr_imperfect: b/eta length mismatch");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument(
        "sinr_imperfect: lambda must lie in (0,1); the excess-noise term is "
        "singular at lambda = 1");
  if (err_vars.empty()) {
    err_vars.resize(k);
    for (int j = 0; j < k; ++j)
      err_vars[j] = eta[j] / (b[j] * eta[j] + 1.0);
  }
  if (static_cast<int>(err_vars.size()) != k)
    throw std::invalid_argument("sinr_imperfect: err_vars length mismatch");

  std::vector<uint8_t> in_ci(k, 0);
  in_ci[i] = 1;
  for (int j : collision_set) {
    if (j < 0 || j >= k)
      throw std::invalid_argument("sinr_imperfect: collision index range");
    in_ci[j] = 1;
  }

  const double wnorm2 = w.squaredNorm();
  double denom = 0.0;
  for (int j = 0; j < k; ++j) {
    if (j == i) continue;
    if (in_ci[j]) denom += b[j] * std::norm(w.dot(H_hat.col(j)));
  }
  for (int j = 0; j < k; ++j)
    if (in_ci[j]) denom += b[j] * err_vars[j] * wnorm2;
  for (int j = 0; j < k; ++j)
    if (!in_ci[j]) denom += b[j] * eta[j] * wnorm2;
  const double one_minus = 1.0 - lambda;
  denom += (one_minus * one_minus * sigma_v2 * sigma_y2 + 1.0) /
           (2.0 * one_minus);

  return b[i] * std::norm(w.dot(H_hat.col(i))) / denom;
}

// ---- achievable sum-rate ----

enum class SumRateFilter { kLmmsePerfect, kLmmseImperfect, kAavgl };

struct RateReport {
  double rate = 0.0;       // bits per symbol
  double mass_used = 0.0;  // beta-binomial mass covered by the K sum
  int k_max_used = 0;
  int mc_samples = 0;
  double mean_sigma_y2 = 0.0;
};

namespace detail {

// LMMSE receive filter bank for effective columns G = H diag(sqrt(b)).
inline cmat lmmse_filter_bank(const cmat& G, double sigma_v2) {
  const int m = static_cast<int>(G.rows());
  cmat gram = G * G.adjoint() + sigma_v2 * cmat::Identity(m, m);
  Eigen::LDLT<cmat> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    ldlt.compute(gram + 1e-10 * cmat::Identity(m, m));
  return ldlt.solve(G);
}

}  // namespace detail

// Expected uplink sum-rate (Monte Carlo over channels and metadata
// collisions):
//   R = sum_K p(K) K sum_c p(c|K) E[log2(1 + SINR(K, c))]
// with p(K) beta-binomial over N devices and p(c|K) binomial collisions
// over tau_phi sequences. The K sum stops once the cumulative activity
// mass reaches mass_target, capped at k_truncation.
inline RateReport sum_rate(const SystemConfig& cfg, SumRateFilter choice,
                           int k_truncation, int mc_samples,
                           std::mt19937_64& rng, double mass_target = 0.999) {
  cfg.validate();
  if (k_truncation < 1 || k_truncation > cfg.n_devices)
    throw std::invalid_argument("sum_rate: k_truncation outside [1, N]");
  if (mc_samples < 1) throw std::invalid_argument("sum_rate: mc_samples < 1");

  const int m = cfg.m_antennas;
  const int tau_phi = cfg.tau_phi;
  const double sigma_v2 = cfg.noise_variance();
  const double sigma_v = std::sqrt(sigma_v2);
  std::uniform_real_distribution<double> ub(cfg.power_min, cfg.power_max);
  std::normal_distribution<double> shadow(0.0, cfg.sigma_omega);
  const MetadataCodebook codebook = build_codebook(tau_phi);

  RateReport report;
  report.mc_samples = mc_samples;
  double sy2_sum = 0.0;
  long sy2_count = 0;

  // conditional expectation E[log2(1 + SINR)] for K active devices, of
  // which c share the metadata sequence of the device of interest
  auto conditional_rate = [&](int K, int c) -> double {
    double acc = 0.0;
    for (int s = 0; s < mc_samples; ++s) {
      std::vector<double> b(K), eta(K);
      for (int j = 0; j < K; ++j) {
        b[j] = ub(rng);
        eta[j] = cfg.sigma_omega > 0.0 ? db_to_lin(shadow(rng)) : 1.0;
      }
      cmat H = cgauss_matrix(m, K, rng);
      for (int j = 0; j < K; ++j) H.col(j) *= std::sqrt(eta[j]);
      cmat G = H;
      for (int j = 0; j < K; ++j) G.col(j) *= std::sqrt(b[j]);

      const double sigma_y2 = [&] {
        double p = 0.0;
        for (int j = 0; j < K; ++j) p += b[j] * eta[j];
        return (p + m * sigma_v2) / m;
      }();
      sy2_sum += sigma_y2;
      ++sy2_count;

      std::vector<int> colliders(c);
      for (int j = 0; j < c; ++j) colliders[j] = 1 + j;

      if (choice == SumRateFilter::kLmmsePerfect) {
        cmat W = detail::lmmse_filter_bank(G, sigma_v2);
        // unit-noise normalization of the perfect-CSI expression
        cmat Gs = G / sigma_v;
        acc += std::log2(1.0 + sinr_perfect(W.col(0), Gs, 0,
                                            std::vector<double>(K, 1.0)));
        continue;
      }

      // metadata assignment conditioned on exactly c colliders of device 0
      std::vector<int> assignment(K);
      assignment[0] = 0;
      for (int j = 1; j <= c; ++j) assignment[j] = 0;
      std::uniform_int_distribution<int> other(1, tau_phi - 1);
      for (int j = c + 1; j < K; ++j) assignment[j] = other(rng);

      // received metadata block and per-device channel estimates
      cmat Y_phi(m, tau_phi);
      const double g_phi = std::sqrt(static_cast<double>(tau_phi));
      for (int t = 0; t < tau_phi; ++t) {
        cvec x(K);
        for (int j = 0; j < K; ++j) x(j) = codebook.sequences(assignment[j], t);
        Y_phi.col(t) = g_phi * (G * x);
        for (int r = 0; r < m; ++r) Y_phi(r, t) += cgauss(rng, sigma_v2);
      }
      std::vector<DeviceProfile> act(K);
      for (int j = 0; j < K; ++j) act[j] = {1.0, b[j], eta[j]};
      ChannelEstimate est = lmmse_channel_estimate(Y_phi, codebook, assignment,
                                                   act, sigma_v2, tau_phi);

      cvec w;
      if (choice == SumRateFilter::kLmmseImperfect) {
        cmat G_hat = est.H_hat;
        for (int j = 0; j < K; ++j) G_hat.col(j) *= std::sqrt(b[j]);
        w = detail::lmmse_filter_bank(G_hat, sigma_v2).col(0);
      } else {
        // adaptive filter snapshot after the training pass of one slot
        SystemConfig scfg = cfg;
        scfg.n_devices = K;
        SlotRealization slot;
        slot.sigma_v2 = sigma_v2;
        slot.delta.assign(K, 1);
        slot.H = H;
        slot.A = H;
        slot.assignment = assignment;
        fill_pilots(slot, codebook);
        slot.symbols = cmat::Zero(K, scfg.tau());
        const auto& alphabet = augmented_alphabet();
        std::uniform_int_distribution<int> usym(0,
                                                alphabet.constellation_size() -
                                                    1);
        for (int j = 0; j < K; ++j) {
          slot.symbols.row(j).head(tau_phi) =
              codebook.sequences.row(assignment[j]);
          for (int t = tau_phi; t < scfg.tau(); ++t)
            slot.symbols(j, t) = alphabet[usym(rng)];
        }
        slot.Y = synthesize_received(scfg, act, H, slot.symbols, sigma_v2, rng);
        DetectorOptions opt;
        opt.collect_filters = true;
        DetectionResult det =
            detect_slot(slot, est.H_hat, act, scfg, opt, nullptr);
        w = det.trained_filters[0].head(m);
      }

      std::vector<double> ev(est.err_var.data(),
                             est.err_var.data() + est.err_var.size());
      acc += std::log2(1.0 + sinr_imperfect(w, 0, est.H_hat, ev, colliders, b,
                                            eta, cfg.lambda, sigma_v2,
                                            sigma_y2));
    }
    return acc / mc_samples;
  };

  double rate = 0.0, mass = 0.0;
  int k_max = 0;
  for (int K = 1; K <= k_truncation; ++K) {
    const double pk = beta_binomial_pmf(K, cfg.n_devices, cfg.alpha, cfg.beta);
    double inner = 0.0;
    for (int c = 0; c <= K - 1; ++c)
      inner += collision_probability(c, K, tau_phi) * conditional_rate(K, c);
    rate += pk * K * inner;
    mass += pk;
    k_max = K;
    if (mass + beta_binomial_pmf(0, cfg.n_devices, cfg.alpha, cfg.beta) >=
        mass_target)
      break;
  }

  report.rate = rate;
  report.mass_used =
      mass + beta_binomial_pmf(0, cfg.n_devices, cfg.alpha, cfg.beta);
  report.k_max_used = k_max;
  report.mean_sigma_y2 = sy2_count > 0 ? sy2_sum / sy2_count : 0.0;
  return report;
}

}  // namespace mmtc
