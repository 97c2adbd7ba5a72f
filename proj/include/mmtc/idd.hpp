#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mmtc/common.hpp"
#include "mmtc/config.hpp"
#include "mmtc/detector.hpp"
#include "mmtc/ldpc.hpp"
#include "mmtc/metadata.hpp"
#include "mmtc/modulation.hpp"
#include "mmtc/traffic.hpp"

namespace mmtc {

constexpr double kLlrClip = 30.0;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Prior mass over the augmented alphabet (four constellation points, zero
// last) from the decoder's bit LLRs and the device activity probability.
// Default placement keeps Pr(zero) = 1 - rho and spreads rho over the
// constellation by the per-bit sigmoids; the flagged variant swaps the
// activity weighting between the zero symbol and the constellation.
inline std::array<double, 5> symbol_priors(double le0, double le1, double rho,
                                           bool swapped_rho_placement = false) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw std::invalid_argument("symbol_priors: rho outside [0,1]");
  const double active = swapped_rho_placement ? 1.0 - rho : rho;
  const double idle = swapped_rho_placement ? rho : 1.0 - rho;
  std::array<double, 5> pr{};
  double total = 0.0;
  for (int p = 0; p < 4; ++p) {
    pr[p] = active * sigmoid(AugmentedAlphabet::bit_sign(p, 0) * le0) *
            sigmoid(AugmentedAlphabet::bit_sign(p, 1) * le1);
    total += pr[p];
  }
  pr[4] = idle;
  total += pr[4];
  if (total > 0.0)
    for (auto& v : pr) v /= total;
  return pr;
}

struct AwgnMoments {
  cx mu{0.0, 0.0};
  double zeta2 = 1e-9;
};

// Equivalent-AWGN model of the filter output d~ = mu*x + n, n ~ CN(0, zeta2),
// fitted from an exponentially weighted history (most recent sample last).
// Both moments are normalised by the weight sum so a perfect filter gives
// mu -> 1 and zeta2 -> 0 (floored).
inline AwgnMoments awgn_moments(const cvec& w, const std::vector<cvec>& y_hist,
                                const std::vector<cx>& x_hist, double lambda) {
  if (y_hist.size() != x_hist.size() || y_hist.empty())
    throw std::invalid_argument("awgn_moments: empty or mismatched history");
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw std::invalid_argument("awgn_moments: lambda outside (0,1]");
  const size_t T = y_hist.size();
  cx cross = 0.0;
  double power = 0.0, wsum = 0.0;
  double weight = 1.0;  // lambda^(T-1-p), built from the newest sample down
  for (size_t p = T; p-- > 0;) {
    if (y_hist[p].size() != w.size())
      throw std::invalid_argument("awgn_moments: history dimension mismatch");
    const cx out = w.dot(y_hist[p]);
    cross += weight * out * std::conj(x_hist[p]);
    power += weight * std::norm(out);
    wsum += weight;
    weight *= lambda;
  }
  AwgnMoments mom;
  mom.mu = cross / wsum;
  mom.zeta2 = std::max(power / wsum - std::norm(mom.mu), 1e-9);
  return mom;
}

// Extrinsic bit LLRs of the filter output under the equivalent-AWGN model.
// Hypotheses range over the four constellation points only; the prior-implied
// LLR is subtracted and the result clipped to +-kLlrClip.
inline std::array<double, 2> extrinsic_llr(cx d_soft, const AwgnMoments& mom,
                                           const std::array<double, 5>& priors) {
  const auto& alphabet = augmented_alphabet();
  const double inv_z = 1.0 / std::max(mom.zeta2, 1e-12);
  std::array<double, 4> metric, logp;
  for (int p = 0; p < 4; ++p) {
    logp[p] = std::log(std::max(priors[p], 1e-300));
    metric[p] = -std::norm(d_soft - mom.mu * alphabet[p]) * inv_z + logp[p];
  }
  std::array<double, 2> out{};
  for (int z = 0; z < 2; ++z) {
    double num = -std::numeric_limits<double>::infinity();
    double den = num, pnum = num, pden = num;
    for (int p = 0; p < 4; ++p) {
      if (AugmentedAlphabet::bit_sign(p, z) > 0) {
        num = log_sum_exp(num, metric[p]);
        pnum = log_sum_exp(pnum, logp[p]);
      } else {
        den = log_sum_exp(den, metric[p]);
        pden = log_sum_exp(pden, logp[p]);
      }
    }
    out[z] = std::clamp((num - den) - (pnum - pden), -kLlrClip, kLlrClip);
  }
  return out;
}

// One coherence block: the channel is drawn once and shared by every slot;
// metadata assignments and noise are fresh per slot. Each active device sends
// one codeword whose bits are mapped two per data symbol across the slots.
struct CodedFrame {
  std::vector<SlotRealization> slots;
  std::vector<std::vector<uint8_t>> messages;   // per device, empty if inactive
  std::vector<std::vector<uint8_t>> codewords;  // per device, empty if inactive
};

inline CodedFrame make_coded_frame(const SystemConfig& cfg,
                                   const std::vector<DeviceProfile>& profiles,
                                   const MetadataCodebook& codebook,
                                   const LdpcCode& code, int slots_per_frame,
                                   std::mt19937_64& rng) {
  const int n = cfg.n_devices;
  const int tau_phi = cfg.tau_phi, tau_x = cfg.tau_x, tau = cfg.tau();
  if (slots_per_frame < 1)
    throw std::invalid_argument("make_coded_frame: slots_per_frame < 1");
  if (code.n() != kBitsPerSymbol * tau_x * slots_per_frame)
    throw std::invalid_argument(
        "make_coded_frame: code length does not fill the data block");
  if (codebook.size() != tau_phi)
    throw std::invalid_argument("make_coded_frame: codebook size != tau_phi");

  CodedFrame frame;
  frame.messages.resize(n);
  frame.codewords.resize(n);

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> ubit(0, 1);

  std::vector<uint8_t> delta(n);
  for (int i = 0; i < n; ++i) delta[i] = u01(rng) < profiles[i].rho;

  cmat A = cgauss_matrix(cfg.m_antennas, n, rng);
  cmat H = A;
  for (int i = 0; i < n; ++i) H.col(i) *= std::sqrt(profiles[i].eta);

  for (int i = 0; i < n; ++i) {
    if (!delta[i]) continue;
    frame.messages[i].resize(code.k());
    for (auto& b : frame.messages[i]) b = static_cast<uint8_t>(ubit(rng));
    frame.codewords[i] = code.encode(frame.messages[i]);
  }

  frame.slots.resize(slots_per_frame);
  for (int s = 0; s < slots_per_frame; ++s) {
    SlotRealization& slot = frame.slots[s];
    slot.sigma_v2 = cfg.noise_variance();
    slot.delta = delta;
    slot.H = H;
    slot.A = A;
    slot.assignment = schedule_sequences(n, tau_phi, rng);
    fill_pilots(slot, codebook);
    slot.symbols = cmat::Zero(n, tau);
    for (int i = 0; i < n; ++i) {
      if (!delta[i]) continue;
      slot.symbols.row(i).head(tau_phi) =
          codebook.sequences.row(slot.assignment[i]);
      for (int t = 0; t < tau_x; ++t) {
        const int base = kBitsPerSymbol * (s * tau_x + t);
        slot.symbols(i, tau_phi + t) = qpsk_map(frame.codewords[i][base],
                                                frame.codewords[i][base + 1]);
      }
    }
    slot.Y = synthesize_received(cfg, profiles, H, slot.symbols, slot.sigma_v2,
                                 rng);
  }
  return frame;
}

struct IddOptions {
  int n_iterations = 2;
  int spa_max_iters = 30;
  bool swapped_rho_placement = false;
};

struct IddResult {
  std::vector<std::vector<uint8_t>> decoded;  // info bits, empty if inactive
  std::vector<uint8_t> declared_active;
  std::vector<uint8_t> converged;       // parity satisfied at some iteration
  std::vector<long> bit_errors;         // info-bit errors per iteration
  std::vector<double> ber;              // bit_errors / info_bits_total
  long info_bits_total = 0;             // k * (# truly active devices)
};

// Iterative detection and decoding over one coherence block. Every pass
// re-runs the detector; devices whose decoded word satisfies all parity
// checks are re-encoded and pinned as known interference in later passes,
// which is where the iteration gain comes from. Detector hard zeros enter
// the decoder as erasures (zero LLR).
inline IddResult idd_loop(const CodedFrame& frame,
                          const std::vector<DeviceProfile>& profiles,
                          const MetadataCodebook& codebook, const LdpcCode& code,
                          const SystemConfig& cfg, const DetectorOptions& det_opt,
                          const IddOptions& idd_opt = {}) {
  const int n = cfg.n_devices, tau_x = cfg.tau_x;
  const int n_slots = static_cast<int>(frame.slots.size());
  if (idd_opt.n_iterations < 1)
    throw std::invalid_argument("idd_loop: n_iterations < 1");

  IddResult res;
  res.decoded.resize(n);
  res.declared_active.assign(n, 0);
  res.converged.assign(n, 0);
  res.info_bits_total = 0;
  for (int i = 0; i < n; ++i)
    if (frame.slots[0].delta[i]) res.info_bits_total += code.k();

  DetectorOptions opt = det_opt;
  opt.collect_llr_stats = true;

  std::vector<ChannelEstimate> estimates;
  estimates.reserve(n_slots);
  for (const auto& slot : frame.slots)
    estimates.push_back(blind_channel_estimate(slot.Y.leftCols(cfg.tau_phi),
                                               codebook, slot.assignment,
                                               profiles, slot.sigma_v2,
                                               cfg.tau_phi));

  std::vector<DecoderFeedback> feedback(n_slots);
  for (auto& fb : feedback) fb.pinned.resize(n);

  std::vector<std::vector<double>> prior_le(n,
                                            std::vector<double>(code.n(), 0.0));
  std::vector<long> device_errors(n, 0);

  for (int iter = 0; iter < idd_opt.n_iterations; ++iter) {
    std::vector<DetectionResult> det;
    det.reserve(n_slots);
    for (int s = 0; s < n_slots; ++s)
      det.push_back(detect_slot(frame.slots[s], estimates[s].H_hat, profiles,
                                cfg, opt, &feedback[s]));

    for (int i = 0; i < n; ++i) {
      if (res.converged[i]) continue;  // keep the parity-clean word

      int nonzero = 0;
      for (int s = 0; s < n_slots; ++s)
        for (int t = 0; t < tau_x; ++t)
          if (det[s].d_hard(i, t) != cx(0.0, 0.0)) ++nonzero;
      res.declared_active[i] = nonzero > 0;
      if (!res.declared_active[i]) {
        res.decoded[i].clear();
        device_errors[i] = frame.slots[0].delta[i] ? code.k() : 0;
        continue;
      }

      std::vector<double> llrs(code.n(), 0.0);
      for (int s = 0; s < n_slots; ++s) {
        for (int t = 0; t < tau_x; ++t) {
          const int base = kBitsPerSymbol * (s * tau_x + t);
          if (det[s].d_hard(i, t) == cx(0.0, 0.0)) continue;  // erasure
          auto priors = symbol_priors(prior_le[i][base], prior_le[i][base + 1],
                                      profiles[i].rho,
                                      idd_opt.swapped_rho_placement);
          AwgnMoments mom{det[s].mu(i, t), det[s].zeta2(i, t)};
          auto le = extrinsic_llr(det[s].d_soft(i, t), mom, priors);
          llrs[base] = le[0];
          llrs[base + 1] = le[1];
        }
      }

      SpaResult dec = spa_decode(llrs, code.H, idd_opt.spa_max_iters);
      res.decoded[i] = code.extract_message(dec.hard);
      prior_le[i] = dec.extrinsic;

      long errs = 0;
      if (frame.slots[0].delta[i]) {
        for (int b = 0; b < code.k(); ++b)
          errs += res.decoded[i][b] != frame.messages[i][b];
      }
      device_errors[i] = errs;

      if (dec.parity_satisfied) {
        res.converged[i] = 1;
        for (int s = 0; s < n_slots; ++s) {
          cvec sym(tau_x);
          for (int t = 0; t < tau_x; ++t) {
            const int base = kBitsPerSymbol * (s * tau_x + t);
            sym(t) = qpsk_map(dec.hard[base], dec.hard[base + 1]);
          }
          feedback[s].pinned[i] = sym;
        }
      }
    }

    long total = 0;
    for (int i = 0; i < n; ++i)
      if (frame.slots[0].delta[i]) total += device_errors[i];
    res.bit_errors.push_back(total);
    res.ber.push_back(res.info_bits_total > 0
                          ? static_cast<double>(total) / res.info_bits_total
                          : 0.0);
  }
  return res;
}

}  // namespace mmtc
