#pragma once

#include "mmtc/common.hpp"
#include "mmtc/detector.hpp"
#include "mmtc/modulation.hpp"

namespace mmtc {

// W = (H_eff H_eff^H + sigma_v2 I)^-1 H_eff with H_eff the amplitude-scaled
// system matrix of the observation model y = H_eff x + v; soft symbols are
// W^H y, quantized to the augmented alphabet.
inline std::pair<cmat, cmat> lmmse_detect(const cmat& Y, const cmat& H_eff,
                                          double sigma_v2) {
  const int m = static_cast<int>(H_eff.rows());
  const auto& alphabet = augmented_alphabet();
  cmat gram = H_eff * H_eff.adjoint() + sigma_v2 * cmat::Identity(m, m);
  Eigen::LDLT<cmat> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    ldlt.compute(gram + 1e-10 * cmat::Identity(m, m));
  cmat W = ldlt.solve(H_eff);
  cmat soft = W.adjoint() * Y;
  cmat hard(soft.rows(), soft.cols());
  for (int c = 0; c < soft.cols(); ++c)
    for (int r = 0; r < soft.rows(); ++r)
      hard(r, c) = quantize_augmented(soft(r, c), alphabet);
  return {soft, hard};
}

// LMMSE restricted to the truly active columns; inactive rows stay at the
// zero symbol, active rows quantize over the nonzero constellation.
inline cmat oracle_lmmse_detect(const cmat& Y, const cmat& H_eff,
                                const std::vector<uint8_t>& true_support,
                                double sigma_v2) {
  const int m = static_cast<int>(H_eff.rows());
  const int n = static_cast<int>(H_eff.cols());
  std::vector<int> active;
  for (int i = 0; i < n; ++i)
    if (true_support[i]) active.push_back(i);

  cmat hard = cmat::Zero(n, Y.cols());
  if (active.empty()) return hard;

  cmat H_act(m, active.size());
  for (size_t k = 0; k < active.size(); ++k) H_act.col(k) = H_eff.col(active[k]);

  cmat gram = H_act * H_act.adjoint() + sigma_v2 * cmat::Identity(m, m);
  Eigen::LDLT<cmat> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    ldlt.compute(gram + 1e-10 * cmat::Identity(m, m));
  cmat W = ldlt.solve(H_act);
  cmat soft = W.adjoint() * Y;

  const auto& alphabet = augmented_alphabet();
  for (int c = 0; c < soft.cols(); ++c)
    for (size_t k = 0; k < active.size(); ++k) {
      // active devices transmit nonzero symbols; restrict to the constellation
      int idx = alphabet.nearest_nonzero(soft(static_cast<int>(k), c));
      hard(active[k], c) = alphabet[idx];
    }
  return hard;
}

// Adaptive RLS detector without feedback concatenation: per-device length-M
// filters, optional per-symbol candidate list on unreliable estimates.
inline DetectionResult aa_rls_linear_detect(
    const SlotRealization& slot, const cmat& H_hat,
    const std::vector<DeviceProfile>& profiles, const SystemConfig& cfg,
    bool internal_list = false) {
  DetectorOptions opt;
  opt.decision_feedback = false;
  opt.internal_list = internal_list;
  opt.external_list = false;
  return detect_slot(slot, H_hat, profiles, cfg, opt);
}

// Layered decision-feedback RLS detector without the external refinement
// stage; internal_list toggles the per-symbol candidate list.
inline DetectionResult aa_rls_df_detect(const SlotRealization& slot,
                                        const cmat& H_hat,
                                        const std::vector<DeviceProfile>& profiles,
                                        const SystemConfig& cfg,
                                        bool internal_list = false) {
  DetectorOptions opt;
  opt.decision_feedback = true;
  opt.internal_list = internal_list;
  opt.external_list = false;
  return detect_slot(slot, H_hat, profiles, cfg, opt);
}

}  // namespace mmtc
