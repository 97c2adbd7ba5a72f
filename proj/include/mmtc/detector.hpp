#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "mmtc/common.hpp"
#include "mmtc/config.hpp"
#include "mmtc/modulation.hpp"
#include "mmtc/sparse_rls.hpp"
#include "mmtc/traffic.hpp"

namespace mmtc {

// Reliability radii: r_th around constellation points, the complement
// 1 - r_th around the zero point, and the wider post-sweep radius r_ext.
struct SacRadii {
  double r_th;
  double r_th0;
  double r_ext;
};

inline SacRadii make_sac_radii(double r_th) {
  if (!(r_th > 0.0 && r_th < 1.0))
    throw std::invalid_argument("make_sac_radii: r_th must be in (0,1)");
  return {r_th, 1.0 - r_th, 0.0};
}

// Default reliability radius (1 - mean_rho) * d_min / 2 with d_min the
// minimum distance of the nonzero constellation.
inline double default_r_th(double mean_rho) {
  double r = (1.0 - mean_rho) * std::sqrt(2.0) / 2.0;
  return std::clamp(r, 1e-3, 1.0 - 1e-3);
}

inline double external_radius(double r_th, int m, int k_hat, int n,
                              double sigma_x2, double sigma_v2) {
  if (k_hat < 1) k_hat = 1;  // degenerate all-zero decision rule
  return r_th * (static_cast<double>(m) / k_hat + n * sigma_x2 / sigma_v2);
}

inline cx soft_estimate(const cvec& w, const cvec& y_cat) {
  if (w.size() != y_cat.size())
    throw std::logic_error("soft_estimate: length mismatch");
  return w.dot(y_cat);  // Eigen dot conjugates the left operand: w^H y
}

struct SacDecision {
  int point_index;
  bool reliable;
  double distance;
};

inline SacDecision sac_classify(cx d_soft, const AugmentedAlphabet& alphabet,
                                const SacRadii& radii) {
  int idx = alphabet.nearest(d_soft);
  double dist = std::abs(d_soft - alphabet[idx]);
  double radius = idx == alphabet.zero_index ? radii.r_th0 : radii.r_th;
  return {idx, dist <= radius, dist};
}

// Single-device ML sweep over the augmented alphabet on the raw received
// vector; replaces an unreliable quantized decision.
inline cx internal_list_select(const cvec& y, const cvec& h_hat_n,
                               const AugmentedAlphabet& alphabet) {
  int best = 0;
  double best_cost = (y - h_hat_n * alphabet[0]).squaredNorm();
  for (int i = 1; i < alphabet.size(); ++i) {
    double cost = (y - h_hat_n * alphabet[i]).squaredNorm();
    if (cost < best_cost - 1e-15 * (1.0 + best_cost)) {
      best_cost = cost;
      best = i;
    }
  }
  return alphabet[best];
}

inline int count_zero_taps(const cvec& w) {
  int c = 0;
  for (int i = 0; i < w.size(); ++i)
    if (w(i) == cx(0.0, 0.0)) ++c;
  return c;
}

// Exponentially-weighted LSE over an aligned history window (most recent
// last) plus gamma * exact-zero tap count.
inline double layer_cost(const cvec& w, const std::vector<cvec>& y_hist,
                         const std::vector<cx>& d_hist, double lambda,
                         double gamma) {
  if (y_hist.size() != d_hist.size())
    throw std::logic_error("layer_cost: history length mismatch");
  double cost = 0.0;
  int t_last = static_cast<int>(y_hist.size()) - 1;
  for (int l = 0; l <= t_last; ++l) {
    cx err = d_hist[l] - soft_estimate(w, y_hist[l]);
    cost += std::pow(lambda, t_last - l) * std::norm(err);
  }
  return cost + gamma * count_zero_taps(w);
}

// argmin over the undetected set; ties break to the lowest device index.
inline int select_next_layer(const std::vector<int>& undetected,
                             const std::vector<double>& costs) {
  if (undetected.empty())
    throw std::logic_error("select_next_layer: empty undetected set");
  int best = undetected.front();
  for (int j : undetected)
    if (costs[j] < costs[best]) best = j;
  return best;
}

// Group-list refinement: cancel all kept decisions from y, then exhaust
// ordered tuples over A0^nu for the flagged positions.
inline void external_list_refine(const cvec& y, const cvec& d_soft, cvec& d_hard,
                                 const std::vector<int>& vartheta_ext,
                                 const cmat& H_eff,
                                 const AugmentedAlphabet& alphabet) {
  std::vector<int> ext;
  for (int i = 0; i < static_cast<int>(vartheta_ext.size()); ++i)
    if (vartheta_ext[i]) ext.push_back(i);
  int nu = static_cast<int>(ext.size());
  if (nu == 0) return;

  cvec residual = y;
  for (int i = 0; i < d_hard.size(); ++i) {
    if (vartheta_ext[i]) continue;
    if (d_hard(i) != cx(0.0, 0.0)) residual -= H_eff.col(i) * d_hard(i);
  }

  const int base = alphabet.size();
  long total = 1;
  for (int i = 0; i < nu; ++i) total *= base;

  std::vector<int> best_tuple(nu, 0);
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> tuple(nu);
  cvec trial(y.size());
  for (long code = 0; code < total; ++code) {
    long rem = code;
    for (int i = 0; i < nu; ++i) {
      tuple[i] = static_cast<int>(rem % base);
      rem /= base;
    }
    trial = residual;
    for (int i = 0; i < nu; ++i)
      if (tuple[i] != alphabet.zero_index)
        trial -= H_eff.col(ext[i]) * alphabet[tuple[i]];
    double cost = trial.squaredNorm();
    if (code == 0 || cost < best_cost - 1e-15 * (1.0 + best_cost)) {
      best_cost = cost;
      best_tuple = tuple;
    }
  }
  for (int i = 0; i < nu; ++i) d_hard(ext[i]) = alphabet[best_tuple[i]];
}

struct DetectorOptions {
  bool decision_feedback = true;
  bool internal_list = true;
  bool external_list = true;
  int external_list_max = 4;
  double r_th_override = -1.0;  // <= 0 selects default_r_th(mean rho)
  double delta_reg = 0.01;
  bool printed_attraction = false;
  bool internal_list_on_residual = false;
  bool collect_llr_stats = false;
  bool collect_filters = false;  // snapshot weights after the training pass
};

// Decoder-validated symbols fed back into a re-detection pass. pinned[n]
// is empty, or holds the device's tau_x re-encoded data symbols.
struct DecoderFeedback {
  std::vector<cvec> pinned;

  bool has(int n) const {
    return n < static_cast<int>(pinned.size()) && pinned[n].size() > 0;
  }
};

struct DetectionResult {
  cmat d_soft;                   // N x tau_x
  cmat d_hard;                   // N x tau_x
  Eigen::MatrixXi vartheta;      // internal-SAC unreliable flags
  Eigen::MatrixXi vartheta_ext;  // external-list membership
  double mean_nu_internal = 0.0;
  double mean_nu_external = 0.0;
  cmat mu;      // equivalent-channel gain per device/time (collect_llr_stats)
  rmat zeta2;   // equivalent noise variance per device/time
  std::vector<cvec> trained_filters;  // per-device weights (collect_filters)
};

namespace detail {

struct LayerSweepState {
  std::vector<RlsFilter> filters;
  std::vector<double> acc;  // recursive exponentially-weighted error sums
  std::vector<cvec> cross;  // running sum lambda^(t-p) y[p] x*[p] per device
  std::vector<cmat> ryy;    // running sum lambda^(t-p) y[p] y^H[p] per device
  std::vector<double> wsum;  // running sum lambda^(t-p), normalises the above
};

inline void accumulate_moments(LayerSweepState& st, int j, const cvec& u,
                               cx decision, double lambda) {
  st.cross[j] *= lambda;
  st.cross[j] += u * std::conj(decision);
  st.ryy[j] *= lambda;
  st.ryy[j].noalias() += u * u.adjoint();
  st.wsum[j] = lambda * st.wsum[j] + 1.0;
}

}  // namespace detail

// Layered decision-feedback detection of one slot. Runs a training pass over
// the metadata block with the known transmitted metadata as desired response,
// then the decision-directed pass over the data block with SAC reliability
// classification, candidate lists and LSE-based ordering.
inline DetectionResult detect_slot(const SlotRealization& slot, const cmat& H_hat,
                                   const std::vector<DeviceProfile>& profiles,
                                   const SystemConfig& cfg,
                                   const DetectorOptions& opt = {},
                                   const DecoderFeedback* feedback = nullptr) {
  const int n = cfg.n_devices, m = cfg.m_antennas;
  const int tau_phi = cfg.tau_phi, tau_x = cfg.tau_x;
  const auto& alphabet = augmented_alphabet();
  const int dim = opt.decision_feedback ? m + std::max(n - 1, 0) : m;
  if (slot.pilots.rows() != n || slot.pilots.cols() != tau_phi)
    throw std::invalid_argument("detect_slot: slot.pilots must be N x tau_phi");

  // Effective data-mode channel for candidate lists and cancellation.
  cmat H_eff = H_hat;
  const double g_x = std::sqrt(static_cast<double>(tau_x));
  for (int i = 0; i < n; ++i)
    H_eff.col(i) *= g_x * std::sqrt(profiles[i].b);

  double rho_bar = 0.0;
  for (const auto& p : profiles) rho_bar += p.rho;
  rho_bar /= n;
  SacRadii radii = make_sac_radii(
      opt.r_th_override > 0.0 ? opt.r_th_override : default_r_th(rho_bar));

  detail::LayerSweepState st;
  st.filters.resize(n);
  st.acc.assign(n, 0.0);
  for (int i = 0; i < n; ++i)
    st.filters[i].init(dim, profiles[i].rho, opt.delta_reg);
  if (opt.collect_llr_stats) {
    st.cross.assign(n, cvec::Zero(dim));
    st.ryy.assign(n, cmat::Zero(dim, dim));
    st.wsum.assign(n, 0.0);
  }

  DetectionResult res;
  res.d_soft = cmat::Zero(n, tau_x);
  res.d_hard = cmat::Zero(n, tau_x);
  res.vartheta = Eigen::MatrixXi::Zero(n, tau_x);
  res.vartheta_ext = Eigen::MatrixXi::Zero(n, tau_x);
  if (opt.collect_llr_stats) {
    res.mu = cmat::Zero(n, tau_x);
    res.zeta2 = rmat::Zero(n, tau_x);
  }

  std::vector<int> undetected;
  std::vector<double> costs(n);
  std::vector<cx> last_err(n);
  std::vector<double> sac_dist(n);

  // Feedback taps are indexed by interferer device id, so a tap keeps the
  // same meaning at every time instant even though the detection order
  // changes. Each instant starts with all taps cleared; a detected device's
  // symbol is scattered into the regressors of the devices still waiting.
  std::vector<cx> fb_val(n, cx(0.0, 0.0));
  std::vector<char> fb_on(n, 0);
  cvec u(dim);
  auto build_regressor = [&](int j, const Eigen::Ref<const cvec>& y) {
    u.head(m) = y;
    u.tail(dim - m).setZero();
    for (int i = 0; i < n; ++i)
      if (fb_on[i] && i != j) u(m + (i < j ? i : i - 1)) = fb_val[i];
  };

  // ---- training pass: known metadata as desired response ----
  // Filters see only the antenna block here; there are no detected symbols
  // yet, so in decision-feedback mode the feedback taps keep their prior
  // state (zero weight, unshrunk P block) until data-mode updates reach
  // them. Training the concatenated length against pilots would make the
  // fit underdetermined whenever M + N - 1 exceeds tau_phi.
  for (int t = 0; t < tau_phi; ++t) {
    const auto y = slot.Y.col(t);
    if (opt.decision_feedback) {
      u.head(m) = y;
      u.tail(dim - m).setZero();
    }
    for (int j = 0; j < n; ++j) {
      cx desired = slot.pilots(j, t);
      cx err;
      if (opt.decision_feedback) {
        err = desired - soft_estimate(st.filters[j].w, u);
        rls_update_padded(st.filters[j], u, err, cfg.lambda, cfg.gamma,
                          cfg.xi, opt.printed_attraction);
      } else {
        err = desired - soft_estimate(st.filters[j].w, y);
        rls_update_block(st.filters[j], m, y, err, cfg.lambda, cfg.gamma,
                         cfg.xi, opt.printed_attraction);
      }
      st.acc[j] = cfg.lambda * st.acc[j] + std::norm(err);
    }
  }

  if (opt.collect_filters) {
    res.trained_filters.resize(n);
    for (int i = 0; i < n; ++i) res.trained_filters[i] = st.filters[i].w;
  }

  // Decision-directed ordering restarts its error history after training.
  st.acc.assign(n, 0.0);

  // ---- decision-directed pass over the data block ----
  double nu_int_total = 0.0, nu_ext_total = 0.0;
  for (int ti = 0; ti < tau_x; ++ti) {
    int t = tau_phi + ti;
    const auto y = slot.Y.col(t);

    auto decide = [&](int j, cx d_soft_val, const cvec& y_base) -> cx {
      if (feedback && feedback->has(j)) return feedback->pinned[j](ti);
      SacDecision sac = sac_classify(d_soft_val, alphabet, radii);
      sac_dist[j] = sac.distance;
      if (sac.reliable) return alphabet[sac.point_index];
      res.vartheta(j, ti) = 1;
      if (opt.internal_list && H_eff.col(j).squaredNorm() > 0.0)
        return internal_list_select(y_base, H_eff.col(j), alphabet);
      return alphabet[sac.point_index];
    };

    if (!opt.decision_feedback) {
      for (int j = 0; j < n; ++j) {
        cx d_soft_val = soft_estimate(st.filters[j].w, y);
        cx d_hard_val = decide(j, d_soft_val, y);
        cx err = d_hard_val - d_soft_val;
        rls_update_block(st.filters[j], m, y, err, cfg.lambda, cfg.gamma,
                         cfg.xi, opt.printed_attraction);
        st.acc[j] = cfg.lambda * st.acc[j] + std::norm(err);
        last_err[j] = err;
        res.d_soft(j, ti) = d_soft_val;
        res.d_hard(j, ti) = d_hard_val;
        if (opt.collect_llr_stats) {
          detail::accumulate_moments(st, j, y, d_hard_val, cfg.lambda);
          cx mu = soft_estimate(st.filters[j].w, st.cross[j]) / st.wsum[j];
          double zeta2 =
              std::real(st.filters[j].w.dot(st.ryy[j] * st.filters[j].w)) /
                  st.wsum[j] -
              std::norm(mu);
          res.mu(j, ti) = mu;
          res.zeta2(j, ti) = std::max(zeta2, 1e-9);
        }
      }
    } else {
      undetected.resize(n);
      for (int j = 0; j < n; ++j) undetected[j] = j;
      std::fill(fb_on.begin(), fb_on.end(), 0);
      cvec residual = y;  // running cancellation for the residual-list variant
      for (int layer = 0; layer < n; ++layer) {
        for (int j : undetected)
          costs[j] =
              st.acc[j] + cfg.gamma * count_zero_taps(st.filters[j].w);
        int jstar = select_next_layer(undetected, costs);
        build_regressor(jstar, y);
        cx d_soft_val = soft_estimate(st.filters[jstar].w, u);
        cx d_hard_val = decide(jstar, d_soft_val,
                               opt.internal_list_on_residual ? residual : y);
        cx err = d_hard_val - d_soft_val;
        rls_update_padded(st.filters[jstar], u, err, cfg.lambda, cfg.gamma,
                          cfg.xi, opt.printed_attraction);
        st.acc[jstar] = cfg.lambda * st.acc[jstar] + std::norm(err);
        last_err[jstar] = err;
        res.d_soft(jstar, ti) = d_soft_val;
        res.d_hard(jstar, ti) = d_hard_val;
        fb_on[jstar] = 1;
        fb_val[jstar] = d_hard_val;
        if (opt.internal_list_on_residual && d_hard_val != cx(0.0, 0.0))
          residual -= H_eff.col(jstar) * d_hard_val;
        undetected.erase(std::find(undetected.begin(), undetected.end(), jstar));
        if (opt.collect_llr_stats) {
          detail::accumulate_moments(st, jstar, u, d_hard_val, cfg.lambda);
          const auto& w = st.filters[jstar].w;
          cx mu = soft_estimate(w, st.cross[jstar]) / st.wsum[jstar];
          double zeta2 =
              std::real(w.dot(st.ryy[jstar] * w)) / st.wsum[jstar] -
              std::norm(mu);
          res.mu(jstar, ti) = mu;
          res.zeta2(jstar, ti) = std::max(zeta2, 1e-9);
        }
      }

      if (opt.external_list) {
        int k_hat = 0;
        for (int j = 0; j < n; ++j)
          if (res.d_hard(j, ti) != cx(0.0, 0.0)) ++k_hat;
        radii.r_ext =
            external_radius(radii.r_th, m, k_hat, n, 1.0, slot.sigma_v2);

        std::vector<int> ext;
        for (int j = 0; j < n; ++j) {
          if (!res.vartheta(j, ti)) continue;
          if (feedback && feedback->has(j)) continue;
          int idx = alphabet.nearest(res.d_soft(j, ti));
          if (std::abs(res.d_soft(j, ti) - alphabet[idx]) > radii.r_ext)
            ext.push_back(j);
        }
        if (static_cast<int>(ext.size()) > opt.external_list_max) {
          std::sort(ext.begin(), ext.end(), [&](int a, int b) {
            if (sac_dist[a] != sac_dist[b]) return sac_dist[a] > sac_dist[b];
            return a < b;
          });
          ext.resize(opt.external_list_max);
        }
        if (!ext.empty()) {
          std::vector<int> flags(n, 0);
          for (int j : ext) flags[j] = 1;
          cvec col_soft = res.d_soft.col(ti);
          cvec col_hard = res.d_hard.col(ti);
          external_list_refine(y, col_soft, col_hard, flags, H_eff, alphabet);
          for (int j : ext) {
            // refreshed decision feeds the next instant's ordering cost
            cx err_new = col_hard(j) - res.d_soft(j, ti);
            st.acc[j] += std::norm(err_new) - std::norm(last_err[j]);
            res.d_hard(j, ti) = col_hard(j);
            res.vartheta_ext(j, ti) = 1;
          }
          nu_ext_total += static_cast<double>(ext.size());
        }
      }
    }
    nu_int_total += res.vartheta.col(ti).sum();
  }

  res.mean_nu_internal = tau_x > 0 ? nu_int_total / tau_x : 0.0;
  res.mean_nu_external = tau_x > 0 ? nu_ext_total / tau_x : 0.0;
  return res;
}

}  // namespace mmtc
