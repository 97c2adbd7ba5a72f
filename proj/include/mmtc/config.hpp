#pragma once

#include <string>

#include "mmtc/common.hpp"

namespace mmtc {

// Scenario parameters. Defaults follow the reference operating point
// (lambda=0.92, gamma=0.001, xi=10, alpha=4, beta=8, QPSK, powers in
// [0.1, 0.3]) at desk scale N=16, M=8.
struct SystemConfig {
  int n_devices = 16;
  int m_antennas = 8;
  int tau_phi = 8;
  int tau_x = 8;
  int mod_order = 4;
  int bits_per_symbol = 2;
  double snr_db = 12.0;
  double lambda = 0.92;
  double gamma = 0.001;
  double xi = 10.0;
  double alpha = 4.0;
  double beta = 8.0;
  double power_min = 0.1;
  double power_max = 0.3;
  double sigma_omega = 0.0;   // shadowing spread (dB) around the 0 dB mean gain
  double rate_factor = 1.0;   // set to the code rate R for coded runs
  std::uint64_t seed = 42;

  int tau() const { return tau_phi + tau_x; }

  // Average SNR definition 10*log10(N*sigma_x^2/sigma_v^2) with unit-energy
  // symbols; coded runs fold the code rate in via rate_factor.
  double noise_variance() const {
    return n_devices * rate_factor / db_to_lin(snr_db);
  }

  void validate() const {
    auto fail = [](const std::string& msg) {
      throw std::invalid_argument("SystemConfig: " + msg);
    };
    if (n_devices < 1) fail("n_devices must be >= 1");
    if (m_antennas < 1) fail("m_antennas must be >= 1");
    if (tau_phi < 1) fail("tau_phi must be >= 1");
    if (tau_x < 0) fail("tau_x must be >= 0");
    if (mod_order != 4 || bits_per_symbol != 2)
      fail("only QPSK (mod_order=4, bits_per_symbol=2) is supported");
    if (!(lambda > 0.0 && lambda <= 1.0)) fail("lambda must be in (0, 1]");
    if (!(gamma > 0.0)) fail("gamma must be > 0");
    if (!(xi > 0.0)) fail("xi must be > 0");
    if (!(alpha > 0.0)) fail("alpha must be > 0");
    if (!(beta > 0.0)) fail("beta must be > 0");
    if (!(power_min > 0.0 && power_max >= power_min))
      fail("powers must satisfy 0 < power_min <= power_max");
    if (sigma_omega < 0.0) fail("sigma_omega must be >= 0");
    if (rate_factor <= 0.0) fail("rate_factor must be > 0");
  }
};

// Per-device population draw: activity probability, transmit power and
// large-scale channel gain, all fixed for the duration of an experiment.
struct DeviceProfile {
  double rho;
  double b;
  double eta;

  void validate() const {
    if (!(rho >= 0.0 && rho <= 1.0))
      throw std::invalid_argument("DeviceProfile: rho outside [0,1]");
    if (!(b > 0.0)) throw std::invalid_argument("DeviceProfile: b must be > 0");
    if (!(eta > 0.0))
      throw std::invalid_argument("DeviceProfile: eta must be > 0");
  }
};

}  // namespace mmtc
