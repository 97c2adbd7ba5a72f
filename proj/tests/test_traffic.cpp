#include <catch2/catch_amalgamated.hpp>

#include "mmtc/metadata.hpp"
#include "mmtc/traffic.hpp"

using namespace mmtc;

namespace {

// Exact beta-binomial pmf for integer shape parameters, evaluated with long
// double factorial products. Independent of the lgamma-based implementation.
long double factl(int n) {
  long double f = 1.0L;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

long double beta_binomial_exact(int k, int n, int alpha, int beta) {
  long double choose = factl(n) / (factl(k) * factl(n - k));
  long double num = factl(k + alpha - 1) * factl(n - k + beta - 1) *
                    factl(alpha + beta - 1);
  long double den = factl(n + alpha + beta - 1) * factl(alpha - 1) *
                    factl(beta - 1);
  return choose * num / den;
}

}  // namespace

TEST_CASE("beta-binomial pmf matches an exact factorial oracle") {
  const int N = 120;
  for (int k = 0; k <= N; ++k) {
    double expect = static_cast<double>(beta_binomial_exact(k, N, 4, 8));
    CHECK(beta_binomial_pmf(k, N, 4.0, 8.0) ==
          Catch::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("beta-binomial pmf normalization and mean") {
  const int N = 120;
  double sum = 0.0, mean = 0.0;
  int argmax = 0;
  for (int k = 0; k <= N; ++k) {
    double p = beta_binomial_pmf(k, N, 4.0, 8.0);
    sum += p;
    mean += k * p;
    if (p > beta_binomial_pmf(argmax, N, 4.0, 8.0)) argmax = k;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
  CHECK(std::abs(mean - 40.0) < 1e-9);  // N*alpha/(alpha+beta)
  CHECK(argmax == 36);

  double mean128 = 0.0;
  for (int k = 0; k <= 128; ++k)
    mean128 += k * beta_binomial_pmf(k, 128, 4.0, 8.0);
  CHECK(std::abs(mean128 - 128.0 / 3.0) < 1e-9);
}

TEST_CASE("beta-binomial rejects bad arguments") {
  CHECK_THROWS_AS(beta_binomial_pmf(-1, 10, 4, 8), std::domain_error);
  CHECK_THROWS_AS(beta_binomial_pmf(11, 10, 4, 8), std::domain_error);
  CHECK_THROWS_AS(beta_binomial_pmf(2, 10, 0.0, 8), std::invalid_argument);
}

TEST_CASE("binomial pmf basics") {
  const int N = 120;
  const double rho = 1.0 / 3.0;
  double sum = 0.0;
  int argmax = 0;
  for (int k = 0; k <= N; ++k) {
    double p = binomial_activity_pmf(k, N, rho);
    sum += p;
    if (p > binomial_activity_pmf(argmax, N, rho)) argmax = k;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
  // mode of Binomial(N, p) is floor((N+1) p)
  CHECK(argmax == static_cast<int>((N + 1) * rho));
  CHECK(binomial_activity_pmf(0, 5, 0.0) == 1.0);
  CHECK(binomial_activity_pmf(5, 5, 1.0) == 1.0);
}

TEST_CASE("sampled activity counts track the beta-binomial") {
  auto rng = make_stream(11, 1);
  const int N = 120, trials = 200000;
  double mean = 0.0;
  for (int i = 0; i < trials; ++i) {
    int k = sample_activity_count(N, 4.0, 8.0, rng);
    REQUIRE(k >= 0);
    REQUIRE(k <= N);
    mean += k;
  }
  mean /= trials;
  CHECK(mean == Catch::Approx(40.0).margin(0.25));
}

TEST_CASE("activity probabilities are Beta distributed") {
  auto rng = make_stream(12, 1);
  auto rho = sample_activity_probabilities(4.0, 8.0, 100000, rng);
  double mean = 0.0;
  for (double r : rho) {
    REQUIRE(r >= 0.0);
    REQUIRE(r <= 1.0);
    mean += r;
  }
  CHECK(mean / rho.size() == Catch::Approx(1.0 / 3.0).margin(0.005));
}

TEST_CASE("large-scale gains") {
  auto rng = make_stream(13, 1);
  auto eta0 = sample_large_scale(0.0, 0.0, 5, rng);
  for (double e : eta0) CHECK(e == 1.0);
  auto eta3 = sample_large_scale(3.0, 0.0, 2, rng);
  CHECK(eta3[0] == Catch::Approx(db_to_lin(3.0)));
  // with shadowing the dB values centre on the mean gain
  auto etas = sample_large_scale(0.0, 2.0, 50000, rng);
  double db_mean = 0.0;
  for (double e : etas) {
    REQUIRE(e > 0.0);
    db_mean += lin_to_db(e);
  }
  CHECK(db_mean / etas.size() == Catch::Approx(0.0).margin(0.05));
  CHECK_THROWS_AS(sample_large_scale(0.0, -1.0, 2, rng),
                  std::invalid_argument);
}

TEST_CASE("channel columns scale with eta") {
  auto rng = make_stream(14, 1);
  std::vector<double> eta{1.0, 4.0};
  cmat h = draw_channel(2000, eta, rng);
  CHECK(h.col(0).squaredNorm() / 2000.0 == Catch::Approx(1.0).epsilon(0.1));
  CHECK(h.col(1).squaredNorm() / 2000.0 == Catch::Approx(4.0).epsilon(0.1));
  std::vector<double> bad{1.0, 0.0};
  CHECK_THROWS_AS(draw_channel(4, bad, rng), std::invalid_argument);
}

TEST_CASE("device profiles respect the configured ranges") {
  SystemConfig cfg;
  cfg.n_devices = 64;
  auto rng = make_stream(cfg.seed, 15);
  auto profiles = make_profiles(cfg, rng);
  REQUIRE(profiles.size() == 64);
  for (const auto& p : profiles) {
    CHECK(p.rho >= 0.0);
    CHECK(p.rho <= 1.0);
    CHECK(p.b >= cfg.power_min);
    CHECK(p.b <= cfg.power_max);
    CHECK(p.eta == 1.0);  // sigma_omega = 0
  }
}

TEST_CASE("noiseless synthesis matches the signal model") {
  SystemConfig cfg;
  cfg.n_devices = 3;
  cfg.m_antennas = 2;
  cfg.tau_phi = 2;
  cfg.tau_x = 2;
  std::vector<DeviceProfile> profiles{{1.0, 0.25, 1.0},
                                      {1.0, 0.16, 1.0},
                                      {1.0, 0.09, 1.0}};
  auto rng = make_stream(16, 1);
  cmat H = cgauss_matrix(2, 3, rng);
  cmat symbols = cgauss_matrix(3, 4, rng);
  auto noise_rng = make_stream(16, 2);
  cmat Y = synthesize_received(cfg, profiles, H, symbols, 0.0, noise_rng);

  cmat B = cmat::Zero(3, 3);
  B(0, 0) = 0.5;
  B(1, 1) = 0.4;
  B(2, 2) = 0.3;
  for (int t = 0; t < 4; ++t) {
    double g = std::sqrt(2.0);  // tau_phi = tau_x = 2
    cvec expect = g * (H * (B * symbols.col(t)));
    CHECK((Y.col(t) - expect).norm() < 1e-12);
  }
}

TEST_CASE("metadata and data blocks scale differently") {
  SystemConfig cfg;
  cfg.n_devices = 1;
  cfg.m_antennas = 1;
  cfg.tau_phi = 4;
  cfg.tau_x = 9;
  std::vector<DeviceProfile> profiles{{1.0, 1.0, 1.0}};
  cmat H = cmat::Ones(1, 1);
  cmat symbols = cmat::Ones(1, 13);
  auto rng = make_stream(17, 1);
  cmat Y = synthesize_received(cfg, profiles, H, symbols, 0.0, rng);
  CHECK(std::abs(Y(0, 0) - cx(2.0, 0.0)) < 1e-12);   // sqrt(tau_phi)
  CHECK(std::abs(Y(0, 12) - cx(3.0, 0.0)) < 1e-12);  // sqrt(tau_x)
}

TEST_CASE("generated slots satisfy the structural invariants") {
  SystemConfig cfg;
  cfg.n_devices = 16;
  cfg.m_antennas = 8;
  cfg.tau_phi = 8;
  cfg.tau_x = 8;
  cfg.snr_db = 10.0;
  auto prof_rng = make_stream(cfg.seed, 18);
  auto profiles = make_profiles(cfg, prof_rng);
  auto codebook = build_codebook(cfg.tau_phi);

  auto rng = make_stream(cfg.seed, 19);
  const auto& alphabet = augmented_alphabet();
  for (int trial = 0; trial < 20; ++trial) {
    SlotRealization slot = generate_slot(cfg, profiles, codebook, rng);
    REQUIRE(slot.Y.rows() == 8);
    REQUIRE(slot.Y.cols() == 16);
    REQUIRE(slot.symbols.rows() == 16);
    CHECK(slot.sigma_v2 == Catch::Approx(cfg.noise_variance()));
    for (int i = 0; i < 16; ++i) {
      // every device carries an assignment; only active ones transmit it
      REQUIRE(slot.assignment[i] >= 0);
      REQUIRE(slot.assignment[i] < 8);
      if (!slot.delta[i]) {
        CHECK(slot.symbols.row(i).norm() == 0.0);
        CHECK(slot.pilots.row(i).norm() == 0.0);
        continue;
      }
      CHECK((slot.pilots.row(i) - codebook.sequences.row(slot.assignment[i]))
                .norm() == 0.0);
      // metadata block carries the assigned codebook row
      CHECK((slot.symbols.row(i).head(8) -
             codebook.sequences.row(slot.assignment[i]))
                .norm() < 1e-14);
      for (int t = 8; t < 16; ++t) {
        int idx = alphabet.nearest(slot.symbols(i, t));
        CHECK(idx != alphabet.zero_index);
        CHECK(slot.symbols(i, t) == alphabet[idx]);
      }
      // channel column is the fast fading scaled by sqrt(eta)
      CHECK((slot.H.col(i) - slot.A.col(i) * std::sqrt(profiles[i].eta))
                .norm() < 1e-14);
    }
  }
}

TEST_CASE("slot generation is reproducible for a fixed stream") {
  SystemConfig cfg;
  auto prof_rng = make_stream(cfg.seed, 20);
  auto profiles = make_profiles(cfg, prof_rng);
  auto codebook = build_codebook(cfg.tau_phi);
  auto r1 = make_stream(99, 5, 7);
  auto r2 = make_stream(99, 5, 7);
  SlotRealization a = generate_slot(cfg, profiles, codebook, r1);
  SlotRealization b = generate_slot(cfg, profiles, codebook, r2);
  CHECK(a.delta == b.delta);
  CHECK(a.assignment == b.assignment);
  CHECK((a.Y - b.Y).norm() == 0.0);
  CHECK((a.symbols - b.symbols).norm() == 0.0);
}
