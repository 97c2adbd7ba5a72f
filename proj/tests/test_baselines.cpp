#include <catch2/catch_amalgamated.hpp>

#include "mmtc/baselines.hpp"
#include "mmtc/metadata.hpp"

using namespace mmtc;

TEST_CASE("block LMMSE matches the explicit normal-equations filter") {
  auto rng = make_stream(61, 1);
  const int m = 4, n = 3;
  cmat H = cgauss_matrix(m, n, rng);
  cmat Y = cgauss_matrix(m, 6, rng);
  const double sigma_v2 = 0.7;

  auto [soft, hard] = lmmse_detect(Y, H, sigma_v2);
  cmat W = (H * H.adjoint() + sigma_v2 * cmat::Identity(m, m)).inverse() * H;
  cmat expect = W.adjoint() * Y;
  CHECK((soft - expect).norm() < 1e-9);
  REQUIRE(hard.rows() == n);
  REQUIRE(hard.cols() == 6);
}

TEST_CASE("block LMMSE approaches zero forcing at vanishing noise") {
  const auto& alphabet = augmented_alphabet();
  auto rng = make_stream(62, 1);
  const int m = 5, n = 3, cols = 8;
  cmat H = cgauss_matrix(m, n, rng);
  cmat X(n, cols);
  std::uniform_int_distribution<int> pick(0, alphabet.size() - 1);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < n; ++r) X(r, c) = alphabet[pick(rng)];
  cmat Y = H * X;

  auto [soft, hard] = lmmse_detect(Y, H, 1e-12);
  CHECK((hard - X).norm() == 0.0);
  CHECK((soft - X).norm() < 1e-5);
}

TEST_CASE("block LMMSE can declare silence") {
  auto rng = make_stream(63, 1);
  cmat H = cgauss_matrix(4, 2, rng);
  cmat Y = cmat::Zero(4, 3);
  auto [soft, hard] = lmmse_detect(Y, H, 0.5);
  CHECK(hard.norm() == 0.0);
}

TEST_CASE("genie detector restricts to the true support") {
  const auto& alphabet = augmented_alphabet();
  auto rng = make_stream(64, 1);
  const int m = 5, n = 4, cols = 6;
  cmat H = cgauss_matrix(m, n, rng);
  std::vector<uint8_t> support{1, 0, 1, 0};
  cmat X = cmat::Zero(n, cols);
  std::uniform_int_distribution<int> pick(0, alphabet.constellation_size() - 1);
  for (int c = 0; c < cols; ++c) {
    X(0, c) = alphabet[pick(rng)];
    X(2, c) = alphabet[pick(rng)];
  }
  cmat Y = H * X;

  cmat hard = oracle_lmmse_detect(Y, H, support, 1e-12);
  CHECK((hard - X).norm() == 0.0);

  SECTION("inactive rows are forced silent even on noisy input") {
    cmat noisy = Y + cgauss_matrix(m, cols, rng);
    cmat h2 = oracle_lmmse_detect(noisy, H, support, 1.0);
    CHECK(h2.row(1).norm() == 0.0);
    CHECK(h2.row(3).norm() == 0.0);
  }

  SECTION("active rows never decide the zero symbol") {
    cmat h3 = oracle_lmmse_detect(cmat::Zero(m, cols), H, support, 1.0);
    for (int c = 0; c < cols; ++c) {
      CHECK(h3(0, c) != cx(0.0, 0.0));
      CHECK(h3(2, c) != cx(0.0, 0.0));
    }
  }

  SECTION("empty support yields the all-zero decision") {
    std::vector<uint8_t> none(n, 0);
    cmat h4 = oracle_lmmse_detect(Y, H, none, 1.0);
    CHECK(h4.norm() == 0.0);
    CHECK(h4.rows() == n);
    CHECK(h4.cols() == cols);
  }
}

TEST_CASE("adaptive baseline wrappers match the configured detector") {
  SystemConfig cfg;
  cfg.n_devices = 6;
  cfg.m_antennas = 4;
  cfg.tau_phi = 8;
  cfg.tau_x = 8;
  cfg.snr_db = 10.0;
  auto prof_rng = make_stream(cfg.seed, 65);
  auto profiles = make_profiles(cfg, prof_rng);
  MetadataCodebook cb = build_codebook(cfg.tau_phi);
  auto rng = make_stream(66, 1);
  SlotRealization slot = generate_slot(cfg, profiles, cb, rng);
  ChannelEstimate est =
      lmmse_channel_estimate(slot.Y.leftCols(cfg.tau_phi), cb, slot.assignment,
                             profiles, slot.sigma_v2, cfg.tau_phi);

  for (bool il : {false, true}) {
    DetectorOptions opt;
    opt.decision_feedback = false;
    opt.internal_list = il;
    opt.external_list = false;
    DetectionResult direct = detect_slot(slot, est.H_hat, profiles, cfg, opt);
    DetectionResult wrapped =
        aa_rls_linear_detect(slot, est.H_hat, profiles, cfg, il);
    CHECK((wrapped.d_hard - direct.d_hard).norm() == 0.0);
    CHECK((wrapped.d_soft - direct.d_soft).norm() == 0.0);

    opt.decision_feedback = true;
    DetectionResult direct_df = detect_slot(slot, est.H_hat, profiles, cfg, opt);
    DetectionResult wrapped_df =
        aa_rls_df_detect(slot, est.H_hat, profiles, cfg, il);
    CHECK((wrapped_df.d_hard - direct_df.d_hard).norm() == 0.0);
  }
}
