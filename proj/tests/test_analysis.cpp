#include <catch2/catch_amalgamated.hpp>

#include "mmtc/analysis.hpp"

using namespace mmtc;

TEST_CASE("algorithm names") {
  CHECK(std::string(algorithm_name(Algorithm::kLmmse)) == "lmmse");
  CHECK(std::string(algorithm_name(Algorithm::kAaVglDf)) == "aa_vgl_df");
  CHECK(std::string(algorithm_name(Algorithm::kSaSicAsqrd)) == "sa_sic_asqrd");
}

TEST_CASE("flop counts at hand-evaluated points") {
  const std::vector<int> none;
  CHECK(flop_count(Algorithm::kLmmse, 2, 2, 5, none, 0) == 86);
  CHECK(flop_count(Algorithm::kLmmse, 4, 8, 5, none, 0) == 1216);
  CHECK(flop_count(Algorithm::kSaSic, 4, 3, 5, none, 0) == 210);
  CHECK(flop_count(Algorithm::kSaSicAsqrd, 3, 2, 5, none, 0) == 84);
  CHECK(flop_count(Algorithm::kAaRlsLinear, 2, 3, 5, none, 0) == 132);
  CHECK(flop_count(Algorithm::kAaRlsLinearIl, 2, 3, 5, {1, 0, 1}, 0) == 172);
  CHECK(flop_count(Algorithm::kAaRlsDf, 2, 2, 5, none, 0) == 220);
  CHECK(flop_count(Algorithm::kAaRlsDfIl, 2, 2, 5, {1, 0}, 0) == 240);
  CHECK(flop_count(Algorithm::kAaRlsDfIl, 2, 2, 5, {1, 1}, 0) == 260);
  CHECK(flop_count(Algorithm::kAaVglDf, 2, 2, 5, {1, 0}, 3) == 252);
}

TEST_CASE("list-free refinement collapses to plain decision feedback") {
  for (int m : {2, 5, 16, 33}) {
    for (int n : {1, 4, 17}) {
      CHECK(flop_count(Algorithm::kAaVglDf, m, n, 5, {}, 0) ==
            flop_count(Algorithm::kAaRlsDf, m, n, 5, {}, 0));
      std::vector<int> all_ones(n, 1);
      CHECK(flop_count(Algorithm::kAaVglDf, m, n, 5, all_ones, 0) ==
            flop_count(Algorithm::kAaRlsDfIl, m, n, 5, all_ones, 0));
    }
  }
}

TEST_CASE("flop counts grow with the problem size") {
  const std::vector<Algorithm> algs{
      Algorithm::kLmmse,        Algorithm::kSaSic,
      Algorithm::kSaSicAsqrd,   Algorithm::kAaRlsLinear,
      Algorithm::kAaRlsLinearIl, Algorithm::kAaRlsDf,
      Algorithm::kAaRlsDfIl,    Algorithm::kAaVglDf};
  for (Algorithm alg : algs)
    for (int m : {2, 4, 8})
      for (int n : {2, 4, 8}) {
        std::vector<int> vt(n, 1), vt_bigger(n + 1, 1);
        CHECK(flop_count(alg, m + 1, n, 5, vt, 2) >=
              flop_count(alg, m, n, 5, vt, 2));
        CHECK(flop_count(alg, m, n + 1, 5, vt_bigger, 2) >
              flop_count(alg, m, n, 5, vt, 2));
      }
}

TEST_CASE("flop counting validates its inputs") {
  CHECK_THROWS_AS(flop_count(Algorithm::kLmmse, 0, 2, 5, {}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(flop_count(Algorithm::kLmmse, 2, 0, 5, {}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(flop_count(Algorithm::kLmmse, 2, 2, 0, {}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(flop_count(Algorithm::kAaVglDf, 2, 2, 5, {}, -1),
                  std::invalid_argument);
  CHECK_THROWS_AS(flop_count(Algorithm::kAaVglDf, 2, 2, 5, {2}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(flop_count(Algorithm::kAaVglDf, 2, 2, 5, {1, 1, 1}, 0),
                  std::invalid_argument);

  FlopReport rep = make_flop_report(Algorithm::kAaVglDf, 2, 2, 5, {1, 0}, 3);
  CHECK(rep.flops == 252);
  CHECK(rep.vartheta_sum == 1);
  CHECK(rep.g_ext == 3);
  CHECK(rep.m == 2);
}

TEST_CASE("layered diversity steps accumulate flag by flag") {
  std::vector<long long> steps = diversity_steps(10, 5, {1, 0, 1, 1, 0}, 4);
  REQUIRE(steps.size() == 5);
  CHECK(steps == std::vector<long long>{9, 10, 14, 18, 19});
  CHECK(steps.back() == diversity_order(10, 5, {1, 0, 1, 1, 0}, 4, 0));
  CHECK(diversity_order(10, 5, {1, 0, 1, 1, 0}, 4, 4) == 23);

  // all-reliable: d = M - K + K = M, the full receive diversity
  CHECK(diversity_order(12, 5, {0, 0, 0, 0, 0}, 4, 0) == 12);
  // all-unreliable: d = M - K + |A| K
  CHECK(diversity_order(12, 5, {1, 1, 1, 1, 1}, 4, 0) == 12 - 5 + 20);

  CHECK_THROWS_AS(diversity_order(10, 5, {1, 0}, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(diversity_order(10, 2, {1, 3}, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(diversity_order(10, 2, {1, 0}, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(diversity_steps(10, 3, {1, 0}, 4), std::invalid_argument);
}

TEST_CASE("flagging one more device adds the alphabet gain") {
  auto rng = make_stream(91, 1);
  for (int trial = 0; trial < 200; ++trial) {
    int k = 2 + static_cast<int>(rng() % 10);
    int card = 2 + static_cast<int>(rng() % 6);
    int m = k + static_cast<int>(rng() % 20);
    std::vector<int> vt(k);
    for (auto& v : vt) v = static_cast<int>(rng() & 1u);
    std::vector<int> zeros_at;
    for (int i = 0; i < k; ++i)
      if (!vt[i]) zeros_at.push_back(i);
    if (zeros_at.empty()) continue;
    int flip = zeros_at[rng() % zeros_at.size()];
    long long before = diversity_order(m, k, vt, card, 0);
    vt[flip] = 1;
    long long after = diversity_order(m, k, vt, card, 0);
    CHECK(after - before == card - 1);
  }
}

TEST_CASE("perfect-CSI SINR at hand-evaluated points") {
  cmat H1(1, 1);
  H1 << cx(2.0, 0.0);
  cvec w1 = cvec::Ones(1);
  CHECK(sinr_perfect(w1, H1, 0, {0.5}) == Catch::Approx(2.0));

  cmat H2(1, 2);
  H2 << cx(1.0, 0.0), cx(0.0, 1.0);
  CHECK(sinr_perfect(w1, H2, 0, {1.0, 1.0}) == Catch::Approx(0.5));
  CHECK(sinr_perfect(w1, H2, 1, {1.0, 1.0}) == Catch::Approx(0.5));

  CHECK_THROWS_AS(sinr_perfect(w1, H2, 2, {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(sinr_perfect(w1, H2, 0, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(sinr_perfect(cvec::Ones(2), H2, 0, {1.0, 1.0}),
                  std::invalid_argument);
}

TEST_CASE("perfect-CSI SINR is invariant to filter phase and scale") {
  auto rng = make_stream(92, 1);
  cmat H = cgauss_matrix(4, 3, rng);
  cvec w = cgauss_matrix(4, 1, rng).col(0);
  std::vector<double> b{0.2, 0.15, 0.27};
  double base = sinr_perfect(w, H, 1, b);
  cx rot = std::polar(2.5, 1.1);
  CHECK(sinr_perfect(rot * w, H, 1, b) == Catch::Approx(base));
}

TEST_CASE("estimated-CSI SINR at hand-evaluated points") {
  // single device: only its own estimation error and the filter excess term
  cmat H1(1, 1);
  H1 << cx(1.0, 0.0);
  cvec w = cvec::Ones(1);
  // excess term ((1-0.9)^2 * 1 * 2 + 1) / (2 * 0.1) = 5.1
  double s = sinr_imperfect(w, 0, H1, {0.3}, {}, {0.5}, {1.0}, 0.9, 1.0, 2.0);
  CHECK(s == Catch::Approx(0.5 / (0.5 * 0.3 + 5.1)));

  // empty err_vars selects eta/(b*eta + 1) = 2/3
  double s2 = sinr_imperfect(w, 0, H1, {}, {}, {0.5}, {1.0}, 0.9, 1.0, 2.0);
  CHECK(s2 == Catch::Approx(0.5 / (0.5 * (2.0 / 3.0) + 5.1)));

  // collider enters through its estimate, bystander through its energy
  cmat H3(2, 3);
  H3 << cx(1.0, 0.0), cx(0.5, 0.0), cx(2.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0),
      cx(0.0, 0.0);
  cvec w2(2);
  w2 << cx(1.0, 0.0), cx(0.0, 0.0);
  double s3 = sinr_imperfect(w2, 0, H3, {0.2, 0.1, 0.7}, {1},
                             {0.5, 0.4, 0.3}, {1.0, 2.0, 3.0}, 0.9, 1.0, 2.0);
  double denom = 0.4 * 0.25 + (0.5 * 0.2 + 0.4 * 0.1) + 0.3 * 3.0 + 5.1;
  CHECK(s3 == Catch::Approx(0.5 / denom));

  CHECK_THROWS_AS(sinr_imperfect(w, 0, H1, {0.3}, {}, {0.5}, {1.0}, 1.0, 1.0,
                                 2.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(sinr_imperfect(w, 0, H1, {0.3}, {}, {0.5}, {1.0}, 0.0, 1.0,
                                 2.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(sinr_imperfect(w, 0, H1, {0.3, 0.4}, {}, {0.5}, {1.0}, 0.9,
                                 1.0, 2.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(sinr_imperfect(w, 0, H1, {0.3}, {5}, {0.5}, {1.0}, 0.9, 1.0,
                                 2.0),
                  std::invalid_argument);
}

TEST_CASE("sum-rate report covers the full activity mass on a tiny system") {
  SystemConfig cfg;
  cfg.n_devices = 2;
  cfg.m_antennas = 2;
  cfg.tau_phi = 2;
  cfg.tau_x = 2;
  cfg.snr_db = 10.0;

  for (SumRateFilter choice : {SumRateFilter::kLmmsePerfect,
                               SumRateFilter::kLmmseImperfect,
                               SumRateFilter::kAavgl}) {
    auto rng = make_stream(93, static_cast<uint64_t>(choice));
    RateReport rep = sum_rate(cfg, choice, 2, 40, rng);
    CHECK(rep.rate > 0.0);
    CHECK(rep.k_max_used == 2);
    CHECK(rep.mc_samples == 40);
    CHECK(rep.mass_used == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(rep.mean_sigma_y2 > 0.0);
  }

  auto rng = make_stream(93, 9);
  CHECK_THROWS_AS(sum_rate(cfg, SumRateFilter::kLmmsePerfect, 0, 10, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(sum_rate(cfg, SumRateFilter::kLmmsePerfect, 3, 10, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(sum_rate(cfg, SumRateFilter::kLmmsePerfect, 2, 0, rng),
                  std::invalid_argument);
}
