#include <catch2/catch_amalgamated.hpp>

#include "mmtc/common.hpp"

using namespace mmtc;

TEST_CASE("db conversions round trip") {
  CHECK(db_to_lin(0.0) == Catch::Approx(1.0));
  CHECK(db_to_lin(10.0) == Catch::Approx(10.0));
  CHECK(db_to_lin(3.0) == Catch::Approx(1.9952623150));
  CHECK(lin_to_db(db_to_lin(7.3)) == Catch::Approx(7.3).margin(1e-12));
  CHECK(lin_to_db(100.0) == Catch::Approx(20.0));
}

TEST_CASE("mix64 is deterministic and spreads nearby inputs") {
  CHECK(mix64(0) == mix64(0));
  CHECK(mix64(1) != mix64(2));
  // avalanche sanity: consecutive inputs should differ in many bits
  for (std::uint64_t v : {0ull, 1ull, 42ull, 1000000007ull}) {
    std::uint64_t diff = mix64(v) ^ mix64(v + 1);
    int bits = 0;
    for (; diff; diff >>= 1) bits += diff & 1;
    CHECK(bits > 16);
  }
}

TEST_CASE("make_stream streams are reproducible and distinct") {
  auto a1 = make_stream(42, 3, 7);
  auto a2 = make_stream(42, 3, 7);
  auto b = make_stream(42, 3, 8);
  auto c = make_stream(42, 4, 7);
  auto d = make_stream(43, 3, 7);
  CHECK(a1() == a2());
  std::uint64_t ref = make_stream(42, 3, 7)();
  CHECK(b() != ref);
  CHECK(c() != ref);
  CHECK(d() != ref);
}

TEST_CASE("cgauss matches requested variance") {
  auto rng = make_stream(7);
  const int n = 200000;
  double sum2 = 0.0;
  cx mean = 0.0;
  for (int i = 0; i < n; ++i) {
    cx v = cgauss(rng, 2.5);
    sum2 += std::norm(v);
    mean += v;
  }
  CHECK(sum2 / n == Catch::Approx(2.5).epsilon(0.02));
  CHECK(std::abs(mean) / n < 0.01);
}

TEST_CASE("cgauss_matrix shape and scale") {
  auto rng = make_stream(9);
  cmat a = cgauss_matrix(50, 40, rng, 1.0);
  REQUIRE(a.rows() == 50);
  REQUIRE(a.cols() == 40);
  CHECK(a.squaredNorm() / (50.0 * 40.0) == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("log_binomial matches exact small values") {
  CHECK(std::exp(log_binomial(5, 2)) == Catch::Approx(10.0));
  CHECK(std::exp(log_binomial(10, 0)) == Catch::Approx(1.0));
  CHECK(std::exp(log_binomial(10, 10)) == Catch::Approx(1.0));
  CHECK(std::exp(log_binomial(52, 5)) == Catch::Approx(2598960.0).epsilon(1e-9));
}

TEST_CASE("log_sum_exp agrees with direct evaluation") {
  CHECK(log_sum_exp(0.0, 0.0) == Catch::Approx(std::log(2.0)));
  CHECK(log_sum_exp(1.0, 3.0) ==
        Catch::Approx(std::log(std::exp(1.0) + std::exp(3.0))));
  // extreme spread must not overflow
  CHECK(log_sum_exp(1000.0, -1000.0) == Catch::Approx(1000.0));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(ninf, 2.0) == Catch::Approx(2.0));
  CHECK(log_sum_exp(ninf, ninf) == ninf);
}
