#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "wgae/error.hpp"
#include "wgae/random.hpp"

using namespace wgae;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
};

template <typename F>
Moments moments(int n, F draw) {
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    s2 += x * x;
  }
  Moments m;
  m.mean = s / n;
  m.var = s2 / n - m.mean * m.mean;
  return m;
}

}  // namespace

TEST_CASE("streams with equal seed and id agree, distinct ids differ") {
  Rng a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  CHECK(Rng::derive(1, kTagTheta, 3, 4).stream() == Rng::derive(1, kTagTheta, 3, 4).stream());
  CHECK(Rng::derive(1, kTagTheta, 3, 4).stream() != Rng::derive(1, kTagTheta, 4, 3).stream());
}

TEST_CASE("philox output is frozen") {
  // Guards cross-platform reproducibility of checkpoints and splits.
  Rng r(0, 0);
  const std::uint32_t first = r.next_u32();
  Rng again(0, 0);
  CHECK(again.next_u32() == first);
  Rng u(123, 456);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
  }
}

TEST_CASE("sample_gamma moments and domain") {
  Rng rng(1, 1);
  auto exp_m = moments(1000000, [&] { return sample_gamma(1.0, 2.5, rng); });
  CHECK(exp_m.mean == doctest::Approx(2.5).epsilon(0.01));
  auto g = moments(1000000, [&] { return sample_gamma(3.0, 0.5, rng); });
  CHECK(g.mean == doctest::Approx(1.5).epsilon(0.01));
  CHECK(g.var == doctest::Approx(0.75).epsilon(0.02));
  auto small = moments(400000, [&] { return sample_gamma(0.2, 1.0, rng); });
  CHECK(small.mean == doctest::Approx(0.2).epsilon(0.02));
  CHECK_THROWS_AS(sample_gamma(0.0, 1.0, rng), Error);
  CHECK_THROWS_AS(sample_gamma(1.0, -1.0, rng), Error);
}

TEST_CASE("sample_dirichlet") {
  Rng rng(2, 1);
  const std::vector<double> sparse{0.01, 0.01};
  for (int i = 0; i < 1000; ++i) {
    const auto p = sample_dirichlet(sparse, rng);
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p[0] >= 0.0);
  }
  const std::vector<double> dense{1e6, 1e6};
  for (int i = 0; i < 100; ++i) {
    const auto p = sample_dirichlet(dense, rng);
    CHECK(std::abs(p[0] - 0.5) < 0.001);
  }
  const std::vector<double> single{0.3};
  CHECK(sample_dirichlet(single, rng)[0] == 1.0);
  CHECK_THROWS_AS(sample_dirichlet(std::vector<double>{}, rng), Error);
}

TEST_CASE("sample_truncated_poisson") {
  Rng rng(3, 1);
  for (double rate : {0.001, 0.1, 1.0, 10.0}) {
    const int n = 1000000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto k = sample_truncated_poisson(rate, rng);
      REQUIRE(k >= 1);
      s += static_cast<double>(k);
    }
    const double expected = rate / (1.0 - std::exp(-rate));
    CHECK(s / n == doctest::Approx(expected).epsilon(0.01));
  }
  CHECK(1.0 / (1.0 - std::exp(-1.0)) == doctest::Approx(1.5820).epsilon(1e-4));
  CHECK(10.0 / (1.0 - std::exp(-10.0)) == doctest::Approx(10.0005).epsilon(1e-5));
  CHECK_THROWS_AS(sample_truncated_poisson(0.0, rng), Error);
}

TEST_CASE("sample_crt") {
  Rng rng(4, 1);
  CHECK(sample_crt(0, 2.0, rng) == 0);
  for (int i = 0; i < 100; ++i) CHECK(sample_crt(1, 0.3, rng) == 1);
  auto m = moments(1000000, [&] { return static_cast<double>(sample_crt(3, 1.0, rng)); });
  CHECK(m.mean == doctest::Approx(1.0 + 0.5 + 1.0 / 3.0).epsilon(0.01));
  // P(l = n) = prod a / (a + i)
  const double a = 0.7;
  int all = 0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) all += sample_crt(3, a, rng) == 3;
  const double p = (a / a) * (a / (a + 1)) * (a / (a + 2));
  CHECK(std::abs(all / double(n) - p) < 4.0 * std::sqrt(p * (1 - p) / n));
  CHECK_THROWS_AS(sample_crt(3, 0.0, rng), Error);

  // large counts: mean sum_i r / (r + i), variance sum_i p_i (1 - p_i)
  for (const auto& [count, r] : {std::pair<std::uint64_t, double>{600, 3.0}, {5000, 2.5}, {200000, 0.4}}) {
    double mean = 0.0, var = 0.0;
    for (std::uint64_t i = 0; i < count; ++i) {
      const double q = r / (r + static_cast<double>(i));
      mean += q;
      var += q * (1 - q);
    }
    const int draws = 20000;
    auto mc = moments(draws, [&] { return static_cast<double>(sample_crt(count, r, rng)); });
    INFO("count " << count << " r " << r);
    CHECK(std::abs(mc.mean - mean) < 4.0 * std::sqrt(var / draws));
    CHECK(mc.var == doctest::Approx(var).epsilon(0.05));
  }
  // a billion customers at r = 1: mean is the harmonic number H_n
  const double harmonic = std::log(1e9) + 0.5772156649015329 + 0.5e-9;
  auto huge = moments(2000, [&] { return static_cast<double>(sample_crt(1000000000ULL, 1.0, rng)); });
  CHECK(huge.mean == doctest::Approx(harmonic).epsilon(0.03));
}

TEST_CASE("sample_multinomial_counts") {
  Rng rng(5, 1);
  const std::vector<double> w{1.0, 3.0};
  CHECK(sample_multinomial_counts(0, w, rng) == std::vector<std::uint64_t>{0, 0});
  const std::vector<double> one_slot{2.0, 0.0, 0.0};
  CHECK(sample_multinomial_counts(17, one_slot, rng) == std::vector<std::uint64_t>{17, 0, 0});
  const auto big = sample_multinomial_counts(1000000, w, rng);
  const double sd = std::sqrt(1e6 * 0.25 * 0.75);
  CHECK(std::abs(static_cast<double>(big[0]) - 250000.0) < 3 * sd);
  CHECK(big[0] + big[1] == 1000000);
  const std::vector<double> many{0.5, 1e-9, 2.0, 0.0, 7.0, 1.5};
  for (std::uint64_t n : {1ull, 3ull, 5ull, 40ull, 999ull, 123456ull}) {
    const auto c = sample_multinomial_counts(n, many, rng);
    CHECK(std::accumulate(c.begin(), c.end(), std::uint64_t{0}) == n);
    CHECK(c[3] == 0);
  }
  const std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS(sample_multinomial_counts(3, zeros, rng), Error);
}

TEST_CASE("sample_binomial and sample_poisson moments") {
  Rng rng(6, 1);
  for (auto [n, p] : {std::pair{10ull, 0.3}, std::pair{500ull, 0.01}, std::pair{10000ull, 0.4}}) {
    auto m = moments(200000, [&] { return static_cast<double>(sample_binomial(n, p, rng)); });
    CHECK(m.mean == doctest::Approx(n * p).epsilon(0.01));
    CHECK(m.var == doctest::Approx(n * p * (1 - p)).epsilon(0.03));
  }
  for (double rate : {0.5, 5.0, 40.0, 3000.0}) {
    auto m = moments(200000, [&] { return static_cast<double>(sample_poisson(rate, rng)); });
    CHECK(m.mean == doctest::Approx(rate).epsilon(0.01));
    CHECK(m.var == doctest::Approx(rate).epsilon(0.03));
  }
}

TEST_CASE("sample_weibull") {
  Rng rng(7, 1);
  const double eps = 1.0 - std::exp(-1.0);
  for (double k : {0.3, 1.0, 7.0}) CHECK(weibull_transform(k, 2.5, eps) == doctest::Approx(2.5).epsilon(1e-12));
  auto e = moments(1000000, [&] { return sample_weibull(1.0, 3.0, rng).value; });
  CHECK(e.mean == doctest::Approx(3.0).epsilon(0.01));
  auto w = moments(1000000, [&] { return sample_weibull(5.0, 1.0, rng).value; });
  CHECK(w.mean == doctest::Approx(0.9182).epsilon(0.005));
  CHECK(std::tgamma(1.2) == doctest::Approx(0.9182).epsilon(1e-4));
  // second moment lambda^2 Gamma(1 + 2/k)
  CHECK(w.var + w.mean * w.mean == doctest::Approx(std::tgamma(1.4)).epsilon(0.01));
  const auto d = sample_weibull(2.0, 1.5, rng);
  CHECK(d.value == doctest::Approx(weibull_transform(2.0, 1.5, d.uniform)));
  CHECK_THROWS_AS(sample_weibull(0.0, 1.0, rng), Error);
  CHECK_THROWS_AS(sample_weibull(1.0, 0.0, rng), Error);
}

TEST_CASE("alias table frequencies") {
  Rng rng(8, 1);
  const std::vector<double> p{0.5, 0.25, 0.125, 0.125, 0.0};
  AliasTable table(p);
  std::vector<int> hits(p.size(), 0);
  const int n = 400000;
  for (int i = 0; i < n; ++i) ++hits[table.sample(rng)];
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(std::abs(hits[i] / double(n) - p[i]) < 4.0 * std::sqrt(p[i] * (1 - p[i]) / n) + 1e-12);
  }
}
