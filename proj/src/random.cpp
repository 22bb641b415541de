#include "wgae/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "wgae/error.hpp"

namespace wgae {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::uint32_t k0, std::uint32_t k1) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return ctr;
}

void check_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    fail(ErrorCode::kNumeric, std::string(what) + " must be positive and finite, got " + std::to_string(value));
  }
}

std::uint64_t poisson_inversion(double rate, Rng& rng) {
  const double limit = std::exp(-rate);
  double product = rng.uniform();
  std::uint64_t k = 0;
  while (product > limit) {
    ++k;
    product *= rng.uniform();
  }
  return k;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

Rng Rng::derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t id = mix64(tag);
  id = mix64(id ^ a);
  id = mix64(id ^ b);
  return Rng(seed, id);
}

void Rng::refill() noexcept {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
      static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
  block_ = philox4x32(ctr, static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32));
  ++counter_;
  used_ = 0;
}

std::uint32_t Rng::next_u32() noexcept {
  if (used_ == 4) refill();
  return block_[used_++];
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t hi = next_u32();
  const std::uint64_t lo = next_u32();
  return (hi << 32) | lo;
}

double Rng::uniform() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double sample_normal(Rng& rng) {
  // Marsaglia polar method; the second variate is discarded so every call
  // consumes its own draws.
  while (true) {
    const double u = 2.0 * rng.uniform() - 1.0;
    const double v = 2.0 * rng.uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

namespace {

// Marsaglia & Tsang for shape >= 1, unit scale.
double gamma_mt(double shape, Rng& rng) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = sample_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

double sample_gamma(double shape, double scale, Rng& rng) {
  check_positive(shape, "gamma shape");
  check_positive(scale, "gamma scale");
  if (shape >= 1.0) return scale * gamma_mt(shape, rng);
  // Gamma(a) = Gamma(a + 1) * U^(1/a)
  const double g = gamma_mt(shape + 1.0, rng);
  return scale * g * std::pow(rng.uniform(), 1.0 / shape);
}

double sample_log_gamma(double shape, Rng& rng) {
  check_positive(shape, "gamma shape");
  if (shape >= 1.0) return std::log(gamma_mt(shape, rng));
  const double g = gamma_mt(shape + 1.0, rng);
  return std::log(g) + std::log(rng.uniform()) / shape;
}

double sample_beta(double a, double b, Rng& rng) {
  const double la = sample_log_gamma(a, rng);
  const double lb = sample_log_gamma(b, rng);
  const double m = std::max(la, lb);
  const double ea = std::exp(la - m);
  const double eb = std::exp(lb - m);
  return ea / (ea + eb);
}

std::uint64_t sample_poisson(double rate, Rng& rng) {
  if (rate == 0.0) return 0;
  check_positive(rate, "poisson rate");
  // Split off Gamma-distributed arrival times until the remainder is small
  // enough for inversion; exact at every step.
  std::uint64_t count = 0;
  while (rate >= 12.0) {
    const auto m = static_cast<std::uint64_t>(std::floor(rate * 0.875));
    const double arrival = gamma_mt(static_cast<double>(m), rng);
    if (arrival < rate) {
      count += m;
      rate -= arrival;
    } else {
      return count + sample_binomial(m - 1, rate / arrival, rng);
    }
  }
  return count + poisson_inversion(rate, rng);
}

std::uint64_t sample_binomial(std::uint64_t n, double p, Rng& rng) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  if (p > 0.5) return n - sample_binomial(n, 1.0 - p, rng);
  if (n <= 32) {
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < n; ++i) hits += rng.uniform() < p ? 1 : 0;
    return hits;
  }
  if (static_cast<double>(n) * p < 16.0) {
    // Waiting-time method.
    const double q = -std::log1p(-p);
    double sum = 0.0;
    std::uint64_t x = 0;
    while (true) {
      sum += -std::log(rng.uniform()) / static_cast<double>(n - x);
      if (sum > q) return x;
      ++x;
      if (x == n) return n;
    }
  }
  // The i-th order statistic of n uniforms is Beta(i, n + 1 - i).
  const std::uint64_t i = (n + 1) / 2;
  const double x = sample_beta(static_cast<double>(i), static_cast<double>(n + 1 - i), rng);
  if (x >= p) return sample_binomial(i - 1, p / x, rng);
  return i + sample_binomial(n - i, (p - x) / (1.0 - x), rng);
}

std::uint64_t sample_truncated_poisson(double rate, Rng& rng) {
  check_positive(rate, "truncated poisson rate");
  if (rate >= 1.0) {
    while (true) {
      const std::uint64_t k = sample_poisson(rate, rng);
      if (k >= 1) return k;
    }
  }
  // Shifted proposal 1 + Pois(rate), accepted with probability 1/k;
  // acceptance rate (1 - e^-rate) / rate stays above 0.63.
  while (true) {
    const std::uint64_t k = 1 + poisson_inversion(rate, rng);
    if (k == 1 || rng.uniform() * static_cast<double>(k) < 1.0) return k;
  }
}

std::uint64_t sample_crt(std::uint64_t count, double concentration, Rng& rng) {
  if (count == 0) return 0;
  check_positive(concentration, "CRT concentration");
  constexpr std::uint64_t kDirect = 512;
  // customer i (0-based) opens a table with probability r / (r + i)
  std::uint64_t tables = 1;
  const std::uint64_t direct = std::min(count, kDirect);
  for (std::uint64_t i = 1; i < direct; ++i) {
    if (rng.uniform() * (concentration + static_cast<double>(i)) < concentration) ++tables;
  }
  if (count <= kDirect) return tables;
  // Beyond that, jump straight to the next customer opening a table:
  // P(no table in customers start..j) = prod_{i=start}^{j} i / (r + i).
  const double r = concentration;
  auto log_survival = [r](double start, double j) {
    return std::lgamma(j + 1.0) - std::lgamma(start) + std::lgamma(r + start) - std::lgamma(r + j + 1.0);
  };
  std::uint64_t start = kDirect;
  while (start < count) {
    const double target = std::log(rng.uniform());
    const double last = static_cast<double>(count - 1);
    if (log_survival(static_cast<double>(start), last) >= target) break;
    std::uint64_t lo = start, hi = count - 1;  // smallest j with log_survival < target
    while (lo < hi) {
      const std::uint64_t mid = lo + (hi - lo) / 2;
      if (log_survival(static_cast<double>(start), static_cast<double>(mid)) < target) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    ++tables;
    start = lo + 1;
  }
  return tables;
}

std::vector<double> sample_dirichlet(std::span<const double> concentrations, Rng& rng) {
  require(!concentrations.empty(), ErrorCode::kNumeric, "dirichlet: empty concentration vector");
  std::vector<double> out(concentrations.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = sample_log_gamma(concentrations[i], rng);
    top = std::max(top, out[i]);
  }
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

void sample_multinomial_counts(std::uint64_t n, std::span<const double> weights, Rng& rng,
                               std::span<std::uint64_t> out) {
  require(out.size() == weights.size(), ErrorCode::kInternal, "multinomial: output size mismatch");
  std::fill(out.begin(), out.end(), 0);
  if (n == 0) return;
  const std::size_t k = weights.size();
  // Suffix sums avoid cancellation in the conditional probabilities.
  std::vector<double> suffix(k + 1, 0.0);
  for (std::size_t i = k; i-- > 0;) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      fail(ErrorCode::kNumeric, "multinomial: weights must be finite and nonnegative");
    }
    suffix[i] = suffix[i + 1] + weights[i];
  }
  if (!(suffix[0] > 0.0)) fail(ErrorCode::kNumeric, "multinomial: all weights are zero");

  if (n <= 4) {
    for (std::uint64_t draw = 0; draw < n; ++draw) ++out[sample_categorical(weights, rng)];
    return;
  }
  std::uint64_t remaining = n;
  for (std::size_t i = 0; i < k && remaining > 0; ++i) {
    if (weights[i] <= 0.0) continue;
    if (suffix[i + 1] <= 0.0) {
      out[i] = remaining;
      return;
    }
    const double p = std::min(1.0, weights[i] / suffix[i]);
    const std::uint64_t c = sample_binomial(remaining, p, rng);
    out[i] = c;
    remaining -= c;
  }
}

std::vector<std::uint64_t> sample_multinomial_counts(std::uint64_t n, std::span<const double> weights, Rng& rng) {
  std::vector<std::uint64_t> out(weights.size(), 0);
  sample_multinomial_counts(n, weights, rng, out);
  return out;
}

double weibull_transform(double shape, double scale, double eps) {
  return scale * std::pow(-std::log1p(-eps), 1.0 / shape);
}

WeibullDraw sample_weibull(double shape, double scale, Rng& rng) {
  check_positive(shape, "weibull shape");
  check_positive(scale, "weibull scale");
  const double eps = rng.uniform();
  return {weibull_transform(shape, scale, eps), eps};
}

std::size_t sample_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) fail(ErrorCode::kNumeric, "categorical: all weights are zero");
  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    cumulative += weights[i];
    last_positive = i;
    if (target < cumulative) return i;
  }
  return last_positive;
}

AliasTable::AliasTable(std::span<const double> probabilities)
    : prob_(probabilities.size()), alias_(probabilities.size()) {
  const std::size_t n = probabilities.size();
  require(n > 0, ErrorCode::kNumeric, "alias table: empty distribution");
  const double total = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
  require(total > 0.0, ErrorCode::kNumeric, "alias table: zero total mass");
  std::vector<double> scaled(n);
  std::vector<std::size_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = probabilities[i] * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const std::size_t s = small.back();
    small.pop_back();
    const std::size_t l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (std::size_t i : large) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
  for (std::size_t i : small) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
}

std::size_t AliasTable::sample(Rng& rng) const {
  const double u = rng.uniform() * static_cast<double>(prob_.size());
  auto column = static_cast<std::size_t>(u);
  if (column >= prob_.size()) column = prob_.size() - 1;
  return (u - static_cast<double>(column)) < prob_[column] ? column : alias_[column];
}

}  // namespace wgae
