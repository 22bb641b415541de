#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace wgae {

// Counter-based generator (Philox4x32-10). A stream is addressed by a 64-bit
// key (the global seed) and a 64-bit stream id; within a stream the 64-bit
// block counter advances by one per four 32-bit words. Two streams with the
// same (seed, id) produce identical sequences on every platform.
//
// Parallel work derives one stream per unit of work with `derive`, e.g.
// derive(seed, kTagNodeAugment, iteration, document). The id is a splitmix64
// chain over the tag and indices, so results do not depend on thread count
// or scheduling order.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) noexcept;

  static Rng derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;

  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

// Stream tags keep derived streams of different samplers apart.
enum StreamTag : std::uint64_t {
  kTagInit = 1,
  kTagNodeAugment = 2,
  kTagEdgeAugment = 3,
  kTagPropagate = 4,
  kTagPhi = 5,
  kTagTheta = 6,
  kTagU = 7,
  kTagScale = 8,
  kTagEncoderNoise = 9,
  kTagAttentionNoise = 10,
  kTagNodeSubset = 11,
  kTagTlasgr = 12,
  kTagSplit = 13,
  kTagKMeans = 14,
  kTagSynthetic = 15,
};

double sample_normal(Rng& rng);
double sample_gamma(double shape, double scale, Rng& rng);
// log of a Gamma(shape, 1) draw; stays finite for shapes far below one.
double sample_log_gamma(double shape, Rng& rng);
double sample_beta(double a, double b, Rng& rng);
std::uint64_t sample_poisson(double rate, Rng& rng);
std::uint64_t sample_binomial(std::uint64_t n, double p, Rng& rng);
std::uint64_t sample_truncated_poisson(double rate, Rng& rng);
std::uint64_t sample_crt(std::uint64_t count, double concentration, Rng& rng);
std::vector<double> sample_dirichlet(std::span<const double> concentrations, Rng& rng);
// Writes counts into `out` (same length as weights); counts sum exactly to n.
void sample_multinomial_counts(std::uint64_t n, std::span<const double> weights, Rng& rng,
                               std::span<std::uint64_t> out);
std::vector<std::uint64_t> sample_multinomial_counts(std::uint64_t n, std::span<const double> weights,
                                                     Rng& rng);

struct WeibullDraw {
  double value;
  double uniform;  // the eps that produced `value`
};

// scale * (-ln(1 - eps))^(1/shape)
double weibull_transform(double shape, double scale, double eps);
WeibullDraw sample_weibull(double shape, double scale, Rng& rng);

// Index drawn from unnormalized nonnegative weights.
std::size_t sample_categorical(std::span<const double> weights, Rng& rng);

// Walker alias table for repeated draws from a fixed discrete distribution.
class AliasTable {
 public:
  explicit AliasTable(std::span<const double> probabilities);
  std::size_t sample(Rng& rng) const;
  std::size_t size() const { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

}  // namespace wgae
