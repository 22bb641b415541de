#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace wgae {

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;  // measured vs expected
};

struct SelftestSuite {
  std::string name;
  std::vector<SelftestCheck> checks;
  double seconds = 0.0;
  bool passed() const;
};

struct SelftestOptions {
  std::uint64_t seed = 20240917;
  std::uint64_t draws = 1000000;  // Monte-Carlo sample size per check
  double gradient_tolerance = 1e-4;
  double kl_tolerance = 0.01;  // relative
  int kl_settings = 20;
};

// Suite names in execution order:
//   conservation  count conservation, simplex preservation, sum of p_i, attention rows
//   samplers      Monte-Carlo moments of every sampler (3 sigma)
//   gradients     finite differences for primitives, encoders, ELBO, supervised loss
//   kl            closed-form Weibull-gamma KL against Monte Carlo
//   graph         edge-split, cosine-graph and normalization invariants
//   evaluation    metric oracles and symmetries
//   export        projection, tree and subnetwork invariants
const std::vector<std::string>& selftest_suite_names();

// Throws kUsage for an unknown name.
SelftestSuite run_selftest_suite(const std::string& name, const SelftestOptions& options = {});

// "PASS|FAIL suite/check  detail" per check.
std::string to_text(const SelftestSuite& suite);

}  // namespace wgae
